//! Future-guided sequential recommendation.
//!
//! Two identically shaped encoders read a user's interaction sequence: the
//! past encoder sees only the items before a target, the future encoder sees a
//! window that extends `P` items past it. During training an oracle-guiding
//! loss pulls the past encoder's target-position embedding toward the future
//! encoder's embeddings around the target, and the two encoders are optimised
//! in alternating phases. Only the past encoder is used for inference.
//!
//! Module map:
//!
//! * [`seqdata`]: ingestion, 5-core filtering, leave-one-out splits, window
//!   construction, negative sampling and synthetic drift data.
//! * [`numerics`]: sequence FFT, normalisation, softmax, dropout, Adam and a
//!   finite-difference gradient checker.
//! * [`encoder`]: embedding lookup, low-pass filter layers, causal attention
//!   blocks, a recurrent variant, and the prediction losses.
//! * [`guiding`]: attenuation weights, discrepancy measures and the guiding loss.
//! * [`training`]: two-phase and joint training, checkpoints and loss logs.
//! * [`eval`]: ranking protocols, metrics and preference-distribution analysis.
//! * [`config`]: flat `key = value` configuration with validation.

pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod guiding;
pub mod numerics;
pub mod seqdata;
pub mod training;

pub use config::{
    resolve_config, Config, DiscrepancyKind, EncoderKind, GuidingConfig, MaskMode, ModelConfig,
    Precision, Protocol, TrainConfig, TrainMode,
};
pub use error::{Error, Result};
pub use numerics::Real;
