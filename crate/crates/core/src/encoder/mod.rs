//! Past and future encoders: embedding lookup, low-pass filter layers,
//! causal attention blocks (or a GRU), the prediction head and checkpoints.

mod attention;
mod checkpoint;
mod encode;
mod filter;
mod loss;
mod params;
mod recurrent;

pub use attention::AttnCache;
pub use checkpoint::{
    load_checkpoint, read_manifest, save_checkpoint, Manifest, CHECKPOINT_SCHEMA_VERSION,
};
pub use encode::{embed_lookup, Arch, EncodeCache};
pub use filter::{cutoff_mask, keep_count, lowpass};
pub use loss::{future_loss, pair_loss_grad, past_loss, predict_prob, PROB_CLAMP};
pub use params::{
    AttnParams, EncoderWeights, FilterParams, GruParams, ModelParams, ParamGroup, Side, TensorRef,
    INIT_STD,
};
