//! Two-phase training (future encoder first, then the guided past encoder),
//! the joint-training ablation, batching and run logging.

mod examples;
mod grad;
mod optim;
mod trainer;

use std::sync::OnceLock;

pub use examples::{epoch_examples, prepare, stream_rng, Example, Prepared, WindowSpec};
pub use grad::{frozen_future, future_grad, joint_grad, past_grad, LossSums, Objective};
pub use optim::GroupAdam;
pub use trainer::{save_run, train, EpochLog, RunMetrics, TrainLog, TrainOutcome, Trainer, CHUNK};

pub const THREADS_ENV: &str = "ORACLE4REC_THREADS";

/// Sizes the global worker pool from `ORACLE4REC_THREADS` (default: all
/// cores). Only the first call has an effect.
pub fn configure_threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        let n = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|n| *n > 0);
        if let Some(n) = n {
            if rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
            {
                log::warn!("worker pool already initialised, {THREADS_ENV} ignored");
            }
        }
        rayon::current_num_threads()
    })
}
