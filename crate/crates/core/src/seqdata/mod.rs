//! Interaction ingestion, k-core filtering, splits and window construction.

mod dataset;
mod ingest;
mod sampling;
mod split;
mod synthetic;
mod windows;

pub use dataset::{build_dataset, Dataset, DatasetStats, DATASET_SCHEMA_VERSION, PADDING};
pub use ingest::{load_interactions, parse_tsv, InputFormat, Interaction};
pub use sampling::{sample_distinct_negatives, sample_negative};
pub use split::{split_leave_one_out, SplitDataset};
pub use synthetic::{generate_synthetic_drift, SyntheticConfig, SyntheticDataset};
pub use windows::{
    build_global, build_history, build_pair, item_at, next_targets, window_ending_at, GlobalWindow,
    SequencePair,
};
