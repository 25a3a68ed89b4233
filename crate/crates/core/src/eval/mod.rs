//! Ranking evaluation (sampled-99 and full), HR/NDCG/MRR and the category
//! preference analysis.

mod metrics;
mod preference;
mod protocol;

pub use metrics::{hr_at_k, mrr, ndcg_at_k, rank_of_truth, score_all, MetricsReport};
pub use preference::{
    analyze_preferences, format_pct, predicted_distributions, preference_distribution,
    preference_kl, real_items, relative_improvement, top_k, PreferenceReport, PreferenceTable,
    PREFERENCE_EPS,
};
pub use protocol::{
    candidates, encode_histories, eval_case, evaluate, inference_side, rank_users, EvalTarget,
    SAMPLED_NEGATIVES,
};
