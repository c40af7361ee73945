//! Field-prediction metrics and the paired significance protocol.

mod metrics;
mod report;
mod stats;

pub use metrics::{case_metrics, CaseMetrics};
pub use report::{
    leaderboard, read_metrics_csv, render_pairs, significance_report, write_leaderboard_csv, write_metrics_csv,
    LeaderboardRow, ModelMetrics, ModelSummary, PairSummary, SignificanceReport, LEADERBOARD_HEADER, METRICS_HEADER,
};
pub use stats::{
    bootstrap_ci, paired_tests, sign_flip_p, wilcoxon_p, Interval, PairedTest, DEFAULT_PERMUTATIONS,
    DEFAULT_REPLICATES, WILCOXON_EXACT_MAX,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("probe time {probe_ms} ms outside the sequence span [{lo}, {hi}] ms")]
    Probe { probe_ms: f64, lo: f64, hi: f64 },
    #[error("true displacement is identically zero; relative error undefined")]
    ZeroDisplacement,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("pairing error: {0}")]
    Pairing(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
