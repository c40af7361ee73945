//! Learned field surrogate and tabular baselines.

mod baselines;
mod checkpoint;
mod graph;
mod model;
mod sample;
pub mod tape;
mod train;

pub use baselines::{knn_predict, least_squares, ridge_fit, ridge_predict, RidgeModel};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader, TensorInfo,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use graph::{component_map, interface_graph, ComponentTable, InterfaceGraph};
pub use model::{loss, time_embedding, CrashSolverConfig, FeatureStats, SurrogateModel};
pub use sample::{displacement_rms, sample_from_bundle, tau_median, vocabulary_from_bundle, LearningSample, PartVocabulary};
pub use tape::Mat;
pub use train::{grad_check, mean_loss, train, BestTracker, TrainHistory, TrainSchedule};

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("shape mismatch in {stage}: {detail}")]
    Shape { stage: &'static str, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (case {case_id})")]
    NonFiniteLoss { epoch: usize, step: usize, case_id: String },
    #[error("singular normal equations; use alpha > 0")]
    Singular,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
