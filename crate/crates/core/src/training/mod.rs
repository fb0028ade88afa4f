//! Training loops: plain fitting with early stopping and learning-rate decay,
//! two-stage curriculum fitting, and routed fine-tuning of an ensemble.

mod config;
mod curriculum;
mod finetune;
mod fit;
mod policy;
mod report;

pub use config::{SplitConfig, SplitKind, TrainConfig};
pub use curriculum::{
    compare_curriculum, curriculum_fit, stratified_subset, CurriculumComparison, CurriculumReport,
    CurriculumSpec,
};
pub use finetune::{finetune_ensemble, routed_loss_and_accuracy, FinetuneOptions, FinetuneReport};
pub use fit::{fit, loss_and_accuracy, OptimizerConfig};
pub use policy::{EpochDecision, PolicyTracker, StopReason, StoppingPolicy};
pub use report::{EpochRecord, TrainReport, CSV_HEADER};
