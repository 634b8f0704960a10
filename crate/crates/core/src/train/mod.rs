//! Training of the unified framework and both baselines.

mod history;
mod method;
mod plan;
mod trainer;

pub use history::{EpochRecord, TrainHistory};
pub use method::{Method, MethodRegistry, MlpBaseline, RbtBaseline, Unified};
pub use plan::{lr_at_epoch, MethodKind, MlpPlan, RbtPlan, TrainPlan};
pub use trainer::{
    class_indices, derive_seed, stream_transform, train, train_monitored, transform_rows,
    transform_set, Throughput, TrainOutcome, TRANSFORM_CHUNK,
};
