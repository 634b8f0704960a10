//! Retrieval metrics (rank-1 identification with distractors, mean average
//! precision) and the method comparison driver.

mod compare;
mod metrics;
mod protocol;
mod report;

pub use compare::{
    ablation_plans, reference_rows, run_ablation, run_cell, run_comparison, CellResult,
    ComparisonMatrix, Direction, MethodSpec, ReferenceRow,
};
pub use metrics::{
    cosine, mean_average_precision, rank1_identification, IdentificationTask, MetricKind,
    RetrievalReport, Summary,
};
pub use protocol::{identification_task, map_between, rank1_between, retrieval_task};
pub use report::{render_csv, render_text};
