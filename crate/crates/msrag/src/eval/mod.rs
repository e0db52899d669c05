//! Evaluation harness: dataset ingestion, answer normalization, EM/F1/ACC
//! metrics, multi-run aggregation, manifest persistence and report tables.

pub mod dataset;
pub mod metrics;
pub mod record;
pub mod reference;
pub mod report;

pub use dataset::{load_dataset, DatasetSchema, EvalError, Sample};
pub use metrics::{boolean_accuracy, exact_match, normalize_answer, token_f1, BoolScore};
pub use record::{
    aggregate_run, average_runs, CallCountsRecord, ChannelTraces, ExampleMetrics, ExampleRecord,
    GptTraceRecord, RunManifest, RunMetrics, RunReport, WebTraceRecord,
};
pub use report::{render_csv, render_markdown};
