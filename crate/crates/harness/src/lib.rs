//! Training, evaluation and command-line harness for the bias-expansion
//! forgery detector.

pub mod adam;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod sampler;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{CalibrationSet, Precision, TrainConfig};
pub use error::{HarnessError, Result};
pub use eval::{calibrate, evaluate, evaluate_scored, robustness_report, score, EvalReport, RobustnessTable, Scored};
pub use metrics::{accuracy, auc, Confusion};
pub use sampler::stratified_batches;
pub use train::{train, train_with, EpochLosses, TrainOutcome};
pub use pipeline::{run_pipeline, PipelineArtifacts};
pub use report::Report;
