//! End-to-end experiment harness: toy datasets, run configuration, the
//! pretrain → fine-tune → evaluate pipeline, injection sampling and
//! cross-seed aggregation.

pub mod config;
pub mod data;
pub mod inject;
pub mod pipeline;
pub mod report;

pub use config::{Ini, Method, Overrides, RunConfig, PRESETS};
pub use data::{chi_square_uniform, generate_dataset, Dataset, DatasetSpec};
pub use inject::{final_distances, injection_experiment, spearman, write_injection_csv, InjectionPlan, InjectionRow};
pub use pipeline::{evaluate, finetune, generate_samples, inject, pretrain, score_samples, vendi_curve, Evaluation};
pub use report::{aggregate, report, AggregateRow};
