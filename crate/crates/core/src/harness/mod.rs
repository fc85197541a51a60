//! Experiment harness: run configuration, training runs with metric logs
//! and checkpoints, the memory scaling benchmark and similarity traces.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod run;
pub mod trace;

pub use bench::{bench_scaling, growth_exponent, loglog_slope, write_time, BenchConfig, BenchRow};
pub use checkpoint::{Checkpoint, RngState};
pub use config::{Precision, RunConfig, TaskKind};
pub use run::{evaluate_checkpoint, load_model, run_experiment, RunSummary};
pub use trace::{cosine, similarity_trace, SimilarityPair};
