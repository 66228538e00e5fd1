//! Orchestration: configuration, stage execution, report files and the CLI.
//!
//! Stages run in a fixed order — `Q_cc`, MF-X-DMA, the τ(q) curvature test,
//! then the surrogate test. Only the surrogate ensemble runs in parallel, and
//! every member's seed is fixed before dispatch, so outputs do not depend on
//! the number of threads.

mod cli;
mod config;
mod figdata;
mod run;

pub use cli::{cli, write_prices, EXIT_INVALID, EXIT_OK, EXIT_STAGE_FAILED, THREADS_ENV};
pub use config::{parse_schemes, RunConfig};
pub use figdata::{emit_plot_data, Figure, HISTOGRAM_BINS};
pub use run::{
    classify, run_analysis, run_pair, run_stages, write_bundle, AnalysisBundle, Provenance, Stage, StageRecord,
    StageSelection, StageStatus, WallClock, REPORTED_LEVELS,
};
