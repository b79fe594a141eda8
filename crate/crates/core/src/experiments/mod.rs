//! Convergence studies, confidence intervals, stability demonstrations and
//! report emission.

mod config;
mod harness;
mod report;
mod stats;

pub use config::ConfigFile;
pub use harness::{
    batch_seed, classify, run_ladder, run_trial, stability_demo, DemoClass, ProblemSpec, StabilityDemo, TrialLadder,
    TrialOptions, TrialOutcome, ZNorm, MIN_BATCHES, REFERENCE_PAIRS,
};
pub use report::{emit_report, parse_csv, render_report, ConvergenceReport, ParsedCsv, ReportFormat, ReportRow, CSV_HEADER};
pub use stats::{batch_ci, convergence_rate, pairwise_rates, t_cdf, t_quantile, BatchCi};
