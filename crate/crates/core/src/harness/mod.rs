//! Command-line front end: scenario loading, the four commands and their reports.

pub mod checks;
mod commands;
mod load;
mod output;
mod report;

pub use commands::{
    cmd_monotonicity, cmd_reconstruct_check, cmd_simulate, cmd_verify, RunFlags, ETM_RUNS, RECONSTRUCT_HORIZON,
    RECONSTRUCT_MAX_CHANNELS, RECONSTRUCT_MAX_DELAY, TRUNCATION_SAMPLES,
};
pub use load::{apply_override, builtin, builtin_names, builtin_text, load_scenario, parse_with_overrides, BUILTIN_PREFIX};
pub use output::{write_codewords, write_estimates, write_regions, write_trigger_log};
pub use report::{CheckResult, ExperimentReport, DOMINANCE_TOLERANCE, THRESHOLDS};
