//! Multi-step recursive resilient filter over the delay-free reconstructed measurements.

mod bounds;
mod config;
mod realized;

pub use bounds::{
    bound_predict, bound_update, compute_schedule, general_form, gain, innovation_stats, processing_order,
    second_moment_bound_step, second_moment_bounds, trigger_error_bounds, BoundSchedule, CellBound,
    InnovationInputs, StackedNoise,
};
pub use config::{FilterConfig, Perturbation};
pub use realized::{predict, run_filter, sample_gain_variation, update_estimate, FilterRun};
