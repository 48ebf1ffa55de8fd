//! The 2-D Fornasini-Marchesini (second form) plant and its delayed measurement channels.

mod model;
mod simulate;

pub use model::{
    BoundaryStats, Channel, Delays, Direction, DirectionTerms, Matrix, Nonlinearity, Profile, ShiftVarying,
    SystemModel, Vector,
};
pub use simulate::{simulate_trajectory, simulate_with, step_state, NoisePlan, Trajectory};
