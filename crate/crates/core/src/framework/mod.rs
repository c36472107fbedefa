//! Minimization-based regularization engine: cost assembly, parameter
//! choice, penalty-method minimization and the noise-sweep harness.

pub mod checks;
mod cost;
mod observation;
mod problem;
mod solver;
mod sweep;
mod types;

pub use cost::{assemble_cost, cost_gradient, check_data_continuity, choose_alpha, discrepancy, lift_block_norms, ContinuityCheck};
pub use observation::{BlockLabel, ObservationVector};
pub use problem::ProblemInstance;
pub use solver::{minimize, FEASIBILITY_FACTOR};
pub use sweep::{inject_noise, run_noise_sweep, AlphaRule, ConvergenceReport, SweepRow, SweepSetup};
pub use types::{
    AdmissibleSetSpec, BoxBounds, PenaltySchedule, RegularizationWeights, SolverConfig, SolverResult, StepRule,
};

#[allow(unused_imports)]
pub(crate) use cost::{add_into, max_abs, smooth_max_abs};

#[cfg(test)]
mod tests;
