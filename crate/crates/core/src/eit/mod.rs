//! Electrical impedance tomography with the complete electrode model.
//!
//! The state of pattern i is the pair (φ_i, ψ_i) with σ∇φ_i = ∇⊥ψ_i in the
//! exact model; gap levels of ψ carry the injected currents and the electrode
//! constants C_ℓ carry the voltages.

mod layout;
pub(crate) mod operators;
mod problem;
mod synth;

pub use layout::{Electrode, ElectrodeLayout};
pub use operators::{build_boundary_lifts, LiftBasis};
pub use problem::EitProblem;
pub use synth::{synthesize_data, Synthesis, SynthesisConfig};

use crate::error::Result;
use crate::framework::{choose_alpha, minimize, AdmissibleSetSpec, ObservationVector, RegularizationWeights, SolverConfig, SolverResult};
use crate::grid2d::Grid;

/// Trigonometric current patterns j_{i,ℓ} = cos(i·θ_ℓ), mean-corrected,
/// for i = 1..=count.
pub fn trig_patterns(grid: &Grid, layout: &ElectrodeLayout, count: usize) -> Vec<Vec<f64>> {
    let theta: Vec<f64> = (0..layout.len()).map(|l| layout.center_angle(grid, l)).collect();
    (1..=count)
        .map(|i| {
            let mut j: Vec<f64> = theta.iter().map(|t| (i as f64 * t).cos()).collect();
            let mean = j.iter().sum::<f64>() / j.len() as f64;
            j.iter_mut().for_each(|v| *v -= mean);
            j
        })
        .collect()
}

/// Background value plus a disk inclusion, sampled at cell centers.
pub fn inclusion_conductivity(grid: &Grid, background: f64, center: [f64; 2], radius: f64, value: f64) -> Vec<f64> {
    grid.sample_cell_scalar(|p| {
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
        if d <= radius {
            value
        } else {
            background
        }
    })
}

/// Regularized reconstruction with α from the parameter-choice rule.
pub fn solve_inverse(
    problem: &EitProblem,
    y: &ObservationVector,
    weights: &RegularizationWeights,
    spec: &AdmissibleSetSpec,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let alpha = choose_alpha(y.noise_level(), weights)?;
    minimize(problem, y, alpha, spec, config)
}

/// Center of the cell holding the largest active value.
pub fn argmax_cell_center(grid: &Grid, values: &[f64]) -> [f64; 2] {
    let best = grid
        .active_cells()
        .iter()
        .copied()
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    grid.cell_center(best)
}
