//! Planar permeability identification: a nonlinear μ(|H|) curve from coil
//! flux data, sharing the two-term residual kernel with EIT.
//!
//! The 3D curl fields are reduced to the plane: H = ∇ψ + A^J in-plane and
//! B = ∇⊥A with a scalar (out-of-plane) potential A.

mod coil;
mod curve;
mod problem;
mod synth;

pub use coil::{Coil, CoilSpec};
pub use curve::{uniform_knots, PermeabilityCurve, TrustRegion};
pub use problem::MagnetProblem;
pub use synth::{synthesize_flux, MagnetSynthesis, MagnetSynthesisConfig};

use crate::error::Result;
pub use crate::framework::{AdmissibleSetSpec, ObservationVector, RegularizationWeights, SolverConfig, SolverResult};
use crate::framework::{choose_alpha, minimize};
use crate::grid2d::{Grid, VectorField};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Shape of the impressed field A^J; scaled by each amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcitationProfile {
    /// (1, 0).
    Uniform,
    /// (−(x₂ − ½), x₁ − ½).
    Vortex,
    /// Uniform plus vortex; spreads |H| over an interval.
    Mixed,
}

pub fn excitation_fields(grid: &Grid, profile: ExcitationProfile, amplitudes: &[f64]) -> Vec<VectorField> {
    amplitudes
        .iter()
        .map(|&a| {
            grid.sample_cells(|p| {
                let (vx, vy) = (-(p[1] - 0.5), p[0] - 0.5);
                match profile {
                    ExcitationProfile::Uniform => [a, 0.0],
                    ExcitationProfile::Vortex => [a * vx, a * vy],
                    ExcitationProfile::Mixed => [a * (1.0 + vx), a * vy],
                }
            })
        })
        .collect()
}

/// H_max = 1.5 × the largest impressed |A^J| over active cells.
pub fn h_max_for(grid: &Grid, excitations: &[VectorField]) -> f64 {
    let m = excitations
        .iter()
        .flat_map(|e| grid.active_cells().iter().map(move |&c| (e.x[c] * e.x[c] + e.y[c] * e.y[c]).sqrt()))
        .fold(0.0, f64::max);
    1.5 * m
}

/// Reconstructed curve with its trust region.
#[derive(Debug, Clone)]
pub struct MagnetReconstruction {
    pub result: SolverResult,
    pub trust_region: TrustRegion,
    /// Knots whose interpolation support misses the trust region.
    pub unconstrained: Vec<bool>,
}

pub fn solve_inverse(
    problem: &MagnetProblem,
    y: &ObservationVector,
    weights: &RegularizationWeights,
    spec: &AdmissibleSetSpec,
    config: &SolverConfig,
) -> Result<MagnetReconstruction> {
    let alpha = choose_alpha(y.noise_level(), weights)?;
    let result = minimize(problem, y, alpha, spec, config)?;
    let trust_region = problem.trust_region(&result.state);
    let knots = problem.knots();
    let unconstrained = (0..knots.len()).map(|k| !trust_region.supports_knot(knots, k)).collect();
    Ok(MagnetReconstruction { result, trust_region, unconstrained })
}

/// Writes `knot,value,in_trust_region`.
pub fn write_curve_csv(path: &Path, knots: &[f64], values: &[f64], unconstrained: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["knot", "value", "in_trust_region"])?;
    for k in 0..knots.len() {
        w.write_record([format!("{:e}", knots[k]), format!("{:e}", values[k]), (!unconstrained[k]).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
