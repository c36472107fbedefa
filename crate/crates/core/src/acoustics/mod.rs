//! Time-harmonic acoustic source localization from microphone pressures.
//!
//! Real and imaginary parts of the first-order system
//! ϱ₀iωv + ∇p = f, (iω/c₀²)p + ϱ₀∇·v = g are least-squares residuals; the
//! pressure lift is a sum of compact bumps around the microphones.

mod mics;
mod problem;
mod synth;

pub use mics::{bump_value, Bumps, MeasurementRegion, MicArray};
pub use problem::{AcousticProblem, AcousticResidual};
pub use synth::{synthesize_pressure, AcousticSynthesis, AcousticSynthesisConfig};

use crate::error::{Error, Result};
use crate::framework::{choose_alpha, minimize, AdmissibleSetSpec, ObservationVector, RegularizationWeights, SolverConfig, SolverResult};
use crate::grid2d::{BoundaryLayout, Grid, ScalarField, VectorField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticConstants {
    pub rho0: f64,
    pub c0: f64,
    pub omega: f64,
    /// Wall impedance constant; `None` means c₀.
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl Default for AcousticConstants {
    fn default() -> Self {
        Self { rho0: 1.0, c0: 1.0, omega: 4.0 * std::f64::consts::PI, kappa: None }
    }
}

impl AcousticConstants {
    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or(self.c0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho0", self.rho0), ("c0", self.c0), ("omega", self.omega), ("kappa", self.kappa())] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Model options. `layout = None` makes the whole boundary absorbing;
/// `bump_radius = None` picks min(0.45·d_min, 1.5h). `skip_f` / `skip_g`
/// pin the dipole or monopole source term to zero.
#[derive(Debug, Clone, Default)]
pub struct AcousticOptions {
    pub layout: Option<BoundaryLayout>,
    pub bump_radius: Option<f64>,
    pub skip_f: bool,
    pub skip_g: bool,
}

/// Dipole (f) and monopole (g) source densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    pub f_re: VectorField,
    pub f_im: VectorField,
    pub g_re: ScalarField,
    pub g_im: ScalarField,
}

impl SourceSet {
    pub fn zeros(grid: &Grid) -> Self {
        let (m, n) = (grid.num_cells(), grid.num_nodes());
        Self { f_re: VectorField::zeros(m), f_im: VectorField::zeros(m), g_re: ScalarField::zeros(n), g_im: ScalarField::zeros(n) }
    }

    pub fn from_params(grid: &Grid, x: &[f64]) -> Self {
        let m = grid.num_cells();
        let n = grid.num_nodes();
        let v = |a: usize| VectorField { x: x[a * m..(a + 1) * m].to_vec(), y: x[(a + 1) * m..(a + 2) * m].to_vec() };
        Self {
            f_re: v(0),
            f_im: v(2),
            g_re: ScalarField::from_vec(x[4 * m..4 * m + n].to_vec()),
            g_im: ScalarField::from_vec(x[4 * m + n..4 * m + 2 * n].to_vec()),
        }
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut x = Vec::new();
        for f in [&self.f_re, &self.f_im] {
            x.extend_from_slice(&f.x);
            x.extend_from_slice(&f.y);
        }
        x.extend_from_slice(self.g_re.as_slice());
        x.extend_from_slice(self.g_im.as_slice());
        x
    }

    /// Plateau g_ℜ = amplitude on nodes within `radius` of `center`.
    pub fn plateau(grid: &Grid, center: [f64; 2], radius: f64, amplitude: f64) -> Self {
        let mut s = Self::zeros(grid);
        s.g_re = grid.sample_nodes(|p| if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius { amplitude } else { 0.0 });
        s
    }

    /// Unit monopole g_ℜ at the node nearest to `p`, scaled by `amplitude`.
    pub fn point_source(grid: &Grid, p: [f64; 2], amplitude: f64) -> Self {
        let mut s = Self::zeros(grid);
        s.g_re[grid.nearest_node(p)] = amplitude;
        s
    }
}

/// Kernel (or total) state.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticState {
    pub p_re: ScalarField,
    pub p_im: ScalarField,
    pub v_re: VectorField,
    pub v_im: VectorField,
}

impl AcousticState {
    pub fn from_vec(grid: &Grid, u: &[f64]) -> Self {
        let m = grid.num_cells();
        let n = grid.num_nodes();
        let v = |a: usize| VectorField {
            x: u[2 * n + a * m..2 * n + (a + 1) * m].to_vec(),
            y: u[2 * n + (a + 1) * m..2 * n + (a + 2) * m].to_vec(),
        };
        Self { p_re: ScalarField::from_vec(u[..n].to_vec()), p_im: ScalarField::from_vec(u[n..2 * n].to_vec()), v_re: v(0), v_im: v(2) }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut u = Vec::new();
        u.extend_from_slice(self.p_re.as_slice());
        u.extend_from_slice(self.p_im.as_slice());
        for v in [&self.v_re, &self.v_im] {
            u.extend_from_slice(&v.x);
            u.extend_from_slice(&v.y);
        }
        u
    }
}

/// Regularized reconstruction with α from the parameter-choice rule.
pub fn solve_inverse(
    problem: &AcousticProblem,
    y: &ObservationVector,
    weights: &RegularizationWeights,
    spec: &AdmissibleSetSpec,
    config: &SolverConfig,
) -> Result<SolverResult> {
    let alpha = choose_alpha(y.noise_level(), weights)?;
    minimize(problem, y, alpha, spec, config)
}

/// Node holding the largest value.
pub fn argmax_node(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
        .0
}

/// Nodes that beat all eight neighbours and exceed `threshold · max`,
/// strongest first.
pub fn local_maxima(grid: &Grid, values: &[f64], threshold: f64) -> Vec<usize> {
    let top = values.iter().cloned().fold(0.0, f64::max);
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out: Vec<usize> = (0..values.len())
        .filter(|&k| {
            let v = values[k];
            if !(v > threshold * top) || !grid.is_active_node(k) {
                return false;
            }
            let (i, j) = ((k % (nx + 1)) as isize, (k / (nx + 1)) as isize);
            (-1..=1).all(|dj| {
                (-1..=1).all(|di| {
                    let (a, b) = (i + di, j + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a > nx as isize || b > ny as isize {
                        return true;
                    }
                    let q = b as usize * (nx + 1) + a as usize;
                    values[q] < v || (values[q] == v && q > k)
                })
            })
        })
        .collect();
    out.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    out
}

/// Distance between two nodes in cells (max-norm of the index offset).
pub fn node_distance_cells(grid: &Grid, a: usize, b: usize) -> usize {
    let w = grid.nx + 1;
    let (ia, ja) = (a % w, a / w);
    let (ib, jb) = (b % w, b / w);
    ia.abs_diff(ib).max(ja.abs_diff(jb))
}

#[cfg(test)]
mod tests;
