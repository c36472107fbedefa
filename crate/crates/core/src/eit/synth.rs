use super::problem::{pattern_misfit_gradient, PatternWorkspace};
use super::EitProblem;
use crate::error::{Error, Result};
use crate::framework::{ObservationVector, ProblemInstance};
use crate::grid2d::conjugate_gradient;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

/// Forward-solve settings for data synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-11, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub data: ObservationVector,
    /// Total state (coordinates, as in the problem state vector).
    pub state: Vec<f64>,
    /// Q_E of the forward solution (discretization residual).
    pub misfit: f64,
}

/// Manufactures exact data for `sigma` and the given current patterns.
///
/// Per pattern, the gap levels of ψ are pinned to −Σ_{k≤ℓ} j_k and Q_E is
/// minimized over the remaining coordinates by conjugate gradients; the
/// voltages are the mean-free electrode constants of the minimizer.
pub fn synthesize_data(problem: &EitProblem, sigma: &[f64], patterns: &[Vec<f64>], config: &SynthesisConfig) -> Result<Synthesis> {
    let grid = problem.grid();
    let l = problem.layout().len();
    if patterns.len() != problem.patterns() {
        return Err(Error::InvalidArgument(format!("expected {} patterns, got {}", problem.patterns(), patterns.len())));
    }
    problem.check_sigma(sigma)?;
    let n = grid.num_nodes();
    let exp = problem.expansion();
    let m = exp.len();
    // Free coordinates: φ at active nodes, ψ at free nodes; gap levels pinned.
    let mask = problem.state_mask();
    let index: Vec<usize> = (0..2 * n).filter(|&k| mask[k]).collect();

    let ws = RefCell::new((PatternWorkspace::new(grid), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]));
    // Gradient of the single-pattern Q_E in coordinates (linear in w).
    let grad = |w: &[f64], g: &mut [f64]| -> f64 {
        let mut guard = ws.borrow_mut();
        let (ws, phi, psi, gphi, gpsi) = &mut *guard;
        exp.expand(w, phi, psi);
        gphi.iter_mut().for_each(|v| *v = 0.0);
        gpsi.iter_mut().for_each(|v| *v = 0.0);
        let q = pattern_misfit_gradient(grid, sigma, phi, psi, ws, None, gphi, gpsi);
        g.iter_mut().for_each(|v| *v = 0.0);
        exp.adjoint_add(gphi, gpsi, g);
        q
    };

    let mut state = vec![0.0; problem.state_len()];
    let mut misfit = 0.0;
    for (i, j) in patterns.iter().enumerate() {
        if j.len() != l {
            return Err(Error::InvalidArgument(format!("pattern {} has {} entries, expected {l}", i + 1, j.len())));
        }
        let (levels, _) = problem.lift_coefficients(j, &vec![0.0; l])?;
        let mut base = vec![0.0; m];
        base[2 * n..].copy_from_slice(&levels);
        let mut g = vec![0.0; m];
        grad(&base, &mut g);
        let rhs: Vec<f64> = index.iter().map(|&k| -g[k]).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            let mut w = vec![0.0; m];
            for (&k, &x) in index.iter().zip(v) {
                w[k] = x;
            }
            let mut gw = vec![0.0; m];
            grad(&w, &mut gw);
            for (o, &k) in out.iter_mut().zip(&index) {
                *o = gw[k];
            }
        };
        let sol = conjugate_gradient(apply, &rhs, config.rel_tol, config.max_iterations)
            .map_err(|e| Error::ForwardSolve(format!("pattern {}: {e}", i + 1)))?;
        let w = &mut state[i * m..(i + 1) * m];
        w.copy_from_slice(&base);
        for (&k, &x) in index.iter().zip(&sol) {
            w[k] += x;
        }
        misfit += grad(w, &mut g);
    }
    if !misfit.is_finite() {
        return Err(Error::ForwardSolve("non-finite forward misfit".into()));
    }
    let data = problem.data_vector(problem.observe(&state), 0.0)?;
    Ok(Synthesis { data, state, misfit })
}
