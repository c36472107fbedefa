use super::{MagnetProblem, PermeabilityCurve};
use crate::error::{Error, Result};
use crate::framework::{ObservationVector, ProblemInstance};
use crate::grid2d::conjugate_gradient;
use crate::grid2d::twoterm::TwoTerm;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MagnetSynthesisConfig {
    pub rel_tol: f64,
    pub max_cg_iterations: usize,
    /// Fixed-point (frozen-μ) sweeps.
    pub max_sweeps: usize,
    /// Stop when max |Δμ| / μ̲ falls below this.
    pub mu_tol: f64,
}

impl Default for MagnetSynthesisConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_cg_iterations: 100_000, max_sweeps: 200, mu_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct MagnetSynthesis {
    pub data: ObservationVector,
    /// Total states [ψ_i, A_i].
    pub state: Vec<f64>,
    pub misfit: f64,
    pub sweeps: usize,
}

/// Manufactures flux data for the true curve.
///
/// Per experiment, μ is frozen at the current |H|, Q_E is minimized over
/// (ψ interior, A) by conjugate gradients, and μ is updated until it stops
/// changing.
pub fn synthesize_flux(problem: &MagnetProblem, curve: &PermeabilityCurve, config: &MagnetSynthesisConfig) -> Result<MagnetSynthesis> {
    if curve.knots() != problem.knots() {
        return Err(Error::InvalidArgument("true curve must use the problem's knots".into()));
    }
    let g = problem.grid();
    let n = g.num_nodes();
    let nc = g.num_cells();
    let area = g.cell_area();
    let mask = problem.state_mask();
    let index: Vec<usize> = (0..2 * n).filter(|&k| mask[k]).collect();
    let mut state = vec![0.0; problem.state_len()];
    let mut sweeps = 0;

    for (i, e) in problem.excitations().iter().enumerate() {
        let w = &mut state[2 * n * i..2 * n * (i + 1)];
        let mut tt = TwoTerm::new(g);
        let mut mu = vec![1.0; nc];
        let update_mu = |tt: &TwoTerm, mu: &mut [f64]| -> f64 {
            let mut change = 0.0f64;
            for &c in g.active_cells() {
                let m = curve.eval((tt.ax[c] * tt.ax[c] + tt.ay[c] * tt.ay[c]).sqrt());
                change = change.max((m - mu[c]).abs());
                mu[c] = m;
            }
            change
        };
        tt.fields(g, &w[..n], &w[n..], Some((&e.x, &e.y)));
        update_mu(&tt, &mut mu);
        let mut converged = false;
        for _ in 0..config.max_sweeps {
            sweeps += 1;
            // linear gradient map of the frozen-μ problem (without the A^J term)
            let apply = |v: &[f64], out: &mut [f64]| {
                let mut full = vec![0.0; 2 * n];
                for (&k, &x) in index.iter().zip(v) {
                    full[k] = x;
                }
                let mut gw = vec![0.0; 2 * n];
                frozen_gradient(g, &mu, area, &full, None, &mut gw);
                for (o, &k) in out.iter_mut().zip(&index) {
                    *o = gw[k];
                }
            };
            let mut g0 = vec![0.0; 2 * n];
            frozen_gradient(g, &mu, area, &vec![0.0; 2 * n], Some((&e.x, &e.y)), &mut g0);
            let rhs: Vec<f64> = index.iter().map(|&k| -g0[k]).collect();
            let sol = conjugate_gradient(apply, &rhs, config.rel_tol, config.max_cg_iterations)
                .map_err(|err| Error::ForwardSolve(format!("experiment {}: {err}", i + 1)))?;
            w.iter_mut().for_each(|v| *v = 0.0);
            for (&k, &x) in index.iter().zip(&sol) {
                w[k] = x;
            }
            tt.fields(g, &w[..n], &w[n..], Some((&e.x, &e.y)));
            if update_mu(&tt, &mut mu) <= config.mu_tol * curve.bounds().0 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::ForwardSolve(format!("experiment {}: μ fixed point did not converge", i + 1)));
        }
    }
    let misfit = problem.misfit_total(curve.values(), &state)?;
    if !misfit.is_finite() {
        return Err(Error::ForwardSolve("non-finite forward misfit".into()));
    }
    let data = ObservationVector::new(problem.observe(&state), problem.data_blocks(), 0.0)?;
    Ok(MagnetSynthesis { data, state, misfit, sweeps })
}

/// Gradient of ½Σ area·|√μ(∇ψ + e) − ∇⊥A/√μ|² over w = [ψ, A] for frozen μ.
fn frozen_gradient(g: &crate::grid2d::Grid, mu: &[f64], area: f64, w: &[f64], extra: Option<(&[f64], &[f64])>, out: &mut [f64]) {
    let n = g.num_nodes();
    let mut tt = TwoTerm::new(g);
    tt.fields(g, &w[..n], &w[n..], extra);
    tt.residual(g, mu);
    let nc = g.num_cells();
    let (mut wx, mut wy, mut vx, mut vy) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
    for &c in g.active_cells() {
        let s = mu[c].sqrt();
        wx[c] = area * s * tt.qx[c];
        wy[c] = area * s * tt.qy[c];
        vx[c] = -area * tt.qx[c] / s;
        vy[c] = -area * tt.qy[c] / s;
    }
    out.iter_mut().for_each(|v| *v = 0.0);
    let (gp, ga) = out.split_at_mut(n);
    g.gradient_transpose_add(&wx, &wy, gp);
    g.perp_gradient_transpose_add(&vx, &vy, ga);
}
