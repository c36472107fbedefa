use super::AcousticProblem;
use crate::error::{Error, Result};
use crate::framework::{ObservationVector, ProblemInstance};
use crate::grid2d::conjugate_gradient;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcousticSynthesisConfig {
    pub rel_tol: f64,
    pub max_cg_iterations: usize,
}

impl Default for AcousticSynthesisConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_cg_iterations: 200_000 }
    }
}

#[derive(Debug, Clone)]
pub struct AcousticSynthesis {
    pub data: ObservationVector,
    /// Total state minimizing Q_E for the given sources.
    pub state: Vec<f64>,
    pub misfit: f64,
}

/// Forward solve: minimizes Q_E over the state for fixed sources by
/// conjugate gradients on the normal equations, then samples the pressures.
pub fn synthesize_pressure(problem: &AcousticProblem, sources: &[f64], config: &AcousticSynthesisConfig) -> Result<AcousticSynthesis> {
    if sources.len() != problem.param_len() {
        return Err(Error::InvalidArgument(format!("expected {} source entries, got {}", problem.param_len(), sources.len())));
    }
    let len = problem.state_len();
    let mask = problem.state_mask();
    let index: Vec<usize> = (0..len).filter(|&k| mask[k]).collect();
    let zero = vec![0.0; len];
    let grad = |x: &[f64], u: &[f64]| -> Result<Vec<f64>> {
        let mut gx = vec![0.0; problem.param_len()];
        let mut gu = vec![0.0; len];
        problem.misfit_gradient_total(x, u, &mut gx, &mut gu)?;
        Ok(gu)
    };
    let g0 = grad(sources, &zero)?;
    let no_sources = vec![0.0; problem.param_len()];
    let apply = |v: &[f64], out: &mut [f64]| {
        let mut full = vec![0.0; len];
        for (&k, &x) in index.iter().zip(v) {
            full[k] = x;
        }
        let gu = grad(&no_sources, &full).expect("sizes checked");
        for (o, &k) in out.iter_mut().zip(&index) {
            *o = gu[k];
        }
    };
    let rhs: Vec<f64> = index.iter().map(|&k| -g0[k]).collect();
    let sol = conjugate_gradient(apply, &rhs, config.rel_tol, config.max_cg_iterations).map_err(|e| Error::ForwardSolve(e.to_string()))?;
    let mut state = vec![0.0; len];
    for (&k, &x) in index.iter().zip(&sol) {
        state[k] = x;
    }
    let misfit = problem.misfit_total(sources, &state)?;
    if !misfit.is_finite() {
        return Err(Error::ForwardSolve("non-finite forward misfit".into()));
    }
    let data = ObservationVector::new(problem.observe(&state), problem.data_blocks(), 0.0)?;
    Ok(AcousticSynthesis { data, state, misfit })
}
