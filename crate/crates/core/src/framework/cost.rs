use super::{ObservationVector, ProblemInstance, RegularizationWeights};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// α = max(α₀δ², δ²/c₀).
pub fn choose_alpha(delta: f64, weights: &RegularizationWeights) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::ExactData);
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be positive, got {delta}")));
    }
    let d2 = delta * delta;
    Ok((weights.alpha0 * d2).max(d2 / weights.c0))
}

/// Max-norm discrepancy ‖y2 − y1‖∞.
pub fn discrepancy(y1: &ObservationVector, y2: &ObservationVector) -> Result<f64> {
    if !y1.same_structure(y2) {
        return Err(Error::BlockMismatch("observation vectors have different block structure".into()));
    }
    Ok(max_abs_diff(y1.values(), y2.values()))
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (q - p).abs()).fold(0.0, f64::max)
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn add_into(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

pub(crate) fn check_finite(label: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalBlowUp(format!("non-finite values in {label}")))
    }
}

/// T_α = Q_E(x, û; y) + α·R(x, û).
pub fn assemble_cost<P: ProblemInstance + ?Sized>(
    problem: &P,
    x: &[f64],
    state: &[f64],
    y: &ObservationVector,
    alpha: f64,
) -> Result<f64> {
    check_dims(problem, x, state, y)?;
    check_finite("parameters", x)?;
    check_finite("state", state)?;
    let total = add_into(state, &problem.lift(y.values())?);
    let q = problem.misfit_total(x, &total)?;
    let r = if alpha == 0.0 { 0.0 } else { problem.regularizer(x, state) };
    let cost = q + alpha * r;
    if !cost.is_finite() {
        return Err(Error::NumericalBlowUp("cost is not finite".into()));
    }
    Ok(cost)
}

/// T_α and its gradient with respect to (x, û). Mask entries are not zeroed.
pub fn cost_gradient<P: ProblemInstance + ?Sized>(
    problem: &P,
    x: &[f64],
    state: &[f64],
    y: &ObservationVector,
    alpha: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_dims(problem, x, state, y)?;
    check_finite("parameters", x)?;
    check_finite("state", state)?;
    let total = add_into(state, &problem.lift(y.values())?);
    let mut gx = vec![0.0; x.len()];
    let mut gu = vec![0.0; state.len()];
    let q = problem.misfit_gradient_total(x, &total, &mut gx, &mut gu)?;
    let r = if alpha == 0.0 { 0.0 } else { problem.regularizer_gradient(x, state, alpha, &mut gx, &mut gu) };
    let cost = q + alpha * r;
    if !cost.is_finite() {
        return Err(Error::NumericalBlowUp("cost is not finite".into()));
    }
    Ok((cost, gx, gu))
}

pub(crate) fn check_dims<P: ProblemInstance + ?Sized>(problem: &P, x: &[f64], state: &[f64], y: &ObservationVector) -> Result<()> {
    if x.len() != problem.param_len() || state.len() != problem.state_len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} parameters and {} state entries, got {} and {}",
            problem.param_len(),
            problem.state_len(),
            x.len(),
            state.len()
        )));
    }
    if y.blocks() != problem.data_blocks().as_slice() {
        return Err(Error::BlockMismatch("data blocks do not match the problem".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityCheck {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Lipschitz-type estimate of |Q_E(z1) − Q_E(z2)| in terms of S = ‖z1 − z2‖∞.
///
/// The per-block lift norms ‖D_i Cʳⁱ‖ (data max-norm to Euclidean residual
/// norm) are bounded by Σ_j ‖D_i Cʳⁱ e_j‖ over the canonical basis.
pub fn check_data_continuity<P: ProblemInstance + ?Sized>(
    problem: &P,
    x: &[f64],
    state: &[f64],
    z1: &ObservationVector,
    z2: &ObservationVector,
) -> Result<ContinuityCheck> {
    let s = discrepancy(z1, z2)?;
    check_dims(problem, x, state, z1)?;
    let q1 = problem.misfit_total(x, &add_into(state, &problem.lift(z1.values())?))?;
    let q2 = problem.misfit_total(x, &add_into(state, &problem.lift(z2.values())?))?;
    let lhs = (q1 - q2).abs();
    if s == 0.0 {
        return Ok(ContinuityCheck { lhs, bound: 0.0, holds: lhs == 0.0 });
    }
    let norms = lift_block_norms(problem, x, state)?;
    let root = (2.0 * q2).sqrt();
    let bound: f64 = norms.iter().map(|&n| (root + 0.5 * n * s) * n * s).sum();
    // round-off allowance on the two misfit evaluations
    let slack = 1e-12 * (q1.abs() + q2.abs());
    Ok(ContinuityCheck { lhs, bound, holds: lhs <= bound + slack })
}

/// Brute-force Σ_j ‖D_i Cʳⁱ P e_j‖ for every residual block i, where D_i is
/// the (affine along lifts) dependence of block i at `(x, state)` and P the
/// projection onto the data space (z = Σ z_j P e_j for admissible z).
pub fn lift_block_norms<P: ProblemInstance + ?Sized>(problem: &P, x: &[f64], state: &[f64]) -> Result<Vec<f64>> {
    let m = problem.data_len();
    let base = problem.residual_blocks_total(x, state)?;
    let mut norms = vec![0.0; base.len()];
    let mut e = vec![0.0; m];
    for j in 0..m {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        problem.project_to_data_space(&mut e);
        let lifted = add_into(state, &problem.lift(&e)?);
        let blocks = problem.residual_blocks_total(x, &lifted)?;
        for (i, (b, b0)) in blocks.iter().zip(&base).enumerate() {
            norms[i] += b.iter().zip(b0).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        }
    }
    Ok(norms)
}

/// Log-sum-exp upper bound of ‖v‖∞ with sharpness `beta`; the gradient
/// (softmax weights with signs) is written into `grad` when given.
pub(crate) fn smooth_max_abs(v: &[f64], beta: f64, grad: Option<&mut [f64]>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = max_abs(v);
    let mut sum = 0.0;
    for &t in v {
        sum += (beta * (t - m)).exp() + (beta * (-t - m)).exp();
    }
    let value = m + sum.ln() / beta;
    if let Some(g) = grad {
        for (gi, &t) in g.iter_mut().zip(v) {
            *gi = ((beta * (t - m)).exp() - (beta * (-t - m)).exp()) / sum;
        }
    }
    value
}
