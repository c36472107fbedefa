use super::{Grid, ScalarField};
use crate::error::{Error, Result};

/// Discrete harmonic extension of boundary data.
///
/// `boundary_data[k]` is the value at `grid.boundary().nodes()[k]`. Interior
/// nodes solve the five-point Laplace equation, so the result obeys the
/// discrete maximum principle.
pub fn harmonic_extension(grid: &Grid, boundary_data: &[f64]) -> Result<ScalarField> {
    let curve = grid.boundary();
    if boundary_data.len() != curve.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} boundary values, got {}",
            curve.len(),
            boundary_data.len()
        )));
    }
    if boundary_data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite boundary data".into()));
    }
    let nn = grid.num_nodes();
    let mut u = vec![0.0; nn];
    for (&n, &v) in curve.nodes().iter().zip(boundary_data) {
        u[n] = v;
    }
    let unknowns: Vec<usize> = (0..nn).filter(|&n| grid.is_interior_node(n)).collect();
    if unknowns.is_empty() {
        return Ok(ScalarField::from_vec(u));
    }
    let mut slot = vec![usize::MAX; nn];
    for (k, &n) in unknowns.iter().enumerate() {
        slot[n] = k;
    }
    let cx = 1.0 / (grid.hx * grid.hx);
    let cy = 1.0 / (grid.hy * grid.hy);
    let diag = 2.0 * (cx + cy);
    let stride = grid.nx + 1;
    let neighbors = |n: usize| [(n + 1, cx), (n - 1, cx), (n + stride, cy), (n - stride, cy)];

    // rhs from Dirichlet neighbors
    let m = unknowns.len();
    let mut b = vec![0.0; m];
    for (k, &n) in unknowns.iter().enumerate() {
        for (nb, c) in neighbors(n) {
            if slot[nb] == usize::MAX {
                b[k] += c * u[nb];
            }
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for (k, &n) in unknowns.iter().enumerate() {
            let mut acc = diag * x[k];
            for (nb, c) in neighbors(n) {
                let s = slot[nb];
                if s != usize::MAX {
                    acc -= c * x[s];
                }
            }
            out[k] = acc;
        }
    };

    let x = conjugate_gradient(apply, &b, 1e-13, 20 * m + 100)?;
    for (k, &n) in unknowns.iter().enumerate() {
        u[n] = x[k];
    }
    Ok(ScalarField::from_vec(u))
}

/// Plain conjugate gradients for a symmetric positive definite operator.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let m = b.len();
    let mut x = vec![0.0; m];
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; m];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve("operator is not positive definite".into()));
        }
        let a = rr / pap;
        for k in 0..m {
            x[k] += a * p[k];
            r[k] -= a * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..m {
            p[k] = r[k] + beta * p[k];
        }
    }
    if rr.sqrt() <= 1e3 * rel_tol * bnorm {
        Ok(x)
    } else {
        Err(Error::LinearSolve(format!(
            "conjugate gradients stalled at relative residual {:.3e}",
            rr.sqrt() / bnorm
        )))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
