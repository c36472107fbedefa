//! Shared kernel for first-order residuals `q = √c·(∇a + e) − ∇⊥b/√c`.

use super::Grid;

/// Buffers holding `∇a + e` and `∇⊥b` on cells after evaluation.
#[derive(Debug, Clone)]
pub(crate) struct TwoTerm {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    pub bx: Vec<f64>,
    pub by: Vec<f64>,
    pub qx: Vec<f64>,
    pub qy: Vec<f64>,
}

impl TwoTerm {
    pub fn new(grid: &Grid) -> Self {
        let nc = grid.num_cells();
        Self {
            ax: vec![0.0; nc],
            ay: vec![0.0; nc],
            bx: vec![0.0; nc],
            by: vec![0.0; nc],
            qx: vec![0.0; nc],
            qy: vec![0.0; nc],
        }
    }

    /// Fills `∇a + e` and `∇⊥b`.
    pub fn fields(&mut self, grid: &Grid, a: &[f64], b: &[f64], extra: Option<(&[f64], &[f64])>) {
        grid.gradient_into(a, &mut self.ax, &mut self.ay);
        if let Some((ex, ey)) = extra {
            for &c in grid.active_cells() {
                self.ax[c] += ex[c];
                self.ay[c] += ey[c];
            }
        }
        grid.perp_gradient_into(b, &mut self.bx, &mut self.by);
    }

    /// Evaluates `q` for per-cell coefficients `coef` (after [`Self::fields`])
    /// and returns `½ Σ_cells area·|q|²`.
    pub fn residual(&mut self, grid: &Grid, coef: &[f64]) -> f64 {
        let area = grid.cell_area();
        let mut sum = 0.0;
        for &c in grid.active_cells() {
            let s = coef[c].sqrt();
            let qx = s * self.ax[c] - self.bx[c] / s;
            let qy = s * self.ay[c] - self.by[c] / s;
            self.qx[c] = qx;
            self.qy[c] = qy;
            sum += qx * qx + qy * qy;
        }
        0.5 * area * sum
    }
}
