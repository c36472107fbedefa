use super::coil::Coil;
use super::curve::{check_knots, interpolate, TrustRegion};
use crate::error::{Error, Result};
use crate::framework::{AdmissibleSetSpec, BlockLabel, ObservationVector, ProblemInstance};
use crate::grid2d::twoterm::TwoTerm;
use crate::grid2d::{Grid, SmoothScratch, VectorField};

/// Planar permeability identification.
///
/// Parameters: knot values of μ(|H|). State of experiment i: [ψ̂_i, Â_i] at
/// nodes, with H_i = ∇ψ̂_i + A_i^J and B_i = ∇⊥(Â_i + lift). ψ̂ vanishes on
/// the boundary; Â is fixed at its first active node (only ∇⊥A enters).
#[derive(Debug, Clone)]
pub struct MagnetProblem {
    grid: Grid,
    knots: Vec<f64>,
    mu_bounds: (f64, f64),
    coil: Coil,
    excitations: Vec<VectorField>,
    lift_profile: Vec<f64>,
    gauge: usize,
}

/// Per-cell μ and its derivative wrt |H| for one experiment.
struct CellMu {
    mu: Vec<f64>,
    slope: Vec<f64>,
    k: Vec<usize>,
    t: Vec<f64>,
}

impl MagnetProblem {
    pub fn new(grid: Grid, knots: Vec<f64>, mu_bounds: (f64, f64), coil: Coil, excitations: Vec<VectorField>) -> Result<Self> {
        check_knots(&knots)?;
        if !(mu_bounds.0 > 0.0 && mu_bounds.0 <= mu_bounds.1) {
            return Err(Error::InvalidArgument(format!("need 0 < μ̲ ≤ μ̄, got {mu_bounds:?}")));
        }
        if excitations.is_empty() {
            return Err(Error::InvalidArgument("need at least one excitation".into()));
        }
        let nc = grid.num_cells();
        if excitations.iter().any(|e| e.x.len() != nc || e.y.len() != nc || !e.is_finite()) {
            return Err(Error::InvalidArgument("excitation fields must be finite cell fields of the grid".into()));
        }
        let lift_profile = coil.lift_profile(&grid);
        let gauge = (0..grid.num_nodes()).find(|&k| grid.is_active_node(k)).unwrap_or(0);
        Ok(Self { grid, knots, mu_bounds, coil, excitations, lift_profile, gauge })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coil(&self) -> &Coil {
        &self.coil
    }

    pub fn excitations(&self) -> &[VectorField] {
        &self.excitations
    }

    pub fn experiments(&self) -> usize {
        self.excitations.len()
    }

    pub fn mu_bounds(&self) -> (f64, f64) {
        self.mu_bounds
    }

    fn nn(&self) -> usize {
        self.grid.num_nodes()
    }

    fn block<'a>(&self, w: &'a [f64], i: usize) -> (&'a [f64], &'a [f64]) {
        let n = self.nn();
        w[2 * n * i..2 * n * (i + 1)].split_at(n)
    }

    fn block_mut<'a>(&self, w: &'a mut [f64], i: usize) -> (&'a mut [f64], &'a mut [f64]) {
        let n = self.nn();
        w[2 * n * i..2 * n * (i + 1)].split_at_mut(n)
    }

    pub(crate) fn check_curve(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.knots.len() {
            return Err(Error::InvalidArgument(format!("expected {} knot values, got {}", self.knots.len(), values.len())));
        }
        Ok(())
    }

    /// μ(|H|) per active cell; clamped to the bounds, with an error when the
    /// interpolant falls below μ̲/2.
    fn cell_mu(&self, values: &[f64], hx: &[f64], hy: &[f64]) -> Result<CellMu> {
        let nc = self.grid.num_cells();
        let (lo, hi) = self.mu_bounds;
        let mut out = CellMu { mu: vec![1.0; nc], slope: vec![0.0; nc], k: vec![0; nc], t: vec![0.0; nc] };
        for &c in self.grid.active_cells() {
            let s = (hx[c] * hx[c] + hy[c] * hy[c]).sqrt();
            let ip = interpolate(&self.knots, values, s);
            if !(ip.value >= 0.5 * lo) {
                return Err(Error::NumericalBlowUp(format!("μ = {} below μ̲/2 (corrupt curve)", ip.value)));
            }
            out.mu[c] = ip.value.clamp(lo, hi);
            out.slope[c] = if ip.value > lo && ip.value < hi { ip.slope } else { 0.0 };
            out.k[c] = ip.k;
            out.t[c] = if ip.value >= lo && ip.value <= hi { ip.t } else { f64::NAN };
        }
        Ok(out)
    }

    /// Residual fields q_i of total states [ψ_i, A_i].
    pub fn residual_fields(&self, values: &[f64], total: &[f64]) -> Result<Vec<VectorField>> {
        self.check_curve(values)?;
        let mut tt = TwoTerm::new(&self.grid);
        let mut out = Vec::with_capacity(self.experiments());
        for (i, e) in self.excitations.iter().enumerate() {
            let (psi, a) = self.block(total, i);
            tt.fields(&self.grid, psi, a, Some((&e.x, &e.y)));
            let m = self.cell_mu(values, &tt.ax, &tt.ay)?;
            tt.residual(&self.grid, &m.mu);
            out.push(VectorField { x: tt.qx.clone(), y: tt.qy.clone() });
        }
        Ok(out)
    }

    /// Residual at û + Cʳⁱ(y).
    pub fn residual(&self, values: &[f64], state: &[f64], y: &ObservationVector) -> Result<Vec<VectorField>> {
        self.residual_fields(values, &crate::framework::add_into(state, &self.lift(y.values())?))
    }

    /// |H| per active cell and experiment.
    pub fn field_strengths(&self, total: &[f64]) -> Vec<Vec<f64>> {
        let mut tt = TwoTerm::new(&self.grid);
        self.excitations
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (psi, a) = self.block(total, i);
                tt.fields(&self.grid, psi, a, Some((&e.x, &e.y)));
                self.grid.active_cells().iter().map(|&c| (tt.ax[c] * tt.ax[c] + tt.ay[c] * tt.ay[c]).sqrt()).collect()
            })
            .collect()
    }

    /// Covered |H| range. The ψ-lift is zero, so the kernel state suffices.
    pub fn trust_region(&self, state: &[f64]) -> TrustRegion {
        let intervals = self
            .field_strengths(state)
            .iter()
            .map(|s| s.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v))))
            .map(|(a, b)| (a.min(b), b))
            .collect();
        TrustRegion { intervals }
    }

    /// Relative L² distance of two knot-value curves sampled on the region.
    pub fn curve_error(&self, values: &[f64], truth: &[f64], region: &TrustRegion) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for s in region.samples(101) {
            let a = interpolate(&self.knots, values, s).value;
            let b = interpolate(&self.knots, truth, s).value;
            num += (a - b) * (a - b);
            den += b * b;
        }
        (num / den).sqrt()
    }

    /// One experiment: Q_E and gradients for total fields (ψ, A).
    #[allow(clippy::too_many_arguments)]
    fn experiment_gradient(
        &self,
        values: &[f64],
        e: &VectorField,
        psi: &[f64],
        a: &[f64],
        tt: &mut TwoTerm,
        gx: &mut [f64],
        gpsi: &mut [f64],
        ga: &mut [f64],
    ) -> Result<f64> {
        let g = &self.grid;
        let area = g.cell_area();
        tt.fields(g, psi, a, Some((&e.x, &e.y)));
        let m = self.cell_mu(values, &tt.ax, &tt.ay)?;
        let q = tt.residual(g, &m.mu);
        let nc = g.num_cells();
        let (mut wx, mut wy, mut vx, mut vy) = (vec![0.0; nc], vec![0.0; nc], vec![0.0; nc], vec![0.0; nc]);
        for &c in g.active_cells() {
            let mu = m.mu[c];
            let (hx, hy, bx, by) = (tt.ax[c], tt.ay[c], tt.bx[c], tt.by[c]);
            let h2 = hx * hx + hy * hy;
            let dmu = 0.5 * area * (h2 - (bx * bx + by * by) / (mu * mu));
            let t = m.t[c];
            if !t.is_nan() {
                gx[m.k[c]] += dmu * (1.0 - t);
                gx[m.k[c] + 1] += dmu * t;
            }
            wx[c] = area * (mu * hx - bx);
            wy[c] = area * (mu * hy - by);
            if m.slope[c] != 0.0 && h2 > 0.0 {
                let f = dmu * m.slope[c] / h2.sqrt();
                wx[c] += f * hx;
                wy[c] += f * hy;
            }
            vx[c] = area * (bx / mu - hx);
            vy[c] = area * (by / mu - hy);
        }
        g.gradient_transpose_add(&wx, &wy, gpsi);
        g.perp_gradient_transpose_add(&vx, &vy, ga);
        Ok(q)
    }
}

impl ProblemInstance for MagnetProblem {
    fn param_len(&self) -> usize {
        self.knots.len()
    }

    fn state_len(&self) -> usize {
        2 * self.nn() * self.experiments()
    }

    fn data_blocks(&self) -> Vec<BlockLabel> {
        ObservationVector::tiled_blocks([("flux", self.experiments())])
    }

    /// A-lift_i = (h·Φ_i/|Ω_c|)·(ν₂x₁ − ν₁x₂), zero ψ-lift.
    fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.experiments() {
            return Err(Error::BlockMismatch(format!("expected {} fluxes, got {}", self.experiments(), y.len())));
        }
        let scale = self.coil.spec.depth / self.coil.area();
        let mut out = vec![0.0; self.state_len()];
        for (i, &phi) in y.iter().enumerate() {
            let (_, a) = self.block_mut(&mut out, i);
            for (o, l) in a.iter_mut().zip(&self.lift_profile) {
                *o = scale * phi * l;
            }
        }
        Ok(out)
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        let nc = self.grid.num_cells();
        let (mut bx, mut by) = (vec![0.0; nc], vec![0.0; nc]);
        (0..self.experiments())
            .map(|i| {
                let (_, a) = self.block(state, i);
                self.grid.perp_gradient_into(a, &mut bx, &mut by);
                self.coil.flux(&self.grid, &bx, &by)
            })
            .collect()
    }

    fn observe_adjoint(&self, w: &[f64], scale: f64, gu: &mut [f64]) {
        let nc = self.grid.num_cells();
        let f = self.grid.cell_area() / self.coil.spec.depth;
        let [n1, n2] = self.coil.spec.normal;
        for (i, &wi) in w.iter().enumerate() {
            let (mut vx, mut vy) = (vec![0.0; nc], vec![0.0; nc]);
            for &c in self.coil.cells() {
                vx[c] = scale * wi * f * n1;
                vy[c] = scale * wi * f * n2;
            }
            let (_, ga) = self.block_mut(gu, i);
            self.grid.perp_gradient_transpose_add(&vx, &vy, ga);
        }
    }

    fn lift_adjoint(&self, g: &[f64]) -> Option<Vec<f64>> {
        let scale = self.coil.spec.depth / self.coil.area();
        Some(
            (0..self.experiments())
                .map(|i| scale * self.block(g, i).1.iter().zip(&self.lift_profile).map(|(a, b)| a * b).sum::<f64>())
                .collect(),
        )
    }

    fn residual_blocks_total(&self, x: &[f64], total: &[f64]) -> Result<Vec<Vec<f64>>> {
        let root = self.grid.cell_area().sqrt();
        Ok(self
            .residual_fields(x, total)?
            .iter()
            .map(|q| self.grid.active_cells().iter().flat_map(|&c| [root * q.x[c], root * q.y[c]]).collect())
            .collect())
    }

    fn misfit_total(&self, x: &[f64], total: &[f64]) -> Result<f64> {
        self.check_curve(x)?;
        let mut tt = TwoTerm::new(&self.grid);
        let mut q = 0.0;
        for (i, e) in self.excitations.iter().enumerate() {
            let (psi, a) = self.block(total, i);
            tt.fields(&self.grid, psi, a, Some((&e.x, &e.y)));
            let m = self.cell_mu(x, &tt.ax, &tt.ay)?;
            q += tt.residual(&self.grid, &m.mu);
        }
        Ok(q)
    }

    fn misfit_gradient_total(&self, x: &[f64], total: &[f64], gx: &mut [f64], gu: &mut [f64]) -> Result<f64> {
        self.check_curve(x)?;
        let mut tt = TwoTerm::new(&self.grid);
        let mut q = 0.0;
        for (i, e) in self.excitations.iter().enumerate() {
            let (psi, a) = self.block(total, i);
            let (gpsi, ga) = self.block_mut(gu, i);
            q += self.experiment_gradient(x, e, psi, a, &mut tt, gx, gpsi, ga)?;
        }
        Ok(q)
    }

    /// ½ Σ_i (‖ψ̂_i‖²_s + ‖Â_i‖²_s).
    fn regularizer(&self, _x: &[f64], state: &[f64]) -> f64 {
        let mut s = SmoothScratch::new(&self.grid);
        0.5 * state.chunks(self.nn()).map(|f| self.grid.smooth_norm_sq_with(f, &mut s)).sum::<f64>()
    }

    fn regularizer_gradient(&self, _x: &[f64], state: &[f64], scale: f64, _gx: &mut [f64], gu: &mut [f64]) -> f64 {
        let mut s = SmoothScratch::new(&self.grid);
        let n = self.nn();
        0.5 * state
            .chunks(n)
            .zip(gu.chunks_mut(n))
            .map(|(f, g)| self.grid.smooth_norm_sq_grad_add(f, 0.5 * scale, g, &mut s))
            .sum::<f64>()
    }

    /// ‖μ − center‖∞ over the knots.
    fn constraint(&self, x: &[f64], _state: &[f64], spec: &AdmissibleSetSpec) -> f64 {
        x.iter().enumerate().fold(0.0, |m, (k, v)| {
            let center = 0.5 * (spec.bounds.lower_at(k) + spec.bounds.upper_at(k));
            m.max((v - center).abs())
        })
    }

    /// Interior ψ̂ nodes; active Â nodes except the gauge node.
    fn state_mask(&self) -> Vec<bool> {
        let n = self.nn();
        let mut block: Vec<bool> = (0..n).map(|k| self.grid.is_interior_node(k) && self.grid.is_active_node(k)).collect();
        block.extend((0..n).map(|k| self.grid.is_active_node(k) && k != self.gauge));
        block.repeat(self.experiments())
    }

    /// Clamps knots to the box intersected with the ρ-ball about its center.
    fn project_params(&self, x: &mut [f64], spec: &AdmissibleSetSpec) {
        for (k, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (spec.bounds.lower_at(k), spec.bounds.upper_at(k));
            let center = 0.5 * (lo + hi);
            let a = lo.max(center - spec.rho);
            let b = hi.min(center + spec.rho);
            *v = if a <= b { v.clamp(a, b) } else { center };
        }
    }

    fn initial_point(&self, spec: &AdmissibleSetSpec) -> (Vec<f64>, Vec<f64>) {
        let x = (0..self.param_len())
            .map(|k| 0.5 * (spec.bounds.lower_at(k) + spec.bounds.upper_at(k)))
            .collect();
        (x, vec![0.0; self.state_len()])
    }

    fn b_norm(&self, x: &[f64], state: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() + 2.0 * self.regularizer(x, state)).sqrt()
    }

    /// Curve error on the reconstruction's trust region.
    fn parameter_error(&self, x: &[f64], state: &[f64], truth: &[f64]) -> f64 {
        self.curve_error(x, truth, &self.trust_region(state))
    }
}
