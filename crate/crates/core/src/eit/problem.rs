use super::operators::{build_boundary_lifts, Expansion, LiftBasis, ObservationRows};
use super::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::framework::{AdmissibleSetSpec, BlockLabel, ObservationVector, ProblemInstance};
use crate::grid2d::twoterm::TwoTerm;
use crate::grid2d::{Grid, ScalarField, SmoothScratch, VectorField};

/// Sum-zero tolerance for data blocks.
const SUM_ZERO_TOL: f64 = 1e-10;

/// EIT with the complete electrode model in first-order form.
///
/// Parameters: σ per cell. The state of each pattern lives in the discrete
/// space where ψ is constant on gaps and C_ℓ is constant along electrodes;
/// it is stored in the coordinates of that space (φ at all nodes, ψ off the
/// boundary, one ψ level per gap). [`EitProblem::expand_state`] gives the
/// node fields.
#[derive(Debug, Clone)]
pub struct EitProblem {
    grid: Grid,
    layout: ElectrodeLayout,
    patterns: usize,
    lifts: LiftBasis,
    rows: ObservationRows,
    expansion: Expansion,
}

/// Per-pattern node buffers.
struct Fields {
    phi: Vec<f64>,
    psi: Vec<f64>,
    gphi: Vec<f64>,
    gpsi: Vec<f64>,
}

impl Fields {
    fn new(n: usize) -> Self {
        Self { phi: vec![0.0; n], psi: vec![0.0; n], gphi: vec![0.0; n], gpsi: vec![0.0; n] }
    }

    fn clear_grad(&mut self) {
        self.gphi.iter_mut().for_each(|v| *v = 0.0);
        self.gpsi.iter_mut().for_each(|v| *v = 0.0);
    }
}

impl EitProblem {
    pub fn new(grid: Grid, layout: ElectrodeLayout, patterns: usize) -> Result<Self> {
        if patterns == 0 {
            return Err(Error::InvalidArgument("need at least one current pattern".into()));
        }
        let lifts = build_boundary_lifts(&grid, &layout)?;
        let rows = ObservationRows::build(&layout);
        let expansion = Expansion::build(&grid, &layout);
        Ok(Self { grid, layout, patterns, lifts, rows, expansion })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn layout(&self) -> &ElectrodeLayout {
        &self.layout
    }

    pub fn patterns(&self) -> usize {
        self.patterns
    }

    pub fn lifts(&self) -> &LiftBasis {
        &self.lifts
    }

    pub(crate) fn expansion(&self) -> &Expansion {
        &self.expansion
    }

    fn nn(&self) -> usize {
        self.grid.num_nodes()
    }

    fn block(&self) -> usize {
        self.expansion.len()
    }

    fn coords<'a>(&self, w: &'a [f64], i: usize) -> &'a [f64] {
        &w[i * self.block()..(i + 1) * self.block()]
    }

    fn coords_mut<'a>(&self, w: &'a mut [f64], i: usize) -> &'a mut [f64] {
        let m = self.block();
        &mut w[i * m..(i + 1) * m]
    }

    /// Node fields [φ_1, ψ_1, φ_2, ψ_2, …] of a state vector.
    pub fn expand_state(&self, state: &[f64]) -> Vec<f64> {
        let n = self.nn();
        let mut out = vec![0.0; 2 * n * self.patterns];
        for i in 0..self.patterns {
            let (phi, psi) = out[2 * n * i..2 * n * (i + 1)].split_at_mut(n);
            self.expansion.expand(self.coords(state, i), phi, psi);
        }
        out
    }

    /// State coordinates of per-pattern node fields. Exact when the fields
    /// lie in the discrete state space (ψ constant on gaps, C_ℓ constant on
    /// electrodes); otherwise boundary ψ off the gaps is discarded.
    pub fn pack_state(&self, phi: &[ScalarField], psi: &[ScalarField]) -> Result<Vec<f64>> {
        if phi.len() != self.patterns || psi.len() != self.patterns {
            return Err(Error::InvalidArgument(format!("expected {} field pairs", self.patterns)));
        }
        let mut out = vec![0.0; self.state_len()];
        for i in 0..self.patterns {
            self.expansion.restrict(phi[i].as_slice(), psi[i].as_slice(), self.coords_mut(&mut out, i));
        }
        Ok(out)
    }

    pub fn data_vector(&self, values: Vec<f64>, noise_level: f64) -> Result<ObservationVector> {
        ObservationVector::new(values, self.data_blocks(), noise_level)
    }

    pub(crate) fn check_sigma(&self, sigma: &[f64]) -> Result<()> {
        if sigma.len() != self.grid.num_cells() {
            return Err(Error::InvalidArgument("conductivity has the wrong length".into()));
        }
        for &c in self.grid.active_cells() {
            if !(sigma[c] > 0.0) {
                return Err(Error::InvalidArgument(format!("conductivity must be positive, got {} in cell {c}", sigma[c])));
            }
        }
        Ok(())
    }

    /// Lift coefficients (ψ gap levels, φ electrode levels) of one pattern.
    pub fn lift_coefficients(&self, currents: &[f64], voltages: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        for (name, block) in [("currents", currents), ("voltages", voltages)] {
            let sum: f64 = block.iter().sum();
            let scale = block.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if sum.abs() > SUM_ZERO_TOL * scale {
                return Err(Error::NotSumZero(format!("data not in the sum-zero space: {name} block sums to {sum:.3e}")));
            }
        }
        let mut acc = 0.0;
        let psi_coef = currents
            .iter()
            .map(|eta| {
                acc += eta;
                -acc
            })
            .collect();
        let phi_coef = (0..self.layout.len())
            .map(|l| {
                let e = &self.layout.electrodes()[l];
                voltages[l] - e.z * currents[l] / e.length()
            })
            .collect();
        Ok((psi_coef, phi_coef))
    }

    /// Observation of per-pattern node fields (layout of [`Self::expand_state`]).
    pub fn observe_fields(&self, full: &[f64]) -> Vec<f64> {
        let l = self.layout.len();
        let n = self.nn();
        let mut out = vec![0.0; 2 * l * self.patterns];
        for i in 0..self.patterns {
            let (phi, psi) = full[2 * n * i..2 * n * (i + 1)].split_at(n);
            let (c, v) = out[2 * l * i..2 * l * (i + 1)].split_at_mut(l);
            self.rows.observe(phi, psi, c, v);
        }
        out
    }

    /// Residual fields q_i = √σ∇φ_i − ∇⊥ψ_i/√σ of the total state û + Cʳⁱ(y).
    pub fn residual(&self, sigma: &[f64], state: &[f64], y: &ObservationVector) -> Result<Vec<VectorField>> {
        let total = crate::framework::add_into(state, &self.lift(y.values())?);
        self.residual_fields(sigma, &self.expand_state(&total))
    }

    /// Residual fields of total node fields given directly.
    pub fn residual_fields(&self, sigma: &[f64], full: &[f64]) -> Result<Vec<VectorField>> {
        self.check_sigma(sigma)?;
        let n = self.nn();
        let mut tt = TwoTerm::new(&self.grid);
        let mut out = Vec::with_capacity(self.patterns);
        for i in 0..self.patterns {
            let (phi, psi) = full[2 * n * i..2 * n * (i + 1)].split_at(n);
            tt.fields(&self.grid, phi, psi, None);
            tt.residual(&self.grid, sigma);
            out.push(VectorField { x: tt.qx.clone(), y: tt.qy.clone() });
        }
        Ok(out)
    }

    /// Q_E of total node fields given directly.
    pub fn misfit_fields(&self, sigma: &[f64], full: &[f64]) -> Result<f64> {
        Ok(self
            .residual_fields(sigma, full)?
            .iter()
            .map(|q| 0.5 * self.grid.l2_inner_cells(&q.x, &q.y, &q.x, &q.y))
            .sum())
    }

    /// Relative L² error of σ over active cells.
    pub fn conductivity_error(&self, sigma: &[f64], truth: &[f64]) -> f64 {
        let g = &self.grid;
        let d: Vec<f64> = sigma.iter().zip(truth).map(|(a, b)| a - b).collect();
        (g.l2_inner_cell_scalar(&d, &d) / g.l2_inner_cell_scalar(truth, truth)).sqrt()
    }
}

impl ProblemInstance for EitProblem {
    fn param_len(&self) -> usize {
        self.grid.num_cells()
    }

    fn state_len(&self) -> usize {
        self.patterns * self.block()
    }

    fn data_blocks(&self) -> Vec<BlockLabel> {
        let l = self.layout.len();
        let names: Vec<(String, String)> = (1..=self.patterns)
            .map(|i| (format!("currents[{i}]"), format!("voltages[{i}]")))
            .collect();
        ObservationVector::tiled_blocks(names.iter().flat_map(|(c, v)| [(c.as_str(), l), (v.as_str(), l)]))
    }

    fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let l = self.layout.len();
        if y.len() != 2 * l * self.patterns {
            return Err(Error::BlockMismatch(format!("expected {} data values, got {}", 2 * l * self.patterns, y.len())));
        }
        let n = self.nn();
        let mut out = vec![0.0; self.state_len()];
        for i in 0..self.patterns {
            let block = &y[2 * l * i..2 * l * (i + 1)];
            let (psi_coef, phi_coef) = self.lift_coefficients(&block[..l], &block[l..])?;
            let w = self.coords_mut(&mut out, i);
            for k in 0..l {
                let (a, b) = (phi_coef[k], psi_coef[k]);
                if a != 0.0 {
                    for (o, v) in w[..n].iter_mut().zip(self.lifts.phi[k].as_slice()) {
                        *o += a * v;
                    }
                }
                if b != 0.0 {
                    let free = self.expansion.psi_free();
                    for (j, v) in self.lifts.psi[k].as_slice().iter().enumerate() {
                        if free[j] {
                            w[n + j] += b * v;
                        }
                    }
                }
            }
            w[2 * n..].copy_from_slice(&psi_coef);
        }
        Ok(out)
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        self.observe_fields(&self.expand_state(state))
    }

    fn observe_adjoint(&self, w: &[f64], scale: f64, gu: &mut [f64]) {
        let l = self.layout.len();
        let mut f = Fields::new(self.nn());
        for i in 0..self.patterns {
            let block = &w[2 * l * i..2 * l * (i + 1)];
            f.clear_grad();
            self.rows.observe_adjoint(&block[..l], &block[l..], scale, &mut f.gphi, &mut f.gpsi);
            self.expansion.adjoint_add(&f.gphi, &f.gpsi, self.coords_mut(gu, i));
        }
    }

    fn lift_adjoint(&self, g: &[f64]) -> Option<Vec<f64>> {
        let l = self.layout.len();
        let n = self.nn();
        let free = self.expansion.psi_free();
        let mut out = vec![0.0; 2 * l * self.patterns];
        for i in 0..self.patterns {
            let w = self.coords(g, i);
            let (gphi, rest) = w.split_at(n);
            let (gpsi, gc) = rest.split_at(n);
            let o = &mut out[2 * l * i..2 * l * (i + 1)];
            let mut tail = 0.0;
            for k in (0..l).rev() {
                let gb: f64 = self.lifts.phi[k].as_slice().iter().zip(gphi).map(|(a, b)| a * b).sum();
                let gl: f64 = self.lifts.psi[k]
                    .as_slice()
                    .iter()
                    .zip(gpsi)
                    .zip(free)
                    .filter(|(_, &f)| f)
                    .map(|((a, b), _)| a * b)
                    .sum::<f64>()
                    + gc[k];
                tail += gl;
                let e = &self.layout.electrodes()[k];
                o[l + k] = gb;
                o[k] = -e.z / e.length() * gb - tail;
            }
        }
        Some(out)
    }

    /// Per block: the sum-zero vector closest to `d` with entries in
    /// [−radius, radius], i.e. clamp(d − λ) with λ fixed by bisection.
    fn project_data_ball(&self, d: &mut [f64], radius: f64) {
        for block in d.chunks_mut(self.layout.len()) {
            if radius <= 0.0 {
                block.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            let sum_at = |lam: f64| block.iter().map(|v| (v - lam).clamp(-radius, radius)).sum::<f64>();
            let (mut lo, mut hi) = block.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
            lo -= radius;
            hi += radius;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if sum_at(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 * radius {
                    break;
                }
            }
            let lam = 0.5 * (lo + hi);
            block.iter_mut().for_each(|v| *v = (*v - lam).clamp(-radius, radius));
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            block.iter_mut().for_each(|v| *v -= mean);
        }
    }

    fn residual_blocks_total(&self, x: &[f64], total: &[f64]) -> Result<Vec<Vec<f64>>> {
        let root = self.grid.cell_area().sqrt();
        let q = self.residual_fields(x, &self.expand_state(total))?;
        Ok(q
            .iter()
            .map(|q| self.grid.active_cells().iter().flat_map(|&c| [root * q.x[c], root * q.y[c]]).collect())
            .collect())
    }

    fn misfit_total(&self, x: &[f64], total: &[f64]) -> Result<f64> {
        self.check_sigma(x)?;
        let mut tt = TwoTerm::new(&self.grid);
        let mut f = Fields::new(self.nn());
        let mut q = 0.0;
        for i in 0..self.patterns {
            self.expansion.expand(self.coords(total, i), &mut f.phi, &mut f.psi);
            tt.fields(&self.grid, &f.phi, &f.psi, None);
            q += tt.residual(&self.grid, x);
        }
        Ok(q)
    }

    fn misfit_gradient_total(&self, x: &[f64], total: &[f64], gx: &mut [f64], gu: &mut [f64]) -> Result<f64> {
        self.check_sigma(x)?;
        let mut ws = PatternWorkspace::new(&self.grid);
        let mut f = Fields::new(self.nn());
        let mut q = 0.0;
        for i in 0..self.patterns {
            self.expansion.expand(self.coords(total, i), &mut f.phi, &mut f.psi);
            f.clear_grad();
            q += pattern_misfit_gradient(&self.grid, x, &f.phi, &f.psi, &mut ws, Some(&mut *gx), &mut f.gphi, &mut f.gpsi);
            self.expansion.adjoint_add(&f.gphi, &f.gpsi, self.coords_mut(gu, i));
        }
        Ok(q)
    }

    /// ½ Σ_i (‖φ̂_i‖²_s + ‖ψ̂_i‖²_s) in the discrete smoothing norm.
    fn regularizer(&self, _x: &[f64], state: &[f64]) -> f64 {
        let mut s = SmoothScratch::new(&self.grid);
        let mut f = Fields::new(self.nn());
        let mut r = 0.0;
        for i in 0..self.patterns {
            self.expansion.expand(self.coords(state, i), &mut f.phi, &mut f.psi);
            r += self.grid.smooth_norm_sq_with(&f.phi, &mut s) + self.grid.smooth_norm_sq_with(&f.psi, &mut s);
        }
        0.5 * r
    }

    fn regularizer_gradient(&self, _x: &[f64], state: &[f64], scale: f64, _gx: &mut [f64], gu: &mut [f64]) -> f64 {
        let mut s = SmoothScratch::new(&self.grid);
        let mut f = Fields::new(self.nn());
        let mut r = 0.0;
        for i in 0..self.patterns {
            self.expansion.expand(self.coords(state, i), &mut f.phi, &mut f.psi);
            f.clear_grad();
            r += self.grid.smooth_norm_sq_grad_add(&f.phi, 0.5 * scale, &mut f.gphi, &mut s);
            r += self.grid.smooth_norm_sq_grad_add(&f.psi, 0.5 * scale, &mut f.gpsi, &mut s);
            self.expansion.adjoint_add(&f.gphi, &f.gpsi, self.coords_mut(gu, i));
        }
        0.5 * r
    }

    /// ‖σ − center‖∞ over active cells, center = box midpoint.
    fn constraint(&self, x: &[f64], _state: &[f64], spec: &AdmissibleSetSpec) -> f64 {
        self.grid.active_cells().iter().fold(0.0, |m, &c| {
            let center = 0.5 * (spec.bounds.lower_at(c) + spec.bounds.upper_at(c));
            m.max((x[c] - center).abs())
        })
    }

    /// Q_E is convex and separable in σ: per cell the minimizer is
    /// √(Σ_i|∇⊥ψ_i|² / Σ_i|∇φ_i|²), clipped to the admissible interval.
    fn param_argmin(&self, x: &[f64], _state: &[f64], total: &[f64], _alpha: f64, spec: &AdmissibleSetSpec) -> Option<Vec<f64>> {
        let g = &self.grid;
        let mut tt = TwoTerm::new(g);
        let mut f = Fields::new(self.nn());
        let nc = g.num_cells();
        let (mut a2, mut b2) = (vec![0.0; nc], vec![0.0; nc]);
        for i in 0..self.patterns {
            self.expansion.expand(self.coords(total, i), &mut f.phi, &mut f.psi);
            tt.fields(g, &f.phi, &f.psi, None);
            for &c in g.active_cells() {
                a2[c] += tt.ax[c] * tt.ax[c] + tt.ay[c] * tt.ay[c];
                b2[c] += tt.bx[c] * tt.bx[c] + tt.by[c] * tt.by[c];
            }
        }
        let mut out = x.to_vec();
        for &c in g.active_cells() {
            out[c] = if a2[c] > 0.0 {
                (b2[c] / a2[c]).sqrt()
            } else if b2[c] > 0.0 {
                f64::INFINITY
            } else {
                x[c]
            };
        }
        // clipping a convex 1-D function's minimizer is exact
        self.project_params(&mut out, spec);
        Some(out)
    }

    fn param_mask(&self) -> Vec<bool> {
        (0..self.grid.num_cells()).map(|c| self.grid.is_active_cell(c)).collect()
    }

    /// Active φ nodes, free ψ nodes and all gap levels except the one at
    /// e₁^a (the ψ gauge).
    fn state_mask(&self) -> Vec<bool> {
        let n = self.nn();
        let l = self.layout.len();
        let mut block: Vec<bool> = (0..n).map(|k| self.grid.is_active_node(k)).collect();
        block.extend_from_slice(self.expansion.psi_free());
        block.extend((0..l).map(|g| g + 1 != l));
        block.repeat(self.patterns)
    }

    /// Clamps σ to the box intersected with the ρ-ball about the box center.
    fn project_params(&self, x: &mut [f64], spec: &AdmissibleSetSpec) {
        for (c, v) in x.iter_mut().enumerate() {
            let (lo, hi) = (spec.bounds.lower_at(c), spec.bounds.upper_at(c));
            let center = 0.5 * (lo + hi);
            if !self.grid.is_active_cell(c) {
                *v = center;
                continue;
            }
            let a = lo.max(center - spec.rho);
            let b = hi.min(center + spec.rho);
            *v = if a <= b { v.clamp(a, b) } else { center };
        }
    }

    fn initial_point(&self, spec: &AdmissibleSetSpec) -> (Vec<f64>, Vec<f64>) {
        let x = (0..self.param_len())
            .map(|c| 0.5 * (spec.bounds.lower_at(c) + spec.bounds.upper_at(c)))
            .collect();
        (x, vec![0.0; self.state_len()])
    }

    fn b_norm(&self, x: &[f64], state: &[f64]) -> f64 {
        (self.grid.l2_inner_cell_scalar(x, x) + 2.0 * self.regularizer(x, state)).sqrt()
    }

    fn parameter_error(&self, x: &[f64], _state: &[f64], truth: &[f64]) -> f64 {
        self.conductivity_error(x, truth)
    }

    /// Removes the mean of every block.
    fn project_to_data_space(&self, v: &mut [f64]) {
        let l = self.layout.len();
        for block in v.chunks_mut(l) {
            let mean = block.iter().sum::<f64>() / l as f64;
            block.iter_mut().for_each(|x| *x -= mean);
        }
    }

    /// Mean-free blocks, rescaled to max-norm δ.
    fn project_noise(&self, noise: &mut [f64], delta: f64) {
        self.project_to_data_space(noise);
        let m = crate::framework::max_abs(noise);
        if m > 0.0 {
            noise.iter_mut().for_each(|v| *v *= delta / m);
        }
    }
}

/// Scratch buffers for one pattern's residual and adjoint.
pub(crate) struct PatternWorkspace {
    tt: TwoTerm,
    wx: Vec<f64>,
    wy: Vec<f64>,
    vx: Vec<f64>,
    vy: Vec<f64>,
}

impl PatternWorkspace {
    pub fn new(grid: &Grid) -> Self {
        let nc = grid.num_cells();
        Self { tt: TwoTerm::new(grid), wx: vec![0.0; nc], wy: vec![0.0; nc], vx: vec![0.0; nc], vy: vec![0.0; nc] }
    }
}

/// Q_E of one (φ, ψ) pair; accumulates its gradient. σ must be positive.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pattern_misfit_gradient(
    g: &Grid,
    sigma: &[f64],
    phi: &[f64],
    psi: &[f64],
    ws: &mut PatternWorkspace,
    gx: Option<&mut [f64]>,
    gphi: &mut [f64],
    gpsi: &mut [f64],
) -> f64 {
    let area = g.cell_area();
    let tt = &mut ws.tt;
    tt.fields(g, phi, psi, None);
    let q = tt.residual(g, sigma);
    if let Some(gx) = gx {
        for &c in g.active_cells() {
            let a2 = tt.ax[c] * tt.ax[c] + tt.ay[c] * tt.ay[c];
            let b2 = tt.bx[c] * tt.bx[c] + tt.by[c] * tt.by[c];
            gx[c] += 0.5 * area * (a2 - b2 / (sigma[c] * sigma[c]));
        }
    }
    for &c in g.active_cells() {
        let s = sigma[c].sqrt();
        ws.wx[c] = area * s * tt.qx[c];
        ws.wy[c] = area * s * tt.qy[c];
        ws.vx[c] = -area * tt.qx[c] / s;
        ws.vy[c] = -area * tt.qy[c] / s;
    }
    g.gradient_transpose_add(&ws.wx, &ws.wy, gphi);
    g.perp_gradient_transpose_add(&ws.vx, &ws.vy, gpsi);
    q
}
