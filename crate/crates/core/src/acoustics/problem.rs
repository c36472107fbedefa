use super::mics::{Bumps, MeasurementRegion, MicArray};
use super::{AcousticConstants, AcousticOptions, AcousticState, SourceSet};
use crate::error::{Error, Result};
use crate::framework::{AdmissibleSetSpec, BlockLabel, ObservationVector, ProblemInstance};
use crate::grid2d::{BoundaryFace, Grid, ScalarField, SegmentKind, VectorField};

/// Time-harmonic source identification from microphone pressures.
///
/// Parameters: [f_ℜ.x, f_ℜ.y, f_ℑ.x, f_ℑ.y] on cells, then [g_ℜ, g_ℑ] on
/// nodes. State: [p̂_ℜ, p̂_ℑ] on nodes, then [v_ℜ.x, v_ℜ.y, v_ℑ.x, v_ℑ.y] on
/// cells. Data: pressure_re (L values) followed by pressure_im.
#[derive(Debug, Clone)]
pub struct AcousticProblem {
    grid: Grid,
    constants: AcousticConstants,
    mics: MicArray,
    region: MeasurementRegion,
    bumps: Bumps,
    faces: Vec<(BoundaryFace, SegmentKind)>,
    skip_f: bool,
    skip_g: bool,
    x_mask: Vec<bool>,
}

/// Residual fields at a total state; `boundary[k]` holds the (ℜ, ℑ)
/// boundary-condition defects on face k.
#[derive(Debug, Clone)]
pub struct AcousticResidual {
    pub q1: VectorField,
    pub q2: VectorField,
    pub q3: ScalarField,
    pub q4: ScalarField,
    pub boundary: Vec<[f64; 2]>,
}

impl AcousticProblem {
    pub fn new(grid: Grid, constants: AcousticConstants, mics: MicArray, options: &AcousticOptions) -> Result<Self> {
        constants.validate()?;
        let AcousticOptions { ref layout, bump_radius, skip_f, skip_g } = *options;
        if skip_f && skip_g {
            return Err(Error::InvalidArgument("cannot skip both source terms".into()));
        }
        let region = MeasurementRegion::around(&grid, &mics);
        let r = bump_radius.unwrap_or_else(|| mics.default_radius(&grid));
        let bumps = Bumps::build(&grid, &mics, &region, r)?;
        let curve = grid.boundary();
        let faces = curve
            .faces()
            .iter()
            .zip(curve.arclengths())
            .map(|(f, &s)| {
                let kind = layout.as_ref().map_or(SegmentKind::Absorbing, |l| l.kind_at(s + 0.5 * f.length));
                match kind {
                    SegmentKind::Absorbing | SegmentKind::Rigid => Ok((*f, kind)),
                    k => Err(Error::Geometry(format!("boundary kind {k:?} is not acoustic"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (m, n) = (grid.num_cells(), grid.num_nodes());
        let mut x_mask = vec![false; 4 * m + 2 * n];
        for &c in grid.active_cells() {
            if !region.cells[c] && !skip_f {
                for b in 0..4 {
                    x_mask[b * m + c] = true;
                }
            }
        }
        if !skip_g {
            for k in 0..n {
                if grid.is_active_node(k) && !region.nodes[k] {
                    x_mask[4 * m + k] = true;
                    x_mask[4 * m + n + k] = true;
                }
            }
        }
        Ok(Self { grid, constants, mics, region, bumps, faces, skip_f, skip_g, x_mask })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn constants(&self) -> &AcousticConstants {
        &self.constants
    }

    pub fn mics(&self) -> &MicArray {
        &self.mics
    }

    pub fn region(&self) -> &MeasurementRegion {
        &self.region
    }

    pub fn bumps(&self) -> &Bumps {
        &self.bumps
    }

    pub fn skip_g(&self) -> bool {
        self.skip_g
    }

    pub fn skip_f(&self) -> bool {
        self.skip_f
    }

    fn mn(&self) -> (usize, usize) {
        (self.grid.num_cells(), self.grid.num_nodes())
    }

    pub fn sources(&self, x: &[f64]) -> SourceSet {
        SourceSet::from_params(&self.grid, x)
    }

    pub fn state(&self, u: &[f64]) -> AcousticState {
        AcousticState::from_vec(&self.grid, u)
    }

    /// Residual fields for sources, kernel state and data.
    pub fn residual(&self, sources: &SourceSet, state: &AcousticState, y: &ObservationVector) -> Result<AcousticResidual> {
        let x = sources.to_params();
        let lift = self.lift(y.values())?;
        let total: Vec<f64> = state.to_vec().iter().zip(&lift).map(|(a, b)| a + b).collect();
        self.residual_total(&x, &total)
    }

    pub fn residual_total(&self, x: &[f64], total: &[f64]) -> Result<AcousticResidual> {
        self.check(x, total)?;
        let g = &self.grid;
        let (m, n) = self.mn();
        let AcousticConstants { rho0, c0, omega, .. } = self.constants;
        let kappa = self.constants.kappa();
        let k2 = omega / (c0 * c0);
        let (fr, fi, gr, gi) = split_params(x, m, n);
        let (pr, pi, vr, vi) = split_state(total, m, n);

        let mut q1 = VectorField::zeros(m);
        let mut q2 = VectorField::zeros(m);
        g.gradient_into(pr, &mut q1.x, &mut q1.y);
        g.gradient_into(pi, &mut q2.x, &mut q2.y);
        for &c in g.active_cells() {
            q1.x[c] += -rho0 * omega * vi.0[c] - fr.0[c];
            q1.y[c] += -rho0 * omega * vi.1[c] - fr.1[c];
            q2.x[c] += rho0 * omega * vr.0[c] - fi.0[c];
            q2.y[c] += rho0 * omega * vr.1[c] - fi.1[c];
        }
        let mut q3 = vec![0.0; n];
        let mut q4 = vec![0.0; n];
        g.divergence_into(vr.0, vr.1, &mut q3);
        g.divergence_into(vi.0, vi.1, &mut q4);
        for k in 0..n {
            if g.is_active_node(k) {
                q3[k] = -k2 * pi[k] + rho0 * q3[k] - gr[k];
                q4[k] = k2 * pr[k] + rho0 * q4[k] - gi[k];
            } else {
                q3[k] = 0.0;
                q4[k] = 0.0;
            }
        }
        let boundary = self
            .faces
            .iter()
            .map(|(f, kind)| {
                let [a, b] = f.nodes;
                let c = f.cell;
                let vn = |v: (&[f64], &[f64])| f.normal[0] * v.0[c] + f.normal[1] * v.1[c];
                match kind {
                    SegmentKind::Rigid => [vn(vr), vn(vi)],
                    _ => [
                        rho0 * vn(vr) + kappa * 0.5 * (pr[a] + pr[b]),
                        rho0 * vn(vi) + kappa * 0.5 * (pi[a] + pi[b]),
                    ],
                }
            })
            .collect();
        Ok(AcousticResidual { q1, q2, q3: ScalarField::from_vec(q3), q4: ScalarField::from_vec(q4), boundary })
    }

    fn check(&self, x: &[f64], total: &[f64]) -> Result<()> {
        if x.len() != self.param_len() || total.len() != self.state_len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters and {} state entries, got {} and {}",
                self.param_len(),
                self.state_len(),
                x.len(),
                total.len()
            )));
        }
        Ok(())
    }

    /// Effective monopole source s = ∇·f − iω g at nodes, as (ℜ, ℑ).
    pub fn effective_source(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = self.mn();
        let (fr, fi, gr, gi) = split_params(x, m, n);
        let w = self.constants.omega;
        let mut sr = vec![0.0; n];
        let mut si = vec![0.0; n];
        self.grid.divergence_into(fr.0, fr.1, &mut sr);
        self.grid.divergence_into(fi.0, fi.1, &mut si);
        for k in 0..n {
            if self.grid.is_active_node(k) {
                sr[k] += w * gi[k];
                si[k] -= w * gr[k];
            } else {
                sr[k] = 0.0;
                si[k] = 0.0;
            }
        }
        (sr, si)
    }

    /// Node magnitude |g| = √(g_ℜ² + g_ℑ²).
    pub fn g_magnitude(&self, x: &[f64]) -> Vec<f64> {
        let (m, n) = self.mn();
        let (_, _, gr, gi) = split_params(x, m, n);
        gr.iter().zip(gi).map(|(a, b)| a.hypot(*b)).collect()
    }

    /// Node magnitude of the effective source.
    pub fn source_magnitude(&self, x: &[f64]) -> Vec<f64> {
        let (sr, si) = self.effective_source(x);
        sr.iter().zip(&si).map(|(a, b)| a.hypot(*b)).collect()
    }

    /// Area-weighted L¹ norms of ∇·f_ℜ, ∇·f_ℑ (nodes) and of both
    /// components of ∇g_ℜ, ∇g_ℑ (cells).
    pub fn sparsity_norm(&self, x: &[f64]) -> f64 {
        self.sparsity_with(x, |t| t.abs(), None, 0.0)
    }

    /// Σ w·φ(d) over the derivatives above; adds `scale ∂/∂x` into `gx` when given.
    fn sparsity_with(&self, x: &[f64], phi: impl Fn(f64) -> f64, dphi: Option<(&dyn Fn(f64) -> f64, &mut [f64])>, scale: f64) -> f64 {
        let g = &self.grid;
        let (m, n) = self.mn();
        let area = g.cell_area();
        let (fr, fi, gr, gi) = split_params(x, m, n);
        let mut d = vec![0.0; n];
        let mut cx = vec![0.0; m];
        let mut cy = vec![0.0; m];
        let mut total = 0.0;
        let mut dphi = dphi;
        for (b, f) in [fr, fi].into_iter().enumerate() {
            g.divergence_into(f.0, f.1, &mut d);
            for k in 0..n {
                if g.is_active_node(k) {
                    total += g.node_weight(k) * phi(d[k]);
                }
            }
            if let Some((dp, gx)) = dphi.as_mut() {
                let s: Vec<f64> = (0..n)
                    .map(|k| if g.is_active_node(k) { scale * g.node_weight(k) * dp(d[k]) } else { 0.0 })
                    .collect();
                let (lo, hi) = gx[2 * b * m..2 * (b + 1) * m].split_at_mut(m);
                g.divergence_transpose_add(&s, lo, hi);
            }
        }
        for (b, v) in [gr, gi].into_iter().enumerate() {
            g.gradient_into(v, &mut cx, &mut cy);
            for &c in g.active_cells() {
                total += area * (phi(cx[c]) + phi(cy[c]));
            }
            if let Some((dp, gx)) = dphi.as_mut() {
                for &c in g.active_cells() {
                    cx[c] = scale * area * dp(cx[c]);
                    cy[c] = scale * area * dp(cy[c]);
                }
                g.gradient_transpose_add(&cx, &cy, &mut gx[4 * m + b * n..4 * m + (b + 1) * n]);
            }
        }
        total
    }

    /// Smoothing width of the L¹ surrogate. Six weighted sums each cover
    /// |Ω|, so the surrogate under-counts by at most 6ε|Ω| = 10⁻³ρ.
    fn smoothing(&self, spec: &AdmissibleSetSpec) -> f64 {
        if spec.rho > 0.0 {
            1e-3 * spec.rho / (6.0 * self.grid.area())
        } else {
            1e-12
        }
    }

    fn l2_params(&self, x: &[f64]) -> f64 {
        let (m, n) = self.mn();
        let (fr, fi, gr, gi) = split_params(x, m, n);
        let g = &self.grid;
        g.l2_inner_cells(fr.0, fr.1, fr.0, fr.1) + g.l2_inner_cells(fi.0, fi.1, fi.0, fi.1) + g.l2_inner_nodes(gr, gr) + g.l2_inner_nodes(gi, gi)
    }
}

type Pair<'a> = (&'a [f64], &'a [f64]);

fn split_params(x: &[f64], m: usize, n: usize) -> (Pair<'_>, Pair<'_>, &[f64], &[f64]) {
    let (f, gs) = x.split_at(4 * m);
    let (gr, gi) = gs.split_at(n);
    ((&f[..m], &f[m..2 * m]), (&f[2 * m..3 * m], &f[3 * m..]), gr, gi)
}

fn split_state(u: &[f64], m: usize, n: usize) -> (&[f64], &[f64], Pair<'_>, Pair<'_>) {
    let (p, v) = u.split_at(2 * n);
    (&p[..n], &p[n..], (&v[..m], &v[m..2 * m]), (&v[2 * m..3 * m], &v[3 * m..]))
}

impl ProblemInstance for AcousticProblem {
    fn param_len(&self) -> usize {
        let (m, n) = self.mn();
        4 * m + 2 * n
    }

    fn state_len(&self) -> usize {
        let (m, n) = self.mn();
        2 * n + 4 * m
    }

    fn data_blocks(&self) -> Vec<BlockLabel> {
        let l = self.mics.len();
        ObservationVector::tiled_blocks([("pressure_re", l), ("pressure_im", l)])
    }

    /// Bump sums for both pressures, zero velocity.
    fn lift(&self, y: &[f64]) -> Result<Vec<f64>> {
        let l = self.mics.len();
        if y.len() != 2 * l {
            return Err(Error::BlockMismatch(format!("expected {} pressures, got {}", 2 * l, y.len())));
        }
        let n = self.grid.num_nodes();
        let mut out = vec![0.0; self.state_len()];
        for (k, bump) in self.bumps.support.iter().enumerate() {
            for &(node, b) in bump {
                out[node] += y[k] * b;
                out[n + node] += y[l + k] * b;
            }
        }
        Ok(out)
    }

    fn observe(&self, state: &[f64]) -> Vec<f64> {
        let n = self.grid.num_nodes();
        let nodes = self.mics.nodes();
        nodes.iter().map(|&k| state[k]).chain(nodes.iter().map(|&k| state[n + k])).collect()
    }

    fn observe_adjoint(&self, w: &[f64], scale: f64, gu: &mut [f64]) {
        let n = self.grid.num_nodes();
        let l = self.mics.len();
        for (k, &node) in self.mics.nodes().iter().enumerate() {
            gu[node] += scale * w[k];
            gu[n + node] += scale * w[l + k];
        }
    }

    fn lift_adjoint(&self, g: &[f64]) -> Option<Vec<f64>> {
        let n = self.grid.num_nodes();
        let l = self.mics.len();
        let mut out = vec![0.0; 2 * l];
        for (k, bump) in self.bumps.support.iter().enumerate() {
            for &(node, b) in bump {
                out[k] += b * g[node];
                out[l + k] += b * g[n + node];
            }
        }
        Some(out)
    }

    fn residual_blocks_total(&self, x: &[f64], total: &[f64]) -> Result<Vec<Vec<f64>>> {
        let r = self.residual_total(x, total)?;
        let g = &self.grid;
        let sa = g.cell_area().sqrt();
        let cells = |v: &VectorField| -> Vec<f64> {
            g.active_cells().iter().flat_map(|&c| [sa * v.x[c], sa * v.y[c]]).collect()
        };
        let nodes = |v: &ScalarField| -> Vec<f64> { (0..v.len()).map(|k| g.node_weight(k).sqrt() * v[k]).collect() };
        let faces: Vec<f64> = self
            .faces
            .iter()
            .zip(&r.boundary)
            .flat_map(|((f, _), b)| [f.length.sqrt() * b[0], f.length.sqrt() * b[1]])
            .collect();
        Ok(vec![cells(&r.q1), cells(&r.q2), nodes(&r.q3), nodes(&r.q4), faces])
    }

    fn misfit_gradient_total(&self, x: &[f64], total: &[f64], gx: &mut [f64], gu: &mut [f64]) -> Result<f64> {
        let r = self.residual_total(x, total)?;
        let g = &self.grid;
        let (m, n) = self.mn();
        let area = g.cell_area();
        let AcousticConstants { rho0, c0, omega, .. } = self.constants;
        let kappa = self.constants.kappa();
        let k2 = omega / (c0 * c0);
        let mut value = 0.0;

        let mut r1 = VectorField::zeros(m);
        let mut r2 = VectorField::zeros(m);
        for &c in g.active_cells() {
            value += 0.5 * area * (r.q1.x[c].powi(2) + r.q1.y[c].powi(2) + r.q2.x[c].powi(2) + r.q2.y[c].powi(2));
            r1.x[c] = area * r.q1.x[c];
            r1.y[c] = area * r.q1.y[c];
            r2.x[c] = area * r.q2.x[c];
            r2.y[c] = area * r.q2.y[c];
        }
        let mut r3 = vec![0.0; n];
        let mut r4 = vec![0.0; n];
        for k in 0..n {
            let w = g.node_weight(k);
            value += 0.5 * w * (r.q3[k].powi(2) + r.q4[k].powi(2));
            r3[k] = w * r.q3[k];
            r4[k] = w * r.q4[k];
        }

        // parameters
        for &c in g.active_cells() {
            gx[c] -= r1.x[c];
            gx[m + c] -= r1.y[c];
            gx[2 * m + c] -= r2.x[c];
            gx[3 * m + c] -= r2.y[c];
        }
        for k in 0..n {
            gx[4 * m + k] -= r3[k];
            gx[4 * m + n + k] -= r4[k];
        }

        // state
        let (gp, gv) = gu.split_at_mut(2 * n);
        let (gpr, gpi) = gp.split_at_mut(n);
        let (gvr, gvi) = gv.split_at_mut(2 * m);
        let (gvrx, gvry) = gvr.split_at_mut(m);
        let (gvix, gviy) = gvi.split_at_mut(m);
        g.gradient_transpose_add(&r1.x, &r1.y, gpr);
        g.gradient_transpose_add(&r2.x, &r2.y, gpi);
        for k in 0..n {
            gpr[k] += k2 * r4[k];
            gpi[k] -= k2 * r3[k];
        }
        for &c in g.active_cells() {
            gvix[c] -= rho0 * omega * r1.x[c];
            gviy[c] -= rho0 * omega * r1.y[c];
            gvrx[c] += rho0 * omega * r2.x[c];
            gvry[c] += rho0 * omega * r2.y[c];
        }
        let r3s: Vec<f64> = r3.iter().map(|v| rho0 * v).collect();
        let r4s: Vec<f64> = r4.iter().map(|v| rho0 * v).collect();
        g.divergence_transpose_add(&r3s, gvrx, gvry);
        g.divergence_transpose_add(&r4s, gvix, gviy);

        for ((f, kind), b) in self.faces.iter().zip(&r.boundary) {
            value += 0.5 * f.length * (b[0] * b[0] + b[1] * b[1]);
            let (wr, wi) = (f.length * b[0], f.length * b[1]);
            let c = f.cell;
            let s = if *kind == SegmentKind::Rigid { 1.0 } else { rho0 };
            gvrx[c] += s * wr * f.normal[0];
            gvry[c] += s * wr * f.normal[1];
            gvix[c] += s * wi * f.normal[0];
            gviy[c] += s * wi * f.normal[1];
            if *kind != SegmentKind::Rigid {
                for &a in &f.nodes {
                    gpr[a] += 0.5 * kappa * wr;
                    gpi[a] += 0.5 * kappa * wi;
                }
            }
        }
        Ok(value)
    }

    /// ½ of the eight squared L² norms.
    fn regularizer(&self, x: &[f64], state: &[f64]) -> f64 {
        let (m, n) = self.mn();
        let g = &self.grid;
        let (pr, pi, vr, vi) = split_state(state, m, n);
        0.5 * (self.l2_params(x)
            + g.l2_inner_nodes(pr, pr)
            + g.l2_inner_nodes(pi, pi)
            + g.l2_inner_cells(vr.0, vr.1, vr.0, vr.1)
            + g.l2_inner_cells(vi.0, vi.1, vi.0, vi.1))
    }

    fn regularizer_gradient(&self, x: &[f64], state: &[f64], scale: f64, gx: &mut [f64], gu: &mut [f64]) -> f64 {
        let g = &self.grid;
        let (m, n) = self.mn();
        let area = g.cell_area();
        for &c in g.active_cells() {
            for b in 0..4 {
                gx[b * m + c] += scale * area * x[b * m + c];
                gu[2 * n + b * m + c] += scale * area * state[2 * n + b * m + c];
            }
        }
        for k in 0..n {
            let w = scale * g.node_weight(k);
            gx[4 * m + k] += w * x[4 * m + k];
            gx[4 * m + n + k] += w * x[4 * m + n + k];
            gu[k] += w * state[k];
            gu[n + k] += w * state[n + k];
        }
        self.regularizer(x, state)
    }

    fn constraint(&self, x: &[f64], _state: &[f64], _spec: &AdmissibleSetSpec) -> f64 {
        self.sparsity_norm(x)
    }

    /// Σ w·(√(d² + ε²) − ε) in place of Σ w·|d|.
    fn constraint_smooth(
        &self,
        x: &[f64],
        _state: &[f64],
        spec: &AdmissibleSetSpec,
        scale: f64,
        gx: Option<&mut [f64]>,
        _gu: Option<&mut [f64]>,
    ) -> Option<f64> {
        let eps = self.smoothing(spec);
        let phi = |t: f64| (t * t + eps * eps).sqrt() - eps;
        let dphi = |t: f64| t / (t * t + eps * eps).sqrt();
        let value = match gx {
            Some(gx) => self.sparsity_with(x, phi, Some((&dphi, gx)), scale),
            None => self.sparsity_with(x, phi, None, 0.0),
        };
        Some(value)
    }

    /// For fixed state the sources decouple: f = a/(1 + α) with a the
    /// state part of q₁ (and likewise for q₂, q₃, q₄); zero on Ω_ms.
    fn param_argmin(&self, _x: &[f64], _state: &[f64], total: &[f64], alpha: f64, spec: &AdmissibleSetSpec) -> Option<Vec<f64>> {
        let zero = vec![0.0; self.param_len()];
        let r = self.residual_total(&zero, total).ok()?;
        let (m, n) = self.mn();
        let mut x = vec![0.0; self.param_len()];
        let s = 1.0 / (1.0 + alpha);
        for c in 0..m {
            x[c] = s * r.q1.x[c];
            x[m + c] = s * r.q1.y[c];
            x[2 * m + c] = s * r.q2.x[c];
            x[3 * m + c] = s * r.q2.y[c];
        }
        for k in 0..n {
            x[4 * m + k] = s * r.q3[k];
            x[4 * m + n + k] = s * r.q4[k];
        }
        self.project_params(&mut x, spec);
        Some(x)
    }

    fn param_mask(&self) -> Vec<bool> {
        self.x_mask.clone()
    }

    fn state_mask(&self) -> Vec<bool> {
        let (m, n) = self.mn();
        let g = &self.grid;
        let mut mask = vec![false; self.state_len()];
        for k in 0..n {
            if g.is_active_node(k) {
                mask[k] = true;
                mask[n + k] = true;
            }
        }
        for &c in g.active_cells() {
            for b in 0..4 {
                mask[2 * n + b * m + c] = true;
            }
        }
        mask
    }

    /// Masked entries are set to zero; the rest are clamped to the box.
    fn project_params(&self, x: &mut [f64], spec: &AdmissibleSetSpec) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = if self.x_mask[k] { v.clamp(spec.bounds.lower_at(k), spec.bounds.upper_at(k)) } else { 0.0 };
        }
    }

    fn initial_point(&self, _spec: &AdmissibleSetSpec) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.param_len()], vec![0.0; self.state_len()])
    }

    fn b_norm(&self, x: &[f64], state: &[f64]) -> f64 {
        (2.0 * self.regularizer(x, state)).sqrt()
    }

    /// Relative L² error of the effective source.
    fn parameter_error(&self, x: &[f64], _state: &[f64], truth: &[f64]) -> f64 {
        let (sr, si) = self.effective_source(x);
        let (tr, ti) = self.effective_source(truth);
        let g = &self.grid;
        let dr: Vec<f64> = sr.iter().zip(&tr).map(|(a, b)| a - b).collect();
        let di: Vec<f64> = si.iter().zip(&ti).map(|(a, b)| a - b).collect();
        let num = g.l2_inner_nodes(&dr, &dr) + g.l2_inner_nodes(&di, &di);
        let den = g.l2_inner_nodes(&tr, &tr) + g.l2_inner_nodes(&ti, &ti);
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    }
}
