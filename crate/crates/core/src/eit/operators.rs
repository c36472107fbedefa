use super::ElectrodeLayout;
use crate::error::Result;
use crate::grid2d::{harmonic_extension, Grid, ScalarField};
use std::collections::BTreeMap;

/// Sparse linear functional of a (φ, ψ) node-field pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Row {
    pub phi: Vec<(usize, f64)>,
    pub psi: Vec<(usize, f64)>,
}

impl Row {
    pub fn eval(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.phi.iter().map(|&(n, w)| w * phi[n]).sum::<f64>() + self.psi.iter().map(|&(n, w)| w * psi[n]).sum::<f64>()
    }

    pub fn adjoint_add(&self, scale: f64, gphi: &mut [f64], gpsi: &mut [f64]) {
        for &(n, w) in &self.phi {
            gphi[n] += scale * w;
        }
        for &(n, w) in &self.psi {
            gpsi[n] += scale * w;
        }
    }

    /// Σ_k c_k·row_k with merged entries.
    pub fn combine(terms: &[(f64, &Row)]) -> Row {
        let mut phi: BTreeMap<usize, f64> = BTreeMap::new();
        let mut psi: BTreeMap<usize, f64> = BTreeMap::new();
        for &(c, r) in terms {
            for &(n, w) in &r.phi {
                *phi.entry(n).or_default() += c * w;
            }
            for &(n, w) in &r.psi {
                *psi.entry(n).or_default() += c * w;
            }
        }
        Row { phi: phi.into_iter().collect(), psi: psi.into_iter().collect() }
    }
}

/// Observation functionals for one pattern.
#[derive(Debug, Clone)]
pub(crate) struct ObservationRows {
    /// Currents: ψ|g_{ℓ−1} − ψ|g_ℓ.
    pub currents: Vec<Row>,
    /// Electrode constants C_ℓ evaluated at the end of each electrode.
    pub constants: Vec<Row>,
}

fn gap_mean(layout: &ElectrodeLayout, l: usize) -> Row {
    let nodes = layout.gap_nodes(l);
    let w = 1.0 / nodes.len() as f64;
    Row { phi: Vec::new(), psi: nodes.iter().map(|&(_, n)| (n, w)).collect() }
}

/// C_ℓ at the k-th node of electrode ℓ (k ≥ 1):
/// (∫_{e_ℓ^a}^{x_k} φ ds − z_ℓ(ψ(x_k) − ψ|g_{ℓ−1})) / d(e_ℓ^a, x_k).
pub(crate) fn electrode_constant(layout: &ElectrodeLayout, l: usize, k: usize) -> Row {
    let nodes = layout.electrode_nodes(l);
    let big_l = layout.len();
    let z = layout.electrodes()[l].z;
    let d = nodes[k].0;
    let integral = Row { phi: trapezoid(nodes, k, 1.0 / d), psi: Vec::new() };
    let prev_gap = gap_mean(layout, (l + big_l - 1) % big_l);
    let point = Row { phi: Vec::new(), psi: vec![(nodes[k].1, 1.0)] };
    Row::combine(&[(1.0, &integral), (-z / d, &point), (z / d, &prev_gap)])
}

/// Trapezoid weights (times `scale`) of ∫ from the first node to node k.
fn trapezoid(nodes: &[(f64, usize)], k: usize, scale: f64) -> Vec<(usize, f64)> {
    let mut w: BTreeMap<usize, f64> = BTreeMap::new();
    for j in 0..k {
        let h = nodes[j + 1].0 - nodes[j].0;
        *w.entry(nodes[j].1).or_default() += 0.5 * h * scale;
        *w.entry(nodes[j + 1].1).or_default() += 0.5 * h * scale;
    }
    w.into_iter().collect()
}

impl ObservationRows {
    pub fn build(layout: &ElectrodeLayout) -> Self {
        let l = layout.len();
        let gaps: Vec<Row> = (0..l).map(|k| gap_mean(layout, k)).collect();
        let currents = (0..l).map(|k| Row::combine(&[(1.0, &gaps[(k + l - 1) % l]), (-1.0, &gaps[k])])).collect();
        let constants = (0..l)
            .map(|k| electrode_constant(layout, k, layout.electrode_nodes(k).len() - 1))
            .collect();
        Self { currents, constants }
    }

    /// Currents block and mean-subtracted voltages block.
    pub fn observe(&self, phi: &[f64], psi: &[f64], currents: &mut [f64], voltages: &mut [f64]) {
        for (o, r) in currents.iter_mut().zip(&self.currents) {
            *o = r.eval(phi, psi);
        }
        for (o, r) in voltages.iter_mut().zip(&self.constants) {
            *o = r.eval(phi, psi);
        }
        let mean = voltages.iter().sum::<f64>() / voltages.len() as f64;
        voltages.iter_mut().for_each(|v| *v -= mean);
    }

    pub fn observe_adjoint(&self, wc: &[f64], wv: &[f64], scale: f64, gphi: &mut [f64], gpsi: &mut [f64]) {
        for (w, r) in wc.iter().zip(&self.currents) {
            r.adjoint_add(scale * w, gphi, gpsi);
        }
        let mean = wv.iter().sum::<f64>() / wv.len() as f64;
        for (w, r) in wv.iter().zip(&self.constants) {
            r.adjoint_add(scale * (w - mean), gphi, gpsi);
        }
    }
}

/// Linear parameterization of the discrete state space of one pattern.
///
/// Coordinates: φ at every node, ψ at nodes off the boundary curve, and one
/// level c_ℓ per gap. ψ on gap g_ℓ (closure) equals c_ℓ; on the interior of
/// electrode e_ℓ it is the unique value making C_ℓ(x_k) the same at every
/// electrode node:
///   ψ(x_k) = (1 − t)c_{ℓ−1} + t·c_ℓ + (∫_{e^a}^{x_k}φ − t∫_{e_ℓ}φ)/z_ℓ,  t = d_k/|e_ℓ|.
#[derive(Debug, Clone)]
pub(crate) struct Expansion {
    n: usize,
    levels: usize,
    /// Nodes whose ψ is a free coordinate.
    psi_free: Vec<bool>,
    gap_nodes: Vec<Vec<usize>>,
    /// (node, φ weights, (gap index, weight) pairs).
    electrode_rows: Vec<(usize, Vec<(usize, f64)>, [(usize, f64); 2])>,
}

impl Expansion {
    pub fn build(grid: &Grid, layout: &ElectrodeLayout) -> Self {
        let n = grid.num_nodes();
        let l = layout.len();
        let mut psi_free: Vec<bool> = (0..n).map(|k| grid.is_active_node(k)).collect();
        for &node in grid.boundary().nodes() {
            psi_free[node] = false;
        }
        let gap_nodes = (0..l).map(|g| layout.gap_nodes(g).iter().map(|&(_, k)| k).collect()).collect();
        let mut electrode_rows = Vec::new();
        for e in 0..l {
            let nodes = layout.electrode_nodes(e);
            let last = nodes.len() - 1;
            let len = nodes[last].0;
            let z = layout.electrodes()[e].z;
            let prev = (e + l - 1) % l;
            let full = trapezoid(nodes, last, 1.0 / z);
            for k in 1..last {
                let t = nodes[k].0 / len;
                let part = Row { phi: trapezoid(nodes, k, 1.0 / z), psi: Vec::new() };
                let whole = Row { phi: full.clone(), psi: Vec::new() };
                let phi = Row::combine(&[(1.0, &part), (-t, &whole)]).phi;
                electrode_rows.push((nodes[k].1, phi, [(prev, 1.0 - t), (e, t)]));
            }
        }
        Self { n, levels: l, psi_free, gap_nodes, electrode_rows }
    }

    /// Coordinates per pattern: 2N + L.
    pub fn len(&self) -> usize {
        2 * self.n + self.levels
    }

    pub fn psi_free(&self) -> &[bool] {
        &self.psi_free
    }

    /// Full (φ, ψ) node fields from coordinates `w`.
    pub fn expand(&self, w: &[f64], phi: &mut [f64], psi: &mut [f64]) {
        let n = self.n;
        phi.copy_from_slice(&w[..n]);
        let c = &w[2 * n..];
        for k in 0..n {
            psi[k] = if self.psi_free[k] { w[n + k] } else { 0.0 };
        }
        for (g, nodes) in self.gap_nodes.iter().enumerate() {
            for &k in nodes {
                psi[k] = c[g];
            }
        }
        for (node, weights, levels) in &self.electrode_rows {
            let mut v = levels[0].1 * c[levels[0].0] + levels[1].1 * c[levels[1].0];
            for &(j, a) in weights {
                v += a * w[j];
            }
            psi[*node] = v;
        }
    }

    /// Adds the transpose of [`Self::expand`] applied to (gφ, gψ) into `gw`.
    pub fn adjoint_add(&self, gphi: &[f64], gpsi: &[f64], gw: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            gw[k] += gphi[k];
            if self.psi_free[k] {
                gw[n + k] += gpsi[k];
            }
        }
        for (g, nodes) in self.gap_nodes.iter().enumerate() {
            for &k in nodes {
                gw[2 * n + g] += gpsi[k];
            }
        }
        for (node, weights, levels) in &self.electrode_rows {
            let s = gpsi[*node];
            gw[2 * n + levels[0].0] += levels[0].1 * s;
            gw[2 * n + levels[1].0] += levels[1].1 * s;
            for &(j, a) in weights {
                gw[j] += a * s;
            }
        }
    }

    /// Coordinates of a full field pair: free values copied, gap levels
    /// averaged over each gap. Exact for pairs in the image of `expand`.
    pub fn restrict(&self, phi: &[f64], psi: &[f64], w: &mut [f64]) {
        let n = self.n;
        w[..n].copy_from_slice(phi);
        for k in 0..n {
            w[n + k] = if self.psi_free[k] { psi[k] } else { 0.0 };
        }
        for (g, nodes) in self.gap_nodes.iter().enumerate() {
            w[2 * n + g] = nodes.iter().map(|&k| psi[k]).sum::<f64>() / nodes.len() as f64;
        }
    }
}

/// Lift fields ψ₀,ℓ and φ₀,ℓ.
#[derive(Debug, Clone)]
pub struct LiftBasis {
    pub psi: Vec<ScalarField>,
    pub phi: Vec<ScalarField>,
}

/// Boundary traces: ψ₀,ℓ is 1 on g_ℓ, rises linearly along e_ℓ and falls
/// along e_{ℓ+1}; φ₀,ℓ is 1 on e_ℓ and ramps to 0 across the adjacent gaps.
/// Interiors are harmonic extensions.
pub fn build_boundary_lifts(grid: &Grid, layout: &ElectrodeLayout) -> Result<LiftBasis> {
    let curve = grid.boundary();
    let l = layout.len();
    let mut psi = Vec::with_capacity(l);
    let mut phi = Vec::with_capacity(l);
    let pos = |n: usize| curve.position_of(n).expect("segment node on the boundary curve");
    let e_len = |k: usize| layout.electrodes()[k].length();
    let g_len = |k: usize| layout.gaps()[k].end - layout.gaps()[k].start;
    for k in 0..l {
        let next = (k + 1) % l;
        let prev = (k + l - 1) % l;

        let mut data = vec![0.0; curve.len()];
        for &(s, n) in layout.electrode_nodes(k) {
            data[pos(n)] = s / e_len(k);
        }
        for &(s, n) in layout.electrode_nodes(next) {
            data[pos(n)] = 1.0 - s / e_len(next);
        }
        for &(_, n) in layout.gap_nodes(k) {
            data[pos(n)] = 1.0;
        }
        psi.push(harmonic_extension(grid, &data)?);

        let mut data = vec![0.0; curve.len()];
        for &(s, n) in layout.gap_nodes(k) {
            data[pos(n)] = 1.0 - s / g_len(k);
        }
        for &(s, n) in layout.gap_nodes(prev) {
            data[pos(n)] = s / g_len(prev);
        }
        for &(_, n) in layout.electrode_nodes(k) {
            data[pos(n)] = 1.0;
        }
        phi.push(harmonic_extension(grid, &data)?);
    }
    Ok(LiftBasis { psi, phi })
}
