//! Structured 2D discretization on a staggered layout.
//!
//! Scalars live at grid nodes, vectors at cell centers. The cell gradient is
//! the average of the node differences along the two cell edges, and the node
//! divergence is the negative mass-weighted adjoint of that gradient plus the
//! lumped boundary flux. With this placement `divergence(perp_gradient(f))`
//! vanishes identically at interior nodes.
//!
//! Node `(i, j)` has index `j * (nx + 1) + i` and sits at `(i hx, j hy)`.
//! Cell `(i, j)` has index `j * nx + i` and is centered at
//! `((i + 1/2) hx, (j + 1/2) hy)`.

mod boundary;
mod field;
mod harmonic;
mod io;
pub(crate) mod twoterm;

pub use boundary::{BoundaryCurve, BoundaryFace, BoundaryLayout, Segment, SegmentKind};
pub use field::{ScalarField, VectorField};
pub use harmonic::harmonic_extension;
pub(crate) use harmonic::conjugate_gradient;
pub use io::{read_matrix_csv, write_cell_matrix_csv, write_node_matrix_csv};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitSquare,
    DiskEmbedded,
}

impl std::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_square" => Ok(DomainKind::UnitSquare),
            "disk_embedded" => Ok(DomainKind::DiskEmbedded),
            other => Err(Error::InvalidArgument(format!("unknown domain kind `{other}`"))),
        }
    }
}

/// Corner offsets of a cell in the order SW, SE, NW, NE.
const CORNERS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub kind: DomainKind,
    active_cell: Vec<bool>,
    active_cells: Vec<usize>,
    active_node: Vec<bool>,
    interior_node: Vec<bool>,
    node_weight: Vec<f64>,
    boundary: BoundaryCurve,
}

impl Grid {
    /// Unit square `[0, 1]^2` with `nx * ny` cells.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, DomainKind::UnitSquare)
    }

    /// Disk of radius 1/2 centered at `(1/2, 1/2)`, embedded in the unit square.
    /// A cell is active when its center lies inside the disk.
    pub fn disk(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, DomainKind::DiskEmbedded)
    }

    pub fn new(nx: usize, ny: usize, kind: DomainKind) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 8x8 cells, got {nx}x{ny}"
            )));
        }
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        let mut active_cell = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                active_cell[j * nx + i] = match kind {
                    DomainKind::UnitSquare => true,
                    DomainKind::DiskEmbedded => {
                        let x = (i as f64 + 0.5) * hx - 0.5;
                        let y = (j as f64 + 0.5) * hy - 0.5;
                        x * x + y * y < 0.25
                    }
                };
            }
        }
        Self::from_mask(nx, ny, kind, active_cell)
    }

    fn from_mask(nx: usize, ny: usize, kind: DomainKind, active_cell: Vec<bool>) -> Result<Self> {
        let hx = 1.0 / nx as f64;
        let hy = 1.0 / ny as f64;
        let nn = (nx + 1) * (ny + 1);
        let area = hx * hy;
        let mut active_node = vec![false; nn];
        let mut node_weight = vec![0.0; nn];
        let mut count = vec![0u8; nn];
        let mut active_cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if !active_cell[c] {
                    continue;
                }
                active_cells.push(c);
                for (di, dj) in CORNERS {
                    let n = (j + dj) * (nx + 1) + i + di;
                    active_node[n] = true;
                    node_weight[n] += 0.25 * area;
                    count[n] += 1;
                }
            }
        }
        if active_cells.is_empty() {
            return Err(Error::Geometry("no active cells".into()));
        }
        let interior_node = count.iter().map(|&k| k == 4).collect();
        let boundary = BoundaryCurve::trace(nx, ny, hx, hy, &active_cell)?;
        Ok(Self {
            nx,
            ny,
            hx,
            hy,
            kind,
            active_cell,
            active_cells,
            active_node,
            interior_node,
            node_weight,
            boundary,
        })
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_position(&self, n: usize) -> [f64; 2] {
        let i = n % (self.nx + 1);
        let j = n / (self.nx + 1);
        [i as f64 * self.hx, j as f64 * self.hy]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let i = c % self.nx;
        let j = c / self.nx;
        [(i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy]
    }

    /// Node indices of a cell in SW, SE, NW, NE order.
    #[inline]
    pub fn cell_nodes(&self, c: usize) -> [usize; 4] {
        let i = c % self.nx;
        let j = c / self.nx;
        let sw = j * (self.nx + 1) + i;
        [sw, sw + 1, sw + self.nx + 1, sw + self.nx + 2]
    }

    pub fn is_active_cell(&self, c: usize) -> bool {
        self.active_cell[c]
    }

    pub fn active_cells(&self) -> &[usize] {
        &self.active_cells
    }

    pub fn is_active_node(&self, n: usize) -> bool {
        self.active_node[n]
    }

    /// Interior nodes have all four surrounding cells active.
    pub fn is_interior_node(&self, n: usize) -> bool {
        self.interior_node[n]
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        self.active_node[n] && !self.interior_node[n]
    }

    /// Quadrature weight of a node: a quarter of the area of each adjacent
    /// active cell.
    pub fn node_weight(&self, n: usize) -> f64 {
        self.node_weight[n]
    }

    pub fn node_weights(&self) -> &[f64] {
        &self.node_weight
    }

    pub fn boundary(&self) -> &BoundaryCurve {
        &self.boundary
    }

    /// Total area of the active region.
    pub fn area(&self) -> f64 {
        self.active_cells.len() as f64 * self.cell_area()
    }

    /// Nearest node to a point.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let i = (p[0] / self.hx).round().clamp(0.0, self.nx as f64) as usize;
        let j = (p[1] / self.hy).round().clamp(0.0, self.ny as f64) as usize;
        self.node_index(i, j)
    }

    /// Samples `f` at every node.
    pub fn sample_nodes(&self, mut f: impl FnMut([f64; 2]) -> f64) -> ScalarField {
        let mut v = vec![0.0; self.num_nodes()];
        for (n, val) in v.iter_mut().enumerate() {
            if self.active_node[n] {
                *val = f(self.node_position(n));
            }
        }
        ScalarField::from_vec(v)
    }

    /// Samples a vector function at every active cell center.
    pub fn sample_cells(&self, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> VectorField {
        let mut out = VectorField::zeros(self.num_cells());
        for &c in &self.active_cells {
            let v = f(self.cell_center(c));
            out.x[c] = v[0];
            out.y[c] = v[1];
        }
        out
    }

    /// Samples a scalar function at every active cell center.
    pub fn sample_cell_scalar(&self, mut f: impl FnMut([f64; 2]) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_cells()];
        for &c in &self.active_cells {
            out[c] = f(self.cell_center(c));
        }
        out
    }

    // ----------------------------------------------------------------------
    // Differential operators on raw slices.

    /// Cell-centered gradient of a node field, written into `gx`, `gy`.
    pub fn gradient_into(&self, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        let (ax, ay) = (0.5 / self.hx, 0.5 / self.hy);
        gx.iter_mut().for_each(|v| *v = 0.0);
        gy.iter_mut().for_each(|v| *v = 0.0);
        for &c in &self.active_cells {
            let [sw, se, nw, ne] = self.cell_nodes(c);
            gx[c] = ax * (f[se] + f[ne] - f[sw] - f[nw]);
            gy[c] = ay * (f[nw] + f[ne] - f[sw] - f[se]);
        }
    }

    /// Accumulates `G^T v` (unweighted transpose of the cell gradient) into `out`.
    pub fn gradient_transpose_add(&self, vx: &[f64], vy: &[f64], out: &mut [f64]) {
        let (ax, ay) = (0.5 / self.hx, 0.5 / self.hy);
        for &c in &self.active_cells {
            let [sw, se, nw, ne] = self.cell_nodes(c);
            let a = ax * vx[c];
            let b = ay * vy[c];
            out[sw] += -a - b;
            out[se] += a - b;
            out[nw] += -a + b;
            out[ne] += a + b;
        }
    }

    /// Perpendicular gradient `(-d/dx2, d/dx1)`.
    pub fn perp_gradient_into(&self, f: &[f64], gx: &mut [f64], gy: &mut [f64]) {
        self.gradient_into(f, gy, gx);
        gx.iter_mut().for_each(|v| *v = -*v);
    }

    /// Accumulates the transpose of the perpendicular gradient.
    pub fn perp_gradient_transpose_add(&self, vx: &[f64], vy: &[f64], out: &mut [f64]) {
        // perp = R G with R(a, b) = (-b, a), so perp^T v = G^T (v_y, -v_x).
        let (ax, ay) = (0.5 / self.hx, 0.5 / self.hy);
        for &c in &self.active_cells {
            let [sw, se, nw, ne] = self.cell_nodes(c);
            let a = ax * vy[c];
            let b = -ay * vx[c];
            out[sw] += -a - b;
            out[se] += a - b;
            out[nw] += -a + b;
            out[ne] += a + b;
        }
    }

    /// Node divergence of a cell vector field.
    pub fn divergence_into(&self, vx: &[f64], vy: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let area = self.cell_area();
        let (ax, ay) = (0.5 / self.hx * area, 0.5 / self.hy * area);
        for &c in &self.active_cells {
            let [sw, se, nw, ne] = self.cell_nodes(c);
            let a = ax * vx[c];
            let b = ay * vy[c];
            out[sw] -= -a - b;
            out[se] -= a - b;
            out[nw] -= -a + b;
            out[ne] -= a + b;
        }
        for face in self.boundary.faces() {
            let flux = 0.5 * face.length * (face.normal[0] * vx[face.cell] + face.normal[1] * vy[face.cell]);
            out[face.nodes[0]] += flux;
            out[face.nodes[1]] += flux;
        }
        for (n, v) in out.iter_mut().enumerate() {
            if self.active_node[n] {
                *v /= self.node_weight[n];
            }
        }
    }

    /// Accumulates `D^T s` (unweighted transpose of the node divergence).
    pub fn divergence_transpose_add(&self, s: &[f64], outx: &mut [f64], outy: &mut [f64]) {
        let area = self.cell_area();
        let (ax, ay) = (0.5 / self.hx * area, 0.5 / self.hy * area);
        let scaled = |n: usize| {
            if self.active_node[n] {
                s[n] / self.node_weight[n]
            } else {
                0.0
            }
        };
        for &c in &self.active_cells {
            let [sw, se, nw, ne] = self.cell_nodes(c);
            let (w_sw, w_se, w_nw, w_ne) = (scaled(sw), scaled(se), scaled(nw), scaled(ne));
            outx[c] -= ax * (-w_sw + w_se - w_nw + w_ne);
            outy[c] -= ay * (-w_sw - w_se + w_nw + w_ne);
        }
        for face in self.boundary.faces() {
            let w = 0.5 * face.length * (scaled(face.nodes[0]) + scaled(face.nodes[1]));
            outx[face.cell] += w * face.normal[0];
            outy[face.cell] += w * face.normal[1];
        }
    }

    // ----------------------------------------------------------------------
    // Field-level API.

    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        let mut out = VectorField::zeros(self.num_cells());
        self.gradient_into(f.as_slice(), &mut out.x, &mut out.y);
        out
    }

    pub fn perp_gradient(&self, f: &ScalarField) -> VectorField {
        let mut out = VectorField::zeros(self.num_cells());
        self.perp_gradient_into(f.as_slice(), &mut out.x, &mut out.y);
        out
    }

    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let mut out = vec![0.0; self.num_nodes()];
        self.divergence_into(&v.x, &v.y, &mut out);
        ScalarField::from_vec(out)
    }

    /// Node Laplacian `divergence(gradient(f))`.
    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.divergence(&self.gradient(f))
    }

    /// Boundary term `sum_n f_n F_n(v)` of the discrete Green identity
    /// `<grad f, v> + <f, div v> = boundary_term(f, v)`.
    pub fn boundary_term(&self, f: &ScalarField, v: &VectorField) -> f64 {
        let f = f.as_slice();
        self.boundary
            .faces()
            .iter()
            .map(|face| {
                let flux = 0.5 * face.length * (face.normal[0] * v.x[face.cell] + face.normal[1] * v.y[face.cell]);
                flux * (f[face.nodes[0]] + f[face.nodes[1]])
            })
            .sum()
    }

    pub fn l2_inner_nodes(&self, a: &[f64], b: &[f64]) -> f64 {
        self.node_weight.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    pub fn l2_inner_cells(&self, ax: &[f64], ay: &[f64], bx: &[f64], by: &[f64]) -> f64 {
        let area = self.cell_area();
        self.active_cells
            .iter()
            .map(|&c| ax[c] * bx[c] + ay[c] * by[c])
            .sum::<f64>()
            * area
    }

    pub fn l2_inner_cell_scalar(&self, a: &[f64], b: &[f64]) -> f64 {
        self.active_cells.iter().map(|&c| a[c] * b[c]).sum::<f64>() * self.cell_area()
    }

    pub fn l2_inner_scalar(&self, a: &ScalarField, b: &ScalarField) -> f64 {
        self.l2_inner_nodes(a.as_slice(), b.as_slice())
    }

    pub fn l2_inner_vector(&self, a: &VectorField, b: &VectorField) -> f64 {
        self.l2_inner_cells(&a.x, &a.y, &b.x, &b.y)
    }

    /// Discrete smoothing norm `||f||^2 + ||grad f||^2 + ||lap f||^2`.
    pub fn smooth_norm_sq(&self, f: &[f64]) -> f64 {
        let mut scratch = SmoothScratch::new(self);
        self.smooth_norm_sq_with(f, &mut scratch)
    }

    pub(crate) fn smooth_norm_sq_with(&self, f: &[f64], s: &mut SmoothScratch) -> f64 {
        self.gradient_into(f, &mut s.gx, &mut s.gy);
        self.divergence_into(&s.gx, &s.gy, &mut s.lap);
        self.l2_inner_nodes(f, f) + self.l2_inner_cells(&s.gx, &s.gy, &s.gx, &s.gy) + self.l2_inner_nodes(&s.lap, &s.lap)
    }

    /// Adds `scale * d/df smooth_norm_sq(f)` into `out` and returns the norm.
    pub(crate) fn smooth_norm_sq_grad_add(&self, f: &[f64], scale: f64, out: &mut [f64], s: &mut SmoothScratch) -> f64 {
        let value = self.smooth_norm_sq_with(f, s);
        let area = self.cell_area();
        for (n, o) in out.iter_mut().enumerate() {
            *o += scale * 2.0 * self.node_weight[n] * f[n];
        }
        // grad term: 2 G^T M_c G f, lap term: 2 G^T D^T M_n D G f
        for (n, l) in s.lap.iter_mut().enumerate() {
            *l *= 2.0 * scale * self.node_weight[n];
        }
        s.tx.iter_mut().for_each(|v| *v = 0.0);
        s.ty.iter_mut().for_each(|v| *v = 0.0);
        self.divergence_transpose_add(&s.lap, &mut s.tx, &mut s.ty);
        for &c in &self.active_cells {
            s.tx[c] += 2.0 * scale * area * s.gx[c];
            s.ty[c] += 2.0 * scale * area * s.gy[c];
        }
        self.gradient_transpose_add(&s.tx, &s.ty, out);
        value
    }
}

/// Reusable buffers for the smoothing norm and its gradient.
#[derive(Debug, Clone)]
pub(crate) struct SmoothScratch {
    gx: Vec<f64>,
    gy: Vec<f64>,
    lap: Vec<f64>,
    tx: Vec<f64>,
    ty: Vec<f64>,
}

impl SmoothScratch {
    pub(crate) fn new(grid: &Grid) -> Self {
        let nc = grid.num_cells();
        Self {
            gx: vec![0.0; nc],
            gy: vec![0.0; nc],
            lap: vec![0.0; grid.num_nodes()],
            tx: vec![0.0; nc],
            ty: vec![0.0; nc],
        }
    }
}
