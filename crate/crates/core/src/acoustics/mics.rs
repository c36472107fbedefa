use crate::error::{Error, Result};
use crate::grid2d::Grid;
use serde::Deserialize;
use std::path::Path;

/// Quartic bump profile (1 − (d/r)²)² for d < r, else 0.
pub fn bump_value(radius: f64, distance: f64) -> f64 {
    if distance >= radius {
        return 0.0;
    }
    let t = 1.0 - (distance / radius).powi(2);
    t * t
}

/// Microphones snapped to grid nodes.
#[derive(Debug, Clone)]
pub struct MicArray {
    nodes: Vec<usize>,
    d_min: f64,
}

#[derive(Deserialize)]
struct MicRow {
    x1: f64,
    x2: f64,
}

impl MicArray {
    /// Snaps each point to its nearest node. Points must lie inside the
    /// domain and land on distinct active interior nodes.
    pub fn snapped(grid: &Grid, points: &[[f64; 2]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty microphone array".into()));
        }
        let mut nodes = Vec::with_capacity(points.len());
        for (l, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                return Err(Error::Geometry(format!("mic {l} at {p:?} is outside the domain")));
            }
            let n = grid.nearest_node(*p);
            if !grid.is_interior_node(n) {
                return Err(Error::Geometry(format!("mic {l} does not snap to an interior node")));
            }
            nodes.push(n);
        }
        let mut d_min = f64::INFINITY;
        for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                d_min = d_min.min(dist(grid.node_position(nodes[a]), grid.node_position(nodes[b])));
            }
        }
        if d_min == 0.0 {
            return Err(Error::Geometry("two mics snap to the same node".into()));
        }
        Ok(Self { nodes, d_min })
    }

    /// `count` mics evenly spaced on a circle.
    pub fn ring(grid: &Grid, center: [f64; 2], radius: f64, count: usize) -> Result<Self> {
        let points: Vec<[f64; 2]> = (0..count)
            .map(|l| {
                let t = 2.0 * std::f64::consts::PI * l as f64 / count as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Self::snapped(grid, &points)
    }

    /// CSV with header `x1,x2`.
    pub fn from_csv(grid: &Grid, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let r: MicRow = row?;
            points.push([r.x1, r.x2]);
        }
        Self::snapped(grid, &points)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Smallest pairwise distance (infinite for a single mic).
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn positions(&self, grid: &Grid) -> Vec<[f64; 2]> {
        self.nodes.iter().map(|&n| grid.node_position(n)).collect()
    }

    /// Default bump radius: min(0.45·d_min, 1.5h).
    pub fn default_radius(&self, grid: &Grid) -> f64 {
        let h = grid.hx.max(grid.hy);
        (0.45 * self.d_min).min(1.5 * h)
    }
}

/// Measurement subdomain: the mics' bounding box dilated by two cells.
#[derive(Debug, Clone)]
pub struct MeasurementRegion {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    /// Cells whose centers lie in the rectangle.
    pub cells: Vec<bool>,
    /// Corners of those cells.
    pub nodes: Vec<bool>,
}

impl MeasurementRegion {
    pub fn around(grid: &Grid, mics: &MicArray) -> Self {
        let pos = mics.positions(grid);
        let mut lower = [f64::INFINITY; 2];
        let mut upper = [f64::NEG_INFINITY; 2];
        for p in &pos {
            for k in 0..2 {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        let pad = [2.0 * grid.hx, 2.0 * grid.hy];
        for k in 0..2 {
            lower[k] -= pad[k];
            upper[k] += pad[k];
        }
        let mut cells = vec![false; grid.num_cells()];
        let mut nodes = vec![false; grid.num_nodes()];
        for &c in grid.active_cells() {
            let p = grid.cell_center(c);
            if (0..2).all(|k| p[k] >= lower[k] && p[k] <= upper[k]) {
                cells[c] = true;
                for n in grid.cell_nodes(c) {
                    nodes[n] = true;
                }
            }
        }
        Self { lower, upper, cells, nodes }
    }
}

/// Bump functions p₀,ℓ as sparse (node, value) lists.
#[derive(Debug, Clone)]
pub struct Bumps {
    pub radius: f64,
    pub support: Vec<Vec<(usize, f64)>>,
}

impl Bumps {
    /// Requires r < d_min/2 and every support node inside the measurement region.
    pub fn build(grid: &Grid, mics: &MicArray, region: &MeasurementRegion, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("bump radius must be positive, got {radius}")));
        }
        if !(radius < 0.5 * mics.d_min()) {
            return Err(Error::Geometry(format!(
                "bump radius {radius} is not below half the mic spacing {}",
                mics.d_min()
            )));
        }
        let mut support = Vec::with_capacity(mics.len());
        for &m in mics.nodes() {
            let c = grid.node_position(m);
            let mut list = Vec::new();
            for n in 0..grid.num_nodes() {
                if !grid.is_active_node(n) {
                    continue;
                }
                let v = bump_value(radius, dist(c, grid.node_position(n)));
                if v > 0.0 {
                    if !region.nodes[n] {
                        return Err(Error::Geometry("bump support leaves the measurement region".into()));
                    }
                    list.push((n, v));
                }
            }
            support.push(list);
        }
        Ok(Self { radius, support })
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
