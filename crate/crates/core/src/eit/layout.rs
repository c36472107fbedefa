use crate::error::{Error, Result};
use crate::grid2d::{BoundaryLayout, Grid, Segment, SegmentKind};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub start: f64,
    pub end: f64,
    /// Contact impedance z_ℓ > 0.
    pub z: f64,
}

impl Electrode {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Electrodes on the boundary curve, snapped to boundary nodes and ordered
/// counterclockwise. Gap ℓ runs from the end of electrode ℓ to the start of
/// electrode ℓ+1; the last gap wraps around to electrode 1.
#[derive(Debug, Clone)]
pub struct ElectrodeLayout {
    electrodes: Vec<Electrode>,
    gaps: Vec<Segment>,
    layout: BoundaryLayout,
    electrode_nodes: Vec<Vec<(f64, usize)>>,
    gap_nodes: Vec<Vec<(f64, usize)>>,
}

impl ElectrodeLayout {
    /// Snaps endpoints to boundary nodes and validates the arrangement.
    pub fn new(grid: &Grid, electrodes: &[Electrode]) -> Result<Self> {
        let curve = grid.boundary();
        let p = curve.perimeter();
        let tol = 1e-9 * p;
        if electrodes.len() < 2 {
            return Err(Error::Geometry("need at least two electrodes".into()));
        }
        let mut snapped: Vec<Electrode> = Vec::with_capacity(electrodes.len());
        for (k, e) in electrodes.iter().enumerate() {
            if !(e.z > 0.0) || !e.z.is_finite() {
                return Err(Error::InvalidArgument(format!("electrode {}: contact impedance must be positive", k + 1)));
            }
            if !(e.end > e.start) {
                return Err(Error::Geometry(format!("electrode {}: end must exceed start", k + 1)));
            }
            let mut start = curve.snap(e.start);
            if let Some(prev) = snapped.last() {
                while start < prev.end - tol {
                    start += p;
                }
            }
            let mut end = start + (curve.snap(e.end) - start).rem_euclid(p);
            if (end - start).abs() < tol && e.length() > 0.5 * p {
                end += p;
            }
            if end - start < tol {
                return Err(Error::Geometry(format!("degenerate electrode {} (no boundary interval)", k + 1)));
            }
            if let Some(prev) = snapped.last() {
                if start <= prev.end + tol {
                    return Err(Error::Geometry(format!("electrodes {} and {} touch or overlap", k, k + 1)));
                }
            }
            snapped.push(Electrode { start, end, z: e.z });
        }
        let first = snapped[0].start;
        let last = snapped[snapped.len() - 1].end;
        if last >= first + p - tol {
            return Err(Error::Geometry("last electrode overlaps the first".into()));
        }
        let l = snapped.len();
        let mut segments = Vec::with_capacity(2 * l);
        let mut gaps = Vec::with_capacity(l);
        for (k, e) in snapped.iter().enumerate() {
            segments.push(Segment { kind: SegmentKind::Electrode, start: e.start, end: e.end });
            let next = if k + 1 < l { snapped[k + 1].start } else { first + p };
            let g = Segment { kind: SegmentKind::Gap, start: e.end, end: next };
            segments.push(g);
            gaps.push(g);
        }
        let layout = BoundaryLayout::new(curve, segments)?;
        let electrode_nodes: Vec<_> = snapped.iter().map(|e| curve.nodes_in(e.start, e.end)).collect();
        let gap_nodes: Vec<_> = gaps.iter().map(|g| curve.nodes_in(g.start, g.end)).collect();
        if electrode_nodes.iter().chain(&gap_nodes).any(|v| v.len() < 2) {
            return Err(Error::Geometry("electrode or gap without boundary nodes".into()));
        }
        Ok(Self { electrodes: snapped, gaps, layout, electrode_nodes, gap_nodes })
    }

    /// `count` equal electrodes covering the fraction `coverage` of the
    /// boundary, the first centered at arclength zero.
    pub fn uniform(grid: &Grid, count: usize, coverage: f64, z: f64) -> Result<Self> {
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(Error::InvalidArgument(format!("coverage must be in (0, 1), got {coverage}")));
        }
        let p = grid.boundary().perimeter();
        let pitch = p / count as f64;
        let w = coverage * pitch;
        let electrodes: Vec<Electrode> = (0..count)
            .map(|k| {
                let c = k as f64 * pitch;
                Electrode { start: c - 0.5 * w, end: c + 0.5 * w, z }
            })
            .collect();
        Self::new(grid, &electrodes)
    }

    /// Reads `start,end,z` rows (header required).
    pub fn from_csv(grid: &Grid, path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut electrodes = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::Config(format!("{}: row needs 3 columns", path.display())))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
            };
            electrodes.push(Electrode { start: num(0)?, end: num(1)?, z: num(2)? });
        }
        Self::new(grid, &electrodes)
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }

    pub fn electrodes(&self) -> &[Electrode] {
        &self.electrodes
    }

    pub fn gaps(&self) -> &[Segment] {
        &self.gaps
    }

    pub fn boundary_layout(&self) -> &BoundaryLayout {
        &self.layout
    }

    /// Boundary nodes of electrode ℓ (0-based) with arclength from its start.
    pub fn electrode_nodes(&self, l: usize) -> &[(f64, usize)] {
        &self.electrode_nodes[l]
    }

    /// Boundary nodes of gap ℓ (closure, both endpoints included).
    pub fn gap_nodes(&self, l: usize) -> &[(f64, usize)] {
        &self.gap_nodes[l]
    }

    /// Polar angle of the electrode midpoint about `(1/2, 1/2)`.
    pub fn center_angle(&self, grid: &Grid, l: usize) -> f64 {
        let e = &self.electrodes[l];
        let [x, y] = grid.boundary().point_at(grid, 0.5 * (e.start + e.end));
        (y - 0.5).atan2(x - 0.5)
    }

    /// Node where the first electrode starts (ψ gauge point).
    pub fn gauge_node(&self) -> usize {
        self.electrode_nodes[0][0].1
    }
}
