use super::{Grid, ScalarField};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One edge of the boundary polyline, traversed counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    /// Active cell adjacent to the face.
    pub cell: usize,
    /// Start and end node (counterclockwise order).
    pub nodes: [usize; 2],
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
}

/// Closed counterclockwise polyline of boundary faces with accumulated
/// arclength. Arclength zero sits at the rightmost boundary node closest to
/// the horizontal midline.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    nodes: Vec<usize>,
    arclength: Vec<f64>,
    faces: Vec<BoundaryFace>,
    perimeter: f64,
    position: std::collections::HashMap<usize, usize>,
}

impl BoundaryCurve {
    pub(super) fn trace(nx: usize, ny: usize, hx: f64, hy: f64, active: &[bool]) -> Result<Self> {
        let is_active = |i: isize, j: isize| -> bool {
            i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && active[j as usize * nx + i as usize]
        };
        let node = |i: usize, j: usize| j * (nx + 1) + i;
        let mut outgoing: std::collections::HashMap<usize, Vec<BoundaryFace>> = Default::default();
        let mut total = 0usize;
        for j in 0..ny {
            for i in 0..nx {
                if !active[j * nx + i] {
                    continue;
                }
                let c = j * nx + i;
                let (ii, jj) = (i as isize, j as isize);
                let mut push = |a: usize, b: usize, normal: [f64; 2], length: f64| {
                    outgoing.entry(a).or_default().push(BoundaryFace {
                        cell: c,
                        nodes: [a, b],
                        normal,
                        length,
                    });
                    total += 1;
                };
                if !is_active(ii, jj - 1) {
                    push(node(i, j), node(i + 1, j), [0.0, -1.0], hx);
                }
                if !is_active(ii + 1, jj) {
                    push(node(i + 1, j), node(i + 1, j + 1), [1.0, 0.0], hy);
                }
                if !is_active(ii, jj + 1) {
                    push(node(i + 1, j + 1), node(i, j + 1), [0.0, 1.0], hx);
                }
                if !is_active(ii - 1, jj) {
                    push(node(i, j + 1), node(i, j), [-1.0, 0.0], hy);
                }
            }
        }
        if let Some((n, _)) = outgoing.iter().find(|(_, v)| v.len() > 1) {
            return Err(Error::Geometry(format!("non-manifold boundary at node {n}")));
        }
        // Start: rightmost boundary node, ties broken by distance to y = 1/2.
        let start = *outgoing
            .keys()
            .max_by(|&&a, &&b| {
                let (ia, ja) = (a % (nx + 1), a / (nx + 1));
                let (ib, jb) = (b % (nx + 1), b / (nx + 1));
                let da = (ja as f64 * hy - 0.5).abs();
                let db = (jb as f64 * hy - 0.5).abs();
                ia.cmp(&ib).then(db.partial_cmp(&da).unwrap()).then(jb.cmp(&ja))
            })
            .ok_or_else(|| Error::Geometry("empty boundary".into()))?;
        let mut nodes = Vec::with_capacity(total);
        let mut faces = Vec::with_capacity(total);
        let mut arclength = Vec::with_capacity(total);
        let mut current = start;
        let mut s = 0.0;
        loop {
            let face = outgoing[&current][0];
            nodes.push(current);
            arclength.push(s);
            faces.push(face);
            s += face.length;
            current = face.nodes[1];
            if current == start {
                break;
            }
            if faces.len() > total {
                return Err(Error::Geometry("boundary tracing did not close".into()));
            }
        }
        if faces.len() != total {
            return Err(Error::Geometry(format!(
                "active region boundary has several components ({} of {} faces traced)",
                faces.len(),
                total
            )));
        }
        let position = nodes.iter().enumerate().map(|(k, &n)| (n, k)).collect();
        Ok(Self {
            nodes,
            arclength,
            faces,
            perimeter: s,
            position,
        })
    }

    /// Boundary nodes in counterclockwise order.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Arclength of each node in [`Self::nodes`].
    pub fn arclengths(&self) -> &[f64] {
        &self.arclength
    }

    /// Faces in counterclockwise order; face `k` joins node `k` to node `k + 1`.
    pub fn faces(&self) -> &[BoundaryFace] {
        &self.faces
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Position of a grid node within the loop, if it is a boundary node.
    pub fn position_of(&self, node: usize) -> Option<usize> {
        self.position.get(&node).copied()
    }

    /// Arclength of the boundary node nearest (along the curve) to `s`,
    /// reduced modulo the perimeter.
    pub fn snap(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.perimeter);
        let mut best = 0.0;
        let mut best_d = f64::INFINITY;
        for &t in &self.arclength {
            let d = (t - s).abs().min(self.perimeter - (t - s).abs());
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        best
    }

    /// Nodes whose arclength lies in the closed interval `[start, end]`,
    /// with `end` allowed to exceed the perimeter (wrap-around). Returned
    /// arclengths are measured from `start`.
    pub fn nodes_in(&self, start: f64, end: f64) -> Vec<(f64, usize)> {
        let tol = 1e-9 * self.perimeter;
        let mut out = Vec::new();
        let start_mod = start.rem_euclid(self.perimeter);
        let shift = start - start_mod;
        let (a, b) = (start_mod, end - shift);
        for wrap in 0..2 {
            let offset = wrap as f64 * self.perimeter;
            for (k, &t) in self.arclength.iter().enumerate() {
                let t = t + offset;
                if t >= a - tol && t <= b + tol {
                    out.push((t - a, self.nodes[k]));
                }
            }
        }
        out
    }

    /// Position of a node in the plane.
    pub fn node_point(&self, grid: &Grid, k: usize) -> [f64; 2] {
        grid.node_position(self.nodes[k])
    }

    /// Point at arclength `s` (modulo the perimeter), interpolated along faces.
    pub fn point_at(&self, grid: &Grid, s: f64) -> [f64; 2] {
        let s = s.rem_euclid(self.perimeter);
        let k = match self.arclength.partition_point(|&t| t <= s) {
            0 => 0,
            k => k - 1,
        };
        let face = &self.faces[k];
        let t = (s - self.arclength[k]) / face.length;
        let a = grid.node_position(face.nodes[0]);
        let b = grid.node_position(face.nodes[1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Electrode,
    Gap,
    Absorbing,
    Rigid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// A tiling of the boundary curve by labeled arclength segments.
#[derive(Debug, Clone)]
pub struct BoundaryLayout {
    segments: Vec<Segment>,
    perimeter: f64,
}

impl BoundaryLayout {
    /// Segments must be consecutive (`end` of one is `start` of the next) and
    /// cover exactly one perimeter.
    pub fn new(curve: &BoundaryCurve, segments: Vec<Segment>) -> Result<Self> {
        let p = curve.perimeter();
        let tol = 1e-9 * p;
        if segments.is_empty() {
            return Err(Error::Geometry("empty boundary layout".into()));
        }
        for (k, seg) in segments.iter().enumerate() {
            if seg.end <= seg.start {
                return Err(Error::Geometry(format!("segment {k} has non-positive length")));
            }
            let next = &segments[(k + 1) % segments.len()];
            let expected = if k + 1 == segments.len() { next.start + p } else { next.start };
            if (seg.end - expected).abs() > tol {
                return Err(Error::Geometry(format!("segments {k} and {} do not tile the boundary", (k + 1) % segments.len())));
            }
        }
        Ok(Self { segments, perimeter: p })
    }

    /// Whole boundary as a single segment of the given kind.
    pub fn uniform(curve: &BoundaryCurve, kind: SegmentKind) -> Self {
        Self {
            segments: vec![Segment {
                kind,
                start: 0.0,
                end: curve.perimeter(),
            }],
            perimeter: curve.perimeter(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Kind of the segment containing arclength `s` (first match for shared endpoints).
    pub fn kind_at(&self, s: f64) -> SegmentKind {
        let p = self.perimeter;
        for seg in &self.segments {
            let t = if s < seg.start { s + p } else { s };
            if t >= seg.start && t < seg.end {
                return seg.kind;
            }
        }
        self.segments[0].kind
    }

    fn check_member(&self, seg: &Segment) -> Result<()> {
        if self.segments.iter().any(|s| s == seg) {
            Ok(())
        } else {
            Err(Error::Geometry("segment is not part of the layout".into()))
        }
    }

    /// Values of `f` at the boundary nodes of `seg`, in arclength order.
    pub fn boundary_trace(&self, grid: &Grid, f: &ScalarField, seg: &Segment) -> Result<Vec<(f64, f64)>> {
        self.check_member(seg)?;
        Ok(grid
            .boundary()
            .nodes_in(seg.start, seg.end)
            .into_iter()
            .map(|(s, n)| (seg.start + s, f[n]))
            .collect())
    }

    /// Trapezoidal integral of `f` along `seg`.
    pub fn boundary_integral(&self, grid: &Grid, f: &ScalarField, seg: &Segment) -> Result<f64> {
        let trace = self.boundary_trace(grid, f, seg)?;
        Ok(trace.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum())
    }
}
