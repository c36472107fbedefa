use crate::error::{Error, Result};
use crate::grid2d::Grid;
use serde::{Deserialize, Serialize};

/// Rectangular pick-up region with in-plane normal ν and depth h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub normal: [f64; 2],
    #[serde(default = "unit_depth")]
    pub depth: f64,
}

fn unit_depth() -> f64 {
    1.0
}

/// Coil resolved on a grid: the cells whose centers lie in the rectangle.
#[derive(Debug, Clone)]
pub struct Coil {
    pub spec: CoilSpec,
    cells: Vec<usize>,
    area: f64,
}

impl Coil {
    pub fn new(grid: &Grid, spec: CoilSpec) -> Result<Self> {
        let [nx, ny] = spec.normal;
        if ((nx * nx + ny * ny).sqrt() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("coil normal must be a unit vector, got {:?}", spec.normal)));
        }
        if !(spec.depth > 0.0) {
            return Err(Error::InvalidArgument(format!("coil depth must be positive, got {}", spec.depth)));
        }
        let (lo, hi) = (spec.lower, spec.upper);
        if !(lo[0] < hi[0] && lo[1] < hi[1]) || lo.iter().chain(&hi).any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Geometry(format!("coil rectangle {lo:?}–{hi:?} is not inside the grid")));
        }
        let mut cells = Vec::new();
        for c in 0..grid.num_cells() {
            let p = grid.cell_center(c);
            if p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1] {
                if !grid.is_active_cell(c) {
                    return Err(Error::Geometry("coil reaches outside the active region".into()));
                }
                cells.push(c);
            }
        }
        if cells.is_empty() {
            return Err(Error::Geometry("coil contains no cell center".into()));
        }
        let area = cells.len() as f64 * grid.cell_area();
        Ok(Self { spec, cells, area })
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Discrete |Ω_c|.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Linear potential L(x) = ν₂x₁ − ν₁x₂ with ∇⊥L = ν.
    pub fn lift_profile(&self, grid: &Grid) -> Vec<f64> {
        let [n1, n2] = self.spec.normal;
        grid.sample_nodes(|p| n2 * p[0] - n1 * p[1]).into_vec()
    }

    /// (1/h)·∫_{Ω_c} ∇⊥A·ν for cell values of ∇⊥A.
    pub fn flux(&self, grid: &Grid, bx: &[f64], by: &[f64]) -> f64 {
        let [n1, n2] = self.spec.normal;
        let s: f64 = self.cells.iter().map(|&c| bx[c] * n1 + by[c] * n2).sum();
        s * grid.cell_area() / self.spec.depth
    }
}
