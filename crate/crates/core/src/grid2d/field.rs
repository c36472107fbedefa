use serde::{Deserialize, Serialize};

/// Node-based scalar field; inactive nodes carry zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn zeros(num_nodes: usize) -> Self {
        Self(vec![0.0; num_nodes])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| a * v).collect())
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &ScalarField) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ScalarField {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Cell-centered vector field stored as two component arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(num_cells: usize) -> Self {
        Self {
            x: vec![0.0; num_cells],
            y: vec![0.0; num_cells],
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Rotates every vector by +90 degrees: `(a, b) -> (-b, a)`.
    pub fn rotate90(&self) -> Self {
        Self {
            x: self.y.iter().map(|v| -v).collect(),
            y: self.x.clone(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            x: self.x.iter().map(|v| a * v).collect(),
            y: self.y.iter().map(|v| a * v).collect(),
        }
    }

    pub fn axpy(&self, a: f64, other: &VectorField) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(p, q)| p + a * q).collect(),
            y: self.y.iter().zip(&other.y).map(|(p, q)| p + a * q).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}
