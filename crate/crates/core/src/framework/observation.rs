use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLabel {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Finite-dimensional data vector with labeled blocks and a noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    values: Vec<f64>,
    blocks: Vec<BlockLabel>,
    noise_level: f64,
}

impl ObservationVector {
    /// Blocks must tile `0..values.len()` in order without overlap.
    pub fn new(values: Vec<f64>, blocks: Vec<BlockLabel>, noise_level: f64) -> Result<Self> {
        if !(noise_level >= 0.0) || !noise_level.is_finite() {
            return Err(Error::InvalidArgument(format!("noise level must be finite and >= 0, got {noise_level}")));
        }
        let mut next = 0;
        for b in &blocks {
            if b.offset != next || b.len == 0 {
                return Err(Error::BlockMismatch(format!(
                    "block `{}` at offset {} (len {}) does not continue the tiling at {next}",
                    b.name, b.offset, b.len
                )));
            }
            next += b.len;
        }
        if next != values.len() {
            return Err(Error::BlockMismatch(format!(
                "blocks cover {next} entries but the vector has {}",
                values.len()
            )));
        }
        Ok(Self { values, blocks, noise_level })
    }

    /// Exact (noise-free) data.
    pub fn exact(values: Vec<f64>, blocks: Vec<BlockLabel>) -> Result<Self> {
        Self::new(values, blocks, 0.0)
    }

    pub fn single_block(name: &str, values: Vec<f64>, noise_level: f64) -> Result<Self> {
        let len = values.len();
        Self::new(values, vec![BlockLabel { name: name.into(), offset: 0, len }], noise_level)
    }

    /// Builds consecutive blocks from `(name, len)` pairs.
    pub fn tiled_blocks<'a>(spec: impl IntoIterator<Item = (&'a str, usize)>) -> Vec<BlockLabel> {
        let mut offset = 0;
        spec.into_iter()
            .map(|(name, len)| {
                let b = BlockLabel { name: name.into(), offset, len };
                offset += len;
                b
            })
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn blocks(&self) -> &[BlockLabel] {
        &self.blocks
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.offset..b.offset + b.len])
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.values.len() == other.values.len() && self.blocks == other.blocks
    }

    /// Same structure, new values and noise level.
    pub fn with_values(&self, values: Vec<f64>, noise_level: f64) -> Result<Self> {
        Self::new(values, self.blocks.clone(), noise_level)
    }

    /// Writes `block,index,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["block", "index", "value"])?;
        for b in &self.blocks {
            for k in 0..b.len {
                w.write_record([b.name.clone(), k.to_string(), format!("{:e}", self.values[b.offset + k])])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
