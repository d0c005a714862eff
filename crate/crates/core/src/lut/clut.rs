//! Compressed LUT parameterization: identity plus a weighted sum of learned
//! residual basis tables. Zero weights materialize the identity exactly.

use crate::error::{Error, Result};
use crate::lut::{identity_lut, Lut3d};

#[derive(Debug, Clone)]
pub struct ClutBank {
    size: usize,
    /// `basis_count` residual tables, each `3 * size^3` unclamped values.
    basis: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LutWeights(pub Vec<f32>);

impl ClutBank {
    pub fn new(size: usize, basis: Vec<Vec<f32>>) -> Result<ClutBank> {
        if size < 2 {
            return Err(Error::LutSize(size));
        }
        if basis.is_empty() {
            return Err(Error::Format("basis count must be at least 1".into()));
        }
        let entries = 3 * size * size * size;
        for (k, b) in basis.iter().enumerate() {
            if b.len() != entries {
                return Err(Error::Format(format!(
                    "basis {k} has length {}, expected {entries}",
                    b.len()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("basis {k} contains a non-finite value")));
            }
        }
        Ok(ClutBank { size, basis })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn basis_count(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f32>] {
        &self.basis
    }
}

/// Materializes `clamp(identity + sum_k w_k * basis_k, 0, 1)`.
pub fn materialize_clut(bank: &ClutBank, w: &LutWeights) -> Result<Lut3d> {
    if w.0.len() != bank.basis_count() {
        return Err(Error::WeightCount { expected: bank.basis_count(), got: w.0.len() });
    }
    let id = identity_lut(bank.size)?;
    let mut lattice: Vec<f32> = id.lattice().to_vec();
    for (wk, basis) in w.0.iter().zip(&bank.basis) {
        if *wk == 0.0 {
            continue;
        }
        for (dst, src) in lattice.iter_mut().zip(basis) {
            *dst += wk * src;
        }
    }
    // Lut3d::new clamps to [0, 1]
    Lut3d::new(bank.size, lattice)
}
