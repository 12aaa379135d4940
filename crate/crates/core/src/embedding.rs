//! Field embedding layer: instance → `X⁰ ∈ R^{m×D}`.
//!
//! A univalent field's row is its feature's vector; a multivalent field's row
//! is the sum of its active features' vectors (zero when none are active).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::numerics::{axpy, Mat, Rng};

pub const DEFAULT_EMBED_DIM: usize = 10;
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    /// One row per feature id.
    pub table: Mat,
}

impl EmbeddingTable {
    pub fn zeros(num_features: usize, dim: usize) -> Self {
        EmbeddingTable {
            table: Mat::zeros(num_features, dim),
        }
    }

    pub fn random(num_features: usize, dim: usize, std: f64, rng: &mut Rng) -> Self {
        EmbeddingTable {
            table: Mat::random_normal(num_features, dim, std, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn num_features(&self) -> usize {
        self.table.rows()
    }

    pub fn vector(&self, id: usize) -> Result<&[f64]> {
        if id >= self.num_features() {
            return Err(Error::Lookup(format!(
                "feature id {id} outside table of {} rows",
                self.num_features()
            )));
        }
        Ok(self.table.row(id))
    }
}

pub fn embed_forward(instance: &Instance, table: &EmbeddingTable) -> Result<Mat> {
    let mut x0 = Mat::zeros(instance.fields.len(), table.dim());
    for (i, ids) in instance.fields.iter().enumerate() {
        let row = x0.row_mut(i);
        for &id in ids {
            axpy(1.0, table.vector(id)?, row);
        }
    }
    Ok(x0)
}

/// Adjoint of [`embed_forward`]: every active feature of field `i` receives
/// row `i` of `grad_x0`.
pub fn embed_backward(instance: &Instance, grad_x0: &Mat) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut out = BTreeMap::new();
    accumulate_backward(instance, grad_x0, &mut out)?;
    Ok(out)
}

pub(crate) fn accumulate_backward(
    instance: &Instance,
    grad_x0: &Mat,
    into: &mut BTreeMap<usize, Vec<f64>>,
) -> Result<()> {
    if grad_x0.rows() != instance.fields.len() {
        return Err(Error::dim(format!(
            "gradient has {} rows for {} fields",
            grad_x0.rows(),
            instance.fields.len()
        )));
    }
    let d = grad_x0.cols();
    for (i, ids) in instance.fields.iter().enumerate() {
        for &id in ids {
            let slot = into.entry(id).or_insert_with(|| vec![0.0; d]);
            if slot.len() != d {
                return Err(Error::dim("gradient width changed between rows"));
            }
            axpy(1.0, grad_x0.row(i), slot);
        }
    }
    Ok(())
}
