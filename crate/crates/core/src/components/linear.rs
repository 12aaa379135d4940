use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};

/// First-order weights, one per feature id. Every active feature contributes
/// its weight (implicit value 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPart {
    pub weights: Vec<f64>,
}

impl LinearPart {
    pub fn zeros(num_features: usize) -> Self {
        LinearPart {
            weights: vec![0.0; num_features],
        }
    }

    fn weight(&self, id: usize) -> Result<f64> {
        self.weights.get(id).copied().ok_or_else(|| {
            Error::Lookup(format!(
                "feature id {id} outside linear part of {} weights",
                self.weights.len()
            ))
        })
    }
}

pub fn linear_forward(instance: &Instance, lp: &LinearPart) -> Result<f64> {
    instance.active_features().map(|id| lp.weight(id)).sum()
}

/// Accumulates `upstream` into every active feature's slot.
pub fn linear_backward(instance: &Instance, upstream: f64, into: &mut BTreeMap<usize, f64>) {
    for id in instance.active_features() {
        *into.entry(id).or_insert(0.0) += upstream;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_active_weights() {
        let inst = Instance {
            label: 1,
            fields: vec![vec![0], vec![1, 2]],
        };
        assert_eq!(linear_forward(&inst, &LinearPart::zeros(3)).unwrap(), 0.0);
        let lp = LinearPart {
            weights: vec![0.1, 0.2, 0.3],
        };
        assert!((linear_forward(&inst, &lp).unwrap() - 0.6).abs() < 1e-15);
        let one = Instance::univalent(0, &[1]);
        let lp = LinearPart {
            weights: vec![0.0, 0.7],
        };
        assert_eq!(linear_forward(&one, &lp).unwrap(), 0.7);
        assert!(linear_forward(&Instance::univalent(0, &[5]), &lp).is_err());
    }

    #[test]
    fn backward_hits_each_active_feature() {
        let inst = Instance {
            label: 1,
            fields: vec![vec![0], vec![2, 2]],
        };
        let mut g = BTreeMap::new();
        linear_backward(&inst, 0.5, &mut g);
        assert_eq!(g[&0], 0.5);
        assert_eq!(g[&2], 1.0);
    }
}
