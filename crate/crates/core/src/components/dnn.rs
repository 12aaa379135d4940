//! Plain feed-forward network over the flattened field embeddings:
//! `x¹ = σ(W¹e + b¹)`, `xᵏ = σ(Wᵏxᵏ⁻¹ + bᵏ)`.

use serde::{Deserialize, Serialize};

use super::{Activation, Differentiable};
use crate::error::{Error, Result};
use crate::numerics::{axpy, Mat, Rng};

pub const DEFAULT_DNN_WIDTH: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnnConfig {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for DnnConfig {
    fn default() -> Self {
        DnnConfig {
            widths: vec![DEFAULT_DNN_WIDTH; 3],
            activation: Activation::Relu,
        }
    }
}

impl DnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "DNN widths must be non-empty and positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out × in`
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnState {
    pub layers: Vec<DenseLayer>,
    /// Output regression weights on the last hidden layer.
    pub output: Vec<f64>,
}

impl DnnState {
    pub fn new(input: usize, config: &DnnConfig, std: f64, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.widths.len());
        let mut fan_in = input;
        for &w in &config.widths {
            layers.push(DenseLayer {
                weight: Mat::random_normal(w, fan_in, std, rng),
                bias: vec![0.0; w],
                activation: config.activation,
            });
            fan_in = w;
        }
        let output = rng.normal_vec(fan_in, std);
        Ok(DnnState { layers, output })
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weight.cols())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.rows())
    }

    pub fn zeros_like(&self) -> Self {
        DnnState {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Mat::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
            output: vec![0.0; self.output.len()],
        }
    }

    pub fn add_assign(&mut self, other: &DnnState) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, b.weight.as_slice(), a.weight.as_mut_slice());
            axpy(1.0, &b.bias, &mut a.bias);
        }
        axpy(1.0, &other.output, &mut self.output);
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.shape()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DnnCache {
    shapes: Vec<(usize, usize)>,
    /// Input of each layer; `inputs[0]` is the embedding vector.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl DnnCache {
    /// Each hidden layer before the activation.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Last hidden layer `x^T` (no output unit).
pub fn dnn_forward(e: &[f64], dnn: &DnnState) -> Result<Vec<f64>> {
    Ok(dnn.forward_cached(&e.to_vec())?.0)
}

impl Differentiable for DnnState {
    type Input = Vec<f64>;
    type Output = Vec<f64>;
    type Cache = DnnCache;

    fn forward_cached(&self, input: &Vec<f64>) -> Result<(Vec<f64>, DnnCache)> {
        let mut cache = DnnCache {
            shapes: self.shapes(),
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            post: Vec::with_capacity(self.layers.len()),
        };
        let mut x = input.clone();
        for layer in &self.layers {
            let mut z = layer.weight.matvec(&x)?;
            axpy(1.0, &layer.bias, &mut z);
            let y: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            cache.inputs.push(std::mem::replace(&mut x, y.clone()));
            cache.pre.push(z);
            cache.post.push(y);
        }
        Ok((x, cache))
    }

    fn backward(&self, cache: &DnnCache, upstream: &Vec<f64>) -> Result<(DnnState, Vec<f64>)> {
        if cache.shapes != self.shapes() {
            return Err(Error::State("DNN cache was built for a different network".into()));
        }
        if upstream.len() != self.output_width() {
            return Err(Error::dim(format!(
                "DNN upstream gradient of length {} for width {}",
                upstream.len(),
                self.output_width()
            )));
        }
        let mut grads = self.zeros_like();
        let mut g = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let dz: Vec<f64> = g
                .iter()
                .zip(cache.pre[k].iter().zip(&cache.post[k]))
                .map(|(gi, (&z, &y))| gi * layer.activation.derivative(z, y))
                .collect();
            let gw = &mut grads.layers[k].weight;
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr != 0.0 {
                    axpy(dzr, &cache.inputs[k], gw.row_mut(r));
                }
            }
            grads.layers[k].bias = dz.clone();
            g = layer.weight.matvec_t(&dz)?;
        }
        Ok((grads, g))
    }
}
