//! Cross network: `x_k = x0 · (x_{k−1}ᵀ w_k) + b_k + x_{k−1}`.

use serde::{Deserialize, Serialize};

use super::Differentiable;
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossNetState {
    pub layers: Vec<CrossLayer>,
    /// Output regression weights on the last cross layer.
    pub output: Vec<f64>,
}

impl CrossNetState {
    pub fn new(width: usize, depth: usize, std: f64, rng: &mut Rng) -> Self {
        let layers = (0..depth)
            .map(|_| CrossLayer {
                weight: rng.normal_vec(width, std),
                bias: vec![0.0; width],
            })
            .collect();
        CrossNetState {
            layers,
            output: rng.normal_vec(width, std),
        }
    }

    pub fn width(&self) -> usize {
        self.output.len()
    }

    pub fn zeros_like(&self) -> Self {
        let w = self.width();
        CrossNetState {
            layers: self
                .layers
                .iter()
                .map(|_| CrossLayer {
                    weight: vec![0.0; w],
                    bias: vec![0.0; w],
                })
                .collect(),
            output: vec![0.0; w],
        }
    }

    pub fn add_assign(&mut self, other: &CrossNetState) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, &b.weight, &mut a.weight);
            axpy(1.0, &b.bias, &mut a.bias);
        }
        axpy(1.0, &other.output, &mut self.output);
    }
}

#[derive(Debug, Clone)]
pub struct CrossCache {
    depth: usize,
    /// `x_0 … x_L`
    xs: Vec<Vec<f64>>,
}

pub fn crossnet_forward(x0: &[f64], cn: &CrossNetState) -> Result<Vec<f64>> {
    Ok(cn.forward_cached(&x0.to_vec())?.0)
}

/// The bias-free recursion `x_{i+1} = x0 (x_iᵀ w_{i+1}) + x_i`.
pub fn cross_bias_free(x0: &[f64], weights: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    for w in weights {
        if w.len() != x0.len() {
            return Err(Error::dim(format!(
                "cross weight of length {} for input of length {}",
                w.len(),
                x0.len()
            )));
        }
        let s = dot(&x, w);
        axpy(s, x0, &mut x);
    }
    Ok(x)
}

impl Differentiable for CrossNetState {
    type Input = Vec<f64>;
    type Output = Vec<f64>;
    type Cache = CrossCache;

    fn forward_cached(&self, x0: &Vec<f64>) -> Result<(Vec<f64>, CrossCache)> {
        if x0.len() != self.width() {
            return Err(Error::dim(format!(
                "cross network of width {} given input of length {}",
                self.width(),
                x0.len()
            )));
        }
        let mut xs = Vec::with_capacity(self.layers.len() + 1);
        xs.push(x0.clone());
        for layer in &self.layers {
            let prev = xs.last().expect("x0 present");
            let s = dot(prev, &layer.weight);
            let next: Vec<f64> = x0
                .iter()
                .zip(&layer.bias)
                .zip(prev)
                .map(|((x0i, bi), pi)| x0i * s + bi + pi)
                .collect();
            xs.push(next);
        }
        let out = xs.last().cloned().expect("x0 present");
        Ok((
            out,
            CrossCache {
                depth: self.layers.len(),
                xs,
            },
        ))
    }

    fn backward(&self, cache: &CrossCache, upstream: &Vec<f64>) -> Result<(Self, Vec<f64>)> {
        if cache.depth != self.layers.len() || cache.xs[0].len() != self.width() {
            return Err(Error::State("cross cache was built for a different network".into()));
        }
        if upstream.len() != self.width() {
            return Err(Error::dim("cross upstream gradient length"));
        }
        let x0 = &cache.xs[0];
        let mut grads = self.zeros_like();
        let mut g_x0 = vec![0.0; self.width()];
        let mut g = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let prev = &cache.xs[k];
            let w = &self.layers[k].weight;
            let s = dot(prev, w);
            axpy(s, &g, &mut g_x0);
            let ds = dot(&g, x0);
            grads.layers[k].weight = prev.iter().map(|p| ds * p).collect();
            grads.layers[k].bias = g.clone();
            axpy(ds, w, &mut g);
        }
        axpy(1.0, &g, &mut g_x0);
        Ok((grads, g_x0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, norm, relative_error, DEFAULT_FD_EPS};

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (norm(a) * norm(b))
    }

    #[test]
    fn zero_weights_leave_input_unchanged() {
        let mut rng = Rng::new(0);
        let cn = CrossNetState::new(6, 4, 0.0, &mut rng);
        let x0 = rng.normal_vec(6, 1.0);
        assert_eq!(crossnet_forward(&x0, &cn).unwrap(), x0);
    }

    #[test]
    fn depth_one_is_scalar_multiple() {
        let mut rng = Rng::new(1);
        let x0 = rng.normal_vec(5, 1.0);
        let w = rng.normal_vec(5, 1.0);
        let x1 = cross_bias_free(&x0, std::slice::from_ref(&w)).unwrap();
        let alpha = dot(&x0, &w) + 1.0;
        for (a, b) in x1.iter().zip(&x0) {
            assert!((a - alpha * b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_free_depth_four_stays_collinear() {
        let mut rng = Rng::new(2);
        let x0 = rng.normal_vec(12, 1.0);
        let ws: Vec<Vec<f64>> = (0..4).map(|_| rng.normal_vec(12, 0.3)).collect();
        let x4 = cross_bias_free(&x0, &ws).unwrap();
        assert!((cos(&x4, &x0).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let cn = CrossNetState::new(6, 3, 0.5, &mut rng);
        let mut cn = cn;
        for l in &mut cn.layers {
            l.bias = rng.normal_vec(6, 0.5);
        }
        let x0 = rng.normal_vec(6, 1.0);
        let c = rng.normal_vec(6, 1.0);
        let (_, cache) = cn.forward_cached(&x0).unwrap();
        let (g, gx) = cn.backward(&cache, &c).unwrap();

        let flat = |s: &CrossNetState| {
            s.layers
                .iter()
                .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
                .collect::<Vec<f64>>()
        };
        let rebuild = |p: &[f64]| {
            let mut s = cn.clone();
            for (k, l) in s.layers.iter_mut().enumerate() {
                l.weight.copy_from_slice(&p[k * 12..k * 12 + 6]);
                l.bias.copy_from_slice(&p[k * 12 + 6..k * 12 + 12]);
            }
            s
        };
        let numeric = finite_diff_grad(
            |p| dot(&crossnet_forward(&x0, &rebuild(p)).unwrap(), &c),
            &flat(&cn),
            DEFAULT_FD_EPS,
        )
        .unwrap();
        for (a, n) in flat(&g).iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
        }
        let numeric_x =
            finite_diff_grad(|p| dot(&crossnet_forward(p, &cn).unwrap(), &c), &x0, DEFAULT_FD_EPS)
                .unwrap();
        for (a, n) in gx.iter().zip(&numeric_x) {
            assert!(relative_error(*a, *n) < 1e-4);
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(4);
        let a = CrossNetState::new(4, 2, 0.1, &mut rng);
        let b = CrossNetState::new(4, 3, 0.1, &mut rng);
        let (_, cache) = a.forward_cached(&vec![1.0; 4]).unwrap();
        assert!(matches!(b.backward(&cache, &vec![1.0; 4]), Err(Error::State(_))));
        assert!(crossnet_forward(&[1.0; 3], &a).is_err());
    }
}
