//! Compressed Interaction Network.
//!
//! Layer `k` maps `X^{k−1} ∈ R^{H_{k−1}×D}` and the field embeddings
//! `X⁰ ∈ R^{m×D}` to `X^k ∈ R^{H_k×D}`:
//!
//! ```text
//! X^k[h,*] = σ( Σ_i Σ_j W^{k,h}[i,j] · (X^{k−1}[i,*] ∘ X⁰[j,*]) )
//! ```
//!
//! Every feature map is sum-pooled over the embedding dimension and the
//! pooled vectors of all layers are concatenated into `p⁺`. With identity
//! activation, layer `k` is a homogeneous polynomial of degree `k+1` in the
//! rows of `X⁰`.
//!
//! Filters are stored either densely or as rank-`L` factors
//! `W^{k,h} = U^{k,h} (V^{k,h})ᵀ`; the factored forward never materializes
//! `W`.

use serde::{Deserialize, Serialize};

use super::{Activation, Differentiable};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, sigmoid, Mat, Rng};

pub const DEFAULT_CIN_WIDTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CinConfig {
    /// `H_1 … H_T`; empty disables the network.
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Rank `L` of factored filters, or `None` for dense filters.
    pub rank: Option<usize>,
}

impl Default for CinConfig {
    fn default() -> Self {
        CinConfig {
            widths: vec![DEFAULT_CIN_WIDTH; 3],
            activation: Activation::Identity,
            rank: None,
        }
    }
}

impl CinConfig {
    pub fn validate(&self, fields: usize) -> Result<()> {
        if self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "CIN widths must be positive, got {:?}",
                self.widths
            )));
        }
        if let Some(rank) = self.rank {
            let mut h_in = fields;
            for &h in &self.widths {
                if rank == 0 || rank >= h_in.min(fields) {
                    return Err(Error::Config(format!(
                        "CIN rank {rank} must be positive and below min(H_prev={h_in}, m={fields})"
                    )));
                }
                h_in = h;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Filters {
    /// `w[(h·H_in + i)·m + j] = W^{k,h}[i,j]`
    Full { w: Vec<f64> },
    /// `u[(h·H_in + i)·L + l] = U^{k,h}[i,l]`, `v[(h·m + j)·L + l] = V^{k,h}[j,l]`
    LowRank { rank: usize, u: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CinLayer {
    pub h_in: usize,
    pub h_out: usize,
    pub fields: usize,
    pub filters: Filters,
}

impl CinLayer {
    /// `W^{k,h}` as an `H_in × m` matrix.
    pub fn filter(&self, h: usize) -> Mat {
        let (hi, m) = (self.h_in, self.fields);
        match &self.filters {
            Filters::Full { w } => {
                let start = h * hi * m;
                Mat::from_vec(hi, m, w[start..start + hi * m].to_vec()).expect("filter shape")
            }
            Filters::LowRank { .. } => {
                let (u, v) = self.factors(h).expect("low-rank layer");
                cin_low_rank_materialize(&u, &v).expect("factor shapes")
            }
        }
    }

    /// `(U^{k,h}, V^{k,h})` for factored layers.
    pub fn factors(&self, h: usize) -> Option<(Mat, Mat)> {
        let Filters::LowRank { rank, u, v } = &self.filters else {
            return None;
        };
        let (hi, m, l) = (self.h_in, self.fields, *rank);
        let us = h * hi * l;
        let vs = h * m * l;
        Some((
            Mat::from_vec(hi, l, u[us..us + hi * l].to_vec()).expect("U shape"),
            Mat::from_vec(m, l, v[vs..vs + m * l].to_vec()).expect("V shape"),
        ))
    }

    pub fn filters(&self) -> Vec<Mat> {
        (0..self.h_out).map(|h| self.filter(h)).collect()
    }

    fn zeros_like(&self) -> Self {
        let filters = match &self.filters {
            Filters::Full { w } => Filters::Full {
                w: vec![0.0; w.len()],
            },
            Filters::LowRank { rank, u, v } => Filters::LowRank {
                rank: *rank,
                u: vec![0.0; u.len()],
                v: vec![0.0; v.len()],
            },
        };
        CinLayer { filters, ..*self }
    }

    fn signature(&self) -> (usize, usize, usize, Option<usize>) {
        let rank = match &self.filters {
            Filters::Full { .. } => None,
            Filters::LowRank { rank, .. } => Some(*rank),
        };
        (self.h_in, self.h_out, self.fields, rank)
    }

    /// Pre-activation `S^k`.
    fn pre_activation(&self, x_prev: &Mat, x0: &Mat) -> Result<Mat> {
        if x_prev.rows() != self.h_in || x0.rows() != self.fields || x_prev.cols() != x0.cols() {
            return Err(Error::dim(format!(
                "CIN layer {}→{} over {} fields given X^(k-1) {:?} and X0 {:?}",
                self.h_in,
                self.h_out,
                self.fields,
                x_prev.shape(),
                x0.shape()
            )));
        }
        let (hi, m, d) = (self.h_in, self.fields, x0.cols());
        let mut s = Mat::zeros(self.h_out, d);
        match &self.filters {
            Filters::Full { w } => {
                let mut z = vec![0.0; d];
                for i in 0..hi {
                    let a = x_prev.row(i);
                    for j in 0..m {
                        let b = x0.row(j);
                        for t in 0..d {
                            z[t] = a[t] * b[t];
                        }
                        for h in 0..self.h_out {
                            let wij = w[(h * hi + i) * m + j];
                            if wij != 0.0 {
                                axpy(wij, &z, s.row_mut(h));
                            }
                        }
                    }
                }
            }
            Filters::LowRank { rank, u, v } => {
                let l_count = *rank;
                let mut a = vec![0.0; d];
                let mut b = vec![0.0; d];
                for h in 0..self.h_out {
                    for l in 0..l_count {
                        a.iter_mut().for_each(|x| *x = 0.0);
                        b.iter_mut().for_each(|x| *x = 0.0);
                        for i in 0..hi {
                            axpy(u[(h * hi + i) * l_count + l], x_prev.row(i), &mut a);
                        }
                        for j in 0..m {
                            axpy(v[(h * m + j) * l_count + l], x0.row(j), &mut b);
                        }
                        let row = s.row_mut(h);
                        for t in 0..d {
                            row[t] += a[t] * b[t];
                        }
                    }
                }
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CinState {
    pub fields: usize,
    pub activation: Activation,
    pub layers: Vec<CinLayer>,
    /// Regression weights `w^o` on `p⁺`, length `Σ H_k`.
    pub output: Vec<f64>,
}

impl CinState {
    pub fn new(fields: usize, config: &CinConfig, std: f64, rng: &mut Rng) -> Result<Self> {
        config.validate(fields)?;
        let mut layers = Vec::with_capacity(config.widths.len());
        let mut h_in = fields;
        for &h_out in &config.widths {
            let filters = match config.rank {
                None => Filters::Full {
                    w: rng.normal_vec(h_out * h_in * fields, std),
                },
                Some(rank) => {
                    // factor scale chosen so entries of U·Vᵀ are O(std·√L)
                    let fstd = std.sqrt();
                    Filters::LowRank {
                        rank,
                        u: rng.normal_vec(h_out * h_in * rank, fstd),
                        v: rng.normal_vec(h_out * fields * rank, fstd),
                    }
                }
            };
            layers.push(CinLayer {
                h_in,
                h_out,
                fields,
                filters,
            });
            h_in = h_out;
        }
        let total: usize = config.widths.iter().sum();
        Ok(CinState {
            fields,
            activation: config.activation,
            layers,
            output: rng.normal_vec(total, std),
        })
    }

    /// Builds dense layers from explicit filters: `filters[k][h]` is
    /// `W^{k+1,h}`.
    pub fn from_filters(fields: usize, activation: Activation, filters: &[Vec<Mat>]) -> Result<Self> {
        let mut layers = Vec::with_capacity(filters.len());
        let mut h_in = fields;
        for layer in filters {
            let mut w = Vec::with_capacity(layer.len() * h_in * fields);
            for f in layer {
                if f.shape() != (h_in, fields) {
                    return Err(Error::dim(format!(
                        "filter {:?}, expected ({h_in}, {fields})",
                        f.shape()
                    )));
                }
                w.extend_from_slice(f.as_slice());
            }
            layers.push(CinLayer {
                h_in,
                h_out: layer.len(),
                fields,
                filters: Filters::Full { w },
            });
            h_in = layer.len();
        }
        let total = filters.iter().map(Vec::len).sum();
        Ok(CinState {
            fields,
            activation,
            layers,
            output: vec![0.0; total],
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.h_out).collect()
    }

    pub fn pooled_len(&self) -> usize {
        self.layers.iter().map(|l| l.h_out).sum()
    }

    /// Same structure with every factor materialized into dense filters.
    pub fn materialized(&self) -> CinState {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = (0..l.h_out).flat_map(|h| l.filter(h).into_vec()).collect();
                CinLayer {
                    filters: Filters::Full { w },
                    ..*l
                }
            })
            .collect();
        CinState {
            layers,
            ..self.clone()
        }
    }

    pub fn zeros_like(&self) -> Self {
        CinState {
            fields: self.fields,
            activation: self.activation,
            layers: self.layers.iter().map(CinLayer::zeros_like).collect(),
            output: vec![0.0; self.output.len()],
        }
    }

    pub fn add_assign(&mut self, other: &CinState) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (&mut a.filters, &b.filters) {
                (Filters::Full { w: wa }, Filters::Full { w: wb }) => axpy(1.0, wb, wa),
                (
                    Filters::LowRank { u: ua, v: va, .. },
                    Filters::LowRank { u: ub, v: vb, .. },
                ) => {
                    axpy(1.0, ub, ua);
                    axpy(1.0, vb, va);
                }
                _ => panic!("mismatched CIN layer kinds"),
            }
        }
        axpy(1.0, &other.output, &mut self.output);
    }

    fn signature(&self) -> Vec<(usize, usize, usize, Option<usize>)> {
        self.layers.iter().map(CinLayer::signature).collect()
    }
}

/// One CIN layer from an explicit list of `H_in × m` filters.
pub fn cin_layer(x_prev: &Mat, x0: &Mat, filters: &[Mat], activation: Activation) -> Result<Mat> {
    let (h_in, m) = (x_prev.rows(), x0.rows());
    let mut w = Vec::with_capacity(filters.len() * h_in * m);
    for f in filters {
        if f.shape() != (h_in, m) {
            return Err(Error::dim(format!(
                "filter {:?} for X^(k-1) with {h_in} rows and {m} fields",
                f.shape()
            )));
        }
        w.extend_from_slice(f.as_slice());
    }
    let layer = CinLayer {
        h_in,
        h_out: filters.len(),
        fields: m,
        filters: Filters::Full { w },
    };
    let mut s = layer.pre_activation(x_prev, x0)?;
    s.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = activation.apply(*v));
    Ok(s)
}

/// Pooled output `p⁺` and the hidden layers `X¹ … X^T`.
pub fn cin_forward(x0: &Mat, cin: &CinState) -> Result<(Vec<f64>, Vec<Mat>)> {
    let (p, cache) = cin.forward_cached(x0)?;
    Ok((p, cache.post))
}

/// `sigmoid(p⁺ᵀ w^o)`.
pub fn cin_score(p_plus: &[f64], w_o: &[f64]) -> Result<f64> {
    if p_plus.len() != w_o.len() {
        return Err(Error::dim(format!(
            "p+ of length {} with w^o of length {}",
            p_plus.len(),
            w_o.len()
        )));
    }
    Ok(sigmoid(dot(p_plus, w_o)))
}

/// `U · Vᵀ`
pub fn cin_low_rank_materialize(u: &Mat, v: &Mat) -> Result<Mat> {
    u.mul_transpose(v)
}

#[derive(Debug, Clone)]
pub struct CinCache {
    signature: Vec<(usize, usize, usize, Option<usize>)>,
    x0: Mat,
    pre: Vec<Mat>,
    post: Vec<Mat>,
}

impl CinCache {
    pub fn hidden(&self) -> &[Mat] {
        &self.post
    }

    /// Feature maps before the activation.
    pub fn pre_activations(&self) -> &[Mat] {
        &self.pre
    }
}

impl Differentiable for CinState {
    type Input = Mat;
    type Output = Vec<f64>;
    type Cache = CinCache;

    fn forward_cached(&self, x0: &Mat) -> Result<(Vec<f64>, CinCache)> {
        if x0.rows() != self.fields {
            return Err(Error::dim(format!(
                "CIN over {} fields given X0 with {} rows",
                self.fields,
                x0.rows()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Mat> = Vec::with_capacity(self.layers.len());
        let mut pooled = Vec::with_capacity(self.pooled_len());
        for layer in &self.layers {
            let x_prev = post.last().unwrap_or(x0);
            let s = layer.pre_activation(x_prev, x0)?;
            let mut x = s.clone();
            x.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = self.activation.apply(*v));
            pooled.extend((0..x.rows()).map(|h| x.row(h).iter().sum::<f64>()));
            pre.push(s);
            post.push(x);
        }
        Ok((
            pooled,
            CinCache {
                signature: self.signature(),
                x0: x0.clone(),
                pre,
                post,
            },
        ))
    }

    fn backward(&self, cache: &CinCache, upstream: &Vec<f64>) -> Result<(CinState, Mat)> {
        if cache.signature != self.signature() {
            return Err(Error::State("CIN cache was built for a different network".into()));
        }
        if upstream.len() != self.pooled_len() {
            return Err(Error::dim(format!(
                "CIN upstream gradient of length {} for {} pooled outputs",
                upstream.len(),
                self.pooled_len()
            )));
        }
        let x0 = &cache.x0;
        let (m, d) = (x0.rows(), x0.cols());
        let mut grads = self.zeros_like();
        let mut g_x0 = Mat::zeros(m, d);
        let mut g_next: Option<Mat> = None;
        let mut offset = self.pooled_len();

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let (hi, ho) = (layer.h_in, layer.h_out);
            offset -= ho;
            let x_prev = if k == 0 { x0 } else { &cache.post[k - 1] };

            let mut g_s = g_next.take().unwrap_or_else(|| Mat::zeros(ho, d));
            for h in 0..ho {
                let gp = upstream[offset + h];
                let (pre, post) = (cache.pre[k].row(h), cache.post[k].row(h));
                for (t, g) in g_s.row_mut(h).iter_mut().enumerate() {
                    *g = (*g + gp) * self.activation.derivative(pre[t], post[t]);
                }
            }

            let dense = match &layer.filters {
                Filters::Full { w } => std::borrow::Cow::Borrowed(w),
                Filters::LowRank { .. } => std::borrow::Cow::Owned(
                    (0..ho).flat_map(|h| layer.filter(h).into_vec()).collect::<Vec<f64>>(),
                ),
            };
            let mut g_w = vec![0.0; ho * hi * m];
            let mut g_prev = Mat::zeros(hi, d);
            let mut z = vec![0.0; d];
            let mut g_z = vec![0.0; d];
            for i in 0..hi {
                let a = x_prev.row(i);
                for j in 0..m {
                    let b = x0.row(j);
                    for t in 0..d {
                        z[t] = a[t] * b[t];
                    }
                    g_z.iter_mut().for_each(|v| *v = 0.0);
                    for h in 0..ho {
                        let idx = (h * hi + i) * m + j;
                        g_w[idx] = dot(g_s.row(h), &z);
                        axpy(dense[idx], g_s.row(h), &mut g_z);
                    }
                    let gp = g_prev.row_mut(i);
                    for t in 0..d {
                        gp[t] += g_z[t] * b[t];
                    }
                    let g0 = g_x0.row_mut(j);
                    for t in 0..d {
                        g0[t] += g_z[t] * a[t];
                    }
                }
            }

            match (&layer.filters, &mut grads.layers[k].filters) {
                (Filters::Full { .. }, Filters::Full { w }) => *w = g_w,
                (Filters::LowRank { rank, .. }, Filters::LowRank { u: gu, v: gv, .. }) => {
                    let l_count = *rank;
                    for h in 0..ho {
                        let g_wh = Mat::from_vec(hi, m, g_w[h * hi * m..(h + 1) * hi * m].to_vec())?;
                        let (u, v) = layer.factors(h).expect("low-rank layer");
                        let du = g_wh.matmul(&v)?;
                        let dv = g_wh.transpose().matmul(&u)?;
                        gu[h * hi * l_count..(h + 1) * hi * l_count].copy_from_slice(du.as_slice());
                        gv[h * m * l_count..(h + 1) * m * l_count].copy_from_slice(dv.as_slice());
                    }
                }
                _ => unreachable!("gradient layers mirror parameter layers"),
            }

            if k == 0 {
                axpy(1.0, g_prev.as_slice(), g_x0.as_mut_slice());
            } else {
                g_next = Some(g_prev);
            }
        }
        Ok((grads, g_x0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, DEFAULT_FD_EPS};
    use proptest::prelude::*;
    use crate::numerics::Rng;

    fn ones(r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, vec![1.0; r * c]).unwrap()
    }

    #[test]
    fn single_filter_examples() {
        let x0 = Mat::from_rows(&[[2.0], [3.0]]);
        let mut w = Mat::zeros(2, 2);
        w.set(0, 0, 1.0);
        let out = cin_layer(&x0, &x0, &[w], Activation::Identity).unwrap();
        assert_eq!(out, Mat::from_rows(&[[4.0]]));

        let out = cin_layer(&x0, &x0, &[ones(2, 2)], Activation::Identity).unwrap();
        assert_eq!(out, Mat::from_rows(&[[25.0]]));

        let out = cin_layer(&x0, &x0, &[Mat::zeros(2, 2)], Activation::Identity).unwrap();
        assert_eq!(out, Mat::from_rows(&[[0.0]]));

        assert!(cin_layer(&x0, &x0, &[Mat::zeros(3, 2)], Activation::Identity).is_err());
    }

    #[test]
    fn forward_pools_each_layer() {
        let x0 = Mat::from_rows(&[[2.0], [3.0]]);
        let cin = CinState::from_filters(2, Activation::Identity, &[vec![ones(2, 2)]]).unwrap();
        let (p, hidden) = cin_forward(&x0, &cin).unwrap();
        assert_eq!(p, vec![25.0]);
        assert_eq!(hidden[0], Mat::from_rows(&[[25.0]]));

        let mut rng = Rng::new(1);
        let cin = CinState::new(3, &CinConfig { widths: vec![2, 2], ..Default::default() }, 1.0, &mut rng)
            .unwrap();
        let (p, _) = cin_forward(&Mat::zeros(3, 4), &cin).unwrap();
        assert_eq!(p, vec![0.0; 4]);
    }

    #[test]
    fn pooling_sums_embedding_positions() {
        // X0 = [[1, 2]], filter [[1]] gives X¹ = [[1, 4]], pooled 5
        let x0 = Mat::from_rows(&[[1.0, 2.0], [0.0, 0.0]]);
        let mut w = Mat::zeros(2, 2);
        w.set(0, 0, 1.0);
        let cin = CinState::from_filters(2, Activation::Identity, &[vec![w]]).unwrap();
        let (p, hidden) = cin_forward(&x0, &cin).unwrap();
        assert_eq!(hidden[0].row(0), &[1.0, 4.0]);
        assert_eq!(p, vec![5.0]);
    }

    #[test]
    fn score_examples() {
        assert_eq!(cin_score(&[3.0, -3.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(cin_score(&[7.0, 1.0], &[0.0, 0.0]).unwrap(), 0.5);
        let y = cin_score(&[25.0], &[0.1]).unwrap();
        assert!((y - 1.0 / (1.0 + (-2.5f64).exp())).abs() < 1e-15);
        assert!((y - 0.924).abs() < 1e-3);
        assert!(cin_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn materialize_examples() {
        let w = cin_low_rank_materialize(
            &Mat::from_rows(&[[1.0], [0.0]]),
            &Mat::from_rows(&[[1.0], [1.0]]),
        )
        .unwrap();
        assert_eq!(w, Mat::from_rows(&[[1.0, 1.0], [0.0, 0.0]]));
        let w = cin_low_rank_materialize(&Mat::zeros(3, 2), &Mat::from_rows(&[[1.0, 2.0]])).unwrap();
        assert_eq!(w, Mat::zeros(3, 1));
        assert!(cin_low_rank_materialize(&Mat::zeros(3, 2), &Mat::zeros(3, 1)).is_err());
    }

    #[test]
    fn rank_must_stay_below_layer_sizes() {
        let cfg = CinConfig {
            widths: vec![4, 2, 3],
            activation: Activation::Identity,
            rank: Some(2),
        };
        assert!(cfg.validate(5).is_err());
        assert!(CinConfig { rank: Some(1), ..cfg.clone() }.validate(5).is_ok());
        assert!(CinConfig { widths: vec![0], ..cfg }.validate(5).is_err());
    }

    fn flat(c: &CinState) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &c.layers {
            match &l.filters {
                Filters::Full { w } => v.extend_from_slice(w),
                Filters::LowRank { u, v: vv, .. } => {
                    v.extend_from_slice(u);
                    v.extend_from_slice(vv);
                }
            }
        }
        v
    }

    fn unflat(template: &CinState, p: &[f64]) -> CinState {
        let mut c = template.clone();
        let mut at = 0;
        let mut take = |dst: &mut Vec<f64>| {
            let n = dst.len();
            dst.copy_from_slice(&p[at..at + n]);
            at += n;
        };
        for l in &mut c.layers {
            match &mut l.filters {
                Filters::Full { w } => take(w),
                Filters::LowRank { u, v, .. } => {
                    take(u);
                    take(v);
                }
            }
        }
        c
    }

    fn check_backward(cin: &CinState, x0: &Mat, rng: &mut Rng) {
        let c = rng.normal_vec(cin.pooled_len(), 1.0);
        let (_, cache) = cin.forward_cached(x0).unwrap();
        let (g, gx) = cin.backward(&cache, &c).unwrap();
        let numeric = finite_diff_grad(
            |p| dot(&cin_forward(x0, &unflat(cin, p)).unwrap().0, &c),
            &flat(cin),
            DEFAULT_FD_EPS,
        )
        .unwrap();
        for (a, n) in flat(&g).iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
        }
        let (m, d) = x0.shape();
        let numeric_x = finite_diff_grad(
            |p| dot(&cin_forward(&Mat::from_vec(m, d, p.to_vec()).unwrap(), cin).unwrap().0, &c),
            x0.as_slice(),
            DEFAULT_FD_EPS,
        )
        .unwrap();
        for (a, n) in gx.as_slice().iter().zip(&numeric_x) {
            assert!(relative_error(*a, *n) < 1e-4, "{a} vs {n}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(17);
        for act in [Activation::Identity, Activation::Tanh, Activation::Sigmoid] {
            let cfg = CinConfig {
                widths: vec![2, 2],
                activation: act,
                rank: None,
            };
            let cin = CinState::new(3, &cfg, 0.7, &mut rng).unwrap();
            let x0 = Mat::random_normal(3, 2, 1.0, &mut rng);
            check_backward(&cin, &x0, &mut rng);
        }
        let cfg = CinConfig {
            widths: vec![3, 3, 2],
            activation: Activation::Identity,
            rank: Some(1),
        };
        let cin = CinState::new(4, &cfg, 0.5, &mut rng).unwrap();
        let x0 = Mat::random_normal(4, 3, 1.0, &mut rng);
        check_backward(&cin, &x0, &mut rng);
    }

    #[test]
    fn zero_upstream_and_stale_cache() {
        let mut rng = Rng::new(5);
        let cin = CinState::new(3, &CinConfig { widths: vec![2], ..Default::default() }, 1.0, &mut rng)
            .unwrap();
        let x0 = Mat::random_normal(3, 2, 1.0, &mut rng);
        let (_, cache) = cin.forward_cached(&x0).unwrap();
        let (g, gx) = cin.backward(&cache, &vec![0.0; 2]).unwrap();
        assert!(flat(&g).iter().all(|&v| v == 0.0));
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));

        let other = CinState::new(3, &CinConfig { widths: vec![3], ..Default::default() }, 1.0, &mut rng)
            .unwrap();
        assert!(matches!(other.backward(&cache, &vec![0.0; 3]), Err(Error::State(_))));
    }

    #[test]
    fn homogeneous_degree_per_layer() {
        let mut rng = Rng::new(8);
        let cin = CinState::new(3, &CinConfig { widths: vec![2, 3, 2], ..Default::default() }, 1.0, &mut rng)
            .unwrap();
        let x0 = Mat::random_normal(3, 4, 1.0, &mut rng);
        let s = 1.7;
        let mut scaled = x0.clone();
        scaled.scale(s);
        let (p, _) = cin_forward(&x0, &cin).unwrap();
        let (ps, _) = cin_forward(&scaled, &cin).unwrap();
        let mut at = 0;
        for (k, h) in cin.widths().into_iter().enumerate() {
            let factor = s.powi(k as i32 + 2);
            for i in at..at + h {
                assert!((ps[i] - factor * p[i]).abs() <= 1e-10 * ps[i].abs().max(1.0));
            }
            at += h;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn layer_is_bilinear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = Rng::new(seed);
            let x0 = Mat::random_normal(3, 2, 1.0, &mut rng);
            let x1 = Mat::random_normal(2, 2, 1.0, &mut rng);
            let x2 = Mat::random_normal(2, 2, 1.0, &mut rng);
            let f1 = Mat::random_normal(2, 3, 1.0, &mut rng);
            let f2 = Mat::random_normal(2, 3, 1.0, &mut rng);
            let mut combo = x1.clone();
            combo.scale(a);
            axpy(b, x2.as_slice(), combo.as_mut_slice());
            let lhs = cin_layer(&combo, &x0, std::slice::from_ref(&f1), Activation::Identity).unwrap();
            let r1 = cin_layer(&x1, &x0, std::slice::from_ref(&f1), Activation::Identity).unwrap();
            let r2 = cin_layer(&x2, &x0, std::slice::from_ref(&f1), Activation::Identity).unwrap();
            for t in 0..2 {
                let rhs = a * r1.as_slice()[t] + b * r2.as_slice()[t];
                prop_assert!((lhs.as_slice()[t] - rhs).abs() < 1e-10);
            }
            let mut fcombo = f1.clone();
            fcombo.scale(a);
            axpy(b, f2.as_slice(), fcombo.as_mut_slice());
            let lhs = cin_layer(&x1, &x0, &[fcombo], Activation::Identity).unwrap();
            let s1 = cin_layer(&x1, &x0, &[f1], Activation::Identity).unwrap();
            let s2 = cin_layer(&x1, &x0, &[f2], Activation::Identity).unwrap();
            for t in 0..2 {
                let rhs = a * s1.as_slice()[t] + b * s2.as_slice()[t];
                prop_assert!((lhs.as_slice()[t] - rhs).abs() < 1e-10);
            }
        }

        #[test]
        fn factored_matches_materialized(seed in any::<u64>(), m in 3usize..6, d in 1usize..5) {
            let mut rng = Rng::new(seed);
            let h = rng.range_inclusive(3, 5);
            let rank = rng.range_inclusive(1, (h.min(m) - 1).min(2));
            let cfg = CinConfig { widths: vec![h, h], activation: Activation::Identity, rank: Some(rank) };
            let cin = CinState::new(m, &cfg, 1.0, &mut rng).unwrap();
            let x0 = Mat::random_normal(m, d, 1.0, &mut rng);
            let (pf, hf) = cin_forward(&x0, &cin).unwrap();
            let (pm, hm) = cin_forward(&x0, &cin.materialized()).unwrap();
            for (a, b) in pf.iter().zip(&pm) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
            for (a, b) in hf.iter().zip(&hm) {
                for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                    prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
                }
            }
        }
    }
}
