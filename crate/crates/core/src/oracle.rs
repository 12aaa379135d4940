//! Brute-force verifiers: symbolic CIN expansion, path-sum coefficients,
//! cross-network collinearity, parameter census, the CIN→FM reduction and
//! end-to-end finite-difference gradient checks.
//!
//! None of these reuse the code paths they check beyond the public forward
//! functions.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::components::{
    cin_forward, cross_bias_free, fm_pairwise, Activation, CinConfig, CinState, DnnConfig,
};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, ModelSpec, Parts, PRED_CLAMP};
use crate::numerics::{dot, finite_diff_grad, norm, Mat, Rng, DEFAULT_FD_EPS};

/// Exponents `α` over the `m` fields.
pub type MultiIndex = Vec<u32>;

pub const MAX_MONOMIALS: usize = 1_000_000;

/// `Σ_α w_α · x₁^{α₁} ∘ … ∘ x_m^{α_m}` with Hadamard powers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonomialPolynomial {
    pub fields: usize,
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl MonomialPolynomial {
    pub fn zero(fields: usize) -> Self {
        MonomialPolynomial {
            fields,
            terms: BTreeMap::new(),
        }
    }

    /// The single field embedding `x_j`.
    pub fn field(fields: usize, j: usize) -> Self {
        let mut alpha = vec![0; fields];
        alpha[j] = 1;
        let mut p = Self::zero(fields);
        p.terms.insert(alpha, 1.0);
        p
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    /// Degrees of the stored monomials, ascending and deduplicated.
    pub fn degrees(&self) -> Vec<u32> {
        let mut d: Vec<u32> = self.terms.keys().map(|a| a.iter().sum()).collect();
        d.sort_unstable();
        d.dedup();
        d
    }

    /// `self += c · (p ∘ x_j)`
    fn add_scaled_times_field(&mut self, c: f64, p: &MonomialPolynomial, j: usize) {
        if c == 0.0 {
            return;
        }
        for (alpha, w) in &p.terms {
            let mut a = alpha.clone();
            a[j] += 1;
            *self.terms.entry(a).or_insert(0.0) += c * w;
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, w| *w != 0.0);
    }

    /// Value at the field embeddings `x0` (`m × D`), one entry per dimension.
    pub fn evaluate(&self, x0: &Mat) -> Result<Vec<f64>> {
        if x0.rows() != self.fields {
            return Err(Error::dim(format!(
                "polynomial over {} fields evaluated at {} rows",
                self.fields,
                x0.rows()
            )));
        }
        let d = x0.cols();
        let mut out = vec![0.0; d];
        for (alpha, w) in &self.terms {
            for (t, o) in out.iter_mut().enumerate() {
                let mut v = *w;
                for (i, &a) in alpha.iter().enumerate() {
                    v *= x0.get(i, t).powi(a as i32);
                }
                *o += v;
            }
        }
        Ok(out)
    }
}

/// Symbolic expansion of an identity-activation CIN. `filters[k][h]` is the
/// `H_{k} × m` filter of feature map `h` at layer `k+1`; the result is indexed
/// the same way.
pub fn expand_cin(filters: &[Vec<Mat>], fields: usize) -> Result<Vec<Vec<MonomialPolynomial>>> {
    expand_cin_with_limit(filters, fields, MAX_MONOMIALS)
}

/// [`expand_cin`] with an explicit cap on the total number of monomials.
pub fn expand_cin_with_limit(
    filters: &[Vec<Mat>],
    fields: usize,
    limit: usize,
) -> Result<Vec<Vec<MonomialPolynomial>>> {
    let mut prev: Vec<MonomialPolynomial> = (0..fields)
        .map(|j| MonomialPolynomial::field(fields, j))
        .collect();
    let mut out = Vec::with_capacity(filters.len());
    let mut total = 0usize;
    for (k, layer) in filters.iter().enumerate() {
        let mut maps = Vec::with_capacity(layer.len());
        for w in layer {
            if w.shape() != (prev.len(), fields) {
                return Err(Error::dim(format!(
                    "layer {} filter {:?}, expected {:?}",
                    k + 1,
                    w.shape(),
                    (prev.len(), fields)
                )));
            }
            let mut p = MonomialPolynomial::zero(fields);
            for (i, pi) in prev.iter().enumerate() {
                for j in 0..fields {
                    p.add_scaled_times_field(w.get(i, j), pi, j);
                }
            }
            p.prune();
            total += p.len();
            if total > limit {
                return Err(Error::Capacity(format!(
                    "expansion exceeds {limit} monomials at layer {}",
                    k + 1
                )));
            }
            maps.push(p);
        }
        prev = maps.clone();
        out.push(maps);
    }
    Ok(out)
}

/// Distinct orderings of the multiset described by `alpha`.
pub fn arrangements(alpha: &[u32]) -> Vec<Vec<usize>> {
    fn rec(left: &mut Vec<u32>, cur: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for i in 0..left.len() {
            if left[i] > 0 {
                left[i] -= 1;
                cur.push(i);
                rec(left, cur, len, out);
                cur.pop();
                left[i] += 1;
            }
        }
    }
    let len = alpha.iter().sum::<u32>() as usize;
    let mut out = Vec::new();
    rec(&mut alpha.to_vec(), &mut Vec::new(), len, &mut out);
    out
}

/// Coefficient of `α` in feature map `h` of layer `layer` (1-based) as a sum
/// over paths. Each distinct arrangement `B` of `α` fixes the root field
/// `B₁` and the field `B_{t+1}` joined at layer `t`; intermediate feature
/// maps range freely:
///
/// ```text
/// ŵ_α = Σ_B Σ_{h₁..h_{k−1}} W^{1,h₁}[B₁,B₂] · Π_{t=2..k} W^{t,h_t}[h_{t−1}, B_{t+1}]
/// ```
pub fn path_sum_coefficient(filters: &[Vec<Mat>], layer: usize, h: usize, alpha: &[u32]) -> f64 {
    if layer == 0 || layer > filters.len() || alpha.iter().sum::<u32>() as usize != layer + 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for b in arrangements(alpha) {
        // weights[g] = sum over paths ending in feature map g at layer t
        let mut weights: Vec<f64> = filters[0].iter().map(|w| w.get(b[0], b[1])).collect();
        for t in 2..=layer {
            let next: Vec<f64> = filters[t - 1]
                .iter()
                .map(|w| {
                    weights
                        .iter()
                        .enumerate()
                        .map(|(g, a)| a * w.get(g, b[t]))
                        .sum()
                })
                .collect();
            weights = next;
        }
        total += weights[h];
    }
    total
}

/// All multi-indices over `fields` with total degree `degree`.
pub fn multi_indices(fields: usize, degree: u32) -> Vec<MultiIndex> {
    fn rec(i: usize, left: u32, cur: &mut MultiIndex, out: &mut Vec<MultiIndex>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for a in (0..=left).rev() {
            cur[i] = a;
            rec(i + 1, left - a, cur, out);
        }
    }
    let mut out = Vec::new();
    if fields > 0 {
        rec(0, degree, &mut vec![0; fields], &mut out);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_deviation: f64,
    pub details: serde_json::Value,
}

fn random_filters(fields: usize, widths: &[usize], rng: &mut Rng) -> Vec<Vec<Mat>> {
    let mut h_in = fields;
    widths
        .iter()
        .map(|&h| {
            let layer = (0..h)
                .map(|_| Mat::random_normal(h_in, fields, 1.0, rng))
                .collect();
            h_in = h;
            layer
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PolynomialReport {
    pub cases: usize,
    pub maps: usize,
    pub worst_value_deviation: f64,
    pub worst_coefficient_deviation: f64,
    pub degree_violations: usize,
}

/// Symbolic vs numeric CIN over every `(m, D, T)` with `m ∈ {2,3}`,
/// `D ∈ {1,2}`, `T ∈ {1,2,3}` and random widths in `1..=3`, `draws` filter
/// draws each. Also checks degree stratification and the path-sum
/// coefficients.
pub fn check_polynomial(draws: usize, seed: u64) -> Result<PolynomialReport> {
    let mut rng = Rng::new(seed);
    let mut report = PolynomialReport {
        cases: 0,
        maps: 0,
        worst_value_deviation: 0.0,
        worst_coefficient_deviation: 0.0,
        degree_violations: 0,
    };
    for m in 2..=3 {
        for d in 1..=2 {
            for depth in 1..=3 {
                for _ in 0..draws {
                    let widths: Vec<usize> = (0..depth).map(|_| rng.range_inclusive(1, 3)).collect();
                    let filters = random_filters(m, &widths, &mut rng);
                    let poly = expand_cin(&filters, m)?;
                    let cin = CinState::from_filters(m, Activation::Identity, &filters)?;
                    let x0 = Mat::random_normal(m, d, 1.0, &mut rng);
                    let (_, hidden) = cin_forward(&x0, &cin)?;
                    report.cases += 1;
                    for (k, maps) in poly.iter().enumerate() {
                        let degree = k as u32 + 2;
                        let all = multi_indices(m, degree);
                        for (h, p) in maps.iter().enumerate() {
                            report.maps += 1;
                            if p.degrees().iter().any(|&g| g != degree) {
                                report.degree_violations += 1;
                            }
                            let value = p.evaluate(&x0)?;
                            for (a, b) in value.iter().zip(hidden[k].row(h)) {
                                let dev = (a - b).abs();
                                report.worst_value_deviation = report.worst_value_deviation.max(dev);
                            }
                            for alpha in &all {
                                let path = path_sum_coefficient(&filters, k + 1, h, alpha);
                                let dev = (path - p.coefficient(alpha)).abs();
                                report.worst_coefficient_deviation =
                                    report.worst_coefficient_deviation.max(dev);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CollinearityReport {
    pub width: usize,
    pub depth: usize,
    pub trials: usize,
    /// Largest `| |cos(x_k, x0)| − 1 |` over trials and layers.
    pub max_deviation: f64,
    /// Largest error of the extracted depth-1 scalar against `x0ᵀw₁ + 1`.
    pub alpha1_error: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Runs the bias-free cross recursion on random inputs and measures how far
/// each layer is from being collinear with `x0`.
pub fn check_crossnet_collinearity(
    width: usize,
    depth: usize,
    trials: usize,
    seed: u64,
) -> Result<CollinearityReport> {
    if width == 0 {
        return Err(Error::Argument("cross network width must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let wstd = 1.0 / (width as f64).sqrt();
    let mut report = CollinearityReport {
        width,
        depth,
        trials,
        max_deviation: 0.0,
        alpha1_error: 0.0,
    };
    for _ in 0..trials {
        let x0 = loop {
            let x = rng.normal_vec(width, 1.0);
            if norm(&x) > 0.0 {
                break x;
            }
        };
        let weights: Vec<Vec<f64>> = (0..depth).map(|_| rng.normal_vec(width, wstd)).collect();
        for k in 1..=depth {
            let xk = cross_bias_free(&x0, &weights[..k])?;
            let dev = (cosine(&xk, &x0).abs() - 1.0).abs();
            report.max_deviation = report.max_deviation.max(dev);
        }
        if depth >= 1 {
            let x1 = cross_bias_free(&x0, &weights[..1])?;
            let extracted = dot(&x1, &x0) / dot(&x0, &x0);
            let alpha = dot(&x0, &weights[0]) + 1.0;
            let err = (extracted - alpha).abs() / alpha.abs().max(1.0);
            report.alpha1_error = report.alpha1_error.max(err);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParamCensus {
    pub embedding: usize,
    pub linear: usize,
    /// Filter entries (or low-rank factor entries).
    pub cin_filters: usize,
    /// CIN output weights `w^o`.
    pub cin_output: usize,
    /// DNN weights including the output weights; biases are in `dnn_bias`.
    pub dnn: usize,
    pub dnn_bias: usize,
    pub cross: usize,
    pub fm: usize,
    pub bias: usize,
    pub total: usize,
}

/// Parameter counts derived from the spec alone.
pub fn count_parameters(spec: &ModelSpec) -> ParamCensus {
    let parts = spec.parts;
    let (m, d) = (spec.num_fields, spec.embed_dim);
    let mut c = ParamCensus {
        bias: 1,
        ..ParamCensus::default()
    };
    if parts.uses_embeddings() {
        c.embedding = spec.num_features * d;
    }
    if parts.linear {
        c.linear = spec.num_features;
    }
    if parts.cin {
        let mut h_prev = m;
        for &h in &spec.cin.widths {
            c.cin_filters += match spec.cin.rank {
                None => h * h_prev * m,
                Some(l) => h * (h_prev + m) * l,
            };
            c.cin_output += h;
            h_prev = h;
        }
    }
    if parts.dnn {
        let mut prev = m * d;
        for &h in &spec.dnn.widths {
            c.dnn += prev * h;
            c.dnn_bias += h;
            prev = h;
        }
        c.dnn += prev;
    }
    if parts.cross {
        c.cross = spec.cross_depth * 2 * m * d + m * d;
    }
    if parts.fm {
        c.fm = 1;
    }
    c.total = c.embedding
        + c.linear
        + c.cin_filters
        + c.cin_output
        + c.dnn
        + c.dnn_bias
        + c.cross
        + c.fm
        + c.bias;
    c
}

/// Counts of what `params` actually holds, bucketed by group name.
pub fn allocated_census(params: &ModelParams) -> ParamCensus {
    let mut c = ParamCensus::default();
    for g in params.groups() {
        let n = g.values.len();
        let name = g.name.as_str();
        let slot = if name == "embedding" {
            &mut c.embedding
        } else if name == "linear" {
            &mut c.linear
        } else if name == "cin.output" {
            &mut c.cin_output
        } else if name.starts_with("cin.") {
            &mut c.cin_filters
        } else if name.starts_with("dnn.") && name.ends_with(".bias") {
            &mut c.dnn_bias
        } else if name.starts_with("dnn.") {
            &mut c.dnn
        } else if name.starts_with("cross.") {
            &mut c.cross
        } else if name == "fm_weight" {
            &mut c.fm
        } else {
            &mut c.bias
        };
        *slot += n;
        c.total += n;
    }
    c
}

/// Closed-form CIN count `Σ_k H_k (1 + H_{k−1} m)`.
pub fn cin_closed_form(fields: usize, widths: &[usize]) -> usize {
    let mut h_prev = fields;
    let mut total = 0;
    for &h in widths {
        total += h * (1 + h_prev * fields);
        h_prev = h;
    }
    total
}

/// Closed-form plain-DNN count `m·D·H₁ + H_T + Σ_{k≥2} H_k H_{k−1}`.
pub fn dnn_closed_form(fields: usize, dim: usize, widths: &[usize]) -> usize {
    let Some((&first, _)) = widths.split_first() else {
        return 0;
    };
    let inner: usize = widths.windows(2).map(|w| w[0] * w[1]).sum();
    fields * dim * first + widths[widths.len() - 1] + inner
}

/// A random valid spec with every part possibly enabled.
pub fn random_spec(rng: &mut Rng) -> ModelSpec {
    let m = rng.range_inclusive(2, 8);
    let parts = loop {
        let p = Parts {
            linear: rng.below(2) == 1,
            fm: rng.below(2) == 1,
            dnn: rng.below(2) == 1,
            cin: rng.below(2) == 1,
            cross: rng.below(2) == 1,
        };
        if p.any() {
            break p;
        }
    };
    let cin_widths: Vec<usize> = (0..rng.range_inclusive(1, 4))
        .map(|_| rng.range_inclusive(1, 12))
        .collect();
    let min_dim = std::iter::once(m)
        .chain(cin_widths.iter().copied())
        .min()
        .unwrap_or(1);
    // rank must sit below min(H_{k-1}, m) for every layer
    let rank = (min_dim > 1 && rng.below(3) == 0).then(|| rng.range_inclusive(1, min_dim - 1));
    ModelSpec {
        parts,
        num_fields: m,
        num_features: m + rng.range_inclusive(m, 40),
        embed_dim: rng.range_inclusive(1, 12),
        dnn: DnnConfig {
            widths: (0..rng.range_inclusive(1, 4))
                .map(|_| rng.range_inclusive(1, 32))
                .collect(),
            activation: Activation::Relu,
        },
        cin: CinConfig {
            widths: cin_widths,
            activation: Activation::Identity,
            rank,
        },
        cross_depth: rng.range_inclusive(0, 4),
        fm_weight_trainable: rng.below(2) == 1,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub specs: usize,
    pub mismatches: usize,
    pub closed_form_mismatches: usize,
}

/// Compares the spec-derived census with allocation for `specs` random specs,
/// and full-rank CIN/DNN counts with their closed forms.
pub fn check_census(specs: usize, seed: u64) -> Result<CensusReport> {
    let mut rng = Rng::new(seed);
    let mut report = CensusReport {
        specs,
        mismatches: 0,
        closed_form_mismatches: 0,
    };
    for _ in 0..specs {
        let spec = random_spec(&mut rng);
        let predicted = count_parameters(&spec);
        let params = ModelParams::init(&spec, 0.01, &mut rng)?;
        if predicted != allocated_census(&params) {
            report.mismatches += 1;
        }
        if spec.parts.cin
            && spec.cin.rank.is_none()
            && predicted.cin_filters + predicted.cin_output
                != cin_closed_form(spec.num_fields, &spec.cin.widths)
        {
            report.closed_form_mismatches += 1;
        }
        if spec.parts.dnn
            && predicted.dnn != dnn_closed_form(spec.num_fields, spec.embed_dim, &spec.dnn.widths)
        {
            report.closed_form_mismatches += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct FmReductionReport {
    pub pooled: f64,
    pub pairwise: f64,
    pub diagonal: f64,
    pub deviation: f64,
}

/// Depth-1 CIN with a single all-ones filter and identity activation: its
/// pooled output must equal `2·FM(X⁰) + Σ_i ‖e_i‖²`.
pub fn check_fm_reduction(x0: &Mat) -> Result<FmReductionReport> {
    let m = x0.rows();
    if m < 2 {
        return Err(Error::Argument("FM reduction needs at least 2 fields".into()));
    }
    let ones = Mat::from_vec(m, m, vec![1.0; m * m])?;
    let cin = CinState::from_filters(m, Activation::Identity, &[vec![ones]])?;
    let (pooled, _) = cin_forward(x0, &cin)?;
    let pairwise = fm_pairwise(x0);
    let diagonal: f64 = (0..m).map(|i| dot(x0.row(i), x0.row(i))).sum();
    Ok(FmReductionReport {
        pooled: pooled[0],
        pairwise,
        diagonal,
        deviation: (pooled[0] - (2.0 * pairwise + diagonal)).abs(),
    })
}

/// Analytic objective and dense gradient, as produced by a model's backward.
pub type GradientFn = fn(&Model, &[&Instance], f64) -> Result<(f64, ModelParams)>;

pub fn analytic_gradient(model: &Model, batch: &[&Instance], lambda: f64) -> Result<(f64, ModelParams)> {
    model.objective_and_gradient(batch, lambda)
}

/// Denominator floor for relative gradient errors: coordinates whose
/// gradient is (near) zero are judged by absolute error against it.
pub const GRAD_REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GroupGradient {
    pub name: String,
    pub len: usize,
    pub worst_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    pub objective_error: f64,
    pub worst_relative_error: f64,
    pub groups: Vec<GroupGradient>,
}

/// Central differences of `J` against `gradient` for every trainable
/// parameter coordinate.
pub fn check_model_gradients(
    model: &Model,
    batch: &[&Instance],
    lambda: f64,
    gradient: GradientFn,
) -> Result<GradientReport> {
    let (j, analytic) = gradient(model, batch, lambda)?;
    let objective_error = (j - model.objective_value(batch, lambda)?).abs();
    let point = model.params.to_flat();
    let mut probe = model.clone();
    let numeric = finite_diff_grad(
        |flat| {
            probe.params.set_flat(flat).expect("same length");
            probe.objective_value(batch, lambda).unwrap_or(f64::NAN)
        },
        &point,
        DEFAULT_FD_EPS,
    )?;
    let mut groups = Vec::new();
    let mut at = 0;
    let mut worst = 0.0f64;
    for (g, a) in model.params.groups().iter().zip(analytic.groups()) {
        let n = g.values.len();
        let mut gw = 0.0f64;
        if g.trainable {
            for (x, y) in a.values.iter().zip(&numeric[at..at + n]) {
                let err = (x - y).abs() / x.abs().max(y.abs()).max(GRAD_REL_FLOOR);
                gw = gw.max(err);
            }
        }
        worst = worst.max(gw);
        groups.push(GroupGradient {
            name: g.name.clone(),
            len: n,
            worst_relative_error: gw,
        });
        at += n;
    }
    Ok(GradientReport {
        objective_error,
        worst_relative_error: worst,
        groups,
    })
}

/// Closest a ReLU pre-activation or the logit clamp may sit to its kink in a
/// gradient case. Central differences straddling a kink measure neither
/// one-sided derivative, so such draws are rejected.
pub const KINK_MARGIN: f64 = 1e-3;

/// A small model with every part enabled, parameters drawn at O(1) scale,
/// and a batch of instances over it, redrawn until no kink is within
/// `KINK_MARGIN`.
pub fn random_gradient_case(rng: &mut Rng) -> Result<(Model, Vec<Instance>, f64)> {
    loop {
        let case = draw_gradient_case(rng)?;
        if clear_of_kinks(&case.0, &case.1)? {
            return Ok(case);
        }
    }
}

fn clear_of_kinks(model: &Model, instances: &[Instance]) -> Result<bool> {
    let bound = ((1.0 - PRED_CLAMP) / PRED_CLAMP).ln();
    let relu = Activation::Relu;
    for inst in instances {
        let cache = model.forward_cached(inst)?;
        if (cache.logit.abs() - bound).abs() < KINK_MARGIN {
            return Ok(false);
        }
        if model.spec.dnn.activation == relu {
            if let Some(c) = cache.dnn_cache() {
                if c.pre_activations().iter().flatten().any(|v| v.abs() < KINK_MARGIN) {
                    return Ok(false);
                }
            }
        }
        if model.spec.cin.activation == relu {
            if let Some(c) = cache.cin_cache() {
                let near = |m: &Mat| m.as_slice().iter().any(|v| v.abs() < KINK_MARGIN);
                if c.pre_activations().iter().any(near) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn draw_gradient_case(rng: &mut Rng) -> Result<(Model, Vec<Instance>, f64)> {
    let m = rng.range_inclusive(2, 5);
    let vocab = rng.range_inclusive(1, 3);
    let num_features = m + m * vocab;
    let acts = [
        Activation::Identity,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
    ];
    let cin_widths: Vec<usize> = (0..rng.range_inclusive(1, 3))
        .map(|_| rng.range_inclusive(1, 3))
        .collect();
    let min_dim = cin_widths.iter().copied().chain([m]).min().unwrap_or(1);
    let rank = (min_dim > 1 && rng.below(2) == 0).then(|| rng.range_inclusive(1, min_dim - 1));
    let spec = ModelSpec {
        parts: Parts {
            linear: true,
            fm: true,
            dnn: true,
            cin: true,
            cross: true,
        },
        num_fields: m,
        num_features,
        embed_dim: rng.range_inclusive(1, 4),
        dnn: DnnConfig {
            widths: (0..rng.range_inclusive(1, 2))
                .map(|_| rng.range_inclusive(1, 8))
                .collect(),
            activation: acts[rng.below(4)],
        },
        cin: CinConfig {
            widths: cin_widths,
            activation: acts[rng.below(4)],
            rank,
        },
        cross_depth: rng.range_inclusive(1, 2),
        fm_weight_trainable: rng.below(4) != 0,
    };
    let mut model = Model {
        params: ModelParams::init(&spec, 0.5, rng)?,
        spec,
    };
    let flat: Vec<f64> = model
        .params
        .to_flat()
        .iter()
        .map(|_| rng.gaussian(0.5))
        .collect();
    model.params.set_flat(&flat)?;
    let instances = (0..6)
        .map(|_| Instance {
            label: rng.below(2) as u8,
            fields: (0..m)
                .map(|f| {
                    // ids of field f: its OOV id f, then m + f*vocab + v
                    let pick = |rng: &mut Rng| match rng.below(vocab + 1) {
                        0 => f,
                        v => m + f * vocab + v - 1,
                    };
                    let first = pick(rng);
                    if rng.below(4) == 0 {
                        let second = pick(rng);
                        vec![first, second]
                    } else {
                        vec![first]
                    }
                })
                .collect(),
        })
        .collect();
    let lambda = [0.0, 1e-3, 0.05][rng.below(3)];
    Ok((model, instances, lambda))
}

/// End-to-end gradient checks on `configs` random small models.
pub fn check_gradients(configs: usize, seed: u64, gradient: GradientFn) -> Result<(f64, Vec<GradientReport>)> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    let mut reports = Vec::with_capacity(configs);
    for _ in 0..configs {
        let (model, instances, lambda) = random_gradient_case(&mut rng)?;
        let batch: Vec<&Instance> = instances.iter().collect();
        let r = check_model_gradients(&model, &batch, lambda, gradient)?;
        worst = worst.max(r.worst_relative_error);
        reports.push(r);
    }
    Ok((worst, reports))
}

pub const VERIFY_CHECKS: [&str; 5] = ["collinearity", "polynomial", "params", "fm_reduction", "gradients"];

pub const GRADIENT_TOL: f64 = 1e-4;
pub const COLLINEARITY_TOL: f64 = 1e-10;
pub const POLYNOMIAL_TOL: f64 = 1e-8;
pub const FM_REDUCTION_TOL: f64 = 1e-10;

/// Runs one named check at its default size.
pub fn run_check(name: &str, seed: u64, gradient: GradientFn) -> Result<CheckReport> {
    match name {
        "collinearity" => {
            let mut worst = 0.0f64;
            let mut alpha = 0.0f64;
            let mut runs = Vec::new();
            for (wi, &width) in [4usize, 12, 40].iter().enumerate() {
                for depth in 1..=6 {
                    let r = check_crossnet_collinearity(
                        width,
                        depth,
                        100,
                        seed.wrapping_add((wi * 10 + depth) as u64),
                    )?;
                    worst = worst.max(r.max_deviation);
                    alpha = alpha.max(r.alpha1_error);
                    runs.push(json!({"width": width, "depth": depth, "max_deviation": r.max_deviation}));
                }
            }
            Ok(CheckReport {
                name: name.into(),
                passed: worst <= COLLINEARITY_TOL && alpha <= 1e-12,
                worst_deviation: worst,
                details: json!({"trials": 100, "alpha1_error": alpha, "runs": runs}),
            })
        }
        "polynomial" => {
            let r = check_polynomial(20, seed)?;
            let worst = r.worst_value_deviation.max(r.worst_coefficient_deviation);
            Ok(CheckReport {
                name: name.into(),
                passed: worst <= POLYNOMIAL_TOL && r.degree_violations == 0,
                worst_deviation: worst,
                details: serde_json::to_value(&r).expect("report serializes"),
            })
        }
        "params" => {
            let r = check_census(50, seed)?;
            Ok(CheckReport {
                name: name.into(),
                passed: r.mismatches == 0 && r.closed_form_mismatches == 0,
                worst_deviation: (r.mismatches + r.closed_form_mismatches) as f64,
                details: serde_json::to_value(&r).expect("report serializes"),
            })
        }
        "fm_reduction" => {
            let mut rng = Rng::new(seed);
            let mut worst = 0.0f64;
            for _ in 0..100 {
                let m = rng.range_inclusive(2, 8);
                let d = rng.range_inclusive(1, 8);
                let x0 = Mat::random_normal(m, d, 1.0, &mut rng);
                worst = worst.max(check_fm_reduction(&x0)?.deviation);
            }
            Ok(CheckReport {
                name: name.into(),
                passed: worst <= FM_REDUCTION_TOL,
                worst_deviation: worst,
                details: json!({"cases": 100}),
            })
        }
        "gradients" => {
            let (worst, reports) = check_gradients(20, seed, gradient)?;
            let mut by_group: BTreeMap<String, f64> = BTreeMap::new();
            for r in &reports {
                for g in &r.groups {
                    let e = by_group.entry(g.name.clone()).or_insert(0.0);
                    *e = e.max(g.worst_relative_error);
                }
            }
            Ok(CheckReport {
                name: name.into(),
                passed: worst <= GRADIENT_TOL,
                worst_deviation: worst,
                details: json!({"configs": reports.len(), "tolerance": GRADIENT_TOL, "groups": by_group}),
            })
        }
        other => Err(Error::Argument(format!(
            "unknown check `{other}` (expected one of {})",
            VERIFY_CHECKS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    #[test]
    fn hand_expansion_depth_one() {
        let w = Mat::from_rows(&[[2.0, 3.0], [5.0, 7.0]]);
        let p = expand_cin(&[vec![w]], 2).unwrap();
        let p = &p[0][0];
        assert_eq!(p.len(), 3);
        assert_eq!(p.coefficient(&[2, 0]), 2.0);
        assert_eq!(p.coefficient(&[1, 1]), 8.0);
        assert_eq!(p.coefficient(&[0, 2]), 7.0);
    }

    #[test]
    fn zero_filters_expand_to_nothing() {
        let p = expand_cin(&[vec![Mat::zeros(3, 3)], vec![Mat::zeros(1, 3)]], 3).unwrap();
        assert!(p.iter().flatten().all(MonomialPolynomial::is_empty));
    }

    #[test]
    fn symbolic_matches_numeric_depth_two() {
        let mut rng = Rng::new(5);
        let filters = random_filters(2, &[2, 2], &mut rng);
        let poly = expand_cin(&filters, 2).unwrap();
        let cin = CinState::from_filters(2, Activation::Identity, &filters).unwrap();
        let x0 = Mat::random_normal(2, 3, 1.0, &mut rng);
        let (_, hidden) = cin_forward(&x0, &cin).unwrap();
        for k in 0..2 {
            for h in 0..2 {
                let v = poly[k][h].evaluate(&x0).unwrap();
                for (a, b) in v.iter().zip(hidden[k].row(h)) {
                    assert!((a - b).abs() < 1e-8);
                }
                assert_eq!(poly[k][h].degrees(), vec![k as u32 + 2]);
            }
        }
    }

    #[test]
    fn arrangements_are_distinct() {
        assert_eq!(arrangements(&[2, 0]).len(), 1);
        assert_eq!(arrangements(&[1, 1]).len(), 2);
        assert_eq!(arrangements(&[2, 1, 1]).len(), 12);
    }

    #[test]
    fn multi_indices_count() {
        // C(n+m-1, m-1)
        assert_eq!(multi_indices(3, 2).len(), 6);
        assert_eq!(multi_indices(3, 4).len(), 15);
        assert!(multi_indices(2, 3).iter().all(|a| a.iter().sum::<u32>() == 3));
    }

    #[test]
    fn small_polynomial_check_passes() {
        let r = check_polynomial(2, 9).unwrap();
        assert!(r.worst_value_deviation < 1e-8);
        assert!(r.worst_coefficient_deviation < 1e-8);
        assert_eq!(r.degree_violations, 0);
    }

    #[test]
    fn capacity_guard() {
        let mut rng = Rng::new(1);
        let filters = random_filters(4, &[4; 3], &mut rng);
        assert!(expand_cin_with_limit(&filters, 4, 1000).is_ok());
        assert!(matches!(
            expand_cin_with_limit(&filters, 4, 50),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn collinear_depths() {
        let r = check_crossnet_collinearity(12, 6, 20, 3).unwrap();
        assert!(r.max_deviation <= 1e-10, "{}", r.max_deviation);
        assert!(r.alpha1_error <= 1e-12);
    }

    #[test]
    fn census_examples() {
        assert_eq!(cin_closed_form(3, &[2, 2]), 34);
        assert_eq!(dnn_closed_form(3, 4, &[2, 2]), 30);
        assert_eq!(cin_closed_form(3, &[]), 0);

        let mut spec = ModelSpec::preset(Preset::Cin, 3, 10);
        spec.cin.widths = vec![2, 2];
        let c = count_parameters(&spec);
        assert_eq!(c.cin_filters + c.cin_output, 34);

        let mut spec = ModelSpec::preset(Preset::Dnn, 3, 10);
        spec.embed_dim = 4;
        spec.dnn.widths = vec![2, 2];
        let c = count_parameters(&spec);
        assert_eq!(c.dnn, 30);
        assert_eq!(c.dnn_bias, 4);
        let params = ModelParams::init(&spec, 0.01, &mut Rng::new(0)).unwrap();
        assert_eq!(allocated_census(&params), c);
    }

    #[test]
    fn census_random_specs() {
        let r = check_census(30, 4).unwrap();
        assert_eq!(r.mismatches, 0);
        assert_eq!(r.closed_form_mismatches, 0);
    }

    #[test]
    fn fm_reduction_examples() {
        let r = check_fm_reduction(&Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]])).unwrap();
        assert_eq!(r.pooled, 52.0);
        assert_eq!(2.0 * r.pairwise + r.diagonal, 52.0);
        let r = check_fm_reduction(&Mat::zeros(3, 2)).unwrap();
        assert_eq!(r.pooled, 0.0);
        let eye = Mat::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(check_fm_reduction(&eye).unwrap().pooled, 3.0);
    }

    #[test]
    fn gradients_pass_on_a_few_configs() {
        let (worst, _) = check_gradients(4, 17, analytic_gradient).unwrap();
        assert!(worst <= GRADIENT_TOL, "{worst}");
    }

    #[test]
    fn unknown_check_rejected() {
        assert!(run_check("nope", 0, analytic_gradient).is_err());
    }
}
