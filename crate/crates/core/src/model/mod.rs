//! Scorers assembled from the components, the log loss, the L2-regularized
//! objective and checkpointing.
//!
//! The output unit is
//!
//! ```text
//! ŷ = σ( w_linᵀa + w_fm·FM(X⁰) + w_dnnᵀx_dnn + w_cinᵀp⁺ + w_crossᵀx_cross + b )
//! ```
//!
//! with each term present only when its part is enabled.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{
    fm_backward, fm_pairwise, linear_backward, linear_forward, CinCache, CinConfig,
    CinState, CrossCache, CrossNetState, Differentiable, DnnCache, DnnConfig, DnnState,
    Filters, LinearPart,
};
use crate::data::Instance;
use crate::embedding::{accumulate_backward, embed_forward, EmbeddingTable, DEFAULT_EMBED_DIM};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, sigmoid, Mat, Rng};

pub const PRED_CLAMP: f64 = 1e-12;
pub const DEFAULT_LAMBDA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Parts {
    pub linear: bool,
    pub fm: bool,
    pub dnn: bool,
    pub cin: bool,
    pub cross: bool,
}

impl Parts {
    pub fn any(&self) -> bool {
        self.linear || self.fm || self.dnn || self.cin || self.cross
    }

    pub fn uses_embeddings(&self) -> bool {
        self.fm || self.dnn || self.cin || self.cross
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Lr,
    Fm,
    Dnn,
    Cin,
    CrossNet,
    Dcn,
    DeepFm,
    XDeepFm,
}

impl Preset {
    pub fn parts(self) -> Parts {
        let p = Parts::default();
        match self {
            Preset::Lr => Parts { linear: true, ..p },
            Preset::Fm => Parts {
                linear: true,
                fm: true,
                ..p
            },
            Preset::Dnn => Parts { dnn: true, ..p },
            Preset::Cin => Parts { cin: true, ..p },
            Preset::CrossNet => Parts { cross: true, ..p },
            Preset::Dcn => Parts {
                cross: true,
                dnn: true,
                ..p
            },
            Preset::DeepFm => Parts {
                linear: true,
                fm: true,
                dnn: true,
                ..p
            },
            Preset::XDeepFm => Parts {
                linear: true,
                cin: true,
                dnn: true,
                ..p
            },
        }
    }

    pub const ALL: [Preset; 8] = [
        Preset::Lr,
        Preset::Fm,
        Preset::Dnn,
        Preset::Cin,
        Preset::CrossNet,
        Preset::Dcn,
        Preset::DeepFm,
        Preset::XDeepFm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Lr => "lr",
            Preset::Fm => "fm",
            Preset::Dnn => "dnn",
            Preset::Cin => "cin",
            Preset::CrossNet => "crossnet",
            Preset::Dcn => "dcn",
            Preset::DeepFm => "deepfm",
            Preset::XDeepFm => "xdeepfm",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown model preset `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub parts: Parts,
    pub num_fields: usize,
    pub num_features: usize,
    pub embed_dim: usize,
    pub dnn: DnnConfig,
    pub cin: CinConfig,
    pub cross_depth: usize,
    /// When false the FM term is wired to the output with weight 1.
    pub fm_weight_trainable: bool,
}

impl ModelSpec {
    pub fn preset(preset: Preset, num_fields: usize, num_features: usize) -> Self {
        ModelSpec {
            parts: preset.parts(),
            num_fields,
            num_features,
            embed_dim: DEFAULT_EMBED_DIM,
            dnn: DnnConfig::default(),
            cin: CinConfig::default(),
            cross_depth: 3,
            fm_weight_trainable: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.parts.any() {
            return Err(Error::Config("a model needs at least one enabled part".into()));
        }
        if self.num_fields < 2 {
            return Err(Error::Config("a model needs at least 2 fields".into()));
        }
        if self.parts.uses_embeddings() && self.embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if self.parts.dnn {
            self.dnn.validate()?;
        }
        if self.parts.cin {
            if self.cin.widths.is_empty() {
                return Err(Error::Config("CIN needs at least one layer".into()));
            }
            self.cin.validate(self.num_fields)?;
        }
        Ok(())
    }

    /// `m·D`, the width the DNN and cross network consume.
    pub fn flat_width(&self) -> usize {
        self.num_fields * self.embed_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmWeight {
    pub value: f64,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embedding: EmbeddingTable,
    pub linear: LinearPart,
    pub dnn: Option<DnnState>,
    pub cin: Option<CinState>,
    pub cross: Option<CrossNetState>,
    pub fm: Option<FmWeight>,
    pub bias: f64,
}

/// A named slice of parameters, in the fixed order used by checkpoints,
/// the optimizer and flat views.
#[derive(Debug)]
pub struct ParamGroup<'a> {
    pub name: String,
    pub values: &'a [f64],
    pub regularized: bool,
    pub trainable: bool,
}

#[derive(Debug)]
pub struct ParamGroupMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub regularized: bool,
    pub trainable: bool,
}

fn group<'a>(name: String, values: &'a [f64], regularized: bool, trainable: bool) -> ParamGroup<'a> {
    ParamGroup {
        name,
        values,
        regularized,
        trainable,
    }
}

fn group_mut<'a>(
    name: String,
    values: &'a mut [f64],
    regularized: bool,
    trainable: bool,
) -> ParamGroupMut<'a> {
    ParamGroupMut {
        name,
        values,
        regularized,
        trainable,
    }
}

impl ModelParams {
    /// Gaussian(0, `init_std`) weights, zero biases, FM weight 1.
    pub fn init(spec: &ModelSpec, init_std: f64, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let parts = spec.parts;
        let embedding = if parts.uses_embeddings() {
            EmbeddingTable::random(spec.num_features, spec.embed_dim, init_std, rng)
        } else {
            EmbeddingTable::zeros(0, spec.embed_dim)
        };
        let linear = if parts.linear {
            LinearPart {
                weights: rng.normal_vec(spec.num_features, init_std),
            }
        } else {
            LinearPart::zeros(0)
        };
        let dnn = parts
            .dnn
            .then(|| DnnState::new(spec.flat_width(), &spec.dnn, init_std, rng))
            .transpose()?;
        let cin = parts
            .cin
            .then(|| CinState::new(spec.num_fields, &spec.cin, init_std, rng))
            .transpose()?;
        let cross = parts
            .cross
            .then(|| CrossNetState::new(spec.flat_width(), spec.cross_depth, init_std, rng));
        let fm = parts.fm.then_some(FmWeight {
            value: 1.0,
            trainable: spec.fm_weight_trainable,
        });
        Ok(ModelParams {
            embedding,
            linear,
            dnn,
            cin,
            cross,
            fm,
            bias: 0.0,
        })
    }

    pub fn groups(&self) -> Vec<ParamGroup<'_>> {
        let mut out = vec![
            group("embedding".into(), self.embedding.table.as_slice(), false, true),
            group("linear".into(), &self.linear.weights, true, true),
        ];
        if let Some(dnn) = &self.dnn {
            for (k, l) in dnn.layers.iter().enumerate() {
                out.push(group(format!("dnn.{k}.weight"), l.weight.as_slice(), true, true));
                out.push(group(format!("dnn.{k}.bias"), &l.bias, false, true));
            }
            out.push(group("dnn.output".into(), &dnn.output, true, true));
        }
        if let Some(cin) = &self.cin {
            for (k, l) in cin.layers.iter().enumerate() {
                match &l.filters {
                    Filters::Full { w } => {
                        out.push(group(format!("cin.{k}.filters"), w, true, true));
                    }
                    Filters::LowRank { u, v, .. } => {
                        out.push(group(format!("cin.{k}.u"), u, true, true));
                        out.push(group(format!("cin.{k}.v"), v, true, true));
                    }
                }
            }
            out.push(group("cin.output".into(), &cin.output, true, true));
        }
        if let Some(cross) = &self.cross {
            for (k, l) in cross.layers.iter().enumerate() {
                out.push(group(format!("cross.{k}.weight"), &l.weight, true, true));
                out.push(group(format!("cross.{k}.bias"), &l.bias, false, true));
            }
            out.push(group("cross.output".into(), &cross.output, true, true));
        }
        if let Some(fm) = &self.fm {
            let t = fm.trainable;
            out.push(group("fm_weight".into(), std::slice::from_ref(&fm.value), t, t));
        }
        out.push(group("bias".into(), std::slice::from_ref(&self.bias), false, true));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<ParamGroupMut<'_>> {
        let mut out = vec![
            group_mut("embedding".into(), self.embedding.table.as_mut_slice(), false, true),
            group_mut("linear".into(), &mut self.linear.weights, true, true),
        ];
        if let Some(dnn) = &mut self.dnn {
            for (k, l) in dnn.layers.iter_mut().enumerate() {
                out.push(group_mut(format!("dnn.{k}.weight"), l.weight.as_mut_slice(), true, true));
                out.push(group_mut(format!("dnn.{k}.bias"), &mut l.bias, false, true));
            }
            out.push(group_mut("dnn.output".into(), &mut dnn.output, true, true));
        }
        if let Some(cin) = &mut self.cin {
            for (k, l) in cin.layers.iter_mut().enumerate() {
                match &mut l.filters {
                    Filters::Full { w } => {
                        out.push(group_mut(format!("cin.{k}.filters"), w, true, true));
                    }
                    Filters::LowRank { u, v, .. } => {
                        out.push(group_mut(format!("cin.{k}.u"), u, true, true));
                        out.push(group_mut(format!("cin.{k}.v"), v, true, true));
                    }
                }
            }
            out.push(group_mut("cin.output".into(), &mut cin.output, true, true));
        }
        if let Some(cross) = &mut self.cross {
            for (k, l) in cross.layers.iter_mut().enumerate() {
                out.push(group_mut(format!("cross.{k}.weight"), &mut l.weight, true, true));
                out.push(group_mut(format!("cross.{k}.bias"), &mut l.bias, false, true));
            }
            out.push(group_mut("cross.output".into(), &mut cross.output, true, true));
        }
        if let Some(fm) = &mut self.fm {
            let t = fm.trainable;
            out.push(group_mut("fm_weight".into(), std::slice::from_mut(&mut fm.value), t, t));
        }
        out.push(group_mut("bias".into(), std::slice::from_mut(&mut self.bias), false, true));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.groups().iter().map(|g| g.values.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.groups()
            .iter()
            .flat_map(|g| g.values.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.num_parameters();
        if flat.len() != total {
            return Err(Error::dim(format!(
                "{} values for {total} parameters",
                flat.len()
            )));
        }
        let mut at = 0;
        for g in self.groups_mut() {
            let n = g.values.len();
            g.values.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Copy with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for g in z.groups_mut() {
            g.values.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// `Ω(Θ)`: squared L2 norm over the regularized groups (everything except
    /// embeddings, biases and a frozen FM weight).
    pub fn regularizer(&self) -> f64 {
        self.groups()
            .iter()
            .filter(|g| g.regularized)
            .map(|g| dot(g.values, g.values))
            .sum()
    }
}

/// Parameter gradients. Embedding and linear rows are sparse; the rest mirror
/// the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub linear: BTreeMap<usize, f64>,
    pub dnn: Option<DnnState>,
    pub cin: Option<CinState>,
    pub cross: Option<CrossNetState>,
    pub fm_weight: f64,
    pub bias: f64,
}

impl Gradients {
    pub fn zeros(params: &ModelParams) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            linear: BTreeMap::new(),
            dnn: params.dnn.as_ref().map(DnnState::zeros_like),
            cin: params.cin.as_ref().map(CinState::zeros_like),
            cross: params.cross.as_ref().map(CrossNetState::zeros_like),
            fm_weight: 0.0,
            bias: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (id, g) in &other.embedding {
            match self.embedding.get_mut(id) {
                Some(slot) => axpy(1.0, g, slot),
                None => {
                    self.embedding.insert(*id, g.clone());
                }
            }
        }
        for (id, g) in &other.linear {
            *self.linear.entry(*id).or_insert(0.0) += g;
        }
        if let (Some(a), Some(b)) = (&mut self.dnn, &other.dnn) {
            a.add_assign(b);
        }
        if let (Some(a), Some(b)) = (&mut self.cin, &other.cin) {
            a.add_assign(b);
        }
        if let (Some(a), Some(b)) = (&mut self.cross, &other.cross) {
            a.add_assign(b);
        }
        self.fm_weight += other.fm_weight;
        self.bias += other.bias;
    }

    /// Dense gradient laid out like `params`.
    pub fn to_dense(&self, params: &ModelParams) -> ModelParams {
        let mut dense = params.zeros_like();
        for (&id, g) in &self.embedding {
            dense.embedding.table.row_mut(id).copy_from_slice(g);
        }
        for (&id, &g) in &self.linear {
            dense.linear.weights[id] = g;
        }
        if let Some(d) = &self.dnn {
            dense.dnn = Some(d.clone());
        }
        if let Some(c) = &self.cin {
            dense.cin = Some(c.clone());
        }
        if let Some(c) = &self.cross {
            dense.cross = Some(c.clone());
        }
        if let Some(fm) = &mut dense.fm {
            fm.value = self.fm_weight;
        }
        dense.bias = self.bias;
        dense
    }
}

/// Activations one forward pass keeps for its backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x0: Option<Mat>,
    fm: f64,
    dnn: Option<(Vec<f64>, DnnCache)>,
    cin: Option<(Vec<f64>, CinCache)>,
    cross: Option<(Vec<f64>, CrossCache)>,
    pub logit: f64,
    pub prediction: f64,
}

impl ForwardCache {
    /// CIN pooled output `p⁺`, when CIN is enabled.
    pub fn pooled(&self) -> Option<&[f64]> {
        self.cin.as_ref().map(|(p, _)| p.as_slice())
    }

    pub fn dnn_cache(&self) -> Option<&DnnCache> {
        self.dnn.as_ref().map(|(_, c)| c)
    }

    pub fn cin_cache(&self) -> Option<&CinCache> {
        self.cin.as_ref().map(|(_, c)| c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ModelParams,
}

impl Model {
    pub fn init(spec: ModelSpec, init_std: f64, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&spec, init_std, &mut Rng::new(seed))?;
        Ok(Model { spec, params })
    }

    pub fn forward_cached(&self, instance: &Instance) -> Result<ForwardCache> {
        forward_cached(instance, &self.params, &self.spec)
    }
    pub fn predict(&self, instance: &Instance) -> Result<f64> {
        Ok(self.forward_cached(instance)?.prediction)
    }

    /// Predictions in input order, scored in parallel.
    pub fn predict_all(&self, instances: &[Instance]) -> Result<Vec<f64>> {
        instances.par_iter().map(|i| self.predict(i)).collect()
    }

    /// Gradients of `upstream · logit`, accumulated into `into`.
    pub fn backward_into(
        &self,
        instance: &Instance,
        cache: &ForwardCache,
        upstream: f64,
        into: &mut Gradients,
    ) -> Result<()> {
        let p = &self.params;
        into.bias += upstream;
        if self.spec.parts.linear {
            linear_backward(instance, upstream, &mut into.linear);
        }
        let Some(x0) = &cache.x0 else {
            return Ok(());
        };
        let (m, d) = x0.shape();
        let mut g_x0 = Mat::zeros(m, d);
        if let Some(fm) = &p.fm {
            if fm.trainable {
                into.fm_weight += upstream * cache.fm;
            }
            axpy(1.0, fm_backward(x0, upstream * fm.value).as_slice(), g_x0.as_mut_slice());
        }
        if let (Some(dnn), Some((h, c))) = (&p.dnn, &cache.dnn) {
            let up: Vec<f64> = dnn.output.iter().map(|w| w * upstream).collect();
            let (mut g, g_in) = dnn.backward(c, &up)?;
            g.output = h.iter().map(|v| v * upstream).collect();
            into.dnn.get_or_insert_with(|| dnn.zeros_like()).add_assign(&g);
            axpy(1.0, &g_in, g_x0.as_mut_slice());
        }
        if let (Some(cin), Some((pooled, c))) = (&p.cin, &cache.cin) {
            let up: Vec<f64> = cin.output.iter().map(|w| w * upstream).collect();
            let (mut g, g_in) = cin.backward(c, &up)?;
            g.output = pooled.iter().map(|v| v * upstream).collect();
            into.cin.get_or_insert_with(|| cin.zeros_like()).add_assign(&g);
            axpy(1.0, g_in.as_slice(), g_x0.as_mut_slice());
        }
        if let (Some(cross), Some((out, c))) = (&p.cross, &cache.cross) {
            let up: Vec<f64> = cross.output.iter().map(|w| w * upstream).collect();
            let (mut g, g_in) = cross.backward(c, &up)?;
            g.output = out.iter().map(|v| v * upstream).collect();
            into.cross.get_or_insert_with(|| cross.zeros_like()).add_assign(&g);
            axpy(1.0, &g_in, g_x0.as_mut_slice());
        }
        accumulate_backward(instance, &g_x0, &mut into.embedding)
    }

    /// Sum of per-instance log losses and the gradient of that sum.
    pub fn loss_and_gradients(&self, instances: &[&Instance]) -> Result<(f64, Gradients)> {
        const CHUNK: usize = 64;
        let partials: Vec<(f64, Gradients)> = instances
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grads = Gradients::zeros(&self.params);
                let mut loss = 0.0;
                for inst in chunk {
                    let cache = self.forward_cached(inst)?;
                    let y = f64::from(inst.label);
                    loss += logit_logloss(cache.logit, y);
                    // the clamped loss is flat past the bound
                    let upstream = if cache.logit.abs() < logit_bound() {
                        cache.prediction - y
                    } else {
                        0.0
                    };
                    self.backward_into(inst, &cache, upstream, &mut grads)?;
                }
                Ok((loss, grads))
            })
            .collect::<Result<_>>()?;
        let mut total = Gradients::zeros(&self.params);
        let mut loss = 0.0;
        for (l, g) in &partials {
            loss += l;
            total.add_assign(g);
        }
        Ok((loss, total))
    }

    /// `J = mean log loss over `instances` + reg_weight·Ω` and its dense
    /// gradient. Frozen groups get zero gradient.
    pub fn objective_and_gradient(
        &self,
        instances: &[&Instance],
        reg_weight: f64,
    ) -> Result<(f64, ModelParams)> {
        let (loss, grad) = self.loss_and_dense_gradient(instances, reg_weight)?;
        Ok((loss + reg_weight * self.params.regularizer(), grad))
    }

    /// Mean log loss over `instances` (without the penalty) and the dense
    /// gradient of `mean loss + reg_weight·Ω`.
    pub fn loss_and_dense_gradient(
        &self,
        instances: &[&Instance],
        reg_weight: f64,
    ) -> Result<(f64, ModelParams)> {
        if instances.is_empty() {
            return Err(Error::Argument("objective over an empty batch".into()));
        }
        let n = instances.len() as f64;
        let (loss_sum, grads) = self.loss_and_gradients(instances)?;
        let mut dense = grads.to_dense(&self.params);
        for (g, p) in dense.groups_mut().into_iter().zip(self.params.groups()) {
            for (gv, pv) in g.values.iter_mut().zip(p.values) {
                *gv /= n;
                if p.regularized && reg_weight != 0.0 {
                    *gv += 2.0 * reg_weight * pv;
                }
            }
            if !p.trainable {
                g.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok((loss_sum / n, dense))
    }

    /// Objective value only; the function the gradient checks difference.
    pub fn objective_value(&self, instances: &[&Instance], reg_weight: f64) -> Result<f64> {
        if instances.is_empty() {
            return Err(Error::Argument("objective over an empty batch".into()));
        }
        let mut loss = 0.0;
        for inst in instances {
            loss += logit_logloss(self.forward_cached(inst)?.logit, f64::from(inst.label));
        }
        Ok(loss / instances.len() as f64 + reg_weight * self.params.regularizer())
    }
}

fn instance_logloss(pred: f64, y: f64) -> f64 {
    let p = pred.clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// The logit at which `σ(z)` reaches the prediction clamp.
fn logit_bound() -> f64 {
    ((1.0 - PRED_CLAMP) / PRED_CLAMP).ln()
}

/// Log loss of `σ(z)` computed from the logit. Going through the probability
/// loses digits in `1 − p` once the logit is large, and that noise is enough
/// to spoil finite-difference checks. The logit is clamped to the range that
/// corresponds to the probability clamp.
pub(crate) fn logit_logloss(z: f64, y: f64) -> f64 {
    let bound = logit_bound();
    let z = z.clamp(-bound, bound);
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    softplus - y * z
}

/// `ŷ` for one instance.
pub fn forward(instance: &Instance, params: &ModelParams, spec: &ModelSpec) -> Result<f64> {
    Ok(forward_cached(instance, params, spec)?.prediction)
}

fn forward_cached(instance: &Instance, p: &ModelParams, spec: &ModelSpec) -> Result<ForwardCache> {
    let parts = spec.parts;
    if instance.fields.len() != spec.num_fields {
        return Err(Error::dim(format!(
            "instance has {} fields, model expects {}",
            instance.fields.len(),
            spec.num_fields
        )));
    }
        let mut logit = p.bias;
        if parts.linear {
            logit += linear_forward(instance, &p.linear)?;
        }
        let x0 = if parts.uses_embeddings() {
            Some(embed_forward(instance, &p.embedding)?)
        } else {
            None
        };
        let mut cache = ForwardCache {
            x0: None,
            fm: 0.0,
            dnn: None,
            cin: None,
            cross: None,
            logit: 0.0,
            prediction: 0.0,
        };
        if let Some(x0) = &x0 {
            if let Some(fm) = &p.fm {
                cache.fm = fm_pairwise(x0);
                logit += fm.value * cache.fm;
            }
            if let Some(dnn) = &p.dnn {
                let (h, c) = dnn.forward_cached(&x0.as_slice().to_vec())?;
                logit += dot(&dnn.output, &h);
                cache.dnn = Some((h, c));
            }
            if let Some(cin) = &p.cin {
                let (pooled, c) = cin.forward_cached(x0)?;
                logit += dot(&cin.output, &pooled);
                cache.cin = Some((pooled, c));
            }
            if let Some(cross) = &p.cross {
                let (out, c) = cross.forward_cached(&x0.as_slice().to_vec())?;
                logit += dot(&cross.output, &out);
                cache.cross = Some((out, c));
            }
        }
        cache.x0 = x0;
        cache.logit = logit;
        cache.prediction = sigmoid(logit);
        Ok(cache)
    }

/// Mean binary cross-entropy with predictions clamped to
/// `[1e-12, 1 − 1e-12]`.
pub fn logloss(preds: &[f64], labels: &[u8]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Argument("log loss of an empty list".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| instance_logloss(p, f64::from(y)))
        .sum();
    Ok(total / preds.len() as f64)
}

/// `J = L + λ·Ω(Θ)`.
pub fn objective(loss: f64, params: &ModelParams, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be non-negative, got {lambda}")));
    }
    Ok(loss + lambda * params.regularizer())
}

#[cfg(test)]
mod tests;
