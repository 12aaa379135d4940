//! Multi-field categorical data: schema, CSV parsing, splitting, synthetic
//! generation and mini-batching.
//!
//! Every field owns a contiguous block of global feature ids. The first `m`
//! ids are reserved, one per field, for out-of-vocabulary values; the token
//! [`OOV_TOKEN`] always maps to its field's reserved id.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvConfig;
use crate::numerics::{sigmoid, Rng};

pub const OOV_TOKEN: &str = "__oov__";
pub const MULTI_SEPARATOR: char = '|';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arity {
    Univalent,
    Multivalent,
}

impl std::str::FromStr for Arity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uni" | "univalent" => Ok(Arity::Univalent),
            "multi" | "multivalent" => Ok(Arity::Multivalent),
            other => Err(format!("unknown arity `{other}` (expected uni or multi)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDecl {
    pub name: String,
    pub arity: Arity,
}

/// Field declarations read from a schema config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub fields: Vec<FieldDecl>,
    pub label_column: String,
}

impl SchemaConfig {
    /// Reads `field.<n>.name`, `field.<n>.arity` and `label_column`. Fields
    /// are ordered by `n`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut by_index: BTreeMap<u32, (Option<String>, Option<Arity>)> = BTreeMap::new();
        for key in kv.keys() {
            let Some(rest) = key.strip_prefix("field.") else {
                if key != "label_column" {
                    return Err(Error::Config(format!("unknown schema key `{key}`")));
                }
                continue;
            };
            let (n, attr) = rest
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("malformed schema key `{key}`")))?;
            let n: u32 = n
                .parse()
                .map_err(|_| Error::Config(format!("malformed field index in `{key}`")))?;
            let slot = by_index.entry(n).or_default();
            match attr {
                "name" => slot.0 = Some(kv.require(key)?),
                "arity" => slot.1 = Some(kv.require(key)?),
                _ => return Err(Error::Config(format!("unknown schema key `{key}`"))),
            }
        }
        let fields = by_index
            .into_iter()
            .map(|(n, (name, arity))| {
                Ok(FieldDecl {
                    name: name.ok_or_else(|| Error::Config(format!("field.{n}.name missing")))?,
                    arity: arity.unwrap_or(Arity::Univalent),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = SchemaConfig {
            fields,
            label_column: kv.get("label_column").unwrap_or("label").to_string(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.len() < 2 {
            return Err(Error::Config(format!(
                "at least 2 fields are required, got {}",
                self.fields.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.fields {
            if f.name == self.label_column {
                return Err(Error::Config(format!(
                    "field `{}` collides with the label column",
                    f.name
                )));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Config(format!("duplicate field `{}`", f.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub arity: Arity,
    pub oov_id: usize,
    pub vocab: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    fields: Vec<Field>,
    label_column: String,
    /// Field index of every feature id.
    feature_field: Vec<usize>,
    /// Raw string of every feature id; OOV ids carry [`OOV_TOKEN`].
    feature_names: Vec<String>,
}

impl Schema {
    /// A schema with no vocabulary beyond the reserved OOV ids.
    pub fn new(config: &SchemaConfig) -> Result<Self> {
        config.validate()?;
        let m = config.fields.len();
        Ok(Schema {
            fields: config
                .fields
                .iter()
                .enumerate()
                .map(|(i, d)| Field {
                    name: d.name.clone(),
                    arity: d.arity,
                    oov_id: i,
                    vocab: BTreeMap::new(),
                })
                .collect(),
            label_column: config.label_column.clone(),
            feature_field: (0..m).collect(),
            feature_names: vec![OOV_TOKEN.to_string(); m],
        })
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn config(&self) -> SchemaConfig {
        SchemaConfig {
            fields: self
                .fields
                .iter()
                .map(|f| FieldDecl {
                    name: f.name.clone(),
                    arity: f.arity,
                })
                .collect(),
            label_column: self.label_column.clone(),
        }
    }

    pub fn feature_name(&self, id: usize) -> Option<&str> {
        self.feature_names.get(id).map(String::as_str)
    }

    pub fn field_of(&self, id: usize) -> Option<usize> {
        self.feature_field.get(id).copied()
    }

    /// Id of `value` in `field`, registering it when absent.
    pub fn intern(&mut self, field: usize, value: &str) -> usize {
        if value == OOV_TOKEN {
            return self.fields[field].oov_id;
        }
        if let Some(&id) = self.fields[field].vocab.get(value) {
            return id;
        }
        let id = self.feature_names.len();
        self.fields[field].vocab.insert(value.to_string(), id);
        self.feature_field.push(field);
        self.feature_names.push(value.to_string());
        id
    }

    /// Id of `value` in `field`, or the field's OOV id.
    pub fn lookup(&self, field: usize, value: &str) -> usize {
        let f = &self.fields[field];
        f.vocab.get(value).copied().unwrap_or(f.oov_id)
    }

    pub fn check_instance(&self, inst: &Instance) -> Result<()> {
        if inst.fields.len() != self.num_fields() {
            return Err(Error::dim(format!(
                "instance has {} fields, schema has {}",
                inst.fields.len(),
                self.num_fields()
            )));
        }
        for (i, (ids, field)) in inst.fields.iter().zip(&self.fields).enumerate() {
            if field.arity == Arity::Univalent && ids.len() != 1 {
                return Err(Error::dim(format!(
                    "univalent field `{}` has {} active features",
                    field.name,
                    ids.len()
                )));
            }
            for &id in ids {
                if self.feature_field.get(id) != Some(&i) {
                    return Err(Error::Lookup(format!(
                        "feature id {id} does not belong to field `{}`",
                        field.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub label: u8,
    /// Active feature ids per field.
    pub fields: Vec<Vec<usize>>,
}

impl Instance {
    pub fn univalent(label: u8, ids: &[usize]) -> Self {
        Instance {
            label,
            fields: ids.iter().map(|&id| vec![id]).collect(),
        }
    }

    pub fn active_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.fields.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Arc<Schema>,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(schema: Arc<Schema>, instances: Vec<Instance>) -> Self {
        Dataset { schema, instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.instances.iter().filter(|i| i.label == 1).count()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: Arc::clone(&self.schema),
            instances: idx.iter().map(|&i| self.instances[i].clone()).collect(),
        }
    }

    /// Writes the dataset in the CSV layout [`parse_dataset`] reads.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Argument(format!("csv write: {e}"));
        let mut header = vec![self.schema.label_column.clone()];
        header.extend(self.schema.fields.iter().map(|f| f.name.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for inst in &self.instances {
            let mut rec = vec![inst.label.to_string()];
            for ids in &inst.fields {
                let names: Vec<&str> = ids
                    .iter()
                    .map(|&id| self.schema.feature_name(id).unwrap_or(OOV_TOKEN))
                    .collect();
                rec.push(names.join(&MULTI_SEPARATOR.to_string()));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::Argument(format!("csv flush: {e}")))?;
        Ok(())
    }
}

enum Vocab<'a> {
    Build(&'a mut Schema),
    Frozen(&'a Schema),
}

impl Vocab<'_> {
    fn schema(&self) -> &Schema {
        match self {
            Vocab::Build(s) => s,
            Vocab::Frozen(s) => s,
        }
    }

    fn id(&mut self, field: usize, value: &str) -> usize {
        match self {
            Vocab::Build(s) => s.intern(field, value),
            Vocab::Frozen(s) => s.lookup(field, value),
        }
    }
}

/// Parses a training file, building the vocabulary in first-seen order.
pub fn parse_dataset<R: Read>(source: R, config: &SchemaConfig) -> Result<Dataset> {
    let mut schema = Schema::new(config)?;
    let instances = parse_rows(source, Vocab::Build(&mut schema))?;
    Ok(Dataset::new(Arc::new(schema), instances))
}

/// Parses an evaluation file against an existing vocabulary; unseen values
/// map to the field's OOV id.
pub fn parse_with_schema<R: Read>(source: R, schema: Arc<Schema>) -> Result<Dataset> {
    let instances = parse_rows(source, Vocab::Frozen(&schema))?;
    Ok(Dataset::new(schema, instances))
}

fn parse_rows<R: Read>(source: R, mut vocab: Vocab<'_>) -> Result<Vec<Instance>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();

    let schema = vocab.schema();
    let column_of = |name: &str| header.iter().position(|h| h.trim() == name);
    let label_col = column_of(&schema.label_column).ok_or_else(|| {
        Error::Config(format!(
            "label column `{}` not found in header",
            schema.label_column
        ))
    })?;
    let mut field_cols = Vec::with_capacity(schema.num_fields());
    for f in &schema.fields {
        field_cols.push(column_of(&f.name).ok_or_else(|| {
            Error::Config(format!("field `{}` not found in header", f.name))
        })?);
    }
    for h in header.iter() {
        let h = h.trim();
        if h != schema.label_column && !schema.fields.iter().any(|f| f.name == h) {
            return Err(Error::Config(format!(
                "column `{h}` is not declared in the schema config"
            )));
        }
    }
    let arities: Vec<Arity> = schema.fields.iter().map(|f| f.arity).collect();
    let names: Vec<String> = schema.fields.iter().map(|f| f.name.clone()).collect();
    let width = header.len();

    let mut instances = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let perr = |message: String| Error::Parse { line, message };
        if record.len() != width {
            return Err(perr(format!(
                "expected {width} columns, found {}",
                record.len()
            )));
        }
        let label = match record[label_col].trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(perr(format!("label must be 0 or 1, got `{other}`"))),
        };
        let mut fields = Vec::with_capacity(field_cols.len());
        for (fi, &col) in field_cols.iter().enumerate() {
            let cell = record[col].trim();
            let ids = match arities[fi] {
                Arity::Univalent => {
                    if cell.is_empty() || cell.contains(MULTI_SEPARATOR) {
                        return Err(perr(format!(
                            "univalent field `{}` needs exactly one value, got `{cell}`",
                            names[fi]
                        )));
                    }
                    vec![vocab.id(fi, cell)]
                }
                Arity::Multivalent => cell
                    .split(MULTI_SEPARATOR)
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| vocab.id(fi, t))
                    .collect(),
            };
            fields.push(ids);
        }
        instances.push(Instance { label, fields });
    }
    Ok(instances)
}

/// Random partition into train/valid/test.
///
/// Valid and test receive `⌊N·r⌋` instances; the remainder goes to train.
pub fn split(
    dataset: &Dataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Split(format!("ratios must be non-negative: {ratios:?}")));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("ratios must sum to 1: {ratios:?}")));
    }
    let n = dataset.len();
    if n < 3 && rt > 0.0 && rv > 0.0 && rs > 0.0 {
        return Err(Error::Split(format!(
            "cannot split {n} instances three ways"
        )));
    }
    let count = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let (n_valid, n_test) = (count(rv), count(rs));
    let n_train = n - n_valid - n_test;

    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    let (train, rest) = idx.split_at(n_train);
    let (valid, test) = rest.split_at(n_valid);
    Ok((
        dataset.subset(train),
        dataset.subset(valid),
        dataset.subset(test),
    ))
}

/// Instance order for one epoch, chunked into batches.
pub fn batch_indices(n: usize, batch_size: usize, shuffle: Option<&mut Rng>) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Argument("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(rng) = shuffle {
        rng.shuffle(&mut order);
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// One epoch of mini-batches over `dataset`.
pub fn batches(
    dataset: &Dataset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
) -> Result<impl Iterator<Item = Vec<&Instance>> + '_> {
    let mut rng = Rng::new(seed);
    let order = batch_indices(dataset.len(), batch_size, shuffle.then_some(&mut rng))?;
    Ok(order
        .into_iter()
        .map(move |b| b.into_iter().map(|i| &dataset.instances[i]).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// `y ~ Bernoulli(sigmoid(z))`
    #[default]
    Bernoulli,
    /// `y = [z > 0]`
    Threshold,
}

impl std::str::FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bernoulli" => Ok(LabelMode::Bernoulli),
            "threshold" => Ok(LabelMode::Threshold),
            other => Err(format!("unknown label mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub fields: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub fields: usize,
    pub vocab_per_field: usize,
    pub latent_dim: usize,
    pub terms: Vec<InteractionTerm>,
    pub noise_std: f64,
    pub n_instances: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_mode: LabelMode,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.fields < 2 {
            return Err(Error::Config("synthetic data needs at least 2 fields".into()));
        }
        if self.vocab_per_field == 0 || self.latent_dim == 0 {
            return Err(Error::Config(
                "vocab_per_field and latent_dim must be positive".into(),
            ));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        for t in &self.terms {
            if !(2..=3).contains(&t.fields.len()) {
                return Err(Error::Config(format!(
                    "interaction terms must have order 2 or 3, got {:?}",
                    t.fields
                )));
            }
            let mut sorted = t.fields.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != t.fields.len() || sorted.iter().any(|&f| f >= self.fields) {
                return Err(Error::Config(format!(
                    "term {:?} must name distinct fields below {}",
                    t.fields, self.fields
                )));
            }
        }
        Ok(())
    }

    /// Reads `fields`, `vocab_per_field`, `latent_dim`, `terms`, `noise_std`,
    /// `n_instances`, `seed` and `label_mode`. Terms are written
    /// `0+1+2:2.5; 1+3:-1.0`.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let terms = kv
            .get("terms")
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|t| {
                let (fs, w) = t
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("term `{t}` lacks `:weight`")))?;
                let fields = fs
                    .split('+')
                    .map(|f| {
                        f.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Config(format!("term `{t}`: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let weight = w
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("term `{t}`: {e}")))?;
                Ok(InteractionTerm { fields, weight })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = SyntheticSpec {
            fields: kv.require("fields")?,
            vocab_per_field: kv.require("vocab_per_field")?,
            latent_dim: kv.parsed_or("latent_dim", 4)?,
            terms,
            noise_std: kv.parsed_or("noise_std", 0.0)?,
            n_instances: kv.require("n_instances")?,
            seed: kv.parsed_or("seed", 0)?,
            label_mode: kv.parsed_or("label_mode", LabelMode::Bernoulli)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything needed to recompute each generated label's Bernoulli parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub spec: SyntheticSpec,
    /// `latents[field][value]` is that feature's latent vector.
    pub latents: Vec<Vec<Vec<f64>>>,
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub values: Vec<usize>,
    pub noise: f64,
    pub score: f64,
    pub probability: f64,
    pub label: u8,
}

impl SyntheticManifest {
    /// The noise-free interaction score of one row of field values.
    pub fn clean_score(&self, values: &[usize]) -> f64 {
        interaction_score(&self.spec, &self.latents, values)
    }

    pub fn recompute_probability(&self, row: &ManifestRow) -> f64 {
        sigmoid(self.clean_score(&row.values) + row.noise)
    }
}

fn interaction_score(spec: &SyntheticSpec, latents: &[Vec<Vec<f64>>], values: &[usize]) -> f64 {
    let scale = (spec.latent_dim as f64).sqrt();
    spec.terms
        .iter()
        .map(|t| {
            let inner: f64 = (0..spec.latent_dim)
                .map(|d| t.fields.iter().map(|&f| latents[f][values[f]][d]).product::<f64>())
                .sum();
            t.weight * inner / scale
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub manifest: SyntheticManifest,
}

/// Generates a univalent dataset with planted interactions.
///
/// Recipe, in draw order from `Rng::new(seed)`:
/// 1. Latent vectors: for each field `f`, each value `v`, each `d`, one
///    standard normal `u[f][v][d]`.
/// 2. For each instance: one value per field, `v_f = below(vocab_per_field)`;
///    then, when `noise_std > 0`, one normal `ε·noise_std`; then, in
///    Bernoulli mode, one uniform `r`.
/// 3. `z = Σ_terms weight · (Σ_d Π_{f∈term} u[f][v_f][d]) / √latent_dim + ε`,
///    `p = sigmoid(z)`; the label is `[r < p]` (Bernoulli) or `[z > 0]`
///    (threshold).
///
/// Fields are named `f0..f{m-1}`, values `f{i}_{v}`; every value is
/// registered in the vocabulary, field-major, after the OOV ids.
pub fn synthesize(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let latents: Vec<Vec<Vec<f64>>> = (0..spec.fields)
        .map(|_| {
            (0..spec.vocab_per_field)
                .map(|_| rng.normal_vec(spec.latent_dim, 1.0))
                .collect()
        })
        .collect();

    let config = SchemaConfig {
        fields: (0..spec.fields)
            .map(|i| FieldDecl {
                name: format!("f{i}"),
                arity: Arity::Univalent,
            })
            .collect(),
        label_column: "label".into(),
    };
    let mut schema = Schema::new(&config)?;
    let ids: Vec<Vec<usize>> = (0..spec.fields)
        .map(|f| {
            (0..spec.vocab_per_field)
                .map(|v| schema.intern(f, &format!("f{f}_{v}")))
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(spec.n_instances);
    let mut instances = Vec::with_capacity(spec.n_instances);
    for _ in 0..spec.n_instances {
        let values: Vec<usize> = (0..spec.fields)
            .map(|_| rng.below(spec.vocab_per_field))
            .collect();
        let noise = if spec.noise_std > 0.0 {
            rng.gaussian(spec.noise_std)
        } else {
            0.0
        };
        let score = interaction_score(spec, &latents, &values) + noise;
        let probability = sigmoid(score);
        let label = match spec.label_mode {
            LabelMode::Bernoulli => u8::from(rng.uniform() < probability),
            LabelMode::Threshold => u8::from(score > 0.0),
        };
        let feature_ids: Vec<usize> = values.iter().enumerate().map(|(f, &v)| ids[f][v]).collect();
        instances.push(Instance::univalent(label, &feature_ids));
        rows.push(ManifestRow {
            values,
            noise,
            score,
            probability,
            label,
        });
    }
    Ok(SyntheticData {
        dataset: Dataset::new(Arc::new(schema), instances),
        manifest: SyntheticManifest {
            spec: spec.clone(),
            latents,
            rows,
        },
    })
}
