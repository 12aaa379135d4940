use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{CliError, CliResult, CommonArgs, TrainArgs};
use crate::components::Activation;
use crate::data::{
    parse_dataset, parse_with_schema, split, Arity, Dataset, FieldDecl, Schema, SchemaConfig,
};
use crate::kv::KvConfig;
use crate::model::{ModelSpec, Parts, Preset};
use crate::optim::TrainConfig;

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.8, 0.1, 0.1);

const KNOWN_KEYS: &[&str] = &[
    "out",
    "data.train",
    "data.valid",
    "data.test",
    "data.path",
    "data.schema",
    "data.split",
    "data.split_seed",
    "model.preset",
    "model.parts",
    "model.embed_dim",
    "model.dnn_widths",
    "model.dnn_activation",
    "model.cin_widths",
    "model.cin_activation",
    "model.cin_rank",
    "model.cross_depth",
    "model.fm_weight",
    "train.lr",
    "train.batch_size",
    "train.epochs",
    "train.lambda",
    "train.patience",
    "train.seed",
    "train.init_std",
    "grid.cin_depth",
    "grid.cin_width",
    "grid.dnn_depth",
    "grid.dnn_width",
    "grid.activation",
    "grid.lr",
    "grid.lambda",
];

/// Resolved settings for a train or gridsearch run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kv: KvConfig,
    pub out: PathBuf,
    pub train: TrainConfig,
}

pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Option<Dataset>,
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!("no such file: {}", path.display())))
    }
}

pub(super) fn load_kv(common: &CommonArgs) -> CliResult<KvConfig> {
    let mut kv = match &common.config {
        Some(p) => {
            require_file(p)?;
            KvConfig::from_file(p)?
        }
        None => KvConfig::default(),
    };
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

impl RunConfig {
    pub fn from_args(args: &TrainArgs) -> CliResult<Self> {
        let mut kv = load_kv(&args.common)?;
        let mut put = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(key, v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("data.train", path(&args.train));
        put("data.valid", path(&args.valid));
        put("data.test", path(&args.test));
        put("data.path", path(&args.data));
        put("data.schema", path(&args.schema));
        put("model.preset", args.preset.clone());
        put("train.epochs", args.epochs.map(|e| e.to_string()));
        put("train.seed", args.seed.map(|e| e.to_string()));
        put("out", path(&args.out));
        Self::from_kv(kv)
    }

    pub fn from_kv(kv: KvConfig) -> CliResult<Self> {
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key) {
                return Err(CliError::usage(format!("unknown config key `{key}`")));
            }
        }
        let d = TrainConfig::default();
        let train = TrainConfig {
            lr: kv.parsed_or("train.lr", d.lr)?,
            batch_size: kv.parsed_or("train.batch_size", d.batch_size)?,
            max_epochs: kv.parsed_or("train.epochs", d.max_epochs)?,
            lambda: kv.parsed_or("train.lambda", d.lambda)?,
            patience: kv.parsed_or("train.patience", d.patience)?,
            seed: kv.parsed_or("train.seed", d.seed)?,
            init_std: kv.parsed_or("train.init_std", d.init_std)?,
        };
        train.validate()?;
        Ok(RunConfig {
            out: PathBuf::from(kv.get("out").unwrap_or("out")),
            kv,
            train,
        })
    }

    pub fn preset(&self) -> CliResult<Preset> {
        self.kv
            .get("model.preset")
            .unwrap_or("xdeepfm")
            .parse()
            .map_err(CliError::usage)
    }

    /// Model spec for data with the given shape.
    pub fn spec(&self, num_fields: usize, num_features: usize) -> CliResult<ModelSpec> {
        let kv = &self.kv;
        let mut spec = ModelSpec::preset(self.preset()?, num_fields, num_features);
        if let Some(parts) = kv.list::<String>("model.parts")? {
            let mut p = Parts::default();
            for name in parts {
                match name.as_str() {
                    "linear" => p.linear = true,
                    "fm" => p.fm = true,
                    "dnn" => p.dnn = true,
                    "cin" => p.cin = true,
                    "cross" => p.cross = true,
                    other => return Err(CliError::usage(format!("unknown model part `{other}`"))),
                }
            }
            spec.parts = p;
        }
        spec.embed_dim = kv.parsed_or("model.embed_dim", spec.embed_dim)?;
        if let Some(w) = kv.list::<usize>("model.dnn_widths")? {
            spec.dnn.widths = w;
        }
        if let Some(a) = kv.parsed::<Activation>("model.dnn_activation")? {
            spec.dnn.activation = a;
        }
        if let Some(w) = kv.list::<usize>("model.cin_widths")? {
            spec.cin.widths = w;
        }
        if let Some(a) = kv.parsed::<Activation>("model.cin_activation")? {
            spec.cin.activation = a;
        }
        spec.cin.rank = kv.parsed("model.cin_rank")?;
        spec.cross_depth = kv.parsed_or("model.cross_depth", spec.cross_depth)?;
        spec.fm_weight_trainable = match kv.get("model.fm_weight").unwrap_or("learnable") {
            "learnable" => true,
            "frozen" => false,
            other => {
                return Err(CliError::usage(format!(
                    "model.fm_weight must be learnable or frozen, got `{other}`"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.kv.get(key).map(PathBuf::from)
    }

    fn schema_config(&self, first_csv: &Path) -> CliResult<SchemaConfig> {
        match self.path("data.schema") {
            Some(p) => {
                require_file(&p)?;
                Ok(SchemaConfig::from_kv(&KvConfig::from_file(&p)?)?)
            }
            None => infer_schema(first_csv),
        }
    }

    /// Reads the datasets named by `data.*`. Either `data.path` (split by
    /// `data.split`, default 8:1:1) or `data.train` with optional
    /// `data.valid`/`data.test`.
    pub fn load_data(&self) -> CliResult<Splits> {
        if let Some(p) = self.path("data.path") {
            require_file(&p)?;
            let schema = self.schema_config(&p)?;
            let all = parse_dataset(open(&p)?, &schema)?;
            let ratios = match self.kv.list::<f64>("data.split")? {
                None => DEFAULT_SPLIT,
                Some(r) if r.len() == 3 => (r[0], r[1], r[2]),
                Some(r) => {
                    return Err(CliError::usage(format!(
                        "data.split needs 3 ratios, got {}",
                        r.len()
                    )))
                }
            };
            let seed = self.kv.parsed_or("data.split_seed", self.train.seed)?;
            let (train, valid, test) = split(&all, ratios, seed)?;
            return Ok(Splits {
                train,
                valid,
                test: Some(test),
            });
        }
        let train_path = self
            .path("data.train")
            .ok_or_else(|| CliError::usage("no training data: set data.train or data.path"))?;
        require_file(&train_path)?;
        let valid_path = self.path("data.valid");
        let test_path = self.path("data.test");
        for p in valid_path.iter().chain(&test_path) {
            require_file(p)?;
        }
        let schema = self.schema_config(&train_path)?;
        let train = parse_dataset(open(&train_path)?, &schema)?;
        let frozen: Arc<Schema> = train.schema.clone();
        let valid = match &valid_path {
            Some(p) => parse_with_schema(open(p)?, frozen.clone())?,
            None => Dataset::new(frozen.clone(), Vec::new()),
        };
        let test = test_path
            .map(|p| parse_with_schema(open(&p)?, frozen.clone()).map_err(CliError::from))
            .transpose()?;
        Ok(Splits { train, valid, test })
    }
}

pub(super) fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Every column except `label` becomes a univalent field, in header order.
pub(super) fn infer_schema(csv_path: &Path) -> CliResult<SchemaConfig> {
    let mut reader = csv::Reader::from_reader(open(csv_path)?);
    let headers = reader
        .headers()
        .map_err(|e| CliError::usage(format!("{}: {e}", csv_path.display())))?;
    let cfg = SchemaConfig {
        fields: headers
            .iter()
            .filter(|h| *h != "label")
            .map(|h| FieldDecl {
                name: h.to_string(),
                arity: Arity::Univalent,
            })
            .collect(),
        label_column: "label".into(),
    };
    cfg.validate()?;
    Ok(cfg)
}
