use rayon::prelude::*;
use serde::Serialize;

use super::config::{RunConfig, Splits};
use super::run::{ensure_dir, train_model, write_file};
use super::{CliError, CliResult, TrainArgs, EXIT_OK};
use crate::components::Activation;
use crate::metrics::evaluate;
use crate::model::ModelSpec;

/// Candidate values per hyper-parameter. `activation` applies to the CIN.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub cin_depth: Vec<usize>,
    pub cin_width: Vec<usize>,
    pub dnn_depth: Vec<usize>,
    pub dnn_width: Vec<usize>,
    pub activation: Vec<Activation>,
    pub lr: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub cin_depth: usize,
    pub cin_width: usize,
    pub dnn_depth: usize,
    pub dnn_width: usize,
    pub activation: Activation,
    pub lr: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub index: usize,
    pub cin_depth: usize,
    pub cin_width: usize,
    pub dnn_depth: usize,
    pub dnn_width: usize,
    pub activation: String,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
    pub status: String,
    pub auc: Option<f64>,
    pub logloss: Option<f64>,
}

fn first_or<T: Copy>(v: &[T], default: T) -> T {
    v.first().copied().unwrap_or(default)
}

impl GridSpec {
    /// Lists from `grid.*`; a missing key becomes the base run's value.
    pub fn from_run(cfg: &RunConfig, base: &ModelSpec) -> CliResult<Self> {
        let kv = &cfg.kv;
        let one = |v| vec![v];
        let g = GridSpec {
            cin_depth: kv
                .list("grid.cin_depth")?
                .unwrap_or_else(|| one(base.cin.widths.len())),
            cin_width: kv
                .list("grid.cin_width")?
                .unwrap_or_else(|| one(first_or(&base.cin.widths, 0))),
            dnn_depth: kv
                .list("grid.dnn_depth")?
                .unwrap_or_else(|| one(base.dnn.widths.len())),
            dnn_width: kv
                .list("grid.dnn_width")?
                .unwrap_or_else(|| one(first_or(&base.dnn.widths, 0))),
            activation: kv
                .list("grid.activation")?
                .unwrap_or_else(|| vec![base.cin.activation]),
            lr: kv.list("grid.lr")?.unwrap_or_else(|| vec![cfg.train.lr]),
            lambda: kv
                .list("grid.lambda")?
                .unwrap_or_else(|| vec![cfg.train.lambda]),
        };
        if g.size() == 0 {
            return Err(CliError::usage("every grid list must be non-empty"));
        }
        Ok(g)
    }

    pub fn size(&self) -> usize {
        self.cin_depth.len()
            * self.cin_width.len()
            * self.dnn_depth.len()
            * self.dnn_width.len()
            * self.activation.len()
            * self.lr.len()
            * self.lambda.len()
    }

    /// Cartesian product, last list varying fastest.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::with_capacity(self.size());
        for &cin_depth in &self.cin_depth {
            for &cin_width in &self.cin_width {
                for &dnn_depth in &self.dnn_depth {
                    for &dnn_width in &self.dnn_width {
                        for &activation in &self.activation {
                            for &lr in &self.lr {
                                for &lambda in &self.lambda {
                                    out.push(Combination {
                                        cin_depth,
                                        cin_width,
                                        dnn_depth,
                                        dnn_width,
                                        activation,
                                        lr,
                                        lambda,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn run_one(
    cfg: &RunConfig,
    base: &ModelSpec,
    splits: &Splits,
    index: usize,
    c: &Combination,
) -> GridRow {
    let seed = cfg.train.seed.wrapping_add(index as u64);
    let mut row = GridRow {
        index,
        cin_depth: c.cin_depth,
        cin_width: c.cin_width,
        dnn_depth: c.dnn_depth,
        dnn_width: c.dnn_width,
        activation: c.activation.name().into(),
        lr: c.lr,
        lambda: c.lambda,
        seed,
        status: "ok".into(),
        auc: None,
        logloss: None,
    };
    let result = (|| -> CliResult<(f64, f64)> {
        let mut spec = base.clone();
        spec.cin.widths = vec![c.cin_width; c.cin_depth];
        spec.cin.activation = c.activation;
        spec.dnn.widths = vec![c.dnn_width; c.dnn_depth];
        spec.validate()?;
        let mut run = cfg.clone();
        run.train.lr = c.lr;
        run.train.lambda = c.lambda;
        run.train.seed = seed;
        let (model, _) = train_model(&run, &spec, splits)?;
        let report = evaluate(&model, &splits.valid)?;
        Ok((report.auc, report.logloss))
    })();
    match result {
        Ok((auc, logloss)) => {
            row.auc = Some(auc);
            row.logloss = Some(logloss);
        }
        Err(e) => row.status = format!("failed: {}", e.message),
    }
    row
}

/// Trains every combination concurrently and ranks by validation AUC,
/// failed rows last.
pub fn run_grid(cfg: &RunConfig, base: &ModelSpec, grid: &GridSpec, splits: &Splits) -> Vec<GridRow> {
    let mut rows: Vec<GridRow> = grid
        .combinations()
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_one(cfg, base, splits, i, c))
        .collect();
    rows.sort_by(|a, b| match (a.auc, b.auc) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    rows
}

pub fn cmd_gridsearch(args: &TrainArgs) -> CliResult<i32> {
    let cfg = RunConfig::from_args(args)?;
    let splits = cfg.load_data()?;
    if splits.valid.is_empty() {
        return Err(CliError::usage("gridsearch ranks by validation AUC and needs a validation set"));
    }
    let schema = splits.train.schema.clone();
    let base = cfg.spec(schema.num_fields(), schema.num_features())?;
    let grid = GridSpec::from_run(&cfg, &base)?;
    eprintln!("grid size: {} combinations", grid.size());
    let rows = run_grid(&cfg, &base, &grid, &splits);

    ensure_dir(&cfg.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)
            .map_err(|e| CliError::runtime(format!("grid results: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::runtime(format!("grid results: {e}")))?;
    write_file(&cfg.out.join("grid_results.csv"), &bytes)?;
    let failed = rows.iter().filter(|r| r.auc.is_none()).count();
    eprintln!("{} rows, {failed} failed", rows.len());
    Ok(EXIT_OK)
}
