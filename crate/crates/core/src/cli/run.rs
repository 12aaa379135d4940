use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use super::config::{open, RunConfig, Splits};
use super::{CliError, CliResult, EvaluateArgs, TrainArgs, EXIT_OK};
use crate::components::Differentiable;
use crate::data::{parse_with_schema, Dataset};
use crate::embedding::embed_forward;
use crate::metrics::{evaluate, EvalReport};
use crate::model::{Checkpoint, Model, ModelSpec};
use crate::optim::{train, TrainHistory};

#[derive(Debug, Serialize)]
pub struct SplitReport {
    pub split: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

pub(super) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub(super) fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

/// Report on the test split when present, else validation, else train.
pub(super) fn final_report(model: &Model, splits: &Splits) -> CliResult<SplitReport> {
    let (name, ds) = match &splits.test {
        Some(t) if !t.is_empty() => ("test", t),
        _ if !splits.valid.is_empty() => ("valid", &splits.valid),
        _ => ("train", &splits.train),
    };
    Ok(SplitReport {
        split: name.into(),
        report: evaluate(model, ds)?,
    })
}

pub(super) fn train_model(
    cfg: &RunConfig,
    spec: &ModelSpec,
    splits: &Splits,
) -> CliResult<(Model, TrainHistory)> {
    let (params, history) = train(spec, &splits.train, &splits.valid, &cfg.train)?;
    Ok((
        Model {
            spec: spec.clone(),
            params,
        },
        history,
    ))
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<i32> {
    let cfg = RunConfig::from_args(args)?;
    let splits = cfg.load_data()?;
    let schema = splits.train.schema.clone();
    let spec = cfg.spec(schema.num_fields(), schema.num_features())?;
    let (model, history) = train_model(&cfg, &spec, &splits)?;
    let report = final_report(&model, &splits)?;

    ensure_dir(&cfg.out)?;
    let ckpt = Checkpoint {
        spec,
        params: model.params.clone(),
        seed: cfg.train.seed,
        schema: Some((*schema).clone()),
    };
    write_file(&cfg.out.join("model.ckpt"), &ckpt.to_bytes()?)?;
    write_file(&cfg.out.join("history.jsonl"), history.to_jsonl().as_bytes())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&cfg.out.join("eval.json"), format!("{json}\n").as_bytes())?;
    eprintln!(
        "trained {} epochs (best {}), {} auc {:.5} logloss {:.5}",
        history.epochs.len(),
        history.best_epoch,
        report.split,
        report.report.auc,
        report.report.logloss
    );
    if args.bench {
        let bench = bench_parts(&model, &splits.train)?;
        let json = serde_json::to_string_pretty(&bench).expect("bench serializes");
        write_file(&cfg.out.join("bench.json"), format!("{json}\n").as_bytes())?;
        eprintln!(
            "per-epoch seconds: cin {:?}, dnn {:?}",
            bench.cin_seconds, bench.dnn_seconds
        );
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct Bench {
    pub instances: usize,
    pub cin_seconds: Option<f64>,
    pub dnn_seconds: Option<f64>,
}

/// Time of one forward and backward pass over `data` through the CIN and
/// DNN parts separately, i.e. their share of an epoch.
fn bench_parts(model: &Model, data: &Dataset) -> CliResult<Bench> {
    let p = &model.params;
    let x0s = data
        .instances
        .iter()
        .map(|i| embed_forward(i, &p.embedding))
        .collect::<crate::Result<Vec<_>>>()?;
    let cin_seconds = match &p.cin {
        Some(cin) => {
            let start = Instant::now();
            for x0 in &x0s {
                let (out, cache) = cin.forward_cached(x0)?;
                let _ = cin.backward(&cache, &out)?;
            }
            Some(start.elapsed().as_secs_f64())
        }
        None => None,
    };
    let dnn_seconds = match &p.dnn {
        Some(dnn) => {
            let start = Instant::now();
            for x0 in &x0s {
                let flat = x0.as_slice().to_vec();
                let (out, cache) = dnn.forward_cached(&flat)?;
                let _ = dnn.backward(&cache, &out)?;
            }
            Some(start.elapsed().as_secs_f64())
        }
        None => None,
    };
    Ok(Bench {
        instances: data.len(),
        cin_seconds,
        dnn_seconds,
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> CliResult<i32> {
    for p in [&args.checkpoint, &args.data] {
        if !p.is_file() {
            return Err(CliError::usage(format!("no such file: {}", p.display())));
        }
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let schema = ckpt
        .schema
        .ok_or_else(|| CliError::usage("checkpoint carries no schema; cannot parse raw data"))?;
    let data = parse_with_schema(open(&args.data)?, std::sync::Arc::new(schema))?;
    let model = Model {
        spec: ckpt.spec,
        params: ckpt.params,
    };
    let report = evaluate(&model, &data)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(p) => write_file(p, format!("{json}\n").as_bytes())?,
        None => writeln!(stdout, "{json}").map_err(|e| CliError::runtime(e.to_string()))?,
    }
    Ok(EXIT_OK)
}
