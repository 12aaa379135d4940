use std::sync::Arc;

use xdeepfm::data::{split, synthesize, Dataset, InteractionTerm, Instance, LabelMode, SyntheticSpec};
use xdeepfm::metrics::evaluate;
use xdeepfm::optim::{train, TrainConfig};
use xdeepfm::{Error, Model, ModelSpec, Preset};

fn synthetic(terms: &[&[usize]], n: usize, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        fields: 6,
        vocab_per_field: 8,
        latent_dim: 4,
        terms: terms
            .iter()
            .map(|f| InteractionTerm {
                fields: f.to_vec(),
                weight: 3.0,
            })
            .collect(),
        noise_std: 0.0,
        n_instances: n,
        seed,
        label_mode: LabelMode::Bernoulli,
    };
    synthesize(&spec).unwrap().dataset
}

fn fit(preset: Preset, train_set: &Dataset, valid: &Dataset, cfg: &TrainConfig) -> Model {
    let schema = &train_set.schema;
    let mut spec = ModelSpec::preset(preset, schema.num_fields(), schema.num_features());
    spec.embed_dim = 4;
    let (params, _) = train(&spec, train_set, valid, cfg).unwrap();
    Model { spec, params }
}

#[test]
fn fm_beats_lr_on_pairwise_data() {
    let data = synthetic(&[&[0, 1], &[2, 3], &[4, 5]], 50_000, 2);
    let (tr, va, _) = split(&data, (0.8, 0.2, 0.0), 2).unwrap();
    let cfg = TrainConfig {
        lr: 0.01,
        batch_size: 256,
        max_epochs: 10,
        ..TrainConfig::default()
    };
    let lr = evaluate(&fit(Preset::Lr, &tr, &va, &cfg), &va).unwrap().auc;
    let fm = evaluate(&fit(Preset::Fm, &tr, &va, &cfg), &va).unwrap().auc;
    eprintln!("LR {lr:.4}  FM {fm:.4}");
    assert!(fm >= lr + 0.05, "LR {lr} FM {fm}");
}

#[test]
fn constant_predictor_scores_chance() {
    let data = synthetic(&[&[0, 1]], 500, 3);
    let schema = &data.schema;
    let spec = ModelSpec::preset(Preset::XDeepFm, schema.num_fields(), schema.num_features());
    let model = Model::init(spec, 0.0, 0).unwrap();
    let report = evaluate(&model, &data).unwrap();
    assert_eq!(report.auc, 0.5);
    assert!((report.logloss - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(report.n, 500);
}

#[test]
fn separable_data_reaches_perfect_auc() {
    // the label is fully determined by field 0
    let base = synthetic(&[&[0, 1]], 400, 4);
    let instances: Vec<Instance> = base
        .instances
        .iter()
        .map(|i| Instance {
            label: u8::from(i.fields[0][0] % 2 == 0),
            ..i.clone()
        })
        .collect();
    let data = Dataset::new(Arc::clone(&base.schema), instances);
    let cfg = TrainConfig {
        lr: 0.05,
        batch_size: 64,
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let empty = Dataset::new(Arc::clone(&base.schema), Vec::new());
    let model = fit(Preset::Lr, &data, &empty, &cfg);
    assert_eq!(evaluate(&model, &data).unwrap().auc, 1.0);
}

#[test]
fn evaluating_an_empty_dataset_fails() {
    let data = synthetic(&[&[0, 1]], 10, 5);
    let spec = ModelSpec::preset(Preset::Fm, 6, data.schema.num_features());
    let model = Model::init(spec, 0.01, 0).unwrap();
    let empty = Dataset::new(Arc::clone(&data.schema), Vec::new());
    assert!(matches!(evaluate(&model, &empty), Err(Error::Metric(_))));
}
