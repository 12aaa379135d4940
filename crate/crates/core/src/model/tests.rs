use super::*;
use crate::components::Activation;
use crate::oracle::{analytic_gradient, check_model_gradients, random_gradient_case};

fn spec_for(preset: Preset, m: usize, features: usize) -> ModelSpec {
    let mut spec = ModelSpec::preset(preset, m, features);
    spec.embed_dim = 3;
    spec.dnn.widths = vec![4, 3];
    spec.dnn.activation = Activation::Tanh;
    spec.cin.widths = vec![2, 2];
    spec.cin.activation = Activation::Tanh;
    spec.cross_depth = 2;
    spec
}

fn random_model(spec: ModelSpec, seed: u64) -> Model {
    let mut model = Model::init(spec, 0.5, seed).unwrap();
    let mut rng = Rng::new(seed ^ 0xabc);
    let flat: Vec<f64> = (0..model.params.num_parameters())
        .map(|_| rng.gaussian(0.5))
        .collect();
    model.params.set_flat(&flat).unwrap();
    model
}

fn instances(m: usize, features: usize, n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| Instance {
            label: rng.below(2) as u8,
            fields: (0..m).map(|_| vec![rng.below(features)]).collect(),
        })
        .collect()
}

#[test]
fn zero_params_predict_half() {
    for preset in Preset::ALL {
        let model = Model::init(spec_for(preset, 3, 9), 0.0, 1).unwrap();
        let inst = Instance::univalent(1, &[3, 5, 8]);
        assert_eq!(model.predict(&inst).unwrap(), 0.5, "{preset:?}");
    }
}

#[test]
fn lr_closed_form() {
    let mut model = Model::init(spec_for(Preset::Lr, 2, 4), 0.0, 0).unwrap();
    model.params.linear.weights[2] = 3f64.ln();
    let y = model.predict(&Instance::univalent(0, &[2, 1])).unwrap();
    assert!((y - 0.75).abs() < 1e-15);
    let spec = model.spec.clone();
    let free = forward(&Instance::univalent(0, &[2, 1]), &model.params, &spec).unwrap();
    assert_eq!(free, y);
}

#[test]
fn wrong_field_count_is_dimension_error() {
    let model = Model::init(spec_for(Preset::Fm, 3, 9), 0.01, 0).unwrap();
    let r = model.predict(&Instance::univalent(0, &[1, 2]));
    assert!(matches!(r, Err(Error::Dimension(_))));
    let r = model.predict(&Instance::univalent(0, &[1, 2, 99]));
    assert!(r.is_err());
}

#[test]
fn logloss_examples() {
    assert!((logloss(&[0.5], &[1]).unwrap() - 2f64.ln()).abs() < 1e-15);
    let l = logloss(&[1.0 - 1e-12], &[1]).unwrap();
    assert!(l > 0.0 && l < 2e-12);
    let l = logloss(&[0.9, 0.2], &[1, 0]).unwrap();
    assert!((l - 0.164252033486018).abs() < 1e-12);
    assert!(matches!(logloss(&[], &[]), Err(Error::Argument(_))));
    // clamped, so exact 0/1 predictions stay finite
    assert!(logloss(&[0.0, 1.0], &[1, 0]).unwrap().is_finite());
}

#[test]
fn logloss_minimized_at_label_mean() {
    let labels = [1, 0, 0, 1, 1, 1, 0, 1, 0, 1];
    let mean = 0.6;
    let best = (1..100)
        .map(|i| i as f64 / 100.0)
        .min_by(|a, b| {
            let la = logloss(&vec![*a; 10], &labels).unwrap();
            let lb = logloss(&vec![*b; 10], &labels).unwrap();
            la.total_cmp(&lb)
        })
        .unwrap();
    assert!((best - mean).abs() < 1e-12);
}

#[test]
fn objective_examples() {
    let spec = spec_for(Preset::Lr, 2, 1);
    let mut params = ModelParams::init(&spec, 0.0, &mut Rng::new(0)).unwrap();
    assert_eq!(objective(0.3, &params, 0.0).unwrap(), 0.3);
    // the single regularized parameter is w = 2; the bias is excluded
    params.linear.weights[0] = 2.0;
    params.bias = 5.0;
    let j = objective(0.0, &params, 0.0001).unwrap();
    assert!((j - 0.0004).abs() < 1e-18);
    assert!(objective(0.0, &params, -1.0).is_err());
}

#[test]
fn regularizer_skips_embeddings_and_biases() {
    let model = random_model(spec_for(Preset::XDeepFm, 3, 9), 3);
    let mut p = model.params.clone();
    let before = p.regularizer();
    p.embedding.table.scale(7.0);
    p.bias += 3.0;
    for l in &mut p.dnn.as_mut().unwrap().layers {
        l.bias.iter_mut().for_each(|b| *b += 1.0);
    }
    assert_eq!(p.regularizer(), before);
    p.linear.weights[0] += 1.0;
    assert_ne!(p.regularizer(), before);
}

#[test]
fn frozen_fm_weight_not_regularized_or_trained() {
    let mut spec = spec_for(Preset::DeepFm, 3, 9);
    spec.fm_weight_trainable = false;
    let model = random_model(spec, 4);
    let g = model
        .params
        .groups()
        .into_iter()
        .find(|g| g.name == "fm_weight")
        .unwrap();
    assert!(!g.regularized && !g.trainable);
    let insts = instances(3, 9, 5, 1);
    let batch: Vec<&Instance> = insts.iter().collect();
    let (_, grad) = model.objective_and_gradient(&batch, 0.1).unwrap();
    assert_eq!(grad.fm.unwrap().value, 0.0);
}

#[test]
fn cin_off_equals_deepfm_without_fm() {
    // xDeepFM with w_cin = 0 scores like {linear, dnn} on the shared params
    let m = 3;
    let mut x = random_model(spec_for(Preset::XDeepFm, m, 9), 5);
    x.params.cin.as_mut().unwrap().output.iter_mut().for_each(|w| *w = 0.0);
    let mut spec = x.spec.clone();
    spec.parts = Parts {
        linear: true,
        dnn: true,
        ..Parts::default()
    };
    let reduced = Model {
        spec,
        params: ModelParams {
            cin: None,
            ..x.params.clone()
        },
    };
    for inst in instances(m, 9, 20, 2) {
        assert_eq!(x.predict(&inst).unwrap(), reduced.predict(&inst).unwrap());
    }
}

#[test]
fn depth_one_ones_filter_generalizes_deepfm() {
    // CIN term with one all-ones filter equals w·(2·FM + Σ‖e_i‖²), so with
    // w_cin = ½ it is the FM term plus the self-interaction diagonal
    let m = 3;
    let mut spec = spec_for(Preset::XDeepFm, m, 9);
    spec.cin.widths = vec![1];
    spec.cin.activation = Activation::Identity;
    let mut x = random_model(spec, 6);
    {
        let cin = x.params.cin.as_mut().unwrap();
        cin.layers[0].filters = Filters::Full {
            w: vec![1.0; m * m],
        };
        cin.output = vec![0.5];
    }
    let mut dspec = x.spec.clone();
    dspec.parts = Preset::DeepFm.parts();
    dspec.fm_weight_trainable = false;
    let d = Model {
        spec: dspec,
        params: ModelParams {
            cin: None,
            fm: Some(FmWeight {
                value: 1.0,
                trainable: false,
            }),
            ..x.params.clone()
        },
    };
    for inst in instances(m, 9, 20, 3) {
        let e = embed_forward(&inst, &x.params.embedding).unwrap();
        let diag: f64 = (0..m).map(|i| dot(e.row(i), e.row(i))).sum();
        let lx = x.forward_cached(&inst).unwrap().logit;
        let ld = d.forward_cached(&inst).unwrap().logit;
        assert!((lx - (ld + 0.5 * diag)).abs() < 1e-12, "{lx} vs {ld} + {diag}/2");
    }
}

#[test]
fn flat_round_trip() {
    let model = random_model(spec_for(Preset::XDeepFm, 3, 9), 7);
    let flat = model.params.to_flat();
    let mut p = model.params.zeros_like();
    p.set_flat(&flat).unwrap();
    assert_eq!(p, model.params);
    assert!(p.set_flat(&flat[1..]).is_err());
}

#[test]
fn gradients_match_finite_differences_per_preset() {
    for (k, preset) in Preset::ALL.into_iter().enumerate() {
        let model = random_model(spec_for(preset, 3, 9), 10 + k as u64);
        let insts = instances(3, 9, 6, k as u64);
        let batch: Vec<&Instance> = insts.iter().collect();
        let r = check_model_gradients(&model, &batch, 0.01, analytic_gradient).unwrap();
        assert!(r.objective_error < 1e-12);
        assert!(
            r.worst_relative_error < 1e-4,
            "{preset:?}: {:?}",
            r.groups
        );
    }
}

#[test]
fn gradients_low_rank_and_multivalent() {
    let mut spec = spec_for(Preset::XDeepFm, 4, 12);
    spec.cin.widths = vec![3, 3];
    spec.cin.rank = Some(2);
    spec.parts.fm = true;
    spec.parts.cross = true;
    let model = random_model(spec, 20);
    let insts = vec![
        Instance {
            label: 1,
            fields: vec![vec![4, 5], vec![6], vec![], vec![11, 11]],
        },
        Instance {
            label: 0,
            fields: vec![vec![0], vec![7, 1], vec![9], vec![3]],
        },
    ];
    let batch: Vec<&Instance> = insts.iter().collect();
    let r = check_model_gradients(&model, &batch, 0.05, analytic_gradient).unwrap();
    assert!(r.worst_relative_error < 1e-4, "{:?}", r.groups);
}

#[test]
fn random_gradient_cases() {
    let mut rng = Rng::new(99);
    for _ in 0..5 {
        let (model, insts, lambda) = random_gradient_case(&mut rng).unwrap();
        let batch: Vec<&Instance> = insts.iter().collect();
        let r = check_model_gradients(&model, &batch, lambda, analytic_gradient).unwrap();
        assert!(r.worst_relative_error < 1e-4, "{:?}", r.groups);
    }
}

#[test]
fn parallel_gradient_matches_sequential() {
    // more instances than one chunk, so the chunked reduction is exercised
    let model = random_model(spec_for(Preset::XDeepFm, 3, 9), 30);
    let insts = instances(3, 9, 300, 4);
    let batch: Vec<&Instance> = insts.iter().collect();
    let (l1, g1) = model.loss_and_gradients(&batch).unwrap();
    let mut g2 = Gradients::zeros(&model.params);
    let mut l2 = 0.0;
    for inst in &insts {
        let c = model.forward_cached(inst).unwrap();
        let y = f64::from(inst.label);
        l2 += instance_logloss(c.prediction, y);
        model.backward_into(inst, &c, c.prediction - y, &mut g2).unwrap();
    }
    assert!((l1 - l2).abs() < 1e-9 * l2.abs());
    let (a, b) = (g1.to_dense(&model.params).to_flat(), g2.to_dense(&model.params).to_flat());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
    }
    // and the batch result is reproducible bit for bit
    let (l3, g3) = model.loss_and_gradients(&batch).unwrap();
    assert_eq!(l1, l3);
    assert_eq!(g1, g3);
}

mod ckpt {
    use super::*;

    #[test]
    fn round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for (k, preset) in Preset::ALL.into_iter().enumerate() {
            let mut spec = spec_for(preset, 3, 9);
            if k % 2 == 0 {
                spec.cin.rank = Some(1);
            }
            let model = random_model(spec, k as u64);
            let path = dir.path().join(format!("{k}.ckpt"));
            save_checkpoint(&model.params, &model.spec, &path).unwrap();
            let (params, spec) = load_checkpoint(&path).unwrap();
            assert_eq!(spec, model.spec);
            let a: Vec<u64> = params.to_flat().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = model.params.to_flat().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fm_scores_identical_after_reload() {
        let model = random_model(spec_for(Preset::Fm, 3, 9), 8);
        let bytes = Checkpoint {
            spec: model.spec.clone(),
            params: model.params.clone(),
            seed: 8,
            schema: None,
        }
        .to_bytes()
        .unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.seed, 8);
        let loaded = Model {
            spec: back.spec,
            params: back.params,
        };
        for inst in instances(3, 9, 100, 5) {
            assert_eq!(
                model.predict(&inst).unwrap().to_bits(),
                loaded.predict(&inst).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn corruption_detected() {
        let model = random_model(spec_for(Preset::XDeepFm, 3, 9), 9);
        let ck = Checkpoint {
            spec: model.spec.clone(),
            params: model.params.clone(),
            seed: 1,
            schema: None,
        };
        let bytes = ck.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));

        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(Checkpoint::from_bytes(short), Err(Error::Checkpoint(_))));

        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Checkpoint(_))));

        let text = String::from_utf8_lossy(&bytes).replacen("version = 1", "version = 9", 1);
        let end = bytes.windows(2).position(|w| w == b"\n\n").unwrap();
        let mut v9 = text.as_bytes()[..end].to_vec();
        v9.extend_from_slice(&bytes[end..]);
        assert!(matches!(Checkpoint::from_bytes(&v9), Err(Error::Checkpoint(_))));

        assert!(matches!(Checkpoint::from_bytes(b"XFM1\n"), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = Checkpoint::load(Path::new("/nonexistent/model.ckpt"));
        assert!(matches!(r, Err(Error::Io { .. })));
    }

    use std::path::Path;
}

#[test]
fn logit_loss_matches_closed_form() {
    // -ln σ(z) = ln(1 + e^{-z}) and -ln(1 - σ(z)) = ln(1 + e^{z})
    for &z in &[-27.0, -3.0, -0.2, 0.0, 0.7, 4.0, 27.0] {
        let f: f64 = z;
        assert!((logit_logloss(z, 1.0) - (-f).exp().ln_1p()).abs() < 1e-12);
        assert!((logit_logloss(z, 0.0) - f.exp().ln_1p()).abs() < 1e-12);
    }
    // past the clamp the loss saturates at -ln(1e-12)
    let cap = -(PRED_CLAMP.ln());
    assert!((logit_logloss(40.0, 0.0) - cap).abs() < 1e-9);
    assert!((logit_logloss(-40.0, 1.0) - cap).abs() < 1e-9);
    assert!((instance_logloss(0.0, 1.0) - cap).abs() < 1e-9);
}

#[test]
fn saturated_logit_contributes_no_gradient() {
    // past the clamp the loss is constant, so a confidently wrong instance
    // must not move the weights
    let mut model = Model::init(spec_for(Preset::Lr, 2, 4), 0.0, 0).unwrap();
    model.params.linear.weights[2] = 40.0;
    let inst = Instance::univalent(0, &[2, 1]);
    let (loss, grad) = model.loss_and_dense_gradient(&[&inst], 0.0).unwrap();
    assert!((loss + PRED_CLAMP.ln()).abs() < 1e-9);
    assert!(grad.to_flat().iter().all(|&g| g == 0.0));

    model.params.linear.weights[2] = 20.0;
    let (_, grad) = model.loss_and_dense_gradient(&[&inst], 0.0).unwrap();
    assert!(grad.linear.weights[2] > 0.99);
}
