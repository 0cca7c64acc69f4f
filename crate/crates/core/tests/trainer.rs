use padd::data::{split, synth_generate, DomainConfig, GapSet, LabeledDataset, Split};
use padd::lossmetrics::{class_balanced_weights, ClassCounts};
use padd::model::{
    build_model, trainable_params, ConvLayer, ModelConfig, Network, ParamGrads, ParamGroup,
    ParamRegistry, Regime, Stage, TuningMode,
};
use padd::numerics::Tensor;
use padd::trainer::{
    adam_step, adapt, evaluate, pretrain_source, AdamState, Hyperparams, TrainData,
};
use padd::Error;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        d: 8,
        n_layers: 1,
        n_heads: 2,
        conv: vec![ConvLayer::new(16, 16, 8), ConvLayer::new(4, 4, 8)],
        head_hidden: 8,
        ff_hidden: 16,
        delta: 256,
    }
}

fn hp(epochs: usize) -> Hyperparams {
    Hyperparams {
        eta: 1e-2,
        batch: 8,
        beta: 0.9,
        n_p: 3,
        epochs,
        ..Hyperparams::default()
    }
}

fn pools(shift: f64, seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let src = DomainConfig::source(256);
    let cfg = DomainConfig::shifted(&src, GapSet::ALL, shift).unwrap();
    let ds = synth_generate(&cfg, 20, 30, seed).unwrap();
    split(&ds, (0.6, 0.2, 0.2), seed + 1).unwrap()
}

fn pretrained() -> (Network, ParamRegistry) {
    let (tr, dv, _) = pools(0.0, 1);
    let (net, r) = pretrain_source(
        &tiny_model(),
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &hp(3),
        5,
        None,
    )
    .unwrap();
    (net, r.best_registry)
}

const GROUPS: [ParamGroup; 3] = [
    ParamGroup::Frontend,
    ParamGroup::BackendHead,
    ParamGroup::BackendLast,
];

#[test]
fn adaptation_changes_only_the_trainable_set() {
    let (net, reg) = pretrained();
    let (tr, dv, _) = pools(0.6, 10);
    for regime in Regime::all().into_iter().filter(|r| !r.is_zero_shot()) {
        let r = adapt(
            &net,
            &reg,
            regime,
            TrainData {
                train: &tr,
                dev: &dv,
            },
            &hp(2),
            3,
            None,
        )
        .unwrap();
        let after = &r.best_registry;
        for g in GROUPS {
            let same = reg.fingerprint(&[g]) == after.fingerprint(&[g]);
            let trained = regime.mode.groups().contains(&g);
            assert_eq!(same, !trained, "{regime} {g:?}");
        }
        assert_eq!(after.prompt().is_some(), regime.with_prompt, "{regime}");
    }
}

#[test]
fn b_without_prompt_trains_the_last_layer_only() {
    let (net, reg) = pretrained();
    let (tr, dv, _) = pools(0.6, 11);
    let r = adapt(
        &net,
        &reg,
        Regime::new(TuningMode::B, false),
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &hp(2),
        0,
        None,
    )
    .unwrap();
    for (a, b) in reg.entries().iter().zip(r.best_registry.entries()) {
        assert_eq!(
            a.value.bit_eq(&b.value),
            a.group != ParamGroup::BackendLast,
            "{}",
            a.name
        );
    }
}

#[test]
fn invalid_adaptation_requests_rejected() {
    let (net, reg) = pretrained();
    let (tr, dv, _) = pools(0.6, 12);
    let data = TrainData {
        train: &tr,
        dev: &dv,
    };
    let a_no_pt = adapt(
        &net,
        &reg,
        Regime::new(TuningMode::A, false),
        data,
        &hp(1),
        0,
        None,
    );
    assert!(matches!(a_no_pt, Err(Error::InvalidArgument(_))));
    let empty = LabeledDataset::new(256, Split::Train, Vec::new()).unwrap();
    let data = TrainData {
        train: &empty,
        dev: &dv,
    };
    assert!(adapt(
        &net,
        &reg,
        Regime::new(TuningMode::A, true),
        data,
        &hp(1),
        0,
        None
    )
    .is_err());
}

#[test]
fn pretraining_is_bitwise_reproducible() {
    let (tr, dv, _) = pools(0.0, 2);
    let run = || {
        pretrain_source(
            &tiny_model(),
            TrainData {
                train: &tr,
                dev: &dv,
            },
            &hp(2),
            9,
            None,
        )
        .unwrap()
        .1
    };
    let (a, b) = (run(), run());
    assert!(a.best_registry.bit_eq(&b.best_registry));
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_epoch, b.best_epoch);
}

#[test]
fn one_epoch_run_and_log_lines() {
    let (net, reg) = pretrained();
    let (tr, dv, _) = pools(0.3, 13);
    let mut log = Vec::new();
    let r = adapt(
        &net,
        &reg,
        Regime::new(TuningMode::C, true),
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &hp(1),
        4,
        Some(&mut log),
    )
    .unwrap();
    assert_eq!(r.history.len(), 1);
    assert_eq!(r.best_epoch, 1);
    assert_eq!(r.best_dev_eer, r.history[0].dev_eer);
    let log = String::from_utf8(log).unwrap();
    assert!(log.starts_with("epoch=1 loss="), "{log}");
    assert_eq!(log.lines().count(), 1);
}

#[test]
fn best_epoch_is_the_dev_minimum() {
    let (net, reg) = pretrained();
    let (tr, dv, _) = pools(0.6, 14);
    let r = adapt(
        &net,
        &reg,
        Regime::new(TuningMode::B, true),
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &hp(6),
        1,
        None,
    )
    .unwrap();
    let min = r
        .history
        .iter()
        .map(|h| h.dev_eer)
        .fold(f64::INFINITY, f64::min);
    let first = r.history.iter().position(|h| h.dev_eer == min).unwrap();
    assert_eq!(r.best_epoch, first + 1);
    assert_eq!(evaluate(&net, &r.best_registry, &dv).unwrap().eer, min);
    assert!(r.history[r.best_epoch - 1].loss <= r.history[0].loss);
}

#[test]
fn zero_last_layer_gives_chance_eer_and_evaluate_is_pure() {
    let (net, mut reg) = pretrained();
    let (_, _, ev) = pools(0.0, 15);
    let before = reg.clone();
    let a = evaluate(&net, &reg, &ev).unwrap();
    let b = evaluate(&net, &reg, &ev).unwrap();
    assert_eq!(a, b);
    assert!(reg.bit_eq(&before));
    for p in reg
        .entries_mut()
        .iter_mut()
        .filter(|p| p.group == ParamGroup::BackendLast)
    {
        p.value = Tensor::zeros(p.value.shape());
    }
    assert_eq!(evaluate(&net, &reg, &ev).unwrap().eer, 0.5);
    let one_class = synth_generate(&DomainConfig::source(256), 4, 0, 0).unwrap();
    assert!(matches!(
        evaluate(&net, &reg, &one_class),
        Err(Error::SingleClass { .. })
    ));
}

#[test]
fn class_weights_raise_the_minority_gradient_share() {
    let (net, reg) = pretrained();
    let ds = synth_generate(&DomainConfig::source(256), 2, 18, 21).unwrap();
    let xs: Vec<Tensor> = ds
        .waveforms()
        .iter()
        .map(|w| net.features(&reg, w, Stage::Hidden).unwrap())
        .collect();
    let xs: Vec<&Tensor> = xs.iter().collect();
    let labels = ds.labels();
    let trainable = trainable_params(&reg, TuningMode::B, false).unwrap();
    let grad = |w: (f64, f64)| {
        let (_, g) = net
            .loss_and_grads(&reg, &trainable, Stage::Hidden, &xs, &labels, w)
            .unwrap();
        g.params
            .into_iter()
            .flatten()
            .flat_map(|t| t.data().to_vec())
            .collect::<Vec<f64>>()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let g_real = grad((1.0, 0.0));
    let g_fake = grad((0.0, 1.0));

    let mut last = 0.0;
    for beta in [0.0, 0.9, 0.999] {
        let w = class_balanced_weights(
            ClassCounts {
                n_real: 2,
                n_fake: 18,
            },
            beta,
        )
        .unwrap();
        let combined = grad(w);
        for ((c, r), f) in combined.iter().zip(&g_real).zip(&g_fake) {
            assert!((c - (w.0 * r + w.1 * f)).abs() < 1e-12);
        }
        let share = w.0 * norm(&g_real) / (w.0 * norm(&g_real) + w.1 * norm(&g_fake));
        assert!(share > last, "beta {beta}: {share} <= {last}");
        last = share;
    }
}

#[test]
fn nan_gradient_names_the_parameter() {
    let (_, mut reg) = build_model(&tiny_model(), 0).unwrap();
    let trainable = trainable_params(&reg, TuningMode::B, false).unwrap();
    let mut state = AdamState::new(&reg, &trainable);
    let params = reg
        .entries()
        .iter()
        .map(|p| {
            (p.group == ParamGroup::BackendLast).then(|| {
                let mut t = Tensor::zeros(p.value.shape());
                if p.name.ends_with("bias") {
                    t.data_mut()[0] = f64::NAN;
                }
                t
            })
        })
        .collect();
    let grads = ParamGrads {
        params,
        prompt: None,
    };
    let before = reg.clone();
    match adam_step(&mut reg, &grads, &mut state, 1e-3, 0.0) {
        Err(Error::NanGradient(name)) => assert_eq!(name, "backend.last.bias"),
        other => panic!("expected NanGradient, got {other:?}"),
    }
    assert!(reg.bit_eq(&before));
}

#[test]
fn zero_shift_target_matches_source_eval() {
    let model = ModelConfig::default();
    let src = DomainConfig::source(model.delta);
    let pool = synth_generate(&src, 200, 400, 31).unwrap();
    let (tr, dv, _) = split(&pool, (0.6, 0.2, 0.2), 32).unwrap();
    let pre = Hyperparams {
        eta: 3e-3,
        batch: 16,
        beta: 0.0,
        n_p: 0,
        epochs: 12,
        ..Hyperparams::default()
    };
    let (net, r) = pretrain_source(
        &model,
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &pre,
        33,
        None,
    )
    .unwrap();
    let held_out = synth_generate(&src, 300, 600, 34).unwrap();
    let source = evaluate(&net, &r.best_registry, &held_out).unwrap().eer;
    let target_cfg = DomainConfig::shifted(&src, GapSet::ALL, 0.0).unwrap();
    let target = synth_generate(&target_cfg, 300, 600, 35).unwrap();
    let target = evaluate(&net, &r.best_registry, &target).unwrap().eer;
    assert!(
        (target - source).abs() <= 0.02,
        "source {source} target {target}"
    );
}
