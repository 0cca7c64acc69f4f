//! Random search over adaptation hyperparameters with a real objective.

use padd::data::{split, synth_generate, DomainConfig, GapSet};
use padd::hpo::{search, SearchSpace};
use padd::model::{ConvLayer, ModelConfig, Regime};
use padd::trainer::{adapt, pretrain_source, Hyperparams, TrainData};

fn main() -> padd::Result<()> {
    let model = ModelConfig {
        d: 8,
        n_layers: 1,
        n_heads: 2,
        conv: vec![ConvLayer::new(16, 16, 8), ConvLayer::new(4, 4, 8)],
        head_hidden: 8,
        ff_hidden: 16,
        delta: 256,
    };
    let source = DomainConfig::source(model.delta);
    let (tr, dv, _) = split(&synth_generate(&source, 40, 40, 1)?, (0.6, 0.2, 0.2), 2)?;
    let pre_hp = Hyperparams {
        epochs: 5,
        ..Hyperparams::default()
    };
    let (net, pre) = pretrain_source(
        &model,
        TrainData {
            train: &tr,
            dev: &dv,
        },
        &pre_hp,
        3,
        None,
    )?;

    let target = DomainConfig::shifted(&source, GapSet::ALL, 0.6)?;
    let (ttr, tdv, _) = split(&synth_generate(&target, 20, 40, 4)?, (0.6, 0.2, 0.2), 5)?;
    let base = Hyperparams {
        epochs: 5,
        ..Hyperparams::default()
    };
    let regime: Regime = "B".parse()?;
    let found = search(
        &SearchSpace::desk(),
        12,
        &base,
        |hp, seed| {
            adapt(
                &net,
                &pre.best_registry,
                regime,
                TrainData {
                    train: &ttr,
                    dev: &tdv,
                },
                hp,
                seed,
                None,
            )
            .map(|r| r.best_dev_eer)
        },
        42,
    )?;
    print!("{}", found.trial_log());
    println!(
        "best trial {} dev EER {:.3}: {:?}",
        found.best_trial, found.best_dev_eer, found.best
    );
    Ok(())
}
