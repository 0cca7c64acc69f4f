use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::{adam_step, AdamState};
use super::Hyperparams;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::lossmetrics::{class_balanced_weights, compute_eer, EerReport};
use crate::model::{
    build_model, init_prompt, trainable_params, ModelConfig, Network, ParamRegistry, Regime, Stage,
    TrainableSet, TuningMode,
};
use crate::numerics::Tensor;

/// Train and dev sets for one training session.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a LabeledDataset,
    pub dev: &'a LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub dev_eer: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptResult {
    /// Registry of the epoch with the lowest dev EER (earliest on ties).
    pub best_registry: ParamRegistry,
    pub best_epoch: usize,
    pub best_dev_eer: f64,
    pub history: Vec<EpochStats>,
    pub seed: u64,
}

/// Earliest stage whose prefix is frozen for `trainable`.
fn cache_stage(mode: TuningMode, with_prompt: bool) -> Stage {
    match (mode, with_prompt) {
        (TuningMode::C, _) => Stage::Waveform,
        (_, true) => Stage::Tokens,
        (_, false) => Stage::Hidden,
    }
}

fn features(
    net: &Network,
    reg: &ParamRegistry,
    ds: &LabeledDataset,
    stage: Stage,
) -> Result<Vec<Tensor>> {
    ds.samples()
        .iter()
        .map(|s| net.features(reg, &s.waveform, stage))
        .collect()
}

fn scores_from(
    net: &Network,
    reg: &ParamRegistry,
    stage: Stage,
    inputs: &[Tensor],
) -> Result<Vec<f64>> {
    inputs
        .iter()
        .map(|x| net.logits_from(reg, stage, x).map(|l| l.score()))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    net: &Network,
    mut reg: ParamRegistry,
    trainable: &TrainableSet,
    stage: Stage,
    data: TrainData<'_>,
    hp: &Hyperparams,
    seed: u64,
    log: Option<&mut (dyn Write + '_)>,
) -> Result<AdaptResult> {
    hp.validate()?;
    if data.train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let counts = data.train.class_counts();
    if counts.n_real == 0 || counts.n_fake == 0 {
        return Err(Error::SingleClass {
            n_real: counts.n_real,
            n_fake: counts.n_fake,
        });
    }
    let weights = class_balanced_weights(counts, hp.beta)?;
    let train_x = features(net, &reg, data.train, stage)?;
    let train_y = data.train.labels();
    let dev_x = features(net, &reg, data.dev, stage)?;
    let dev_y = data.dev.labels();

    let mut log = log;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = AdamState::new(&reg, trainable);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = Vec::with_capacity(hp.epochs);
    let mut best: Option<(usize, f64, ParamRegistry)> = None;

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(hp.batch) {
            let xs: Vec<&Tensor> = chunk.iter().map(|&i| &train_x[i]).collect();
            let ys: Vec<Label> = chunk.iter().map(|&i| train_y[i]).collect();
            let (loss, grads) = match net.loss_and_grads(&reg, trainable, stage, &xs, &ys, weights)
            {
                Ok(r) => r,
                Err(Error::NonFinite(_)) => {
                    return Err(Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            adam_step(&mut reg, &grads, &mut state, hp.eta, hp.lambda)?;
            total += loss * chunk.len() as f64;
        }
        let loss = total / order.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        let dev_eer = match scores_from(net, &reg, stage, &dev_x) {
            Ok(s) => compute_eer(&s, &dev_y)?.eer,
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss }),
            Err(e) => return Err(e),
        };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "epoch={epoch} loss={loss:.6} dev_eer={dev_eer:.6}")?;
        }
        history.push(EpochStats { loss, dev_eer });
        if best.as_ref().is_none_or(|b| dev_eer < b.1) {
            best = Some((epoch, dev_eer, reg.clone()));
        }
    }
    let (best_epoch, best_dev_eer, best_registry) = best.expect("epochs >= 1");
    Ok(AdaptResult {
        best_registry,
        best_epoch,
        best_dev_eer,
        history,
        seed,
    })
}

/// Trains a freshly initialized detector on source data with every network
/// parameter trainable and no prompt.
pub fn pretrain_source(
    config: &ModelConfig,
    data: TrainData<'_>,
    hp: &Hyperparams,
    seed: u64,
    log: Option<&mut (dyn Write + '_)>,
) -> Result<(Network, AdaptResult)> {
    let (net, reg) = build_model(config, seed)?;
    let trainable = trainable_params(&reg, TuningMode::C, false)?;
    let result = train_loop(&net, reg, &trainable, Stage::Waveform, data, hp, seed, log)?;
    Ok((net, result))
}

/// Registry adapt starts from for `regime`: prompts are stripped for no-prompt
/// regimes and initialized from target token statistics otherwise (an
/// existing prompt of the right length is kept).
pub fn prepare_registry(
    net: &Network,
    pretrained: &ParamRegistry,
    regime: Regime,
    train: &LabeledDataset,
    n_p: usize,
    seed: u64,
) -> Result<ParamRegistry> {
    if !regime.with_prompt {
        return Ok(pretrained.without_prompt());
    }
    if n_p == 0 {
        return Err(Error::config("n_p", "prompted regimes need n_p >= 1"));
    }
    if let Some(p) = pretrained.prompt() {
        if p.n_p() == n_p {
            return Ok(pretrained.clone());
        }
    }
    let mut reg = pretrained.without_prompt();
    let (mean, std) = net.token_stats(&reg, &train.waveforms())?;
    reg.set_prompt(init_prompt(net.config().d, n_p, mean, std, seed)?);
    Ok(reg)
}

/// Test-time adaptation on labeled target data. Only the parameters selected
/// by `regime` change; everything else is bitwise preserved.
pub fn adapt(
    net: &Network,
    pretrained: &ParamRegistry,
    regime: Regime,
    data: TrainData<'_>,
    hp: &Hyperparams,
    seed: u64,
    log: Option<&mut (dyn Write + '_)>,
) -> Result<AdaptResult> {
    if regime.mode == TuningMode::A && !regime.with_prompt {
        return Err(Error::InvalidArgument(
            "mode A without a prompt has no trainable parameters".into(),
        ));
    }
    if data.train.is_empty() {
        return Err(Error::InvalidArgument(
            "target training set is empty".into(),
        ));
    }
    let reg = prepare_registry(net, pretrained, regime, data.train, hp.n_p, seed)?;
    let trainable = trainable_params(&reg, regime.mode, regime.with_prompt)?;
    let stage = cache_stage(regime.mode, regime.with_prompt);
    train_loop(net, reg, &trainable, stage, data, hp, seed, log)
}

/// Scores every sample and computes the EER.
pub fn evaluate(net: &Network, reg: &ParamRegistry, ds: &LabeledDataset) -> Result<EerReport> {
    let counts = ds.class_counts();
    if counts.n_real == 0 || counts.n_fake == 0 {
        return Err(Error::SingleClass {
            n_real: counts.n_real,
            n_fake: counts.n_fake,
        });
    }
    let scores = ds
        .samples()
        .iter()
        .map(|s| net.forward_model(reg, &s.waveform).map(|l| l.score()))
        .collect::<Result<Vec<_>>>()?;
    compute_eer(&scores, &ds.labels())
}
