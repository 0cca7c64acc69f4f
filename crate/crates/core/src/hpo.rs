//! Seeded random search over optimizer and loss hyperparameters.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::Hyperparams;

/// Header of the trial log.
pub const TRIAL_LOG_HEADER: &str = "trial,eta,lambda,batch,beta,dev_eer,seed";

/// Dev EER recorded for a trial whose objective failed.
pub const FAILED_TRIAL_EER: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Log-uniform learning-rate range.
    pub eta_range: (f64, f64),
    /// Log-uniform weight-decay range.
    pub lambda_range: (f64, f64),
    pub batch_choices: Vec<usize>,
    pub beta_choices: Vec<f64>,
}

const BATCHES: [usize; 3] = [4, 8, 16];
const BETAS: [f64; 3] = [0.99, 0.999, 0.9999];

impl SearchSpace {
    /// Ranges used for the 300M-parameter wav2vec-style detector.
    pub fn w2v() -> Self {
        Self {
            eta_range: (1e-6, 1e-4),
            lambda_range: (5e-6, 5e-4),
            batch_choices: BATCHES.to_vec(),
            beta_choices: BETAS.to_vec(),
        }
    }

    /// Ranges used for the Whisper-style detector.
    pub fn wsp() -> Self {
        Self {
            eta_range: (1e-7, 1e-5),
            lambda_range: (1e-5, 1e-3),
            batch_choices: BATCHES.to_vec(),
            beta_choices: BETAS.to_vec(),
        }
    }

    /// Learning rates suited to the small default detector, which needs
    /// far larger steps than a foundation model.
    pub fn desk() -> Self {
        Self {
            eta_range: (1e-3, 3e-2),
            lambda_range: (5e-6, 5e-4),
            batch_choices: BATCHES.to_vec(),
            beta_choices: BETAS.to_vec(),
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "w2v" => Ok(Self::w2v()),
            "wsp" => Ok(Self::wsp()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::config(
                "search",
                format!("unknown preset `{other}` (w2v, wsp, desk)"),
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, (lo, hi)) in [
            ("eta_range", self.eta_range),
            ("lambda_range", self.lambda_range),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("need 0 < lo < hi, got ({lo}, {hi})"),
                ));
            }
        }
        if self.batch_choices.is_empty() || self.batch_choices.contains(&0) {
            return Err(Error::config(
                "batch_choices",
                "must be non-empty and positive",
            ));
        }
        if self.beta_choices.is_empty() || self.beta_choices.iter().any(|b| !(0.0..1.0).contains(b))
        {
            return Err(Error::config(
                "beta_choices",
                "must be non-empty and inside [0, 1)",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, hp: &Hyperparams) -> bool {
        let inside = |(lo, hi): (f64, f64), v: f64| lo <= v && v <= hi;
        inside(self.eta_range, hp.eta)
            && inside(self.lambda_range, hp.lambda)
            && self.batch_choices.contains(&hp.batch)
            && self.beta_choices.contains(&hp.beta)
    }
}

/// SplitMix64 finalizer of `master` and `index`; used for every derived seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let u: f64 = rng.random();
    (a + u * (b - a)).exp().clamp(lo, hi)
}

/// Draws `eta` and `lambda` log-uniformly and `batch`, `beta` uniformly from
/// their choice sets. Other fields come from `base`.
pub fn sample_config(space: &SearchSpace, base: &Hyperparams, seed: u64) -> Hyperparams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eta = log_uniform(&mut rng, space.eta_range);
    let lambda = log_uniform(&mut rng, space.lambda_range);
    let batch = space.batch_choices[rng.random_range(0..space.batch_choices.len())];
    let beta = space.beta_choices[rng.random_range(0..space.beta_choices.len())];
    Hyperparams {
        eta,
        lambda,
        batch,
        beta,
        ..*base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub hp: Hyperparams,
    pub dev_eer: f64,
    pub seed: u64,
    /// Set when the objective returned an error; `dev_eer` is then
    /// [`FAILED_TRIAL_EER`].
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn log_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.trial,
            self.hp.eta,
            self.hp.lambda,
            self.hp.batch,
            self.hp.beta,
            self.dev_eer,
            self.seed
        )
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: Hyperparams,
    pub best_trial: usize,
    pub best_dev_eer: f64,
    pub trials: Vec<TrialRecord>,
}

impl SearchResult {
    /// Header plus one line per trial.
    pub fn trial_log(&self) -> String {
        let mut out = String::from(TRIAL_LOG_HEADER);
        out.push('\n');
        for t in &self.trials {
            let _ = writeln!(out, "{}", t.log_line());
        }
        out
    }
}

/// Evaluates `budget` sampled configurations and keeps the one with the
/// lowest dev EER (lowest trial index on ties). Trial `i` samples with
/// `derive_seed(master_seed, i)` and hands the same seed to the objective.
pub fn search<F>(
    space: &SearchSpace,
    budget: usize,
    base: &Hyperparams,
    mut objective: F,
    master_seed: u64,
) -> Result<SearchResult>
where
    F: FnMut(&Hyperparams, u64) -> Result<f64>,
{
    space.validate()?;
    if budget == 0 {
        return Err(Error::config("hpo_budget", "must be at least 1"));
    }
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(budget);
    let mut best: Option<usize> = None;
    for trial in 0..budget {
        let seed = derive_seed(master_seed, trial as u64);
        let hp = sample_config(space, base, seed);
        let (dev_eer, error) = match objective(&hp, seed) {
            Ok(e) if (0.0..=1.0).contains(&e) => (e, None),
            Ok(e) => (FAILED_TRIAL_EER, Some(format!("objective returned {e}"))),
            Err(e) => (FAILED_TRIAL_EER, Some(e.to_string())),
        };
        if error.is_none() && best.is_none_or(|b| dev_eer < trials[b].dev_eer) {
            best = Some(trial);
        }
        trials.push(TrialRecord {
            trial,
            hp,
            dev_eer,
            seed,
            error,
        });
    }
    let b = best.ok_or(Error::AllTrialsFailed)?;
    Ok(SearchResult {
        best: trials[b].hp,
        best_trial: b,
        best_dev_eer: trials[b].dev_eer,
        trials,
    })
}
