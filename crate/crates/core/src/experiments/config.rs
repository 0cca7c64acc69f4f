use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DomainConfig, GapSet};
use crate::error::{Error, Result};
use crate::hpo::SearchSpace;
use crate::model::{ModelConfig, Regime, TuningMode};
use crate::trainer::Hyperparams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub domain: DomainConfig,
    pub n_real: usize,
    pub n_fake: usize,
}

/// A target corpus derived from the source domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    pub shift: f64,
    #[serde(default = "all_gaps")]
    pub gaps: GapSet,
    pub n_real: usize,
    pub n_fake: usize,
}

fn all_gaps() -> GapSet {
    GapSet::ALL
}

impl TargetSpec {
    pub fn domain(&self, source: &DomainConfig) -> Result<DomainConfig> {
        DomainConfig::shifted(source, self.gaps, self.shift)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub source: SourceSpec,
    pub targets: Vec<TargetSpec>,
    pub regimes: Vec<Regime>,
    /// Target training-set sizes.
    pub sizes: Vec<usize>,
    /// Prompt lengths tried by prompted regimes.
    pub prompt_lengths: Vec<usize>,
    pub n_seeds: usize,
    pub hpo_budget: usize,
    pub search: SearchSpace,
    /// Train/dev/eval fractions for every generated corpus.
    pub splits: (f64, f64, f64),
    pub pretrain: Hyperparams,
    /// Base adaptation settings; HPO overrides eta, lambda, batch and beta.
    pub adapt: Hyperparams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let domain = DomainConfig::source(model.delta);
        Self {
            seed: 0,
            model,
            source: SourceSpec {
                domain,
                n_real: 200,
                n_fake: 400,
            },
            targets: vec![TargetSpec {
                name: "shifted".into(),
                shift: 0.6,
                gaps: GapSet::ALL,
                n_real: 150,
                n_fake: 450,
            }],
            regimes: Regime::all().to_vec(),
            sizes: vec![50],
            prompt_lengths: vec![5],
            n_seeds: 12,
            hpo_budget: 50,
            search: SearchSpace::desk(),
            splits: (0.6, 0.2, 0.2),
            pretrain: Hyperparams {
                eta: 3e-3,
                lambda: 1e-4,
                batch: 16,
                beta: 0.0,
                n_p: 0,
                epochs: 12,
            },
            adapt: Hyperparams {
                eta: 1e-2,
                lambda: 1e-4,
                batch: 8,
                beta: 0.999,
                n_p: 5,
                epochs: 30,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Prompt-length sweep over N_P in {1, 5, 10, 100} for the prompted
    /// modes A, B and C.
    pub fn prompt_length_ablation(mut self) -> Self {
        self.prompt_lengths = vec![1, 5, 10, 100];
        self.regimes = [TuningMode::A, TuningMode::B, TuningMode::C]
            .into_iter()
            .map(|m| Regime::new(m, true))
            .collect();
        self
    }

    /// Training-set size sweep over {10, 50, 100, 1000}.
    pub fn sample_size_ablation(mut self) -> Self {
        self.sizes = vec![10, 50, 100, 1000];
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.source.domain.validate()?;
        if self.source.domain.delta != self.model.delta {
            return Err(Error::config(
                "source.domain.delta",
                format!(
                    "is {} but the model expects {}",
                    self.source.domain.delta, self.model.delta
                ),
            ));
        }
        if self.regimes.is_empty() {
            return Err(Error::config("regimes", "must not be empty"));
        }
        if self.n_seeds == 0 {
            return Err(Error::config("n_seeds", "must be at least 1"));
        }
        if self.hpo_budget == 0 {
            return Err(Error::config("hpo_budget", "must be at least 1"));
        }
        if self.targets.is_empty() {
            return Err(Error::config("targets", "must not be empty"));
        }
        let mut names = HashSet::new();
        for t in &self.targets {
            if t.name.is_empty()
                || !t
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(Error::config(
                    "targets.name",
                    format!("`{}` must be [A-Za-z0-9_-]+", t.name),
                ));
            }
            if !names.insert(&t.name) {
                return Err(Error::config(
                    "targets.name",
                    format!("duplicate target `{}`", t.name),
                ));
            }
            t.domain(&self.source.domain)?.validate()?;
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&s| s < 2) {
            return Err(Error::config(
                "sizes",
                "must be non-empty with every size >= 2",
            ));
        }
        if self.regimes.iter().any(|r| r.with_prompt)
            && (self.prompt_lengths.is_empty() || self.prompt_lengths.contains(&0))
        {
            return Err(Error::config(
                "prompt_lengths",
                "prompted regimes need lengths >= 1",
            ));
        }
        let (a, b, c) = self.splits;
        if [a, b, c].iter().any(|&f| !(f > 0.0)) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::config(
                "splits",
                "fractions must be positive and sum to 1",
            ));
        }
        self.search.validate()?;
        self.pretrain.validate()?;
        self.adapt.validate()?;
        Ok(())
    }
}
