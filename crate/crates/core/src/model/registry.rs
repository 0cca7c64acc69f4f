use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Tuning region a network parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamGroup {
    Frontend,
    BackendHead,
    BackendLast,
}

impl ParamGroup {
    pub fn tag(self) -> u8 {
        match self {
            ParamGroup::Frontend => 0,
            ParamGroup::BackendHead => 1,
            ParamGroup::BackendLast => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ParamGroup::Frontend),
            1 => Some(ParamGroup::BackendHead),
            2 => Some(ParamGroup::BackendLast),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
}

/// Trainable `d x n_p` matrix; column `j` is the `j`-th prompt vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    values: Tensor,
}

impl Prompt {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::InvalidArgument(format!(
                "prompt must be a d x n_p matrix, got shape {:?}",
                values.shape()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor {
        &mut self.values
    }

    pub fn d(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_p(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn numel(&self) -> usize {
        self.values.numel()
    }
}

/// Draws a `d x n_p` prompt from `N(mean, std^2)`, deterministically in `seed`.
///
/// The statistics are meant to be those of the post-convolution token
/// activations, so the prompt starts out looking like the tokens it is
/// prepended to.
pub fn init_prompt(d: usize, n_p: usize, mean: f64, std: f64, seed: u64) -> Result<Prompt> {
    if n_p == 0 {
        return Err(Error::InvalidArgument(
            "prompt length must be positive".into(),
        ));
    }
    if d == 0 {
        return Err(Error::InvalidArgument(
            "prompt dimension must be positive".into(),
        ));
    }
    if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prompt init needs finite mean and std >= 0, got ({mean}, {std})"
        )));
    }
    let data = if std == 0.0 {
        vec![mean; d * n_p]
    } else {
        let normal = Normal::new(mean, std).expect("std checked above");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d * n_p).map(|_| normal.sample(&mut rng)).collect()
    };
    Prompt::new(Tensor::matrix(d, n_p, data)?)
}

/// Prepends prompt columns (as rows) to a `[len, d]` token matrix.
pub fn inject_prompt(tokens: &Tensor, prompt: &Prompt) -> Result<Tensor> {
    let (len, d) = tokens.dims2().ok_or_else(|| Error::ShapeMismatch {
        op: "inject_prompt",
        lhs: tokens.shape().to_vec(),
        rhs: vec![],
    })?;
    if d != prompt.d() {
        return Err(Error::ShapeMismatch {
            op: "inject_prompt",
            lhs: tokens.shape().to_vec(),
            rhs: prompt.values().shape().to_vec(),
        });
    }
    let rows = prompt.values().transpose()?;
    let mut data = rows.into_data();
    data.extend_from_slice(tokens.data());
    Tensor::matrix(prompt.n_p() + len, d, data)
}

/// Named network parameters plus the optional prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamRegistry {
    entries: Vec<Param>,
    prompt: Option<Prompt>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        group: ParamGroup,
    ) -> Result<()> {
        let name = name.into();
        if name == super::checkpoint::PROMPT_NAME {
            return Err(Error::InvalidArgument(format!(
                "`{name}` is reserved for the prompt"
            )));
        }
        if self.index_of(&name).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate parameter `{name}`"
            )));
        }
        self.entries.push(Param { name, value, group });
        Ok(())
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn prompt(&self) -> Option<&Prompt> {
        self.prompt.as_ref()
    }

    pub fn prompt_mut(&mut self) -> Option<&mut Prompt> {
        self.prompt.as_mut()
    }

    pub fn set_prompt(&mut self, prompt: Prompt) {
        self.prompt = Some(prompt);
    }

    pub fn take_prompt(&mut self) -> Option<Prompt> {
        self.prompt.take()
    }

    /// Copy with the prompt removed.
    pub fn without_prompt(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            prompt: None,
        }
    }

    /// Total size of the network parameters (the prompt excluded).
    pub fn base_param_count(&self) -> u64 {
        self.entries.iter().map(|p| p.value.numel() as u64).sum()
    }

    pub fn group_param_count(&self, group: ParamGroup) -> u64 {
        self.entries
            .iter()
            .filter(|p| p.group == group)
            .map(|p| p.value.numel() as u64)
            .sum()
    }

    /// Hash of the bit patterns of every parameter in `groups`.
    pub fn fingerprint(&self, groups: &[ParamGroup]) -> u64 {
        let mut h = DefaultHasher::new();
        for p in self.entries.iter().filter(|p| groups.contains(&p.group)) {
            p.name.hash(&mut h);
            p.value.shape().hash(&mut h);
            for v in p.value.data() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn prompt_fingerprint(&self) -> Option<u64> {
        self.prompt.as_ref().map(|p| {
            let mut h = DefaultHasher::new();
            p.values().shape().hash(&mut h);
            for v in p.values().data() {
                v.to_bits().hash(&mut h);
            }
            h.finish()
        })
    }

    /// Bitwise equality of parameters and prompt.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.group == b.group && a.value.bit_eq(&b.value))
            && match (&self.prompt, &other.prompt) {
                (None, None) => true,
                (Some(a), Some(b)) => a.values().bit_eq(b.values()),
                _ => false,
            }
    }
}

/// Which parameters a fine-tuning regime updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TuningMode {
    /// Prompt only.
    A,
    /// Prompt and the final linear layer.
    B,
    /// Prompt and every network parameter.
    C,
}

impl TuningMode {
    pub fn groups(self) -> &'static [ParamGroup] {
        match self {
            TuningMode::A => &[],
            TuningMode::B => &[ParamGroup::BackendLast],
            TuningMode::C => &[
                ParamGroup::Frontend,
                ParamGroup::BackendHead,
                ParamGroup::BackendLast,
            ],
        }
    }
}

/// A tuning mode together with whether a prompt is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Regime {
    pub mode: TuningMode,
    pub with_prompt: bool,
}

impl Regime {
    pub const fn new(mode: TuningMode, with_prompt: bool) -> Self {
        Self { mode, with_prompt }
    }

    /// The six regimes in table order.
    pub fn all() -> [Regime; 6] {
        [
            Regime::new(TuningMode::A, false),
            Regime::new(TuningMode::A, true),
            Regime::new(TuningMode::B, false),
            Regime::new(TuningMode::B, true),
            Regime::new(TuningMode::C, false),
            Regime::new(TuningMode::C, true),
        ]
    }

    /// Mode A without a prompt trains nothing: it is zero-shot evaluation.
    pub fn is_zero_shot(self) -> bool {
        self.mode == TuningMode::A && !self.with_prompt
    }

    pub fn sort_key(self) -> (TuningMode, bool) {
        (self.mode, self.with_prompt)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.mode {
            TuningMode::A => "A",
            TuningMode::B => "B",
            TuningMode::C => "C",
        };
        if self.with_prompt {
            f.write_str(m)
        } else {
            write!(f, "{m}-noPT")
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (m, with_prompt) = match s.strip_suffix("-noPT") {
            Some(m) => (m, false),
            None => (s, true),
        };
        let mode = match m {
            "A" => TuningMode::A,
            "B" => TuningMode::B,
            "C" => TuningMode::C,
            _ => return Err(Error::InvalidArgument(format!("unknown regime `{s}`"))),
        };
        Ok(Regime::new(mode, with_prompt))
    }
}

impl Serialize for Regime {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-entry trainability mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainableSet {
    pub params: Vec<bool>,
    pub prompt: bool,
}

impl TrainableSet {
    pub fn is_trainable(&self, index: usize) -> bool {
        self.params[index]
    }

    pub fn any_network_param(&self) -> bool {
        self.params.iter().any(|&t| t)
    }

    /// Everything frozen; used for inference.
    pub fn frozen(registry: &ParamRegistry) -> Self {
        Self {
            params: vec![false; registry.len()],
            prompt: false,
        }
    }
}

/// Resolves which registry entries a regime updates.
pub fn trainable_params(
    registry: &ParamRegistry,
    mode: TuningMode,
    with_prompt: bool,
) -> Result<TrainableSet> {
    if mode == TuningMode::A && !with_prompt {
        return Err(Error::InvalidArgument(
            "mode A without a prompt has no trainable parameters".into(),
        ));
    }
    if with_prompt && registry.prompt().is_none() {
        return Err(Error::InvalidArgument(
            "regime requires a prompt but the registry has none".into(),
        ));
    }
    let groups = mode.groups();
    Ok(TrainableSet {
        params: registry
            .entries()
            .iter()
            .map(|p| groups.contains(&p.group))
            .collect(),
        prompt: with_prompt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCount {
    pub count: u64,
    /// `count` divided by the number of network parameters.
    pub ratio: f64,
}

/// Trainable-parameter count of a regime and its ratio to the base model.
pub fn count_params(
    registry: &ParamRegistry,
    mode: TuningMode,
    with_prompt: bool,
) -> Result<ParamCount> {
    let network: u64 = mode
        .groups()
        .iter()
        .map(|&g| registry.group_param_count(g))
        .sum();
    let prompt = if with_prompt {
        registry
            .prompt()
            .ok_or_else(|| {
                Error::InvalidArgument("regime requires a prompt but the registry has none".into())
            })?
            .numel() as u64
    } else {
        0
    };
    let count = network + prompt;
    let base = registry.base_param_count();
    let ratio = if base == 0 {
        0.0
    } else {
        count as f64 / base as f64
    };
    Ok(ParamCount { count, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ParamRegistry {
        let mut r = ParamRegistry::new();
        r.push("f", Tensor::zeros(&[3, 4]), ParamGroup::Frontend)
            .unwrap();
        r.push("h", Tensor::zeros(&[4, 2]), ParamGroup::BackendHead)
            .unwrap();
        r.push("w", Tensor::zeros(&[2, 2]), ParamGroup::BackendLast)
            .unwrap();
        r.push("b", Tensor::zeros(&[2]), ParamGroup::BackendLast)
            .unwrap();
        r
    }

    #[test]
    fn std_zero_prompt_is_constant() {
        let p = init_prompt(4, 3, 0.25, 0.0, 9).unwrap();
        assert!(p.values().data().iter().all(|&v| v == 0.25));
        assert_eq!(p.values().shape(), &[4, 3]);
    }

    #[test]
    fn prompt_size_matches_d_times_length() {
        let p = init_prompt(1024, 5, 0.0, 1.0, 1).unwrap();
        assert_eq!(p.numel(), 5120);
        assert!(init_prompt(8, 0, 0.0, 1.0, 1).is_err());
        assert!(init_prompt(8, 2, 0.0, -1.0, 1).is_err());
    }

    #[test]
    fn prompt_sample_statistics() {
        let p = init_prompt(100, 100, 0.7, 1.3, 42).unwrap();
        let n = p.numel() as f64;
        let mean = p.values().sum() / n;
        let var = p
            .values()
            .data()
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!((mean - 0.7).abs() < 0.05 * 0.7, "mean {mean}");
        assert!((var.sqrt() - 1.3).abs() < 0.05 * 1.3, "std {}", var.sqrt());
    }

    #[test]
    fn injection_prepends_prompt_rows() {
        let tokens = Tensor::matrix(7, 3, (0..21).map(f64::from).collect()).unwrap();
        let prompt = init_prompt(3, 5, 0.0, 1.0, 3).unwrap();
        let out = inject_prompt(&tokens, &prompt).unwrap();
        assert_eq!(out.shape(), &[12, 3]);
        assert_eq!(&out.data()[15..], tokens.data());
        for j in 0..5 {
            for i in 0..3 {
                assert_eq!(out.data()[j * 3 + i], prompt.values().data()[i * 5 + j]);
            }
        }
        let bad = init_prompt(4, 5, 0.0, 1.0, 3).unwrap();
        assert!(inject_prompt(&tokens, &bad).is_err());
    }

    #[test]
    fn trainable_sets_follow_modes() {
        let mut r = toy();
        assert!(trainable_params(&r, TuningMode::B, true).is_err());
        r.set_prompt(init_prompt(2, 5, 0.0, 1.0, 0).unwrap());

        let a = trainable_params(&r, TuningMode::A, true).unwrap();
        assert_eq!(a.params, vec![false; 4]);
        assert!(a.prompt);
        assert!(trainable_params(&r, TuningMode::A, false).is_err());

        let b = trainable_params(&r, TuningMode::B, false).unwrap();
        assert_eq!(b.params, vec![false, false, true, true]);
        assert!(!b.prompt);

        let c = trainable_params(&r, TuningMode::C, true).unwrap();
        assert_eq!(c.params, vec![true; 4]);
        assert!(c.prompt);
    }

    #[test]
    fn counts_and_identities() {
        let mut r = toy();
        r.set_prompt(init_prompt(2, 5, 0.0, 1.0, 0).unwrap());
        let a = count_params(&r, TuningMode::A, true).unwrap().count;
        let b0 = count_params(&r, TuningMode::B, false).unwrap().count;
        let b = count_params(&r, TuningMode::B, true).unwrap().count;
        let c0 = count_params(&r, TuningMode::C, false).unwrap();
        let c = count_params(&r, TuningMode::C, true).unwrap().count;
        assert_eq!((a, b0, b), (10, 6, 16));
        assert_eq!(c0.count, 26);
        assert_eq!(c0.ratio, 1.0);
        assert_eq!(c, 36);
    }

    #[test]
    fn duplicate_and_reserved_names_rejected() {
        let mut r = toy();
        assert!(r
            .push("f", Tensor::zeros(&[1]), ParamGroup::Frontend)
            .is_err());
        assert!(r
            .push("__prompt__", Tensor::zeros(&[1]), ParamGroup::Frontend)
            .is_err());
    }

    #[test]
    fn regime_labels_roundtrip() {
        for r in Regime::all() {
            assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        }
        assert_eq!(Regime::all()[0].to_string(), "A-noPT");
        assert!("D".parse::<Regime>().is_err());
    }
}
