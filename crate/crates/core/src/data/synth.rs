//! Synthetic "speech-like" waveforms with controllable domain gaps.
//!
//! Real samples are harmonic sums whose partial phases drift smoothly, plus
//! Gaussian recording noise. Fake samples come from the same process and are
//! then corrupted by one artifact family before the noise is added.
//!
//! The three knobs of [`DomainConfig`] mirror the three kinds of gap between
//! a source and a target corpus: the artifact family (generation method),
//! the noise level (recording environment) and the fundamental-frequency
//! band (language / speaker population).

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Sample, Split};
use crate::error::{Error, Result};
use crate::label::Label;

const HARMONICS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    /// Amplitude quantized to a coarse grid (staircase waveform).
    HarmonicQuantization,
    /// Short clicks at a fixed period.
    PeriodicGlitch,
    /// Partial phases reset at segment boundaries.
    PhaseDiscontinuity,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 3] = [
        ArtifactKind::HarmonicQuantization,
        ArtifactKind::PeriodicGlitch,
        ArtifactKind::PhaseDiscontinuity,
    ];
}

/// Which gap components a shifted target exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSet {
    /// Generation method: target fakes use a different artifact family.
    pub generation: bool,
    /// Recording environment: target noise is louder.
    pub environment: bool,
    /// Language: target fundamental frequencies move up.
    pub language: bool,
}

impl GapSet {
    pub const ALL: GapSet = GapSet {
        generation: true,
        environment: true,
        language: true,
    };
}

/// One data-generating distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    pub delta: usize,
    /// Fundamental frequency band in cycles per sample.
    pub base_freq_range: (f64, f64),
    pub noise_level: f64,
    /// Artifact family of this domain's fakes.
    pub artifact_kind: ArtifactKind,
    /// Artifact amplitude in `(0, 1]`.
    pub artifact_strength: f64,
    /// Gap intensity relative to `reference_artifact`'s source domain.
    pub shift: f64,
    /// Source artifact family. When set, each fake uses `artifact_kind`
    /// with probability `shift` and this family otherwise.
    pub reference_artifact: Option<ArtifactKind>,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self::source(2048)
    }
}

impl DomainConfig {
    /// Reference source domain.
    pub fn source(delta: usize) -> Self {
        Self {
            delta,
            base_freq_range: (0.01, 0.02),
            noise_level: 0.05,
            artifact_kind: ArtifactKind::HarmonicQuantization,
            artifact_strength: 0.6,
            shift: 0.0,
            reference_artifact: None,
        }
    }

    /// Target domain at gap intensity `shift` from `source`. `shift = 0`
    /// returns `source` unchanged.
    pub fn shifted(source: &DomainConfig, gaps: GapSet, shift: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&shift) {
            return Err(Error::config(
                "shift",
                format!("must lie in [0, 1], got {shift}"),
            ));
        }
        if shift == 0.0 {
            return Ok(source.clone());
        }
        let mut t = source.clone();
        t.shift = shift;
        if gaps.language {
            let (lo, hi) = source.base_freq_range;
            let k = 1.0 + 1.5 * shift;
            t.base_freq_range = (lo * k, hi * k);
        }
        if gaps.environment {
            t.noise_level = source.noise_level + 0.1 * shift;
        }
        if gaps.generation {
            t.reference_artifact = Some(source.artifact_kind);
            t.artifact_kind = next_family(source.artifact_kind);
        }
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.base_freq_range;
        if self.delta < 16 {
            return Err(Error::config("delta", "must be at least 16 samples"));
        }
        if !(lo > 0.0 && lo < hi && hi < 0.5) {
            return Err(Error::config(
                "base_freq_range",
                format!("need 0 < lo < hi < 0.5, got ({lo}, {hi})"),
            ));
        }
        if !(self.noise_level >= 0.0) || !self.noise_level.is_finite() {
            return Err(Error::config("noise_level", "must be finite and >= 0"));
        }
        if !(self.artifact_strength > 0.0 && self.artifact_strength <= 1.0) {
            return Err(Error::config("artifact_strength", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.shift) {
            return Err(Error::config("shift", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn next_family(kind: ArtifactKind) -> ArtifactKind {
    match kind {
        ArtifactKind::HarmonicQuantization => ArtifactKind::PhaseDiscontinuity,
        ArtifactKind::PhaseDiscontinuity => ArtifactKind::PeriodicGlitch,
        ArtifactKind::PeriodicGlitch => ArtifactKind::HarmonicQuantization,
    }
}

struct Voice {
    f0: f64,
    amps: [f64; HARMONICS],
    phases: [f64; HARMONICS],
    drift_amp: [f64; HARMONICS],
    drift_rate: [f64; HARMONICS],
    drift_phase: [f64; HARMONICS],
}

impl Voice {
    fn draw(cfg: &DomainConfig, rng: &mut ChaCha8Rng) -> Self {
        let (lo, hi) = cfg.base_freq_range;
        let mut v = Voice {
            f0: rng.random_range(lo..hi),
            amps: [0.0; HARMONICS],
            phases: [0.0; HARMONICS],
            drift_amp: [0.0; HARMONICS],
            drift_rate: [0.0; HARMONICS],
            drift_phase: [0.0; HARMONICS],
        };
        for h in 0..HARMONICS {
            v.amps[h] = rng.random_range(0.5..1.0) / (h + 1) as f64;
            v.phases[h] = rng.random_range(0.0..TAU);
            v.drift_amp[h] = rng.random_range(0.5..2.0);
            v.drift_rate[h] = rng.random_range(0.5..2.0) / cfg.delta as f64;
            v.drift_phase[h] = rng.random_range(0.0..TAU);
        }
        v
    }

    /// Clean signal; `resets` adds a phase offset per partial from sample
    /// `start` onwards.
    fn render(&self, delta: usize, resets: &[(usize, [f64; HARMONICS])]) -> Vec<f64> {
        let mut out = vec![0.0; delta];
        let mut offset = [0.0; HARMONICS];
        let mut next = 0;
        for (t, o) in out.iter_mut().enumerate() {
            while next < resets.len() && resets[next].0 == t {
                for (o, j) in offset.iter_mut().zip(&resets[next].1) {
                    *o += j;
                }
                next += 1;
            }
            let tf = t as f64;
            *o = (0..HARMONICS)
                .map(|h| {
                    let drift = self.drift_amp[h]
                        * (TAU * self.drift_rate[h] * tf + self.drift_phase[h]).sin();
                    let phase =
                        TAU * (h + 1) as f64 * self.f0 * tf + self.phases[h] + drift + offset[h];
                    self.amps[h] * phase.sin()
                })
                .sum();
        }
        let rms = (out.iter().map(|v| v * v).sum::<f64>() / delta as f64).sqrt();
        for o in &mut out {
            *o /= rms;
        }
        out
    }
}

fn fake_waveform(
    cfg: &DomainConfig,
    kind: ArtifactKind,
    voice: &Voice,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let k = cfg.artifact_strength;
    match kind {
        ArtifactKind::HarmonicQuantization => {
            let step = 0.6 * k;
            voice
                .render(cfg.delta, &[])
                .into_iter()
                .map(|v| (v / step).round() * step)
                .collect()
        }
        ArtifactKind::PeriodicGlitch => {
            let mut x = voice.render(cfg.delta, &[]);
            let period = rng.random_range(48..160);
            let mut t = rng.random_range(0..period);
            while t + 3 < cfg.delta {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                for (j, w) in [1.0, -0.6, 0.3].iter().enumerate() {
                    x[t + j] += sign * 2.5 * k * w;
                }
                t += period;
            }
            x
        }
        ArtifactKind::PhaseDiscontinuity => {
            let seg = rng.random_range(96..256);
            let mut resets = Vec::new();
            let mut t = seg;
            while t < cfg.delta {
                let mut jump = [0.0; HARMONICS];
                for j in &mut jump {
                    *j = rng.random_range(0.5..(TAU - 0.5)) * k;
                }
                resets.push((t, jump));
                t += seg;
            }
            voice.render(cfg.delta, &resets)
        }
    }
}

/// Generates `n_real` real and `n_fake` fake waveforms (reals first),
/// deterministically from `seed`. The result is tagged as a train split.
pub fn synth_generate(
    cfg: &DomainConfig,
    n_real: usize,
    n_fake: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    if n_real + n_fake == 0 {
        return Err(Error::InvalidArgument(
            "cannot generate an empty dataset".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_level.max(f64::MIN_POSITIVE)).expect("finite std");
    let mut samples = Vec::with_capacity(n_real + n_fake);
    for i in 0..n_real + n_fake {
        let label = if i < n_real { Label::Real } else { Label::Fake };
        let voice = Voice::draw(cfg, &mut rng);
        let mut waveform = match label {
            Label::Real => voice.render(cfg.delta, &[]),
            Label::Fake => {
                let kind = match cfg.reference_artifact {
                    Some(reference) if !rng.random_bool(cfg.shift) => reference,
                    _ => cfg.artifact_kind,
                };
                fake_waveform(cfg, kind, &voice, &mut rng)
            }
        };
        if cfg.noise_level > 0.0 {
            for v in &mut waveform {
                *v += noise.sample(&mut rng);
            }
        }
        samples.push(Sample { waveform, label });
    }
    LabeledDataset::new(cfg.delta, Split::Train, samples)
}
