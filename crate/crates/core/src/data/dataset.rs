use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::label::Label;
use crate::lossmetrics::ClassCounts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Eval => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Dev),
            2 => Some(Split::Eval),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub waveform: Vec<f64>,
    pub label: Label,
}

/// Fixed-length labeled waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    delta: usize,
    split: Split,
    samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(delta: usize, split: Split, samples: Vec<Sample>) -> Result<Self> {
        if delta == 0 {
            return Err(Error::InvalidArgument(
                "waveform length must be positive".into(),
            ));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| s.waveform.len() != delta)
        {
            return Err(Error::InvalidArgument(format!(
                "sample {i} has {} samples, dataset length is {delta}",
                s.waveform.len()
            )));
        }
        Ok(Self {
            delta,
            split,
            samples,
        })
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn waveforms(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.waveform.as_slice()).collect()
    }

    pub fn class_counts(&self) -> ClassCounts {
        ClassCounts::from_labels(self.samples.iter().map(|s| &s.label))
    }

    fn indices_of(&self, label: Label) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect()
    }

    fn pick(&self, split: Split, idx: &[usize]) -> Self {
        Self {
            delta: self.delta,
            split,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// Integer allocation of `total` proportional to `weights`: floors first,
/// leftover units go to the largest fractional remainders (earlier entry
/// wins ties).
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Stratified subsample of exactly `size` items that keeps the real:fake
/// ratio (largest-remainder rounding). A request for 10 items returns a
/// balanced 5/5 set instead.
pub fn subsample_target(ds: &LabeledDataset, size: usize, seed: u64) -> Result<LabeledDataset> {
    if size < 2 || size > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "subsample size {size} must lie in [2, {}]",
            ds.len()
        )));
    }
    let mut real = ds.indices_of(Label::Real);
    let mut fake = ds.indices_of(Label::Fake);
    if real.is_empty() || fake.is_empty() {
        return Err(Error::SingleClass {
            n_real: real.len(),
            n_fake: fake.len(),
        });
    }
    let (n_real, n_fake) = if size == 10 {
        if real.len() < 5 || fake.len() < 5 {
            return Err(Error::InvalidArgument(format!(
                "balanced 10-sample subset needs 5 per class, have {} real / {} fake",
                real.len(),
                fake.len()
            )));
        }
        (5, 5)
    } else {
        let alloc = largest_remainder(size, &[real.len() as f64, fake.len() as f64]);
        (alloc[0], alloc[1])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    real.shuffle(&mut rng);
    fake.shuffle(&mut rng);
    let mut chosen: Vec<usize> = real[..n_real]
        .iter()
        .chain(&fake[..n_fake])
        .copied()
        .collect();
    chosen.shuffle(&mut rng);
    Ok(ds.pick(ds.split, &chosen))
}

/// Stratified random partition into train/dev/eval.
pub fn split(
    ds: &LabeledDataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(x > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for label in [Label::Real, Label::Fake] {
        let mut idx = ds.indices_of(label);
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let alloc = largest_remainder(idx.len(), &f);
        let mut start = 0;
        for (part, n) in parts.iter_mut().zip(alloc) {
            part.extend_from_slice(&idx[start..start + n]);
            start += n;
        }
    }
    let names = ["train", "dev", "eval"];
    for (part, name) in parts.iter_mut().zip(names) {
        if part.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{name} split would be empty for a dataset of {}",
                ds.len()
            )));
        }
        part.shuffle(&mut rng);
    }
    Ok((
        ds.pick(Split::Train, &parts[0]),
        ds.pick(Split::Dev, &parts[1]),
        ds.pick(Split::Eval, &parts[2]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_real: usize, n_fake: usize) -> LabeledDataset {
        let samples = (0..n_real + n_fake)
            .map(|i| Sample {
                waveform: vec![i as f64; 4],
                label: if i < n_real { Label::Real } else { Label::Fake },
            })
            .collect();
        LabeledDataset::new(4, Split::Train, samples).unwrap()
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(50, &[1676.0, 14788.0]), vec![5, 45]);
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(100, &[0.6, 0.2, 0.2]), vec![60, 20, 20]);
    }

    #[test]
    fn ten_is_balanced() {
        let ds = toy(7, 80);
        let s = subsample_target(&ds, 10, 3).unwrap();
        let c = s.class_counts();
        assert_eq!((c.n_real, c.n_fake), (5, 5));
        assert!(subsample_target(&toy(4, 80), 10, 3).is_err());
    }

    #[test]
    fn asvspoof_like_ratio() {
        let ds = toy(1676, 14788);
        let s = subsample_target(&ds, 50, 1).unwrap();
        let c = s.class_counts();
        assert_eq!((c.n_real, c.n_fake), (5, 45));
    }

    #[test]
    fn full_size_is_a_permutation() {
        let ds = toy(6, 9);
        let s = subsample_target(&ds, 15, 8).unwrap();
        let mut a: Vec<_> = ds.samples().iter().map(|s| s.waveform[0] as i64).collect();
        let mut b: Vec<_> = s.samples().iter().map(|s| s.waveform[0] as i64).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_errors() {
        assert!(subsample_target(&toy(0, 20), 5, 0).is_err());
        assert!(subsample_target(&toy(5, 5), 11, 0).is_err());
        assert!(subsample_target(&toy(5, 5), 1, 0).is_err());
    }

    #[test]
    fn balanced_split_counts() {
        let ds = toy(50, 50);
        let (tr, dv, ev) = split(&ds, (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!((tr.len(), dv.len(), ev.len()), (60, 20, 20));
        for (part, n) in [(&tr, 30), (&dv, 10), (&ev, 10)] {
            let c = part.class_counts();
            assert_eq!((c.n_real, c.n_fake), (n, n));
        }
        assert_eq!(tr.split(), Split::Train);
        assert_eq!(ev.split(), Split::Eval);
    }

    #[test]
    fn split_preconditions() {
        let ds = toy(50, 50);
        assert!(split(&ds, (1.0, 0.0, 0.0), 0).is_err());
        assert!(split(&ds, (0.5, 0.2, 0.2), 0).is_err());
        assert!(split(&toy(1, 0), (0.6, 0.2, 0.2), 0).is_err());
    }
}
