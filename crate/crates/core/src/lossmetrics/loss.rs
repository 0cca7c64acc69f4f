use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::Logits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub n_real: usize,
    pub n_fake: usize,
}

impl ClassCounts {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut c = ClassCounts {
            n_real: 0,
            n_fake: 0,
        };
        for l in labels {
            match l {
                Label::Real => c.n_real += 1,
                Label::Fake => c.n_fake += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.n_real + self.n_fake
    }
}

/// Effective-number class weights `(1 - beta) / (1 - beta^n_y)` for
/// `(Real, Fake)`. `beta = 0` gives unit weights; `beta -> 1` approaches
/// inverse class frequency.
pub fn class_balanced_weights(counts: ClassCounts, beta: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    if counts.n_real == 0 || counts.n_fake == 0 {
        return Err(Error::InvalidArgument(format!(
            "class-balanced weights need both classes, got {} real / {} fake",
            counts.n_real, counts.n_fake
        )));
    }
    let w = |n: usize| -> f64 {
        let n = i32::try_from(n).unwrap_or(i32::MAX);
        (1.0 - beta) / (1.0 - beta.powi(n))
    };
    Ok((w(counts.n_real), w(counts.n_fake)))
}

/// Mean over the batch of `w_y * -log softmax(logits)[y]`, computed with a
/// log-sum-exp shift.
pub fn cb_cross_entropy(logits: &[Logits], labels: &[Label], weights: (f64, f64)) -> Result<f64> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "loss needs matching non-empty logits/labels, got {}/{}",
            logits.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (z, y) in logits.iter().zip(labels) {
        let m = z.real.max(z.fake);
        let lse = m + ((z.real - m).exp() + (z.fake - m).exp()).ln();
        let (target, w) = match y {
            Label::Real => (z.real, weights.0),
            Label::Fake => (z.fake, weights.1),
        };
        total += w * (lse - target);
    }
    let loss = total / logits.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite("class-balanced cross-entropy".into()));
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn counts(n_real: usize, n_fake: usize) -> ClassCounts {
        ClassCounts { n_real, n_fake }
    }

    #[test]
    fn beta_zero_gives_unit_weights() {
        assert_eq!(
            class_balanced_weights(counts(3, 300), 0.0).unwrap(),
            (1.0, 1.0)
        );
    }

    #[test]
    fn single_sample_class_has_unit_weight() {
        for beta in [0.5, 0.99, 0.999, 0.9999] {
            let (w, _) = class_balanced_weights(counts(1, 10), beta).unwrap();
            assert_eq!(w, 1.0);
        }
    }

    #[test]
    fn two_samples_at_099() {
        // geometric series: (1 - b) / (1 - b^2) = 1 / (1 + b)
        let (w, _) = class_balanced_weights(counts(2, 5), 0.99).unwrap();
        assert!((w - 1.0 / 1.99).abs() < 1e-12);
        assert!((w - 0.502_512_562_814_070_3).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(class_balanced_weights(counts(2, 2), 1.0).is_err());
        assert!(class_balanced_weights(counts(2, 2), -0.1).is_err());
        assert!(class_balanced_weights(counts(0, 2), 0.9).is_err());
    }

    #[test]
    fn weights_decrease_with_count() {
        for beta in [0.1f64, 0.9, 0.99, 0.9999] {
            let mut prev = f64::INFINITY;
            // beyond this beta^n vanishes against 1 in f64
            for n in (1..200).take_while(|&n| beta.powi(n as i32) > 1e-12) {
                let (w, _) = class_balanced_weights(counts(n, 1), beta).unwrap();
                assert!(w < prev, "beta {beta} n {n}");
                prev = w;
            }
        }
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        let z = [Logits {
            real: 0.0,
            fake: 0.0,
        }; 3];
        let l = cb_cross_entropy(&z, &[Label::Real, Label::Fake, Label::Fake], (1.0, 1.0)).unwrap();
        assert!((l - LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let z = [Logits {
            real: 0.0,
            fake: 20.0,
        }];
        assert!(cb_cross_entropy(&z, &[Label::Fake], (1.0, 1.0)).unwrap() < 1e-8);
        let z = [Logits {
            real: 1e6,
            fake: -1e6,
        }];
        assert_eq!(
            cb_cross_entropy(&z, &[Label::Real], (1.0, 1.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn weighted_pair() {
        let z = [Logits {
            real: 0.0,
            fake: 0.0,
        }; 2];
        let labels = [Label::Real, Label::Fake];
        let plain = cb_cross_entropy(&z, &labels, (1.0, 1.0)).unwrap();
        // (2 * ln2 + 1 * ln2) / 2
        let weighted = cb_cross_entropy(&z, &labels, (2.0, 1.0)).unwrap();
        assert!((weighted - 1.5 * plain).abs() < 1e-15);
        assert!((weighted - 1.5 * LN_2).abs() < 1e-15);
    }
}
