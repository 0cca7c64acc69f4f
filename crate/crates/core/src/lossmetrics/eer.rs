use crate::error::{Error, Result};
use crate::label::Label;

/// Error rates at one decision threshold. A sample is called fake when its
/// score is `>= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub threshold: f64,
    /// Fraction of real samples scored `>= threshold`.
    pub far: f64,
    /// Fraction of fake samples scored `< threshold`.
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EerReport {
    pub eer: f64,
    pub threshold: f64,
    pub det: Vec<DetPoint>,
}

fn validate(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("detector score {s}")));
    }
    let n_fake = labels.iter().filter(|&&l| l == Label::Fake).count();
    let n_real = labels.len() - n_fake;
    if n_real == 0 || n_fake == 0 {
        return Err(Error::SingleClass { n_real, n_fake });
    }
    Ok((n_real, n_fake))
}

/// One DET point per distinct score (used as threshold, ascending), plus a
/// final point above every score where nothing is called fake.
///
/// Tied scores always fall on the same side of a threshold.
pub fn det_points(scores: &[f64], labels: &[Label]) -> Result<Vec<DetPoint>> {
    let (n_real, n_fake) = validate(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut points = Vec::new();
    let (mut real_below, mut fake_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        points.push(DetPoint {
            threshold: t,
            far: (n_real - real_below) as f64 / n_real as f64,
            frr: fake_below as f64 / n_fake as f64,
        });
        while i < order.len() && scores[order[i]] == t {
            match labels[order[i]] {
                Label::Real => real_below += 1,
                Label::Fake => fake_below += 1,
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate with linear interpolation between the two DET points
/// that bracket the FAR = FRR crossing.
pub fn compute_eer(scores: &[f64], labels: &[Label]) -> Result<EerReport> {
    let det = det_points(scores, labels)?;
    // FAR - FRR starts at +1 and ends at -1, non-increasing in between.
    let j = det
        .iter()
        .position(|p| p.far - p.frr <= 0.0)
        .expect("last DET point has FAR - FRR = -1");
    let (eer, threshold) = if det[j].far == det[j].frr || j == 0 {
        (det[j].far, det[j].threshold)
    } else {
        let (a, b) = (det[j - 1], det[j]);
        let da = a.far - a.frr;
        let db = b.far - b.frr;
        let lambda = da / (da - db);
        let eer = a.far + lambda * (b.far - a.far);
        let threshold = if b.threshold.is_finite() {
            a.threshold + lambda * (b.threshold - a.threshold)
        } else {
            a.threshold
        };
        (eer, threshold)
    };
    Ok(EerReport {
        eer,
        threshold,
        det,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn perfect_separation() {
        let r = compute_eer(&[0.1, 0.2, 0.8, 0.9], &[Real, Real, Fake, Fake]).unwrap();
        assert_eq!(r.eer, 0.0);
        assert!(r.det.iter().any(|p| p.far == 0.0 && p.frr == 0.0));
    }

    #[test]
    fn fully_inverted() {
        let r = compute_eer(&[0.9, 0.1], &[Real, Fake]).unwrap();
        assert_eq!(r.eer, 1.0);
    }

    #[test]
    fn half_overlap() {
        let r = compute_eer(&[0.1, 0.6, 0.4, 0.9], &[Real, Real, Fake, Fake]).unwrap();
        assert_eq!(r.eer, 0.5);
    }

    #[test]
    fn all_tied_scores_interpolate_to_half() {
        let r = compute_eer(&[0.3; 6], &[Real, Real, Fake, Fake, Fake, Real]).unwrap();
        assert_eq!(r.det.len(), 2);
        assert_eq!(r.eer, 0.5);
    }

    #[test]
    fn two_samples_three_points() {
        let det = det_points(&[0.2, 0.7], &[Real, Fake]).unwrap();
        let pairs: Vec<_> = det.iter().map(|p| (p.far, p.frr)).collect();
        assert_eq!(pairs, vec![(1.0, 0.0), (0.0, 0.0), (0.0, 1.0)]);
        let det = det_points(&[0.7, 0.2], &[Real, Fake]).unwrap();
        let pairs: Vec<_> = det.iter().map(|p| (p.far, p.frr)).collect();
        assert_eq!(pairs, vec![(1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            compute_eer(&[0.1, 0.2], &[Real, Real]),
            Err(Error::SingleClass {
                n_real: 2,
                n_fake: 0
            })
        ));
        assert!(compute_eer(&[f64::NAN, 0.2], &[Real, Fake]).is_err());
        assert!(compute_eer(&[0.1], &[Real, Fake]).is_err());
    }
}
