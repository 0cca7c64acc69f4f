//! Class-balanced cross-entropy and equal-error-rate evaluation.

mod eer;
mod loss;

pub use eer::{compute_eer, det_points, DetPoint, EerReport};
pub use loss::{cb_cross_entropy, class_balanced_weights, ClassCounts};
