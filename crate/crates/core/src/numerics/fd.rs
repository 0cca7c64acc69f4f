use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function of one tensor:
/// `(f(p + eps e_i) - f(p - eps e_i)) / (2 eps)` for every coordinate `i`.
pub fn finite_difference_grad<F>(mut f: F, p: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let mut probe = p.clone();
    let mut out = Tensor::zeros(p.shape());
    for i in 0..p.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        let g = (plus - minus) / (2.0 * eps);
        if !g.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite difference at coordinate {i}"
            )));
        }
        out.data_mut()[i] = g;
    }
    Ok(out)
}

/// Element-wise `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Largest [`relative_error`] over paired elements.
pub fn max_relative_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_relative_error: shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}
