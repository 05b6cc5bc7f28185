use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::Histogram;

/// Floor applied to model bin probabilities before renormalization.
pub const KL_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlOutcome<T> {
    pub value: T,
    /// Bins where the empirical side has mass but the model had (below-floor)
    /// zero probability before flooring.
    pub floored_bins: usize,
}

/// `Σ p·ln(p/q)` over a shared bin grid with `0·ln(0/q) = 0`. `q` is floored
/// at [`KL_EPS`] and renormalized first.
pub fn kl_divergence_probs<T: Scalar>(p: &[T], q: &[T]) -> Result<KlOutcome<T>> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} bins", p.len(), q.len())));
    }
    let eps = T::cst(KL_EPS);
    let mut floored_bins = 0;
    let mut q_total = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > T::zero() && qi < eps {
            floored_bins += 1;
        }
        q_total += qi.max(eps);
    }
    let mut value = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > T::zero() {
            let qf = qi.max(eps) / q_total;
            value += pi * (pi / qf).ln();
        }
    }
    Ok(KlOutcome {
        value: value.max(T::zero()),
        floored_bins,
    })
}

/// KL divergence from an empirical histogram to discretized model bin
/// probabilities.
pub fn kl_divergence<T: Scalar>(p: &Histogram, q: &[T]) -> Result<KlOutcome<T>> {
    if p.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let probs: Vec<T> = p.normalized().into_iter().map(T::cst).collect();
    kl_divergence_probs(&probs, q)
}
