use crate::element::Element;
use crate::tensor::Tensor;

fn softplus<T: Element>(x: T) -> T {
    // log(1 + e^x) without overflow
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Element>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Mean binary cross-entropy of logits against a constant label, and its
/// gradient.
pub fn bce_with_logits<T: Element>(logits: &Tensor<T>, real: bool) -> (T, Tensor<T>) {
    let n = T::cst(logits.data.len() as f64);
    let mut loss = T::zero();
    let grad = logits.map(|x| {
        let t = if real { T::one() } else { T::zero() };
        (sigmoid(x) - t) / n
    });
    for &x in &logits.data {
        loss += if real { softplus(-x) } else { softplus(x) };
    }
    (loss / n, grad)
}

/// Mean squared error over all elements, and its gradient in `a`.
pub fn mse<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> (T, Tensor<T>) {
    assert_eq!(a.shape(), b.shape(), "mse operands");
    let n = T::cst(a.data.len() as f64);
    let mut loss = T::zero();
    let mut grad = a.clone();
    for (g, &y) in grad.data.iter_mut().zip(&b.data) {
        let d = *g - y;
        loss += d * d;
        *g = T::cst(2.0) * d / n;
    }
    (loss / n, grad)
}

/// `½ Σ (mu² + e^logvar − 1 − logvar)` per sample, averaged over the batch;
/// returns the value and its gradients in `mu` and `logvar`.
pub fn kl_standard_normal<T: Element>(mu: &Tensor<T>, logvar: &Tensor<T>) -> (T, Tensor<T>, Tensor<T>) {
    let n = T::cst(mu.n as f64);
    let half = T::cst(0.5);
    let mut loss = T::zero();
    for (&m, &lv) in mu.data.iter().zip(&logvar.data) {
        loss += half * (m * m + lv.exp() - T::one() - lv);
    }
    let dmu = mu.map(|m| m / n);
    let dlv = logvar.map(|lv| half * (lv.exp() - T::one()) / n);
    (loss / n, dmu, dlv)
}

/// `z = mu + exp(logvar / 2) ⊙ eps`.
pub fn reparameterize<T: Element>(mu: &[T], logvar: &[T], eps: &[T]) -> Vec<T> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv * T::cst(0.5)).exp() * e)
        .collect()
}
