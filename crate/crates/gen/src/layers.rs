//! Layers with explicit caches: `forward` returns the output together with
//! whatever `backward` needs, so one layer can be applied several times
//! before any gradient flows.

use rand_chacha::ChaCha8Rng;

use crate::element::{matmul, Element};
use crate::param::Param;
use crate::tensor::Tensor;

/// Output length of a strided convolution.
pub fn conv_out(size: usize, k: usize, s: usize, p: usize) -> usize {
    (size + 2 * p - k) / s + 1
}

/// Unfolds `x` (`c×h×w`) into `(c·k·k) × (ho·wo)` patches.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Element>(x: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, out: &mut [T]) {
    let (ho, wo) = (conv_out(h, k, s, p), conv_out(w, k, s, p));
    let cols = ho * wo;
    debug_assert_eq!(out.len(), c * k * k * cols);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut out[((ci * k + ki) * k + kj) * cols..][..cols];
                for oh in 0..ho {
                    let ih = (oh * s + ki) as isize - p as isize;
                    let dst = &mut row[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= h as isize {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * s + kj) as isize - p as isize;
                        *d = if iw < 0 || iw >= w as isize { T::zero() } else { src[iw as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patches back into `x` (`c×h×w`).
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Element>(cols_buf: &[T], c: usize, h: usize, w: usize, k: usize, s: usize, p: usize, x: &mut [T]) {
    let (ho, wo) = (conv_out(h, k, s, p), conv_out(w, k, s, p));
    let cols = ho * wo;
    debug_assert_eq!(cols_buf.len(), c * k * k * cols);
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &cols_buf[((ci * k + ki) * k + kj) * cols..][..cols];
                for oh in 0..ho {
                    let ih = (oh * s + ki) as isize - p as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * w..(ih as usize + 1) * w];
                    for (ow, &v) in row[oh * wo..(oh + 1) * wo].iter().enumerate() {
                        let iw = (ow * s + kj) as isize - p as isize;
                        if iw >= 0 && iw < w as isize {
                            dst[iw as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Element>(y: &mut [T], bias: &[T], plane: usize) {
    for (ch, &b) in y.chunks_mut(plane).zip(bias) {
        ch.iter_mut().for_each(|v| *v += b);
    }
}

fn acc_bias_grad<T: Element>(dy: &[T], grad: &mut [T], plane: usize) {
    for (ch, g) in dy.chunks(plane).zip(grad.iter_mut()) {
        *g += ch.iter().fold(T::zero(), |a, &b| a + b);
    }
}

/// Strided 2-D convolution with square kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvCache<T> {
    cols: Vec<Vec<T>>,
    in_shape: [usize; 4],
}

impl<T: Element> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Conv2d {
            weight: Param::normal(format!("{name}.weight"), &[cout, cin, k, k], 0.0, std, rng),
            bias: Param::filled(format!("{name}.bias"), &[cout], T::zero(), true),
            cin,
            cout,
            k,
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        assert_eq!(x.c, self.cin, "{}: input channels", self.weight.name);
        let (ho, wo) = (conv_out(x.h, self.k, self.stride, self.pad), conv_out(x.w, self.k, self.stride, self.pad));
        let kk = self.cin * self.k * self.k;
        let mut y = Tensor::zeros(x.n, self.cout, ho, wo);
        let mut cache = Vec::with_capacity(x.n);
        for i in 0..x.n {
            let mut cols = vec![T::zero(); kk * ho * wo];
            im2col(x.sample(i), x.c, x.h, x.w, self.k, self.stride, self.pad, &mut cols);
            let yi = y.sample_mut(i);
            matmul(&self.weight.value, false, &cols, false, yi, self.cout, kk, ho * wo, T::zero());
            add_bias(yi, &self.bias.value, ho * wo);
            cache.push(cols);
        }
        (y, ConvCache { cols: cache, in_shape: x.shape() })
    }

    pub fn backward(&mut self, cache: &ConvCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let [n, c, h, w] = cache.in_shape;
        let kk = c * self.k * self.k;
        let plane = dy.plane();
        let mut dx = Tensor::zeros(n, c, h, w);
        let mut dcols = vec![T::zero(); kk * plane];
        for i in 0..n {
            let dyi = dy.sample(i);
            matmul(dyi, false, &cache.cols[i], true, &mut self.weight.grad, self.cout, plane, kk, T::one());
            acc_bias_grad(dyi, &mut self.bias.grad, plane);
            matmul(&self.weight.value, true, dyi, false, &mut dcols, kk, self.cout, plane, T::zero());
            col2im(&dcols, c, h, w, self.k, self.stride, self.pad, dx.sample_mut(i));
        }
        dx
    }
}

/// Transposed convolution, the adjoint of [`Conv2d`]'s input map.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d<T> {
    /// Shape `[cin, cout, k, k]`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvTCache<T> {
    x: Tensor<T>,
}

impl<T: Element> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        ConvTranspose2d {
            weight: Param::normal(format!("{name}.weight"), &[cin, cout, k, k], 0.0, std, rng),
            bias: Param::filled(format!("{name}.bias"), &[cout], T::zero(), true),
            cin,
            cout,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.k - 2 * self.pad
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, ConvTCache<T>) {
        assert_eq!(x.c, self.cin, "{}: input channels", self.weight.name);
        let (ho, wo) = (self.out_size(x.h), self.out_size(x.w));
        let kk = self.cout * self.k * self.k;
        let mut y = Tensor::zeros(x.n, self.cout, ho, wo);
        let mut cols = vec![T::zero(); kk * x.plane()];
        for i in 0..x.n {
            matmul(&self.weight.value, true, x.sample(i), false, &mut cols, kk, self.cin, x.plane(), T::zero());
            let yi = y.sample_mut(i);
            col2im(&cols, self.cout, ho, wo, self.k, self.stride, self.pad, yi);
            add_bias(yi, &self.bias.value, ho * wo);
        }
        (y, ConvTCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &ConvTCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let x = &cache.x;
        let kk = self.cout * self.k * self.k;
        let plane = x.plane();
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut dcols = vec![T::zero(); kk * plane];
        for i in 0..x.n {
            let dyi = dy.sample(i);
            acc_bias_grad(dyi, &mut self.bias.grad, dy.plane());
            im2col(dyi, self.cout, dy.h, dy.w, self.k, self.stride, self.pad, &mut dcols);
            matmul(&self.weight.value, false, &dcols, false, dx.sample_mut(i), self.cin, kk, plane, T::zero());
            matmul(x.sample(i), false, &dcols, true, &mut self.weight.grad, self.cin, plane, kk, T::one());
        }
        dx
    }
}

/// Per-channel batch normalization over `(n, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    /// Batch mean, biased variance and element count in training mode.
    stats: Option<(Vec<T>, Vec<T>, usize)>,
}

impl<T: Element> BatchNorm2d<T> {
    pub fn new(name: &str, c: usize, rng: &mut ChaCha8Rng) -> Self {
        BatchNorm2d {
            gamma: Param::normal(format!("{name}.gamma"), &[c], 1.0, 0.02, rng),
            beta: Param::filled(format!("{name}.beta"), &[c], T::zero(), true),
            running_mean: Param::filled(format!("{name}.running_mean"), &[c], T::zero(), false),
            running_var: Param::filled(format!("{name}.running_var"), &[c], T::one(), false),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Batch statistics when `train`, running averages otherwise. The batch
    /// statistics travel in the cache; [`BatchNorm2d::update_running`] folds
    /// them into the running averages.
    pub fn forward(&self, x: &Tensor<T>, train: bool) -> (Tensor<T>, BnCache<T>) {
        let c = x.c;
        let plane = x.plane();
        let count = x.n * plane;
        let (mean, var): (Vec<T>, Vec<T>) = if train {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for i in 0..x.n {
                for (ch, m) in x.sample(i).chunks(plane).zip(mean.iter_mut()) {
                    *m += ch.iter().fold(T::zero(), |a, &b| a + b);
                }
            }
            let inv = T::one() / T::cst(count as f64);
            mean.iter_mut().for_each(|m| *m *= inv);
            for i in 0..x.n {
                for ((ch, v), &m) in x.sample(i).chunks(plane).zip(var.iter_mut()).zip(&mean) {
                    *v += ch.iter().fold(T::zero(), |a, &b| a + (b - m) * (b - m));
                }
            }
            var.iter_mut().for_each(|v| *v *= inv);
            (mean, var)
        } else {
            (self.running_mean.value.clone(), self.running_var.value.clone())
        };
        let eps = T::cst(self.eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Tensor::zeros(x.n, c, x.h, x.w);
        let mut y = Tensor::zeros(x.n, c, x.h, x.w);
        for i in 0..x.n {
            let xs = x.sample(i);
            let xh = xhat.sample_mut(i);
            for k in 0..c {
                for j in k * plane..(k + 1) * plane {
                    xh[j] = (xs[j] - mean[k]) * inv_std[k];
                }
            }
            let ys = y.sample_mut(i);
            for k in 0..c {
                let (g, b) = (self.gamma.value[k], self.beta.value[k]);
                for j in k * plane..(k + 1) * plane {
                    ys[j] = g * xhat.sample(i)[j] + b;
                }
            }
        }
        let stats = train.then(|| (mean, var, count));
        (
            y,
            BnCache {
                xhat,
                inv_std,
                stats,
            },
        )
    }

    /// Moves the running averages toward the batch statistics of a
    /// training-mode forward pass (unbiased variance).
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        let Some((mean, var, count)) = &cache.stats else { return };
        let mom = T::cst(self.momentum);
        let unbias = if *count > 1 { T::cst(*count as f64 / (*count as f64 - 1.0)) } else { T::one() };
        for k in 0..mean.len() {
            let rm = &mut self.running_mean.value[k];
            *rm = (T::one() - mom) * *rm + mom * mean[k];
            let rv = &mut self.running_var.value[k];
            *rv = (T::one() - mom) * *rv + mom * var[k] * unbias;
        }
    }

    pub fn backward(&mut self, cache: &BnCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let c = dy.c;
        let plane = dy.plane();
        let count = T::cst((dy.n * plane) as f64);
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for i in 0..dy.n {
            let (d, xh) = (dy.sample(i), cache.xhat.sample(i));
            for k in 0..c {
                for j in k * plane..(k + 1) * plane {
                    sum_dy[k] += d[j];
                    sum_dy_xhat[k] += d[j] * xh[j];
                }
            }
        }
        for k in 0..c {
            self.gamma.grad[k] += sum_dy_xhat[k];
            self.beta.grad[k] += sum_dy[k];
        }
        let mut dx = Tensor::zeros(dy.n, c, dy.h, dy.w);
        for i in 0..dy.n {
            let (d, xh) = (dy.sample(i), cache.xhat.sample(i));
            let out = dx.sample_mut(i);
            for k in 0..c {
                let scale = self.gamma.value[k] * cache.inv_std[k];
                if cache.stats.is_some() {
                    let (m1, m2) = (sum_dy[k] / count, sum_dy_xhat[k] / count);
                    for j in k * plane..(k + 1) * plane {
                        out[j] = scale * (d[j] - m1 - xh[j] * m2);
                    }
                } else {
                    for j in k * plane..(k + 1) * plane {
                        out[j] = scale * d[j];
                    }
                }
            }
        }
        dx
    }
}

/// Fully connected layer on `n × in × 1 × 1` tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// Shape `[out, in]`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub fin: usize,
    pub fout: usize,
}

pub struct LinearCache<T> {
    x: Tensor<T>,
}

impl<T: Element> Linear<T> {
    pub fn new(name: &str, fin: usize, fout: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: Param::normal(format!("{name}.weight"), &[fout, fin], 0.0, std, rng),
            bias: Param::filled(format!("{name}.bias"), &[fout], T::zero(), true),
            fin,
            fout,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, LinearCache<T>) {
        assert_eq!(x.sample_len(), self.fin, "{}: input features", self.weight.name);
        let mut y = Tensor::zeros(x.n, self.fout, 1, 1);
        matmul(&x.data, false, &self.weight.value, true, &mut y.data, x.n, self.fin, self.fout, T::zero());
        for i in 0..x.n {
            for (v, &b) in y.sample_mut(i).iter_mut().zip(&self.bias.value) {
                *v += b;
            }
        }
        (y, LinearCache { x: x.clone() })
    }

    pub fn backward(&mut self, cache: &LinearCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let x = &cache.x;
        matmul(&dy.data, true, &x.data, false, &mut self.weight.grad, self.fout, x.n, self.fin, T::one());
        for i in 0..dy.n {
            for (g, &d) in self.bias.grad.iter_mut().zip(dy.sample(i)) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
        matmul(&dy.data, false, &self.weight.value, false, &mut dx.data, x.n, self.fout, self.fin, T::zero());
        dx
    }
}

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
}

pub struct ActCache<T> {
    /// Input for the rectifiers, output for tanh.
    saved: Tensor<T>,
}

impl Activation {
    pub fn forward<T: Element>(self, x: &Tensor<T>) -> (Tensor<T>, ActCache<T>) {
        match self {
            Activation::LeakyRelu(a) => {
                let a = T::cst(a);
                (x.map(|v| if v > T::zero() { v } else { a * v }), ActCache { saved: x.clone() })
            }
            Activation::Relu => (x.map(|v| v.max(T::zero())), ActCache { saved: x.clone() }),
            Activation::Tanh => {
                let y = x.map(|v| v.tanh());
                (y.clone(), ActCache { saved: y })
            }
        }
    }

    pub fn backward<T: Element>(self, cache: &ActCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let mut dx = dy.clone();
        let s = &cache.saved.data;
        match self {
            Activation::LeakyRelu(a) => {
                let a = T::cst(a);
                for (d, &x) in dx.data.iter_mut().zip(s) {
                    if x <= T::zero() {
                        *d *= a;
                    }
                }
            }
            Activation::Relu => {
                for (d, &x) in dx.data.iter_mut().zip(s) {
                    if x <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            Activation::Tanh => {
                for (d, &y) in dx.data.iter_mut().zip(s) {
                    *d *= T::one() - y * y;
                }
            }
        }
        dx
    }
}

/// Spatial mean per channel: `n×c×h×w → n×c×1×1`.
pub fn global_avg_pool<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let inv = T::one() / T::cst(x.plane() as f64);
    let sums = x.channel_sums();
    Tensor::from_vec(x.n, x.c, 1, 1, sums.into_iter().flatten().map(|s| s * inv).collect())
}

pub fn global_avg_pool_backward<T: Element>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let inv = T::one() / T::cst((h * w) as f64);
    let v: Vec<Vec<T>> = (0..dy.n).map(|i| dy.sample(i).iter().map(|&d| d * inv).collect()).collect();
    Tensor::replicate(&v, h, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn im2col_col2im_adjoint() {
        let (c, h, w, k, s, p) = (2, 6, 5, 4, 2, 1);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.7).sin()).collect();
        let rows = c * k * k * conv_out(h, k, s, p) * conv_out(w, k, s, p);
        let y: Vec<f64> = (0..rows).map(|i| (i as f64 * 1.3).cos()).collect();
        let mut cols = vec![0.0; rows];
        im2col(&x, c, h, w, k, s, p, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, s, p, &mut back);
        assert!((dot(&cols, &y) - dot(&x, &back)).abs() < 1e-12);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut r = rng();
        let conv = Conv2d::<f64>::new("c", 2, 3, 4, 2, 1, 0.5, &mut r);
        let x = Tensor::from_vec(1, 2, 6, 6, (0..72).map(|i| (i as f64 * 0.31).sin()).collect());
        let (y, _) = conv.forward(&x);
        assert_eq!(y.shape(), [1, 3, 3, 3]);
        let wv = &conv.weight.value;
        for co in 0..3 {
            for oh in 0..3 {
                for ow in 0..3 {
                    let mut s = 0.0;
                    for ci in 0..2 {
                        for ki in 0..4 {
                            for kj in 0..4 {
                                let (ih, iw) = ((oh * 2 + ki) as isize - 1, (ow * 2 + kj) as isize - 1);
                                if (0..6).contains(&ih) && (0..6).contains(&iw) {
                                    s += wv[((co * 2 + ci) * 4 + ki) * 4 + kj] * x.data[(ci * 6 + ih as usize) * 6 + iw as usize];
                                }
                            }
                        }
                    }
                    assert!((y.data[(co * 3 + oh) * 3 + ow] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        let mut r = rng();
        let conv = Conv2d::<f64>::new("c", 3, 2, 4, 2, 1, 0.5, &mut r);
        let mut ct = ConvTranspose2d::<f64>::new("t", 2, 3, 4, 2, 1, 0.5, &mut r);
        // same weight layout: conv [cout=2, cin=3], transposed [cin=2, cout=3]
        ct.weight.value = conv.weight.value.clone();
        let x = Tensor::from_vec(1, 3, 8, 8, (0..192).map(|i| (i as f64 * 0.17).cos()).collect());
        let u = Tensor::from_vec(1, 2, 4, 4, (0..32).map(|i| (i as f64 * 0.41).sin()).collect());
        let (cx, _) = conv.forward(&x);
        let (tu, _) = ct.forward(&u);
        assert_eq!(tu.shape(), [1, 3, 8, 8]);
        assert!((dot(&cx.data, &u.data) - dot(&x.data, &tu.data)).abs() < 1e-10);
    }

    #[test]
    fn batchnorm_normalizes() {
        let mut r = rng();
        let mut bn = BatchNorm2d::<f64>::new("bn", 2, &mut r);
        bn.gamma.value = vec![1.0, 1.0];
        let x = Tensor::from_vec(2, 2, 2, 2, (0..16).map(|i| i as f64 * 1.5 + 3.0).collect());
        let (y, cache) = bn.forward(&x, true);
        bn.update_running(&cache);
        for k in 0..2 {
            let vals: Vec<f64> = (0..2).flat_map(|i| y.sample(i)[k * 4..(k + 1) * 4].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / 8.0;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 8.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-4);
        }
        assert!(bn.running_mean.value[0] > 0.0);
    }
}
