//! Encoder, U-Net generator and patch discriminator.

use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::element::Element;
use crate::embed::{st_concat, EMBED_DIM};
use crate::layers::{
    global_avg_pool, global_avg_pool_backward, ActCache, Activation, BatchNorm2d, BnCache, Conv2d, ConvCache,
    ConvTCache, ConvTranspose2d, Linear, LinearCache,
};
use crate::param::{Module, Param};
use crate::tensor::Tensor;

const INIT_STD: f64 = 0.02;
const LEAK: Activation = Activation::LeakyRelu(0.2);

/// Residual encoder producing the mean and log-variance of `Q(z | VL, P/E)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub b1a: Conv2d<T>,
    pub b1b: Conv2d<T>,
    pub b1proj: Conv2d<T>,
    pub b2a: Conv2d<T>,
    pub b2b: Conv2d<T>,
    pub mu: Linear<T>,
    pub logvar: Linear<T>,
}

pub struct EncoderCache<T> {
    b1a: ConvCache<T>,
    a1: ActCache<T>,
    b1b: ConvCache<T>,
    b1proj: ConvCache<T>,
    o1: ActCache<T>,
    b2a: ConvCache<T>,
    a2: ActCache<T>,
    b2b: ConvCache<T>,
    o2: ActCache<T>,
    hw: (usize, usize),
    mu: LinearCache<T>,
    logvar: LinearCache<T>,
}

impl<T: Element> Encoder<T> {
    pub fn new(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.width(64);
        let cin = 1 + EMBED_DIM;
        Encoder {
            b1a: Conv2d::new("enc.block1.conv1", cin, w, 3, 1, 1, INIT_STD, rng),
            b1b: Conv2d::new("enc.block1.conv2", w, w, 3, 1, 1, INIT_STD, rng),
            b1proj: Conv2d::new("enc.block1.proj", cin, w, 1, 1, 0, INIT_STD, rng),
            b2a: Conv2d::new("enc.block2.conv1", w, w, 3, 1, 1, INIT_STD, rng),
            b2b: Conv2d::new("enc.block2.conv2", w, w, 3, 1, 1, INIT_STD, rng),
            mu: Linear::new("enc.mu", w, EMBED_DIM, INIT_STD, rng),
            logvar: Linear::new("enc.logvar", w, EMBED_DIM, INIT_STD, rng),
        }
    }

    /// `vl` is the normalized voltage map (`n×1×h×w`). Returns `(mu, logvar)`,
    /// each `n×6×1×1`.
    pub fn forward(&self, vl: &Tensor<T>, pe: &[Vec<T>]) -> (Tensor<T>, Tensor<T>, EncoderCache<T>) {
        let x = st_concat(vl, pe);
        let (h, b1a) = self.b1a.forward(&x);
        let (h, a1) = LEAK.forward(&h);
        let (mut h, b1b) = self.b1b.forward(&h);
        let (skip, b1proj) = self.b1proj.forward(&x);
        h.add_assign(&skip);
        let (r1, o1) = LEAK.forward(&h);
        let (h, b2a) = self.b2a.forward(&r1);
        let (h, a2) = LEAK.forward(&h);
        let (mut h, b2b) = self.b2b.forward(&h);
        h.add_assign(&r1);
        let (r2, o2) = LEAK.forward(&h);
        let pooled = global_avg_pool(&r2);
        let (mu, cmu) = self.mu.forward(&pooled);
        let (lv, clv) = self.logvar.forward(&pooled);
        let cache = EncoderCache {
            b1a,
            a1,
            b1b,
            b1proj,
            o1,
            b2a,
            a2,
            b2b,
            o2,
            hw: (r2.h, r2.w),
            mu: cmu,
            logvar: clv,
        };
        (mu, lv, cache)
    }

    /// Accumulates parameter gradients; the encoder's inputs need none.
    pub fn backward(&mut self, c: &EncoderCache<T>, dmu: &Tensor<T>, dlogvar: &Tensor<T>) {
        let mut dp = self.mu.backward(&c.mu, dmu);
        dp.add_assign(&self.logvar.backward(&c.logvar, dlogvar));
        let d = global_avg_pool_backward(&dp, c.hw.0, c.hw.1);
        let d = LEAK.backward(&c.o2, &d);
        let mut dr1 = d.clone();
        let g = self.b2b.backward(&c.b2b, &d);
        let g = LEAK.backward(&c.a2, &g);
        dr1.add_assign(&self.b2a.backward(&c.b2a, &g));
        let d = LEAK.backward(&c.o1, &dr1);
        self.b1proj.backward(&c.b1proj, &d);
        let g = self.b1b.backward(&c.b1b, &d);
        let g = LEAK.backward(&c.a1, &g);
        self.b1a.backward(&c.b1a, &g);
    }
}

impl<T> Module<T> for Encoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for c in [&self.b1a, &self.b1b, &self.b1proj, &self.b2a, &self.b2b] {
            v.extend([&c.weight, &c.bias]);
        }
        for l in [&self.mu, &self.logvar] {
            v.extend([&l.weight, &l.bias]);
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for c in [&mut self.b1a, &mut self.b1b, &mut self.b1proj, &mut self.b2a, &mut self.b2b] {
            v.extend([&mut c.weight, &mut c.bias]);
        }
        for l in [&mut self.mu, &mut self.logvar] {
            v.extend([&mut l.weight, &mut l.bias]);
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DownLayer<T> {
    pub conv: Conv2d<T>,
    pub bn: Option<BatchNorm2d<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpLayer<T> {
    pub conv: ConvTranspose2d<T>,
    pub bn: Option<BatchNorm2d<T>>,
    pub act: Activation,
}

struct LayerCache<C, T> {
    conv: C,
    bn: Option<BnCache<T>>,
    act: ActCache<T>,
}

/// U-Net generator. Every down layer sees the P/E features and the latent
/// vector; every up layer sees the P/E features and the skip connection.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub down: Vec<DownLayer<T>>,
    pub up: Vec<UpLayer<T>>,
}

pub struct GeneratorCache<T> {
    down: Vec<LayerCache<ConvCache<T>, T>>,
    up: Vec<LayerCache<ConvTCache<T>, T>>,
    down_channels: Vec<usize>,
    up_channels: Vec<usize>,
    sizes: Vec<usize>,
}

impl<T> GeneratorCache<T> {
    /// Spatial size of every layer output, down path then up path.
    pub fn spatial_trace(&self) -> &[usize] {
        &self.sizes
    }
}

/// Base widths of the down path; the depth selects a prefix.
const DOWN_WIDTHS: [usize; 8] = [64, 128, 256, 512, 512, 512, 512, 512];

impl<T: Element> Generator<T> {
    pub fn new(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let depth = cfg.depth();
        let widths: Vec<usize> = DOWN_WIDTHS[..depth].iter().map(|&w| cfg.width(w)).collect();
        let mut down = Vec::with_capacity(depth);
        let mut cin = 1;
        for (i, &w) in widths.iter().enumerate() {
            let conv = Conv2d::new(&format!("gen.down{i}.conv"), cin + 2 * EMBED_DIM, w, 4, 2, 1, INIT_STD, rng);
            // no normalization on the raw input or on the 1×1 bottleneck
            let bn = (i != 0 && i + 1 != depth).then(|| BatchNorm2d::new(&format!("gen.down{i}.bn"), w, rng));
            down.push(DownLayer { conv, bn });
            cin = w;
        }
        let mut outs: Vec<usize> = widths[..depth - 1].iter().rev().copied().collect();
        outs.push(1);
        let mut up = Vec::with_capacity(depth);
        let mut prev = widths[depth - 1];
        for (j, &w) in outs.iter().enumerate() {
            let skip = if j == 0 { 0 } else { widths[depth - 1 - j] };
            let last = j + 1 == depth;
            let conv = ConvTranspose2d::new(&format!("gen.up{j}.conv"), prev + skip + EMBED_DIM, w, 4, 2, 1, INIT_STD, rng);
            let bn = (!last).then(|| BatchNorm2d::new(&format!("gen.up{j}.bn"), w, rng));
            let act = if last { Activation::Tanh } else { Activation::Relu };
            up.push(UpLayer { conv, bn, act });
            prev = w;
        }
        Generator { down, up }
    }

    /// `pl` is the normalized level map; the output lies in `[−1, 1]`.
    pub fn forward(&self, pl: &Tensor<T>, pe: &[Vec<T>], z: &[Vec<T>], train: bool) -> (Tensor<T>, GeneratorCache<T>) {
        let depth = self.down.len();
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(depth);
        let mut down_caches = Vec::with_capacity(depth);
        let mut down_channels = Vec::with_capacity(depth);
        let mut sizes = Vec::with_capacity(2 * depth);
        let mut h = pl.clone();
        for layer in &self.down {
            down_channels.push(h.c);
            let x = st_concat(&st_concat(&h, pe), z);
            let (y, conv) = layer.conv.forward(&x);
            let (y, bn) = match &layer.bn {
                Some(b) => {
                    let (y, c) = b.forward(&y, train);
                    (y, Some(c))
                }
                None => (y, None),
            };
            let (y, act) = LEAK.forward(&y);
            sizes.push(y.h);
            down_caches.push(LayerCache { conv, bn, act });
            acts.push(y.clone());
            h = y;
        }
        let mut up_caches = Vec::with_capacity(depth);
        let mut up_channels = Vec::with_capacity(depth);
        for (j, layer) in self.up.iter().enumerate() {
            let joined = if j == 0 { h } else { Tensor::concat(&[&h, &acts[depth - 1 - j]]) };
            up_channels.push(joined.c);
            let x = st_concat(&joined, pe);
            let (y, conv) = layer.conv.forward(&x);
            let (y, bn) = match &layer.bn {
                Some(b) => {
                    let (y, c) = b.forward(&y, train);
                    (y, Some(c))
                }
                None => (y, None),
            };
            let (y, act) = layer.act.forward(&y);
            sizes.push(y.h);
            up_caches.push(LayerCache { conv, bn, act });
            h = y;
        }
        (
            h,
            GeneratorCache {
                down: down_caches,
                up: up_caches,
                down_channels,
                up_channels,
                sizes,
            },
        )
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// averages.
    pub fn update_running(&mut self, c: &GeneratorCache<T>) {
        for (l, lc) in self.down.iter_mut().zip(&c.down) {
            if let (Some(bn), Some(bc)) = (&mut l.bn, &lc.bn) {
                bn.update_running(bc);
            }
        }
        for (l, lc) in self.up.iter_mut().zip(&c.up) {
            if let (Some(bn), Some(bc)) = (&mut l.bn, &lc.bn) {
                bn.update_running(bc);
            }
        }
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to each sample's latent vector.
    pub fn backward(&mut self, c: &GeneratorCache<T>, dout: &Tensor<T>) -> Vec<Vec<T>> {
        let depth = self.down.len();
        let mut dskip: Vec<Option<Tensor<T>>> = vec![None; depth];
        let mut d = dout.clone();
        for j in (0..depth).rev() {
            let layer = &mut self.up[j];
            let cache = &c.up[j];
            let mut g = layer.act.backward(&cache.act, &d);
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &cache.bn) {
                g = bn.backward(bc, &g);
            }
            let dx = layer.conv.backward(&cache.conv, &g);
            let joined = c.up_channels[j];
            let mut parts = dx.split(&[joined, EMBED_DIM]);
            let dj = parts.swap_remove(0);
            if j == 0 {
                d = dj;
            } else {
                let prev = joined - c.down_channels.get(depth - j).copied().unwrap_or(0);
                let skip_c = joined - prev;
                let mut sp = dj.split(&[prev, skip_c]);
                dskip[depth - 1 - j] = Some(sp.swap_remove(1));
                d = sp.swap_remove(0);
            }
        }
        let mut dz = vec![vec![T::zero(); EMBED_DIM]; dout.n];
        for i in (0..depth).rev() {
            if let Some(s) = &dskip[i] {
                d.add_assign(s);
            }
            let layer = &mut self.down[i];
            let cache = &c.down[i];
            let mut g = LEAK.backward(&cache.act, &d);
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &cache.bn) {
                g = bn.backward(bc, &g);
            }
            let dx = layer.conv.backward(&cache.conv, &g);
            let parts = dx.split(&[c.down_channels[i], EMBED_DIM, EMBED_DIM]);
            for (acc, s) in dz.iter_mut().zip(parts[2].channel_sums()) {
                for (a, v) in acc.iter_mut().zip(s) {
                    *a += v;
                }
            }
            d = parts.into_iter().next().expect("input part");
        }
        dz
    }
}

impl<T> Module<T> for Generator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for l in &self.down {
            v.extend([&l.conv.weight, &l.conv.bias]);
            if let Some(b) = &l.bn {
                v.extend([&b.gamma, &b.beta, &b.running_mean, &b.running_var]);
            }
        }
        for l in &self.up {
            v.extend([&l.conv.weight, &l.conv.bias]);
            if let Some(b) = &l.bn {
                v.extend([&b.gamma, &b.beta, &b.running_mean, &b.running_var]);
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for l in &mut self.down {
            v.extend([&mut l.conv.weight, &mut l.conv.bias]);
            if let Some(b) = &mut l.bn {
                v.extend([&mut b.gamma, &mut b.beta, &mut b.running_mean, &mut b.running_var]);
            }
        }
        for l in &mut self.up {
            v.extend([&mut l.conv.weight, &mut l.conv.bias]);
            if let Some(b) = &mut l.bn {
                v.extend([&mut b.gamma, &mut b.beta, &mut b.running_mean, &mut b.running_var]);
            }
        }
        v
    }
}

/// Patch discriminator on the (levels, voltages) pair; emits one logit per
/// patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    pub c1: Conv2d<T>,
    pub c2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub c3: Conv2d<T>,
}

pub struct DiscriminatorCache<T> {
    c1: ConvCache<T>,
    a1: ActCache<T>,
    c2: ConvCache<T>,
    bn2: BnCache<T>,
    a2: ActCache<T>,
    c3: ConvCache<T>,
}

impl<T: Element> Discriminator<T> {
    pub fn new(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let (w1, w2) = (cfg.width(64), cfg.width(128));
        Discriminator {
            c1: Conv2d::new("dis.conv1", 2, w1, 4, 2, 1, INIT_STD, rng),
            c2: Conv2d::new("dis.conv2", w1, w2, 4, 2, 1, INIT_STD, rng),
            bn2: BatchNorm2d::new("dis.bn2", w2, rng),
            c3: Conv2d::new("dis.conv3", w2, 1, 4, 2, 1, INIT_STD, rng),
        }
    }

    pub fn forward(&self, pl: &Tensor<T>, vl: &Tensor<T>, train: bool) -> (Tensor<T>, DiscriminatorCache<T>) {
        let x = Tensor::concat(&[pl, vl]);
        let (h, c1) = self.c1.forward(&x);
        let (h, a1) = LEAK.forward(&h);
        let (h, c2) = self.c2.forward(&h);
        let (h, bn2) = self.bn2.forward(&h, train);
        let (h, a2) = LEAK.forward(&h);
        let (y, c3) = self.c3.forward(&h);
        (y, DiscriminatorCache { c1, a1, c2, bn2, a2, c3 })
    }

    pub fn update_running(&mut self, c: &DiscriminatorCache<T>) {
        self.bn2.update_running(&c.bn2);
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the voltage input.
    pub fn backward(&mut self, c: &DiscriminatorCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let d = self.c3.backward(&c.c3, dy);
        let d = LEAK.backward(&c.a2, &d);
        let d = self.bn2.backward(&c.bn2, &d);
        let d = self.c2.backward(&c.c2, &d);
        let d = LEAK.backward(&c.a1, &d);
        let dx = self.c1.backward(&c.c1, &d);
        dx.split(&[1, 1]).swap_remove(1)
    }
}

impl<T> Module<T> for Discriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![
            &self.c1.weight,
            &self.c1.bias,
            &self.c2.weight,
            &self.c2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.bn2.running_mean,
            &self.bn2.running_var,
            &self.c3.weight,
            &self.c3.bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.c1.weight,
            &mut self.c1.bias,
            &mut self.c2.weight,
            &mut self.c2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
            &mut self.c3.weight,
            &mut self.c3.bias,
        ]
    }
}
