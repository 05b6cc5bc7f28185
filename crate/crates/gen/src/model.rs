use rand::seq::SliceRandom;
use rand::RngCore;

use flashchan::rng::{derive_seed, domain, standard_normal, CounterRng};
use flashchan::{CellGrid, ChannelRecord, PECycle, ProgramLevel, VoltageLevel};

use crate::config::TrainConfig;
use crate::element::Element;
use crate::embed::{pe_embed, EMBED_DIM};
use crate::error::{GenError, Result};
use crate::loss::{bce_with_logits, kl_standard_normal, mse, reparameterize};
use crate::nets::{Discriminator, DiscriminatorCache, Encoder, Generator};
use crate::param::{AdamParams, Module, Param};
use crate::tensor::Tensor;

/// Maps a program level to `[−1, 1]`.
pub fn normalize_level<T: Element>(l: ProgramLevel) -> T {
    T::cst(l.index() as f64 / 3.5 - 1.0)
}

/// Maps a voltage bin to `[−1, 1]`.
pub fn normalize_voltage<T: Element>(v: VoltageLevel) -> T {
    T::cst(v.bin() as f64 / 511.5 - 1.0)
}

/// Inverse of [`normalize_voltage`], rounded half up and clamped to the bins.
pub fn denormalize_voltage<T: Element>(x: T) -> VoltageLevel {
    VoltageLevel::quantize((x.as_f64() + 1.0) * 511.5)
}

fn grid_tensor<T: Element, U: Copy>(grids: &[&CellGrid<U>], f: impl Fn(U) -> T) -> Tensor<T> {
    let (h, w) = grids[0].dims();
    let data = grids.iter().flat_map(|g| g.cells().iter().map(|&c| f(c))).collect();
    Tensor::from_vec(grids.len(), 1, h, w, data)
}

/// Mean and log-variance of the approximate posterior for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOut<T> {
    pub mu: Vec<T>,
    pub logvar: Vec<T>,
}

/// Normalized inputs for a set of records.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub pl: Tensor<T>,
    pub vl: Tensor<T>,
    pub pe: Vec<Vec<T>>,
}

impl<T: Element> Batch<T> {
    pub fn new(records: &[&ChannelRecord], cfg: &TrainConfig) -> Result<Self> {
        if records.is_empty() {
            return Err(GenError::EmptyDataset);
        }
        for r in records {
            if r.pl.dims() != (cfg.grid, cfg.grid) {
                return Err(GenError::Shape(format!(
                    "record grid {:?}, model expects {}×{}",
                    r.pl.dims(),
                    cfg.grid,
                    cfg.grid
                )));
            }
        }
        let pls: Vec<_> = records.iter().map(|r| &r.pl).collect();
        let vls: Vec<_> = records.iter().map(|r| &r.vl).collect();
        let pe = records
            .iter()
            .map(|r| pe_embed(r.pe, PECycle(cfg.pe_max)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            pl: grid_tensor(&pls, normalize_level),
            vl: grid_tensor(&vls, normalize_voltage),
            pe,
        })
    }

    pub fn len(&self) -> usize {
        self.pl.n
    }

    pub fn is_empty(&self) -> bool {
        self.pl.n == 0
    }
}

/// Individual loss terms of one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents<T> {
    pub kl: T,
    pub recon: T,
    /// Non-saturating generator term, `−log Dis(PL, fake)`.
    pub gan_g: T,
    /// Discriminator term, `−log Dis(PL, VL) − log(1 − Dis(PL, fake))`.
    pub gan_d: T,
    /// Encoder/generator objective `gan_g + alpha·recon + beta·kl`.
    pub total: T,
}

impl<T: Element> LossComponents<T> {
    fn to_f64(self) -> LossComponents<f64> {
        LossComponents {
            kl: self.kl.as_f64(),
            recon: self.recon.as_f64(),
            gan_g: self.gan_g.as_f64(),
            gan_d: self.gan_d.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

/// Which loss term to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossComponent {
    Kl,
    Recon,
    GanGenerator,
    GanDiscriminator,
}

/// Loss record of one training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    pub losses: LossComponents<f64>,
}

/// Weights, optimizer moments and step counter of the three networks.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState<T> {
    pub config: TrainConfig,
    pub encoder: Encoder<T>,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub step: u64,
}

struct Forward<T> {
    mu: Tensor<T>,
    logvar: Tensor<T>,
    enc: crate::nets::EncoderCache<T>,
    fake: Tensor<T>,
    gen: crate::nets::GeneratorCache<T>,
}

impl<T: Element> ModelState<T> {
    /// Freshly initialized networks: weights `N(0, 0.02)`, normalization
    /// gains `N(1, 0.02)`, biases zero.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = CounterRng::new(config.seed, domain::INIT).stream(0);
        let encoder = Encoder::new(&config, &mut rng);
        let generator = Generator::new(&config, &mut rng);
        let discriminator = Discriminator::new(&config, &mut rng);
        Ok(ModelState {
            config,
            encoder,
            generator,
            discriminator,
            step: 0,
        })
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.encoder.params();
        v.extend(self.generator.params());
        v.extend(self.discriminator.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.generator.params_mut());
        v.extend(self.discriminator.params_mut());
        v
    }

    /// FNV-1a over the bit patterns of every stored value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in &p.value {
                for b in v.as_f64().to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        h
    }

    fn pe_vec(&self, pe: PECycle) -> Result<Vec<T>> {
        pe_embed(pe, PECycle(self.config.pe_max))
    }

    fn check_grid<U>(&self, g: &CellGrid<U>) -> Result<()> {
        if g.dims() != (self.config.grid, self.config.grid) {
            return Err(GenError::Shape(format!(
                "grid {:?}, model expects {}×{}",
                g.dims(),
                self.config.grid,
                self.config.grid
            )));
        }
        Ok(())
    }

    pub fn encode(&self, vl: &CellGrid<VoltageLevel>, pe: PECycle) -> Result<EncoderOut<T>> {
        self.check_grid(vl)?;
        let (mu, logvar, _) = self
            .encoder
            .forward(&grid_tensor(&[vl], normalize_voltage), &[self.pe_vec(pe)?]);
        Ok(EncoderOut {
            mu: mu.data,
            logvar: logvar.data,
        })
    }

    /// Raw generator output in `[−1, 1]` for a batch of level grids sharing
    /// one stamp, one latent vector per grid. Inference-mode normalization.
    pub fn generate_raw(&self, pl: &[&CellGrid<ProgramLevel>], pe: PECycle, z: &[Vec<T>]) -> Result<Tensor<T>> {
        for g in pl {
            self.check_grid(g)?;
        }
        if z.len() != pl.len() || z.iter().any(|v| v.len() != EMBED_DIM) {
            return Err(GenError::Shape(format!("need one {EMBED_DIM}-vector per grid")));
        }
        let pev = self.pe_vec(pe)?;
        let x = grid_tensor(pl, normalize_level);
        Ok(self.generator.forward(&x, &vec![pev; pl.len()], z, false).0)
    }

    pub fn generate(&self, pl: &CellGrid<ProgramLevel>, pe: PECycle, z: &[T]) -> Result<CellGrid<VoltageLevel>> {
        let out = self.generate_raw(&[pl], pe, &[z.to_vec()])?;
        let (h, w) = pl.dims();
        Ok(CellGrid::new(h, w, out.data.iter().map(|&x| denormalize_voltage(x)).collect())?)
    }

    /// Patch logits (inference-mode normalization), row-major.
    pub fn discriminate(&self, pl: &CellGrid<ProgramLevel>, vl: &CellGrid<VoltageLevel>) -> Result<CellGrid<T>> {
        self.check_grid(pl)?;
        self.check_grid(vl)?;
        let (y, _) = self.discriminator.forward(
            &grid_tensor(&[pl], normalize_level),
            &grid_tensor(&[vl], normalize_voltage),
            false,
        );
        Ok(CellGrid::new(y.h, y.w, y.data)?)
    }

    /// `n` voltage grids from independent standard-normal latent vectors.
    pub fn sample_voltages(&self, pl: &CellGrid<ProgramLevel>, pe: PECycle, n: usize, seed: u64) -> Result<Vec<CellGrid<VoltageLevel>>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let z = latent_draws(seed, n);
        let out = self.generate_raw(&vec![pl; n], pe, &z)?;
        let (h, w) = pl.dims();
        (0..n)
            .map(|i| Ok(CellGrid::new(h, w, out.sample(i).iter().map(|&x| denormalize_voltage(x)).collect())?))
            .collect()
    }

    fn forward_eg(&self, batch: &Batch<T>, eps: &[Vec<T>]) -> Forward<T> {
        let (mu, logvar, enc) = self.encoder.forward(&batch.vl, &batch.pe);
        let z: Vec<Vec<T>> = (0..batch.len())
            .map(|i| reparameterize(mu.sample(i), logvar.sample(i), &eps[i]))
            .collect();
        let (fake, gen) = self.generator.forward(&batch.pl, &batch.pe, &z, true);
        Forward {
            mu,
            logvar,
            enc,
            fake,
            gen,
        }
    }

    /// Discriminator loss with its gradient accumulated into the
    /// discriminator; the fake is a constant. Real and fake go through
    /// separate passes, each with its own batch statistics.
    fn discriminator_loss(&mut self, batch: &Batch<T>, fake: &Tensor<T>) -> (T, [DiscriminatorCache<T>; 2]) {
        let (lr, cr) = self.discriminator.forward(&batch.pl, &batch.vl, true);
        let (lf, cf) = self.discriminator.forward(&batch.pl, fake, true);
        let (l1, d1) = bce_with_logits(&lr, true);
        let (l2, d2) = bce_with_logits(&lf, false);
        self.discriminator.backward(&cr, &d1);
        self.discriminator.backward(&cf, &d2);
        (l1 + l2, [cr, cf])
    }

    /// Non-saturating generator term and its gradient w.r.t. the fake. Leaves
    /// gradient in the discriminator; callers clear it.
    fn generator_adversarial(&mut self, batch: &Batch<T>, fake: &Tensor<T>) -> (T, Tensor<T>) {
        let (logits, cache) = self.discriminator.forward(&batch.pl, fake, true);
        let (l, d) = bce_with_logits(&logits, true);
        (l, self.discriminator.backward(&cache, &d))
    }

    /// All loss terms for a batch in training mode; changes nothing.
    pub fn losses(&self, batch: &Batch<T>, eps: &[Vec<T>]) -> LossComponents<T> {
        let f = self.forward_eg(batch, eps);
        let (kl, _, _) = kl_standard_normal(&f.mu, &f.logvar);
        let (recon, _) = mse(&f.fake, &batch.vl);
        let (real_logits, _) = self.discriminator.forward(&batch.pl, &batch.vl, true);
        let (fake_logits, _) = self.discriminator.forward(&batch.pl, &f.fake, true);
        let gan_d = bce_with_logits(&real_logits, true).0 + bce_with_logits(&fake_logits, false).0;
        let gan_g = bce_with_logits(&fake_logits, true).0;
        let (a, b) = (T::cst(self.config.alpha), T::cst(self.config.beta));
        LossComponents {
            kl,
            recon,
            gan_g,
            gan_d,
            total: gan_g + a * recon + b * kl,
        }
    }

    /// Sends the latent-vector gradient `dz` and the KL gradient back through
    /// the reparameterization into the encoder.
    fn encoder_backward(&mut self, f: &Forward<T>, eps: &[Vec<T>], dz: &[Vec<T>], kl_weight: T) {
        let (_, dmu_kl, dlv_kl) = kl_standard_normal(&f.mu, &f.logvar);
        let half = T::cst(0.5);
        let mut dmu = dmu_kl.map(|v| v * kl_weight);
        let mut dlv = dlv_kl.map(|v| v * kl_weight);
        for i in 0..f.mu.n {
            let lv = f.logvar.sample(i).to_vec();
            for k in 0..EMBED_DIM {
                dmu.sample_mut(i)[k] += dz[i][k];
                dlv.sample_mut(i)[k] += dz[i][k] * eps[i][k] * half * (lv[k] * half).exp();
            }
        }
        self.encoder.backward(&f.enc, &dmu, &dlv);
    }

    /// Zeroes every gradient, then accumulates the gradient of one loss term
    /// in training mode without touching running statistics. Returns the
    /// term's value. The discriminator term treats the fake as a constant.
    pub fn component_gradients(&mut self, batch: &Batch<T>, eps: &[Vec<T>], which: LossComponent) -> T {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let f = self.forward_eg(batch, eps);
        let zero_dz = vec![vec![T::zero(); EMBED_DIM]; batch.len()];
        match which {
            LossComponent::Kl => {
                let (kl, _, _) = kl_standard_normal(&f.mu, &f.logvar);
                self.encoder_backward(&f, eps, &zero_dz, T::one());
                kl
            }
            LossComponent::Recon => {
                let (l, d) = mse(&f.fake, &batch.vl);
                let dz = self.generator.backward(&f.gen, &d);
                self.encoder_backward(&f, eps, &dz, T::zero());
                l
            }
            LossComponent::GanGenerator => {
                let (l, dfake) = self.generator_adversarial(batch, &f.fake);
                let dz = self.generator.backward(&f.gen, &dfake);
                self.encoder_backward(&f, eps, &dz, T::zero());
                l
            }
            LossComponent::GanDiscriminator => self.discriminator_loss(batch, &f.fake).0,
        }
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.config.lr,
            beta1: self.config.adam_beta1,
            beta2: self.config.adam_beta2,
            eps: self.config.adam_eps,
        }
    }

    /// One discriminator update followed by one encoder/generator update
    /// against the updated discriminator.
    pub fn train_step(&mut self, batch: &Batch<T>, eps: &[Vec<T>]) -> Result<LossComponents<f64>> {
        let step = self.step;
        let finite = |v: T, what: &'static str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(GenError::NonFiniteLoss { what, step })
            }
        };
        let h = self.adam();
        let t = step + 1;
        let f = self.forward_eg(batch, eps);
        self.generator.update_running(&f.gen);

        self.discriminator.zero_grad();
        let (gan_d, caches) = self.discriminator_loss(batch, &f.fake);
        for c in &caches {
            self.discriminator.update_running(c);
        }
        finite(gan_d, "discriminator loss")?;
        if let Some(name) = self.discriminator.non_finite_grad() {
            return Err(GenError::NonFiniteGradient { name, step });
        }
        self.discriminator.adam(&h, t);

        self.encoder.zero_grad();
        self.generator.zero_grad();
        self.discriminator.zero_grad();
        let (gan_g, mut dfake) = self.generator_adversarial(batch, &f.fake);
        self.discriminator.zero_grad();
        let (recon, drec) = mse(&f.fake, &batch.vl);
        let (kl, _, _) = kl_standard_normal(&f.mu, &f.logvar);
        let (a, b) = (T::cst(self.config.alpha), T::cst(self.config.beta));
        let total = gan_g + a * recon + b * kl;
        finite(total, "generator loss")?;
        for (d, &r) in dfake.data.iter_mut().zip(&drec.data) {
            *d += a * r;
        }
        let dz = self.generator.backward(&f.gen, &dfake);
        self.encoder_backward(&f, eps, &dz, b);
        for name in [self.encoder.non_finite_grad(), self.generator.non_finite_grad()].into_iter().flatten() {
            return Err(GenError::NonFiniteGradient { name, step });
        }
        self.encoder.adam(&h, t);
        self.generator.adam(&h, t);
        for p in self.params_mut() {
            p.zero_grad();
        }
        self.step += 1;
        Ok(LossComponents {
            kl,
            recon,
            gan_g,
            gan_d,
            total,
        }
        .to_f64())
    }

    /// Runs `config.epochs` passes over `dataset` in seeded shuffled order,
    /// `⌈N / batch⌉` steps per pass. `on_step` sees every step's losses.
    pub fn train(&mut self, dataset: &[ChannelRecord], mut on_step: impl FnMut(&StepRecord)) -> Result<Vec<StepRecord>> {
        if dataset.is_empty() {
            return Err(GenError::EmptyDataset);
        }
        let cfg = self.config.clone();
        let mut log = Vec::new();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for epoch in 0..cfg.epochs {
            order.sort_unstable();
            let mut rng = CounterRng::new(cfg.seed, domain::SHUFFLE).stream(epoch as u64);
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let recs: Vec<&ChannelRecord> = chunk.iter().map(|&i| &dataset[i]).collect();
                let batch = Batch::new(&recs, &cfg)?;
                let eps = step_noise(cfg.seed, self.step, batch.len());
                let losses = self.train_step(&batch, &eps)?;
                let rec = StepRecord {
                    epoch,
                    step: self.step,
                    losses,
                };
                on_step(&rec);
                log.push(rec);
            }
        }
        Ok(log)
    }
}

fn normals<T: Element>(rng: &mut impl RngCore, n: usize) -> Vec<T> {
    (0..n).map(|_| T::cst(standard_normal(rng.next_u64(), rng.next_u64()))).collect()
}

/// Reparameterization noise for training step `step`.
pub fn step_noise<T: Element>(seed: u64, step: u64, batch: usize) -> Vec<Vec<T>> {
    let mut rng = CounterRng::new(seed, domain::LATENT).stream(step);
    (0..batch).map(|_| normals(&mut rng, EMBED_DIM)).collect()
}

/// `n` standard-normal latent vectors for sampling under `seed`.
pub fn latent_draws<T: Element>(seed: u64, n: usize) -> Vec<Vec<T>> {
    let mut rng = CounterRng::new(derive_seed(seed, &[domain::SAMPLE]), domain::SAMPLE).stream(0);
    (0..n).map(|_| normals(&mut rng, EMBED_DIM)).collect()
}
