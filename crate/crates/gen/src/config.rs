use serde::{Deserialize, Serialize};

use crate::error::{GenError, Result};

/// Training hyperparameters and architecture scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Reconstruction weight.
    pub alpha: f64,
    /// KL weight.
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// P/E count that maps to 1 in the embedding.
    pub pe_max: u32,
    pub seed: u64,
    /// Uniform multiplier on every channel width.
    pub width_scale: f64,
    /// Side of the square input grids.
    pub grid: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 10.0,
            beta: 0.01,
            lr: 2e-4,
            epochs: 7,
            batch: 2,
            pe_max: 10_000,
            seed: 0,
            width_scale: 1.0,
            grid: 64,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Width-0.25 preset for CPU-scale runs.
    pub fn desk_scale() -> Self {
        TrainConfig {
            width_scale: 0.25,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.lr >= 0.0) {
            return bad("alpha and beta must be positive and lr non-negative");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.pe_max == 0 {
            return bad("pe_max must be positive");
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return bad("width_scale must lie in (0, 1]");
        }
        if self.grid < 8 || !self.grid.is_power_of_two() {
            return bad("grid must be a power of two of at least 8");
        }
        Ok(())
    }

    /// Scaled channel width, at least one.
    pub fn width(&self, base: usize) -> usize {
        ((base as f64 * self.width_scale).round() as usize).max(1)
    }

    /// Number of stride-2 stages from the grid down to 1×1.
    pub fn depth(&self) -> usize {
        self.grid.trailing_zeros() as usize
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}
