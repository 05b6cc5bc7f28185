use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::NormalLaplaceParams;
use crate::types::{PECycle, ProgramLevel, ThresholdSet};

/// Power-law drift of one level's distribution with P/E cycling:
/// `Δmu = a_mu·(pe/pe_ref)^b_mu`, `Δsigma = a_sig·(pe/pe_ref)^b_sig`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WearLaw {
    pub a_mu: f64,
    pub b_mu: f64,
    pub a_sig: f64,
    pub b_sig: f64,
}

impl WearLaw {
    pub const NONE: WearLaw = WearLaw {
        a_mu: 0.0,
        b_mu: 1.0,
        a_sig: 0.0,
        b_sig: 1.0,
    };

    fn term(a: f64, b: f64, p: f64) -> f64 {
        // both terms vanish at pe = 0, including the b = 0 case
        if p == 0.0 {
            0.0
        } else {
            a * p.powf(b)
        }
    }

    pub fn delta_mu(&self, pe: PECycle, pe_ref: PECycle) -> f64 {
        Self::term(self.a_mu, self.b_mu, pe.0 as f64 / pe_ref.0 as f64)
    }

    pub fn delta_sigma(&self, pe: PECycle, pe_ref: PECycle) -> f64 {
        Self::term(self.a_sig, self.b_sig, pe.0 as f64 / pe_ref.0 as f64)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.a_mu, self.b_mu, self.a_sig, self.b_sig].iter().all(|v| v.is_finite());
        if !finite || self.b_mu < 0.0 || self.b_sig < 0.0 || self.a_sig < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "wear law needs finite coefficients, b_mu, b_sig >= 0 and a_sig >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Directional coupling of neighbor program levels into a victim's voltage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IciCoupling {
    pub gamma_wl: f64,
    pub gamma_bl: f64,
    /// Aggressor strength per program level, `f(L)`.
    pub aggressor: [f64; 8],
}

impl IciCoupling {
    /// `f(L) = L / 7`.
    pub const LINEAR_AGGRESSOR: [f64; 8] = [0.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0, 4.0 / 7.0, 5.0 / 7.0, 6.0 / 7.0, 1.0];

    pub fn new(gamma_wl: f64, gamma_bl: f64) -> Result<Self> {
        let c = IciCoupling {
            gamma_wl,
            gamma_bl,
            aggressor: Self::LINEAR_AGGRESSOR,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn none() -> Self {
        IciCoupling {
            gamma_wl: 0.0,
            gamma_bl: 0.0,
            aggressor: Self::LINEAR_AGGRESSOR,
        }
    }

    #[inline]
    pub fn f(&self, level: ProgramLevel) -> f64 {
        self.aggressor[level.index()]
    }

    /// Mean shift of an interior cell when neighbor levels are uniform.
    pub fn mean_shift(&self) -> f64 {
        let mean_f = self.aggressor.iter().sum::<f64>() / 8.0;
        2.0 * (self.gamma_bl + self.gamma_wl) * mean_f
    }

    fn validate(&self) -> Result<()> {
        let ok = self.gamma_wl >= 0.0
            && self.gamma_bl >= 0.0
            && self.gamma_wl.is_finite()
            && self.gamma_bl.is_finite()
            && self.aggressor.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.aggressor.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "coupling needs non-negative gammas and a non-negative, non-decreasing aggressor map: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Beginning-of-life distribution and wear law of one program level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub mu: f64,
    pub sigma: f64,
    /// Right tail rate.
    pub alpha: f64,
    /// Left tail rate.
    pub beta: f64,
    pub wear: WearLaw,
}

impl LevelParams {
    pub fn base(&self) -> Result<NormalLaplaceParams<f64>> {
        NormalLaplaceParams::new(self.mu, self.sigma, self.alpha, self.beta)
    }
}

/// Complete description of the simulated channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Cycle count at which the wear law's normalized cycle equals one.
    pub pe_ref: u32,
    pub coupling: IciCoupling,
    pub level: Vec<LevelParams>,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let mu = [175.0, 305.0, 418.0, 531.0, 644.0, 757.0, 870.0, 980.0];
        let beta = [0.3, 0.085, 0.11, 0.11, 0.11, 0.11, 0.11, 0.13];
        let level = (0..8)
            .map(|k| {
                if k == 0 {
                    LevelParams {
                        mu: mu[0],
                        sigma: 15.0,
                        alpha: 0.085,
                        beta: beta[0],
                        wear: WearLaw {
                            a_mu: 15.0,
                            b_mu: 1.0,
                            a_sig: 10.0,
                            b_sig: 2.0,
                        },
                    }
                } else {
                    LevelParams {
                        mu: mu[k],
                        sigma: 5.5,
                        alpha: 0.11,
                        beta: beta[k],
                        wear: WearLaw {
                            a_mu: -14.0,
                            b_mu: 1.0,
                            a_sig: 4.0,
                            b_sig: 2.0,
                        },
                    }
                }
            })
            .collect();
        ChannelParams {
            pe_ref: 10_000,
            coupling: IciCoupling {
                gamma_wl: 7.0,
                gamma_bl: 18.0,
                aggressor: IciCoupling::LINEAR_AGGRESSOR,
            },
            level,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.level.len() != ProgramLevel::COUNT {
            return Err(Error::InvalidParameter(format!(
                "expected {} level entries, got {}",
                ProgramLevel::COUNT,
                self.level.len()
            )));
        }
        if self.pe_ref == 0 {
            return Err(Error::InvalidParameter("pe_ref must be positive".into()));
        }
        for lp in &self.level {
            lp.base()?;
            lp.wear.validate()?;
        }
        self.coupling.validate()?;
        let means = self.bol_means();
        if !means.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(format!(
                "level means must increase at pe = 0: {means:?}"
            )));
        }
        Ok(())
    }

    pub fn pe_ref(&self) -> PECycle {
        PECycle(self.pe_ref)
    }

    /// Mean read voltage of each level at pe = 0 for an interior cell under
    /// uniform neighbor data.
    pub fn bol_means(&self) -> [f64; 8] {
        let shift = self.coupling.mean_shift();
        std::array::from_fn(|k| {
            let l = &self.level[k];
            l.mu + 1.0 / l.alpha - 1.0 / l.beta + shift
        })
    }

    /// Default hard-read thresholds: midpoints of adjacent beginning-of-life
    /// level means.
    pub fn default_thresholds(&self) -> Result<ThresholdSet> {
        let m = self.bol_means();
        ThresholdSet::from_voltages(std::array::from_fn(|k| 0.5 * (m[k] + m[k + 1])))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let p: ChannelParams = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = ChannelParams::default();
        p.validate().unwrap();
        assert!(p.coupling.gamma_bl >= p.coupling.gamma_wl);
        let th = p.default_thresholds().unwrap();
        let m = p.bol_means();
        for k in 0..7 {
            assert!(m[k] < th.between(k) as f64 && (th.between(k) as f64) < m[k + 1]);
        }
    }

    #[test]
    fn toml_round_trip() {
        let p = ChannelParams::default();
        let back = ChannelParams::from_toml(&p.to_toml().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_bad_files() {
        let mut p = ChannelParams::default();
        p.level.pop();
        assert!(ChannelParams::from_toml(&p.to_toml().unwrap()).is_err());
        let mut p = ChannelParams::default();
        p.level.swap(2, 3);
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.level[1].wear.a_sig = -1.0;
        assert!(p.validate().is_err());
        let mut p = ChannelParams::default();
        p.coupling.aggressor[3] = 0.0;
        assert!(p.validate().is_err());
        assert!(ChannelParams::from_toml("pe_ref = 'x'").is_err());
    }

    #[test]
    fn wear_law_vanishes_at_zero() {
        let w = WearLaw {
            a_mu: 3.0,
            b_mu: 0.0,
            a_sig: 2.0,
            b_sig: 0.0,
        };
        assert_eq!(w.delta_mu(PECycle(0), PECycle(100)), 0.0);
        assert_eq!(w.delta_sigma(PECycle(0), PECycle(100)), 0.0);
        assert_eq!(w.delta_mu(PECycle(50), PECycle(100)), 3.0);
    }
}
