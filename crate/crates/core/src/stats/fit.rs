use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dist::{discretize, Family, FamilyParams, GaussianParams, NormalLaplaceParams, StudentTParams};
use super::kl::kl_divergence_probs;
use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::Histogram;

/// Outcome of fitting one family to one empirical level distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult<T> {
    pub family: Family,
    pub params: FamilyParams<T>,
    /// Final `D_KL(empirical ‖ model)`.
    pub kl: T,
    pub iterations: usize,
    /// False when the simplex hit its iteration cap.
    pub converged: bool,
    /// Empirical bins where the model had no mass before the KL floor.
    pub floored_bins: usize,
}

/// Positive parameters are optimized on a log scale.
fn unpack<T: Scalar>(family: Family, theta: &[T]) -> Option<FamilyParams<T>> {
    let p = match family {
        Family::Gaussian => FamilyParams::Gaussian(GaussianParams::new(theta[0], theta[1].exp()).ok()?),
        Family::NormalLaplace => FamilyParams::NormalLaplace(
            NormalLaplaceParams::new(theta[0], theta[1].exp(), theta[2].exp(), theta[3].exp()).ok()?,
        ),
        Family::StudentT => {
            FamilyParams::StudentT(StudentTParams::new(theta[0], theta[1].exp(), theta[2].exp()).ok()?)
        }
    };
    Some(p)
}

/// Moment-matched starting point in the unconstrained coordinates.
fn initial_guess<T: Scalar>(family: Family, mean: f64, std: f64) -> Vec<T> {
    let v = match family {
        Family::Gaussian => vec![mean, std.ln()],
        // equal rates 2/std; the Gaussian part takes the remaining variance
        Family::NormalLaplace => {
            let rate = 2.0 / std;
            vec![mean, (std / 2f64.sqrt()).ln(), rate.ln(), rate.ln()]
        }
        Family::StudentT => {
            let nu: f64 = 5.0;
            vec![mean, (std * ((nu - 2.0) / nu).sqrt()).ln(), f64::ln(nu)]
        }
    };
    v.into_iter().map(T::cst).collect()
}

/// Fits `family` to `empirical` by minimizing the histogram KL divergence
/// with Nelder-Mead from a moment-matched start.
pub fn fit_level_distribution<T: Scalar>(empirical: &Histogram, family: Family) -> Result<FitResult<T>> {
    if empirical.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    if empirical.occupied_bins() < 2 {
        return Err(Error::DegenerateHistogram);
    }
    let (mean, std) = empirical.moments().expect("non-empty");
    let bins = empirical.bin_count();
    let p: Vec<T> = empirical.normalized().into_iter().map(T::cst).collect();

    let objective = |theta: &[T]| -> T {
        match unpack(family, theta) {
            Some(params) => {
                let q = discretize(&params, bins);
                if q.iter().all(|&v| v == T::zero()) {
                    return T::infinity();
                }
                kl_divergence_probs(&p, &q).map(|o| o.value).unwrap_or_else(|_| T::infinity())
            }
            None => T::infinity(),
        }
    };
    let opts = NelderMeadOptions {
        max_iter: 4000,
        x_tol: T::cst(1e-7),
        f_tol: T::cst(1e-11),
    };
    let x0 = initial_guess::<T>(family, mean, std.max(0.5));
    let nm = nelder_mead(objective, &x0, &opts)?;
    let params = unpack(family, &nm.x).ok_or_else(|| Error::NonFiniteObjective(nm.x.iter().map(|v| v.as_f64()).collect()))?;
    let q = discretize(&params, bins);
    let kl = kl_divergence_probs(&p, &q)?;
    Ok(FitResult {
        family,
        params,
        kl: kl.value,
        iterations: nm.iterations,
        converged: nm.converged() && kl.value.is_finite(),
        floored_bins: kl.floored_bins,
    })
}

/// One row of the fit report: a (level, P/E stamp, family) fit or the reason
/// it could not be made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub level: u8,
    pub pe: u32,
    pub family: Family,
    /// `ok`, `not_converged`, `empty` or `degenerate`.
    pub status: String,
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub floored_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl FitRecord {
    pub fn from_outcome(level: u8, pe: u32, family: Family, samples: u64, outcome: &Result<FitResult<f64>>) -> Self {
        let mut rec = FitRecord {
            level,
            pe,
            family,
            status: String::new(),
            samples,
            kl: None,
            iterations: 0,
            floored_bins: 0,
            mu: None,
            sigma: None,
            alpha: None,
            beta: None,
            scale: None,
            nu: None,
        };
        match outcome {
            Ok(fit) => {
                rec.status = if fit.converged { "ok" } else { "not_converged" }.into();
                rec.kl = Some(fit.kl);
                rec.iterations = fit.iterations;
                rec.floored_bins = fit.floored_bins;
                match fit.params {
                    FamilyParams::Gaussian(p) => {
                        rec.mu = Some(p.mu);
                        rec.sigma = Some(p.sigma);
                    }
                    FamilyParams::NormalLaplace(p) => {
                        rec.mu = Some(p.mu);
                        rec.sigma = Some(p.sigma);
                        rec.alpha = Some(p.alpha);
                        rec.beta = Some(p.beta);
                    }
                    FamilyParams::StudentT(p) => {
                        rec.mu = Some(p.mu);
                        rec.scale = Some(p.scale);
                        rec.nu = Some(p.nu);
                    }
                }
            }
            Err(Error::EmptyHistogram) => rec.status = "empty".into(),
            Err(Error::DegenerateHistogram) => rec.status = "degenerate".into(),
            Err(e) => rec.status = format!("failed: {e}"),
        }
        rec
    }

    /// Fitted parameters, if the fit produced any.
    pub fn params(&self) -> Option<FamilyParams<f64>> {
        let mu = self.mu?;
        match self.family {
            Family::Gaussian => GaussianParams::new(mu, self.sigma?).ok().map(FamilyParams::Gaussian),
            Family::NormalLaplace => NormalLaplaceParams::new(mu, self.sigma?, self.alpha?, self.beta?)
                .ok()
                .map(FamilyParams::NormalLaplace),
            Family::StudentT => StudentTParams::new(mu, self.scale?, self.nu?)
                .ok()
                .map(FamilyParams::StudentT),
        }
    }
}

/// Fit report document, one `[[fit]]` table per row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(default)]
    pub fit: Vec<FitRecord>,
}

impl FitReport {
    pub fn find(&self, level: u8, pe: u32, family: Family) -> Option<&FitRecord> {
        self.fit
            .iter()
            .find(|r| r.level == level && r.pe == pe && r.family == family)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
