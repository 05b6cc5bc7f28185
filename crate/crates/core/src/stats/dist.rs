use serde::{Deserialize, Serialize};

use super::special::{ln_gamma, log_add_exp, log_mills_ratio, log_std_normal_pdf};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A univariate probability density.
pub trait Density<T: Scalar> {
    fn ln_pdf(&self, x: T) -> T;

    fn pdf(&self, x: T) -> T {
        self.ln_pdf(x).exp()
    }

    fn mean(&self) -> T;
}

fn positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn finite<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> GaussianParams<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        finite("mu", mu)?;
        positive("sigma", sigma)?;
        Ok(GaussianParams { mu, sigma })
    }
}

impl<T: Scalar> Density<T> for GaussianParams<T> {
    fn ln_pdf(&self, x: T) -> T {
        let z = (x - self.mu) / self.sigma;
        -z * z * T::cst(0.5) - self.sigma.ln() - T::cst(0.5) * (T::cst(2.0) * T::PI()).ln()
    }

    fn mean(&self) -> T {
        self.mu
    }
}

/// Normal-Laplace law: a Normal(`mu`, `sigma`²) variate plus an asymmetric
/// Laplace variate with right-tail rate `alpha` and left-tail rate `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalLaplaceParams<T> {
    pub mu: T,
    pub sigma: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> NormalLaplaceParams<T> {
    pub fn new(mu: T, sigma: T, alpha: T, beta: T) -> Result<Self> {
        finite("mu", mu)?;
        positive("sigma", sigma)?;
        positive("alpha", alpha)?;
        positive("beta", beta)?;
        Ok(NormalLaplaceParams { mu, sigma, alpha, beta })
    }

    pub fn variance(&self) -> T {
        self.sigma * self.sigma + (self.alpha * self.alpha).recip() + (self.beta * self.beta).recip()
    }
}

impl<T: Scalar> Density<T> for NormalLaplaceParams<T> {
    /// `ln[αβ/(α+β) · φ(z) · (R(ασ − z) + R(βσ + z))]` with `z = (x − μ)/σ`,
    /// evaluated entirely in log space.
    fn ln_pdf(&self, x: T) -> T {
        let (mu, s, a, b) = (
            self.mu.as_f64(),
            self.sigma.as_f64(),
            self.alpha.as_f64(),
            self.beta.as_f64(),
        );
        let z = (x.as_f64() - mu) / s;
        let right = log_mills_ratio(a * s - z);
        let left = log_mills_ratio(b * s + z);
        T::cst((a * b / (a + b)).ln() + log_std_normal_pdf(z) + log_add_exp(right, left))
    }

    fn mean(&self) -> T {
        self.mu + self.alpha.recip() - self.beta.recip()
    }
}

/// Location-scale Student's t.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams<T> {
    pub mu: T,
    pub scale: T,
    pub nu: T,
}

impl<T: Scalar> StudentTParams<T> {
    pub fn new(mu: T, scale: T, nu: T) -> Result<Self> {
        finite("mu", mu)?;
        positive("scale", scale)?;
        positive("nu", nu)?;
        Ok(StudentTParams { mu, scale, nu })
    }
}

impl<T: Scalar> Density<T> for StudentTParams<T> {
    fn ln_pdf(&self, x: T) -> T {
        let nu = self.nu.as_f64();
        let s = self.scale.as_f64();
        let z = (x.as_f64() - self.mu.as_f64()) / s;
        let norm = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln() - s.ln();
        T::cst(norm - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p())
    }

    fn mean(&self) -> T {
        self.mu
    }
}

pub fn pdf_gaussian<T: Scalar>(x: T, p: &GaussianParams<T>) -> T {
    p.pdf(x)
}

pub fn pdf_normal_laplace<T: Scalar>(x: T, p: &NormalLaplaceParams<T>) -> T {
    p.pdf(x)
}

pub fn pdf_student_t<T: Scalar>(x: T, p: &StudentTParams<T>) -> T {
    p.pdf(x)
}

/// The three baseline model families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    NormalLaplace,
    StudentT,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::NormalLaplace, Family::StudentT];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::NormalLaplace => "normal_laplace",
            Family::StudentT => "student_t",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FamilyParams<T> {
    Gaussian(GaussianParams<T>),
    NormalLaplace(NormalLaplaceParams<T>),
    StudentT(StudentTParams<T>),
}

impl<T: Scalar> FamilyParams<T> {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Gaussian(_) => Family::Gaussian,
            FamilyParams::NormalLaplace(_) => Family::NormalLaplace,
            FamilyParams::StudentT(_) => Family::StudentT,
        }
    }

    fn density(&self) -> &dyn Density<T> {
        match self {
            FamilyParams::Gaussian(p) => p,
            FamilyParams::NormalLaplace(p) => p,
            FamilyParams::StudentT(p) => p,
        }
    }
}

impl<T: Scalar> Density<T> for FamilyParams<T> {
    fn ln_pdf(&self, x: T) -> T {
        self.density().ln_pdf(x)
    }

    fn mean(&self) -> T {
        self.density().mean()
    }
}

/// Bin probabilities of a density on `bin_count` integer-centered bins:
/// the density at each bin center, renormalized over the grid. All zeros if
/// the density underflows everywhere.
pub fn discretize<T: Scalar, D: Density<T> + ?Sized>(density: &D, bin_count: usize) -> Vec<T> {
    let mut q: Vec<T> = (0..bin_count).map(|i| density.pdf(T::cst(i as f64))).collect();
    let total = q.iter().fold(T::zero(), |acc, &v| acc + v);
    if total > T::zero() && total.is_finite() {
        for v in &mut q {
            *v /= total;
        }
    } else {
        q.iter_mut().for_each(|v| *v = T::zero());
    }
    q
}
