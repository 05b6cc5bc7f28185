//! Baseline statistical level models and their fitting.

mod dist;
mod fit;
mod kl;
mod nelder_mead;
pub mod special;

pub use dist::{
    discretize, pdf_gaussian, pdf_normal_laplace, pdf_student_t, Density, Family, FamilyParams,
    GaussianParams, NormalLaplaceParams, StudentTParams,
};
pub use fit::{fit_level_distribution, FitRecord, FitReport, FitResult};
pub use kl::{kl_divergence, kl_divergence_probs, KlOutcome, KL_EPS};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult, Termination};
