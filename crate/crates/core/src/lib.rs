//! NAND flash read-channel modeling toolkit.
//!
//! The crate covers everything except the learned generative model:
//!
//! * [`types`], [`grid`] and [`dataset`]: TLC cell grids, neighbor patterns,
//!   the level/bit Gray mapping and the `FLSHDS1` dataset container.
//! * [`sim`]: a seeded parametric channel (Normal-Laplace level spread,
//!   power-law P/E wear, directional inter-cell interference) that stands in
//!   for measured chip data.
//! * [`stats`]: Gaussian, Normal-Laplace and Student's t densities, histogram
//!   KL divergence, Nelder-Mead and per-level distribution fitting.
//! * [`eval`]: conditional PDFs, total variation distance, level-error and
//!   ICI pattern statistics, and report assembly.
//!
//! Numerical routines are generic over [`Scalar`] (`f32` / `f64`); the
//! aliases below fix the precision used by the rest of the toolkit.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod grid;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use types::{
    CellGrid, ChannelRecord, Direction, Histogram, LevelBitMapping, NeighborPattern, PECycle,
    ProgramLevel, ThresholdSet, TlcBits, VoltageLevel,
};

/// Normal-Laplace parameters in the toolkit's working precision.
pub type NormalLaplace = stats::NormalLaplaceParams<f64>;
/// Gaussian parameters in the toolkit's working precision.
pub type Gaussian = stats::GaussianParams<f64>;
/// Student's t parameters in the toolkit's working precision.
pub type StudentT = stats::StudentTParams<f64>;
/// Level-distribution fit result in the toolkit's working precision.
pub type LevelFit = stats::FitResult<f64>;
