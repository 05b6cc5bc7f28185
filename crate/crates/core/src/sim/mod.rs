//! Seeded parametric read channel.
//!
//! Each cell's read voltage is a Normal-Laplace draw for its programmed level,
//! shifted and widened by a power law in the P/E count, plus a directional
//! interference term from its four nearest neighbors. The default parameters
//! are calibrated so that the qualitative wear and interference behavior of
//! measured TLC blocks is reproduced.

mod channel;
mod params;

pub use channel::{
    apply_ici, level_params_at, program_pseudorandom, sample_normal_laplace, simulate_block,
    simulate_read, simulate_voltages,
};
pub use params::{ChannelParams, IciCoupling, LevelParams, WearLaw};
