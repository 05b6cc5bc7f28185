//! Conditional VAE-GAN for the flash read channel.
//!
//! An encoder maps a voltage grid and its P/E stamp to a Gaussian posterior
//! over a six-dimensional latent vector; a U-Net generator maps a level grid,
//! the P/E features and a latent vector back to voltages; a patch
//! discriminator scores (level, voltage) pairs. Everything runs on the CPU
//! with hand-written forward and backward passes, generic over `f32`/`f64`.

pub mod checkpoint;
pub mod config;
pub mod element;
pub mod embed;
pub mod error;
pub mod layers;
pub mod loss;
pub mod model;
pub mod nets;
pub mod param;
pub mod tensor;

pub use config::TrainConfig;
pub use element::Element;
pub use embed::{pe_embed, st_concat, EMBED_DIM};
pub use error::{GenError, Result};
pub use model::{Batch, EncoderOut, LossComponent, LossComponents, ModelState, StepRecord};
pub use tensor::Tensor;

/// Model in training precision.
pub type Model = ModelState<f32>;
