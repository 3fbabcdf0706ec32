//! Conditional normalizing flows for low-dose parallel-beam CT.
//!
//! * [`tomo`]: Radon projector, filtered back-projection, Poisson noise, phantoms and
//!   the paired dataset builder.
//! * [`grad`]: a small tape-based reverse-mode autodiff engine.
//! * [`flow`]: invertible blocks, the conditioning network and the multi-scale model.
//! * [`train`]: likelihood training with Adam.
//! * [`eval`]: posterior sampling, conditional mean and image metrics.

pub mod error;
pub mod eval;
pub mod flow;
pub mod grad;
pub mod image_io;
pub mod rng;
pub mod tomo;
pub mod train;

pub use error::{Error, Result};
pub use flow::{ArchConfig, FlowModel};
pub use grad::{Real, Tensor};
pub use tomo::{Geometry, Image, NoiseModel, Sinogram};
