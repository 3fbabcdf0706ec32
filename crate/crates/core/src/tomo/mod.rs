//! Parallel-beam CT physics and paired dataset simulation.

pub mod dataset;
mod fbp;
mod geometry;
mod image;
mod noise;
pub mod phantom;
mod projector;
mod sinogram_file;

pub use dataset::{build_dataset, build_pair, read_dataset, DataPair, Dataset, DatasetConfig, DatasetHeader};
pub use fbp::{fbp_reconstruct, filter_len, filter_sinogram, ram_lak_filter};
pub use geometry::Geometry;
pub use image::{Image, Sinogram};
pub use noise::{apply_poisson_noise, simulate_low_dose, NoiseModel};
pub use phantom::{disc, generate_phantom, PhantomFamily};
pub use projector::{back_project, radon_forward};
pub use sinogram_file::{read_sinogram, write_sinogram};
