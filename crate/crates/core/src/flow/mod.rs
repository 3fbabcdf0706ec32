//! Invertible blocks, the conditioning network and the assembled conditional flow.

mod conditioner;
mod config;
pub mod coupling;
pub mod downsample;
pub mod inv1x1;
pub mod layers;
mod model;

pub use conditioner::{ConditioningNetwork, Features};
pub use config::{ArchConfig, DownsampleKind};
pub use coupling::{Coupling, SubnetKind};
pub use inv1x1::{Inv1x1, InvConvInit, Permutation};
pub use layers::{BnUpdates, Ctx, Mode};
pub use model::{FlowModel, FlowOutput, LatentSlice, ModelBlock};
