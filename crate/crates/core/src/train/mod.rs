//! Maximum-likelihood training: NLL objective, Adam with decoupled weight decay,
//! identity initialization and a deterministic serial training loop.

mod adam;
mod config;
mod loss;
mod trainer;

pub use adam::{adam_step, grad_norm};
pub use config::{Precision, TrainConfig};
pub use loss::{bits_per_dim, nll_loss};
pub use trainer::{
    batch_nll, batch_tensors, final_checkpoint_path, images_tensor, init_identity, loss_and_grads, loss_log_path,
    periodic_checkpoint_path, train, train_step, BatchSampler, LossRecord, TrainOutput, LOSS_HEADER,
};
