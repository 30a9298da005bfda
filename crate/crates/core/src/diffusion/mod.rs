//! Denoising diffusion: schedule, forward and reverse processes, a small
//! time-conditioned network and its training loop.

pub mod checkpoint;
pub mod network;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use checkpoint::{Checkpoint, Tensor};
pub use network::{DenoiserModel, NetworkConfig, OutputMode};
pub use sampler::{
    denoise_via_diffusion, forward_diffuse, forward_diffuse_with_noise, reverse_denoise_step,
    reverse_denoise_step_with_noise, FnPredictor, NoisePredictor,
};
pub use schedule::{build_linear_schedule, NoiseSchedule};
pub use train::{train_denoiser, train_from_source, Adam, TrainConfig, TrainedModel, TrainingSource, VectorDataset};
