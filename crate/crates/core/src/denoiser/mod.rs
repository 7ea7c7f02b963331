//! Clip-level denoising: noise schedule, guidance, the backbone interface,
//! analytic Gaussian oracles and a trainable toy network.

mod backbone;
mod guidance;
mod oracle;
mod schedule;
mod toy;
mod train;

pub use backbone::{denoise_clip, Backbone, Branch, ClipCondition, LatentClip, MotionContext};
pub use guidance::{guided_predict, GuidanceConfig};
pub use oracle::{
    ConditionalMean, CoupledGaussianOracle, OracleConfig, PerFrameGaussianOracle,
    DEFAULT_CONTEXT_NOISE, DEFAULT_RHO,
};
pub use schedule::NoiseSchedule;
pub use toy::{
    spatial_audio_attend, temporal_audio_attend, ToyConfig, ToyDenoiser, ToyInputs,
    ToyLossObjective, ToyStage,
};
pub use train::{
    train_toy, write_loss_csv, DropoutConfig, DropoutSampler, Dropped, Optimizer, TrainConfig,
    TrainEvent, TrainingSample,
};
