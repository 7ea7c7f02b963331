//! Time-aware position-shift fusion for long-sequence latent video denoising.
//!
//! A fixed-length clip denoiser is applied to sequences longer than its
//! window by shifting window starts between timesteps. The crate provides the
//! scheduler, three reference strategies, conditioning utilities, analytic
//! and trainable denoisers, a cost model and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod costmodel;
pub mod denoiser;
pub mod error;
pub mod harness;
pub mod motion;
pub mod numerics;
pub mod scheduler;

pub use error::{Error, Result};
