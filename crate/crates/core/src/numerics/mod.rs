//! Dense tensor core: linear layers, attention, position encodings and a
//! finite-difference gradient checker.

mod attention;
mod encoding;
mod gradcheck;
mod linear;
mod params;
mod tensor;

pub use attention::{
    cross_attention, cross_attention_backward, cross_attention_forward, AttentionCache,
    AttentionGrads, AttentionWeights,
};
pub use encoding::sinusoidal_encode;
pub use gradcheck::{grad_check, FnObjective, GradCheckReport, Objective};
pub use linear::Linear;
pub use params::Params;
pub use tensor::{Precision, Tensor};
