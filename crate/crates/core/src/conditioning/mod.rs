//! Audio and face conditioning: frame-aligned audio context windows,
//! projection, temporal pooling, and the face-region mask.

mod audio;
pub mod io;
mod mask;

pub use audio::{
    align_audio, pool_temporal, project_audio, window_start, AudioEmbedding, AudioProjector,
    PooledAudioEmbedding, RawAudioFeatures, ReferenceEmbedding, DEFAULT_STAGES,
    DEFAULT_WINDOW_SEC,
};
pub use mask::{build_face_mask, FaceBox, FaceMask};
