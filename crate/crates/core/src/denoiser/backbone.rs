use serde::{Deserialize, Serialize};

use crate::conditioning::{AudioEmbedding, FaceMask, ReferenceEmbedding};
use crate::costmodel::CostCounter;
use crate::denoiser::{guided_predict, GuidanceConfig, NoiseSchedule};
use crate::error::{Error, Result};
use crate::motion::MotionBuckets;
use crate::numerics::Tensor;

/// Which conditioning a single noise prediction sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    /// Audio and reference both zeroed.
    Unconditional,
    /// Reference only.
    Image,
    ImageAudio,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Unconditional, Branch::Image, Branch::ImageAudio];

    pub fn uses_audio(self) -> bool {
        self == Branch::ImageAudio
    }

    pub fn uses_reference(self) -> bool {
        self != Branch::Unconditional
    }
}

/// Clean latents of the frames immediately preceding a clip.
#[derive(Debug, Clone, Copy)]
pub struct MotionContext<'a> {
    /// `[o, h, w, c]`
    pub frames: &'a Tensor,
    /// Audio aligned to the context frames, `o` frames.
    pub audio: &'a AudioEmbedding,
    /// False for the first clip, whose context is all zeros.
    pub has_predecessor: bool,
}

impl MotionContext<'_> {
    pub fn len(&self) -> usize {
        self.frames.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Everything a clip denoiser is conditioned on besides the noisy latent.
#[derive(Debug, Clone, Copy)]
pub struct ClipCondition<'a> {
    /// `f` frames, one audio context window each.
    pub audio: &'a AudioEmbedding,
    pub reference: &'a ReferenceEmbedding,
    pub buckets: MotionBuckets,
    pub mask: &'a FaceMask,
    pub context: Option<MotionContext<'a>>,
}

/// A latent clip `[f, h, w, c]` and the sequence index of its first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClip {
    pub frames: Tensor,
    pub frame_offset: usize,
}

impl LatentClip {
    pub fn new(frames: Tensor, frame_offset: usize) -> Result<Self> {
        frames.expect_rank(4, "latent clip")?;
        Ok(Self { frames, frame_offset })
    }

    pub fn len(&self) -> usize {
        self.frames.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A noise predictor for one clip.
pub trait Backbone: Sync {
    /// Fixed clip length, if the model has one.
    fn clip_len(&self) -> Option<usize> {
        None
    }

    /// Predicts `ε` for `z` (`[f, h, w, c]`) at timestep `t`.
    fn predict_noise(
        &self,
        z: &Tensor,
        t: usize,
        schedule: &NoiseSchedule,
        cond: &ClipCondition<'_>,
        branch: Branch,
    ) -> Result<Tensor>;
}

fn check_condition(clip: &LatentClip, cond: &ClipCondition<'_>) -> Result<()> {
    let f = clip.len();
    if cond.audio.frames() != f {
        return Err(Error::dim("audio frames", f, cond.audio.frames()));
    }
    let (h, w) = (clip.frames.dim(1), clip.frames.dim(2));
    if cond.mask.mask.dims() != [h, w] {
        return Err(Error::dim("mask cells", h * w, cond.mask.cells()));
    }
    if let Some(ctx) = &cond.context {
        ctx.frames.expect_rank(4, "motion context")?;
        if ctx.frames.dims()[1..] != clip.frames.dims()[1..] {
            return Err(Error::dim(
                "motion context frame size",
                clip.frames.len() / f.max(1),
                ctx.frames.len() / ctx.len().max(1),
            ));
        }
        if ctx.audio.frames() != ctx.len() {
            return Err(Error::dim("motion context audio frames", ctx.len(), ctx.audio.frames()));
        }
    }
    Ok(())
}

/// One guided reverse step `t -> t-1` on a clip: three backbone evaluations,
/// combined by [`guided_predict`], then the deterministic update.
pub fn denoise_clip(
    clip: &LatentClip,
    cond: &ClipCondition<'_>,
    backbone: &dyn Backbone,
    schedule: &NoiseSchedule,
    t: usize,
    guidance: &GuidanceConfig,
    counter: Option<&CostCounter>,
) -> Result<LatentClip> {
    schedule.check_timestep(t)?;
    check_condition(clip, cond)?;
    if let Some(f) = backbone.clip_len() {
        if clip.len() != f {
            return Err(Error::dim("clip frames", f, clip.len()));
        }
    }
    let mut eps = Vec::with_capacity(3);
    for branch in Branch::ALL {
        let e = backbone.predict_noise(&clip.frames, t, schedule, cond, branch)?;
        e.expect_dims(clip.frames.dims(), "noise prediction")?;
        eps.push(e);
    }
    let guided = guided_predict(&eps[0], &eps[1], &eps[2], guidance)?;
    let next = schedule.reverse_step(&clip.frames, &guided, t)?;
    if let Some(c) = counter {
        c.record_window_step(clip.len(), Branch::ALL.len());
        if let Some(ctx) = &cond.context {
            c.record_motion_context(ctx.len(), clip.len());
        }
    }
    if let Some(i) = next.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            index: i,
            detail: format!("non-finite latent after step t={t}"),
        });
    }
    LatentClip::new(next, clip.frame_offset)
}
