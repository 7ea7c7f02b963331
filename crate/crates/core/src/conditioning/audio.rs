use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Linear, Params, Tensor};

pub const DEFAULT_STAGES: usize = 5;
pub const DEFAULT_WINDOW_SEC: f64 = 0.2;

/// Per-token audio features from several encoder stages sharing one time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawAudioFeatures {
    pub rate_hz: f64,
    /// One `[n_tokens × c_stage]` track per stage.
    pub stages: Vec<Tensor>,
}

impl RawAudioFeatures {
    pub fn new(rate_hz: f64, stages: Vec<Tensor>) -> Result<Self> {
        let raw = Self { rate_hz, stages };
        raw.validate()?;
        Ok(raw)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0) || !self.rate_hz.is_finite() {
            return Err(Error::config(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        let first = self
            .stages
            .first()
            .ok_or_else(|| Error::config("audio features have no stages"))?;
        first.expect_rank(2, "audio stage")?;
        let n = first.dim(0);
        for (i, s) in self.stages.iter().enumerate() {
            s.expect_rank(2, &format!("audio stage {i}"))?;
            if s.dim(0) != n {
                return Err(Error::dim(format!("stage {i} token count"), n, s.dim(0)));
            }
        }
        Ok(())
    }

    pub fn n_tokens(&self) -> usize {
        self.stages.first().map_or(0, |s| s.dim(0))
    }

    /// Channel width after stage concatenation.
    pub fn width(&self) -> usize {
        self.stages.iter().map(|s| s.dim(1)).sum()
    }
}

/// Per-frame audio context `[f × d × c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioEmbedding {
    pub tokens: Tensor,
}

impl AudioEmbedding {
    pub fn new(tokens: Tensor) -> Result<Self> {
        tokens.expect_rank(3, "audio embedding")?;
        if tokens.dim(1) == 0 {
            return Err(Error::dim("context tokens (d >= 1)", 1, 0));
        }
        Ok(Self { tokens })
    }

    pub fn zeros(frames: usize, tokens: usize, width: usize) -> Self {
        Self {
            tokens: Tensor::zeros(&[frames, tokens, width]),
        }
    }

    pub fn frames(&self) -> usize {
        self.tokens.dim(0)
    }

    pub fn context_tokens(&self) -> usize {
        self.tokens.dim(1)
    }

    pub fn width(&self) -> usize {
        self.tokens.dim(2)
    }

    /// Frames at the given absolute indices, in order.
    pub fn gather(&self, indices: &[usize]) -> Result<AudioEmbedding> {
        Ok(AudioEmbedding {
            tokens: self.tokens.gather(indices)?,
        })
    }

    /// Zero-extends (or truncates) the frame axis to `frames`.
    pub fn resized(&self, frames: usize) -> AudioEmbedding {
        let per = self.context_tokens() * self.width();
        let mut data = vec![0.0; frames * per];
        let keep = frames.min(self.frames()) * per;
        data[..keep].copy_from_slice(&self.tokens.data()[..keep]);
        AudioEmbedding {
            tokens: Tensor::new(&[frames, self.context_tokens(), self.width()], data)
                .expect("sizes computed from self"),
        }
    }
}

/// Temporal mean of an [`AudioEmbedding`], `[d × c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledAudioEmbedding {
    pub tokens: Tensor,
}

impl PooledAudioEmbedding {
    /// Mean over the token axis as well, giving one `[c]` summary vector.
    pub fn summary(&self) -> Tensor {
        self.tokens
            .mean_leading()
            .expect("pooled embedding has d >= 1")
    }
}

/// Gathers, for every video frame, the audio tokens inside a window of
/// `window_sec` centred on the frame midpoint `(i + 0.5) / fps`, and
/// concatenates all stages along channels.
///
/// Token `j` is stamped at `j / rate_hz`. Positions outside the recorded
/// audio are zero-filled.
pub fn align_audio(
    raw: &RawAudioFeatures,
    n_frames: usize,
    fps: f64,
    window_sec: f64,
) -> Result<AudioEmbedding> {
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(Error::config(format!("fps must be positive, got {fps}")));
    }
    if n_frames == 0 {
        return Err(Error::config("n_frames must be at least 1"));
    }
    raw.validate()?;
    let d = (window_sec * raw.rate_hz).round();
    if !(d >= 1.0) {
        return Err(Error::config(format!(
            "window of {window_sec}s at {} Hz holds no tokens",
            raw.rate_hz
        )));
    }
    let d = d as usize;
    let width = raw.width();
    let n_tokens = raw.n_tokens() as i64;
    let mut out = vec![0.0; n_frames * d * width];
    for frame in 0..n_frames {
        let start = window_start(frame, fps, raw.rate_hz, d);
        for k in 0..d {
            let j = start + k as i64;
            if j < 0 || j >= n_tokens {
                continue;
            }
            let dst = &mut out[(frame * d + k) * width..(frame * d + k + 1) * width];
            let mut off = 0;
            for stage in &raw.stages {
                let row = stage.slab(j as usize);
                dst[off..off + row.len()].copy_from_slice(row);
                off += row.len();
            }
        }
    }
    AudioEmbedding::new(Tensor::new(&[n_frames, d, width], out)?)
}

/// First token index of frame `frame`'s window.
pub fn window_start(frame: usize, fps: f64, rate_hz: f64, d: usize) -> i64 {
    let centre = (frame as f64 + 0.5) / fps * rate_hz;
    (centre - d as f64 / 2.0).round() as i64
}

/// Three stacked linear layers mapping audio features to the attention width.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioProjector {
    pub layers: [Linear; 3],
}

impl AudioProjector {
    pub fn random(input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            layers: [
                Linear::random(input, hidden, true, rng),
                Linear::random(hidden, hidden, true, rng),
                Linear::random(hidden, output, true, rng),
            ],
        }
    }

    pub fn identity(width: usize) -> Self {
        Self {
            layers: [
                Linear::identity(width, true),
                Linear::identity(width, true),
                Linear::identity(width, true),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].output_dim()
    }

    /// Returns the output together with the inputs of each layer.
    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, [Tensor; 3])> {
        let h1 = self.layers[0].forward(x)?;
        let h2 = self.layers[1].forward(&h1)?;
        let out = self.layers[2].forward(&h2)?;
        Ok((out, [x.clone(), h1, h2]))
    }

    pub(crate) fn backward(
        &self,
        inputs: &[Tensor; 3],
        dy: &Tensor,
        grad: &mut AudioProjector,
    ) -> Result<Tensor> {
        let d2 = self.layers[2].backward(&inputs[2], dy, &mut grad.layers[2])?;
        let d1 = self.layers[1].backward(&inputs[1], &d2, &mut grad.layers[1])?;
        self.layers[0].backward(&inputs[0], &d1, &mut grad.layers[0])
    }
}

impl Params for AudioProjector {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

pub fn project_audio(emb: &AudioEmbedding, proj: &AudioProjector) -> Result<AudioEmbedding> {
    if emb.width() != proj.input_dim() {
        return Err(Error::dim("audio channels", proj.input_dim(), emb.width()));
    }
    let (out, _) = proj.forward_cached(&emb.tokens)?;
    AudioEmbedding::new(out)
}

pub fn pool_temporal(emb: &AudioEmbedding) -> Result<PooledAudioEmbedding> {
    if emb.frames() == 0 {
        return Err(Error::EmptyInput("audio embedding has no frames".into()));
    }
    Ok(PooledAudioEmbedding {
        tokens: emb.tokens.mean_leading()?,
    })
}

/// Single-image reference embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEmbedding {
    pub vector: Tensor,
}

impl ReferenceEmbedding {
    pub fn new(vector: Tensor) -> Result<Self> {
        vector.expect_rank(1, "reference embedding")?;
        if !vector.is_finite() {
            return Err(Error::Input("reference embedding has non-finite entries".into()));
        }
        Ok(Self { vector })
    }

    pub fn zeros(width: usize) -> Self {
        Self {
            vector: Tensor::zeros(&[width]),
        }
    }

    pub fn width(&self) -> usize {
        self.vector.len()
    }
}
