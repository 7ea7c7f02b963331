use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::{AudioEmbedding, FaceMask, ReferenceEmbedding};
use crate::costmodel::{overlap_windows, CostCounter};
use crate::denoiser::{
    denoise_clip, Backbone, ClipCondition, GuidanceConfig, LatentClip, MotionContext, NoiseSchedule,
};
use crate::error::{Error, Result};
use crate::motion::MotionBuckets;
use crate::numerics::Tensor;
use crate::scheduler::{plan_step, ShiftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Shift,
    Independent,
    Overlap,
    MotionFrames,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Shift,
        Strategy::Independent,
        Strategy::Overlap,
        Strategy::MotionFrames,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Shift => "shift",
            Strategy::Independent => "independent",
            Strategy::Overlap => "overlap",
            Strategy::MotionFrames => "motion_frames",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

/// Strategy plus its context / overlap size `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: Strategy,
    #[serde(default)]
    pub o: usize,
}

impl StrategyConfig {
    pub fn validate(&self, f: usize) -> Result<()> {
        let uses_o = matches!(self.kind, Strategy::Overlap | Strategy::MotionFrames);
        if uses_o && self.o >= f {
            return Err(Error::config(format!(
                "{} needs o < f, got o={}, f={f}",
                self.kind.name(),
                self.o
            )));
        }
        Ok(())
    }
}

/// Conditioning shared by the whole sequence.
#[derive(Debug, Clone, Copy)]
pub struct SequenceCondition<'a> {
    /// One audio context window per frame, `l` frames.
    pub audio: &'a AudioEmbedding,
    pub reference: &'a ReferenceEmbedding,
    pub buckets: MotionBuckets,
    pub mask: &'a FaceMask,
}

/// The denoiser and sampler settings used by every strategy.
#[derive(Clone, Copy)]
pub struct Runner<'a> {
    pub backbone: &'a dyn Backbone,
    pub schedule: &'a NoiseSchedule,
    pub guidance: GuidanceConfig,
    pub counter: Option<&'a CostCounter>,
    /// Evaluate windows of one timestep on the rayon pool.
    pub parallel: bool,
}

impl<'a> Runner<'a> {
    pub fn new(backbone: &'a dyn Backbone, schedule: &'a NoiseSchedule, guidance: GuidanceConfig) -> Self {
        Self {
            backbone,
            schedule,
            guidance,
            counter: None,
            parallel: false,
        }
    }

    pub fn with_counter(mut self, counter: &'a CostCounter) -> Self {
        self.counter = Some(counter);
        self
    }

    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    fn step(&self, frames: Tensor, offset: usize, cond: &ClipCondition<'_>, t: usize) -> Result<Tensor> {
        let clip = LatentClip::new(frames, offset)?;
        let out = denoise_clip(&clip, cond, self.backbone, self.schedule, t, &self.guidance, self.counter)?;
        Ok(out.frames)
    }

    fn map_windows<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        if self.parallel {
            items.par_iter().map(f).collect()
        } else {
            items.iter().map(f).collect()
        }
    }
}

fn check_sequence(z: &Tensor, cond: &SequenceCondition<'_>) -> Result<usize> {
    z.expect_rank(4, "latent sequence")?;
    let l = z.dim(0);
    if l == 0 {
        return Err(Error::EmptyInput("latent sequence has no frames".into()));
    }
    if cond.audio.frames() != l {
        return Err(Error::Input(format!(
            "audio has {} frames but the latent sequence has {l}",
            cond.audio.frames()
        )));
    }
    Ok(l)
}

fn clip_condition<'c>(seq: &SequenceCondition<'c>, audio: &'c AudioEmbedding) -> ClipCondition<'c> {
    ClipCondition {
        audio,
        reference: seq.reference,
        buckets: seq.buckets,
        mask: seq.mask,
        context: None,
    }
}

/// Zero-extends the frame axis.
fn pad_frames(z: &Tensor, frames: usize) -> Tensor {
    let per = z.len() / z.dim(0);
    let mut data = z.data().to_vec();
    data.resize(frames * per, 0.0);
    let mut dims = z.dims().to_vec();
    dims[0] = frames;
    Tensor::new(&dims, data)
        .expect("sizes derived from source")
        .with_precision(z.precision())
}

fn truncate_frames(z: Tensor, frames: usize) -> Tensor {
    if z.dim(0) == frames {
        return z;
    }
    let per = z.len() / z.dim(0);
    let mut dims = z.dims().to_vec();
    dims[0] = frames;
    let precision = z.precision();
    let mut data = z.into_data();
    data.truncate(frames * per);
    Tensor::new(&dims, data)
        .expect("sizes derived from source")
        .with_precision(precision)
}

fn check_steps(runner: &Runner<'_>, steps: usize) -> Result<()> {
    if runner.schedule.steps() != steps {
        return Err(Error::config(format!(
            "shift config has {steps} steps but the schedule has {}",
            runner.schedule.steps()
        )));
    }
    Ok(())
}

/// Position-shift fusion: at executed step `k` the whole sequence is covered
/// by non-overlapping windows starting at `(k·alpha) mod l`, wrapping
/// circularly. Wrapped re-visits are evaluated but their outputs dropped.
pub fn run_shift(
    runner: &Runner<'_>,
    z_t: &Tensor,
    cond: &SequenceCondition<'_>,
    cfg: &ShiftConfig,
) -> Result<Tensor> {
    cfg.validate_relaxed()?;
    let l = check_sequence(z_t, cond)?;
    if l != cfg.l {
        return Err(Error::Input(format!("shift config has l={} but the sequence has {l}", cfg.l)));
    }
    check_steps(runner, cfg.steps)?;
    let mut z = z_t.clone();
    for k in 0..cfg.steps {
        let t = cfg.steps - k;
        let windows = plan_step(l, cfg.f, cfg.start(k));
        let outputs = runner.map_windows(&windows, |w| {
            let audio = cond.audio.gather(&w.indices)?;
            let c = clip_condition(cond, &audio);
            runner.step(z.gather(&w.indices)?, w.start, &c, t)
        })?;
        let mut next = z.clone();
        for (w, out) in windows.iter().zip(&outputs) {
            for (j, i) in w.fresh() {
                next.slab_mut(i).copy_from_slice(out.slab(j));
            }
        }
        z = next;
    }
    Ok(z)
}

/// Consecutive `f`-frame clips, each denoised on its own. A ragged tail is
/// zero-padded and the padding dropped from the output.
pub fn run_independent(runner: &Runner<'_>, z_t: &Tensor, cond: &SequenceCondition<'_>, f: usize) -> Result<Tensor> {
    run_motion_frames(runner, z_t, cond, f, 0)
}

/// Linear cross-fade weights for one window of an overlapping sweep.
///
/// Position `q` of an `o`-frame overlap gets `(q+1)/(o+1)` on the incoming
/// window and `(o−q)/(o+1)` on the outgoing one.
pub fn crossfade_weights(f: usize, o: usize, has_prev: bool, has_next: bool) -> Vec<f64> {
    (0..f)
        .map(|j| {
            let mut w: f64 = 1.0;
            if has_prev && j < o {
                w = w.min((j + 1) as f64 / (o + 1) as f64);
            }
            if has_next && j + o >= f {
                w = w.min((f - j) as f64 / (o + 1) as f64);
            }
            w
        })
        .collect()
}

/// Windows advance by `f − o`; overlapped frames are denoised by both windows
/// and blended with [`crossfade_weights`].
pub fn run_overlap(
    runner: &Runner<'_>,
    z_t: &Tensor,
    cond: &SequenceCondition<'_>,
    f: usize,
    o: usize,
) -> Result<Tensor> {
    StrategyConfig { kind: Strategy::Overlap, o }.validate(f)?;
    let l = check_sequence(z_t, cond)?;
    let n_win = overlap_windows(l, f, o)?;
    let stride = f - o;
    let padded = (n_win - 1) * stride + f;
    let audio = cond.audio.resized(padded);
    let per = z_t.len() / l;
    let starts: Vec<usize> = (0..n_win).map(|w| w * stride).collect();
    let weights: Vec<Vec<f64>> = (0..n_win)
        .map(|w| crossfade_weights(f, o, w > 0, w + 1 < n_win))
        .collect();
    let mut z = pad_frames(z_t, padded);
    for t in runner.schedule.timesteps() {
        let outputs = runner.map_windows(&starts, |&s| {
            let idx: Vec<usize> = (s..s + f).collect();
            let a = audio.gather(&idx)?;
            let c = clip_condition(cond, &a);
            runner.step(z.gather(&idx)?, s, &c, t)
        })?;
        let mut num = vec![0.0; padded * per];
        let mut den = vec![0.0; padded];
        for ((&s, out), wts) in starts.iter().zip(&outputs).zip(&weights) {
            for (j, &wj) in wts.iter().enumerate() {
                den[s + j] += wj;
                let row = &mut num[(s + j) * per..(s + j + 1) * per];
                row.iter_mut().zip(out.slab(j)).for_each(|(a, b)| *a += wj * b);
            }
        }
        for (i, d) in den.iter().enumerate() {
            num[i * per..(i + 1) * per].iter_mut().for_each(|v| *v /= d);
        }
        z = Tensor::new(z.dims(), num)?.with_precision(z.precision());
    }
    Ok(truncate_frames(z, l))
}

/// Clips processed one after another, each fully denoised; clip `c` sees the
/// last `o` clean frames of clip `c − 1` as temporal context (zeros for the
/// first clip). `o = 0` gives independent clips.
pub fn run_motion_frames(
    runner: &Runner<'_>,
    z_t: &Tensor,
    cond: &SequenceCondition<'_>,
    f: usize,
    o: usize,
) -> Result<Tensor> {
    if f == 0 {
        return Err(Error::config("clip length must be positive"));
    }
    StrategyConfig { kind: Strategy::MotionFrames, o }.validate(f)?;
    let l = check_sequence(z_t, cond)?;
    let padded = l.div_ceil(f) * f;
    let z = pad_frames(z_t, padded);
    let audio = cond.audio.resized(padded);
    let frame_dims = z.dims()[1..].to_vec();
    let mut out = Tensor::zeros(z.dims()).with_precision(z.precision());
    let run_clip = |c: usize, context: Option<MotionContext<'_>>| -> Result<Tensor> {
        let idx: Vec<usize> = (c * f..(c + 1) * f).collect();
        let a = audio.gather(&idx)?;
        let mut cc = clip_condition(cond, &a);
        cc.context = context;
        let mut x = z.gather(&idx)?;
        for t in runner.schedule.timesteps() {
            x = runner.step(x, c * f, &cc, t)?;
        }
        Ok(x)
    };
    let clips: Vec<usize> = (0..padded / f).collect();
    if o == 0 {
        let results = runner.map_windows(&clips, |&c| run_clip(c, None))?;
        for (c, x) in results.iter().enumerate() {
            out.data_mut()[c * x.len()..(c + 1) * x.len()].copy_from_slice(x.data());
        }
        return Ok(truncate_frames(out, l));
    }
    let ctx_dims: Vec<usize> = std::iter::once(o).chain(frame_dims).collect();
    let mut ctx_frames = Tensor::zeros(&ctx_dims);
    let mut ctx_audio = AudioEmbedding::zeros(o, audio.context_tokens(), audio.width());
    for c in clips {
        if let Some(counter) = runner.counter {
            counter.record_reference(o);
        }
        let context = MotionContext {
            frames: &ctx_frames,
            audio: &ctx_audio,
            has_predecessor: c > 0,
        };
        let x = run_clip(c, Some(context))?;
        let tail: Vec<usize> = (f - o..f).collect();
        ctx_frames = x.gather(&tail)?;
        ctx_audio = audio.gather(&(c * f + f - o..(c + 1) * f).collect::<Vec<_>>())?;
        out.data_mut()[c * x.len()..(c + 1) * x.len()].copy_from_slice(x.data());
    }
    Ok(truncate_frames(out, l))
}

/// Dispatches to the chosen strategy.
pub fn run_strategy(
    runner: &Runner<'_>,
    z_t: &Tensor,
    cond: &SequenceCondition<'_>,
    strategy: StrategyConfig,
    shift: &ShiftConfig,
) -> Result<Tensor> {
    strategy.validate(shift.f)?;
    match strategy.kind {
        Strategy::Shift => run_shift(runner, z_t, cond, shift),
        Strategy::Independent => run_independent(runner, z_t, cond, shift.f),
        Strategy::Overlap => run_overlap(runner, z_t, cond, shift.f, strategy.o),
        Strategy::MotionFrames => run_motion_frames(runner, z_t, cond, shift.f, strategy.o),
    }
}
