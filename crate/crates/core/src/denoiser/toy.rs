//! Small audio-conditioned clip denoiser with a hand-written backward pass.
//!
//! Latents `[f, h, w, c]` are lifted to width `H` and pass through a stack of
//! stages. Each stage applies, in order, a residual SiLU block conditioned on
//! timestep / motion buckets / reference, spatial audio cross-attention
//! gated by the face mask, temporal self-attention (optionally attending to
//! motion-frame context), and temporal cross-attention to the pooled audio.
//! Down stages feed additive skips to their mirrored up stages.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::io::{read_bundle, write_bundle};
use crate::conditioning::{AudioProjector, FaceMask, PooledAudioEmbedding};
use crate::denoiser::{Backbone, Branch, ClipCondition, NoiseSchedule};
use crate::error::{Error, Result};
use crate::motion::{bucket_features, MotionBuckets};
use crate::numerics::{
    cross_attention_backward, cross_attention_forward, sinusoidal_encode, AttentionCache,
    AttentionWeights, Linear, Objective, Params, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub clip_len: usize,
    pub height: usize,
    pub width: usize,
    pub latent_channels: usize,
    pub hidden: usize,
    pub audio_width: usize,
    pub ref_width: usize,
    pub time_pe_dim: usize,
    pub bucket_pe_dim: usize,
    pub down_stages: usize,
    pub up_stages: usize,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            clip_len: 8,
            height: 8,
            width: 8,
            latent_channels: 4,
            hidden: 8,
            audio_width: 10,
            ref_width: 8,
            time_pe_dim: 16,
            bucket_pe_dim: 16,
            down_stages: 2,
            up_stages: 2,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("clip_len", self.clip_len),
            ("height", self.height),
            ("width", self.width),
            ("latent_channels", self.latent_channels),
            ("hidden", self.hidden),
            ("audio_width", self.audio_width),
            ("ref_width", self.ref_width),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("toy model {name} must be positive")));
        }
        if self.time_pe_dim == 0 || self.time_pe_dim % 2 == 1 || self.bucket_pe_dim == 0 || self.bucket_pe_dim % 2 == 1 {
            return Err(Error::config("encoding widths must be positive and even"));
        }
        Ok(())
    }

    pub fn frame_dims(&self) -> [usize; 3] {
        [self.height, self.width, self.latent_channels]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyStage {
    pub res_in: Linear,
    pub res_out: Linear,
    pub spatial_audio: AttentionWeights,
    pub temporal_self: AttentionWeights,
    pub temporal_audio: AttentionWeights,
}

impl ToyStage {
    fn random(hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            res_in: Linear::random(hidden, hidden, true, rng),
            res_out: Linear::random(hidden, hidden, true, rng),
            spatial_audio: AttentionWeights::random(hidden, hidden, hidden, rng),
            temporal_self: AttentionWeights::random(hidden, hidden, hidden, rng),
            temporal_audio: AttentionWeights::random(hidden, hidden, hidden, rng),
        }
    }
}

impl Params for ToyStage {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        self.res_in.visit(f);
        self.res_out.visit(f);
        self.spatial_audio.visit(f);
        self.temporal_self.visit(f);
        self.temporal_audio.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.res_in.visit_mut(f);
        self.res_out.visit_mut(f);
        self.spatial_audio.visit_mut(f);
        self.temporal_self.visit_mut(f);
        self.temporal_audio.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    pub config: ToyConfig,
    pub audio_proj: AudioProjector,
    pub lin_in: Linear,
    pub time_proj: Linear,
    pub bucket_proj: Linear,
    pub ref_proj: Linear,
    pub stages: Vec<ToyStage>,
    pub lin_out: Linear,
}

impl Params for ToyDenoiser {
    fn visit(&self, f: &mut dyn FnMut(&Tensor)) {
        self.audio_proj.visit(f);
        self.lin_in.visit(f);
        self.time_proj.visit(f);
        self.bucket_proj.visit(f);
        self.ref_proj.visit(f);
        self.stages.visit(f);
        self.lin_out.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.audio_proj.visit_mut(f);
        self.lin_in.visit_mut(f);
        self.time_proj.visit_mut(f);
        self.bucket_proj.visit_mut(f);
        self.ref_proj.visit_mut(f);
        self.stages.visit_mut(f);
        self.lin_out.visit_mut(f);
    }
}

/// One forward evaluation's inputs.
#[derive(Debug, Clone)]
pub struct ToyInputs {
    /// `[f, h, w, c]`
    pub z: Tensor,
    pub t: usize,
    /// `[f, d, audio_width]`
    pub audio: Tensor,
    /// `[ref_width]`
    pub reference: Tensor,
    pub buckets: MotionBuckets,
    /// `[h, w]`
    pub mask: Tensor,
    /// `[o, h, w, c]` clean frames preceding the clip.
    pub context: Option<Tensor>,
}

struct StageCache {
    res_x: Tensor,
    u: Tensor,
    v: Tensor,
    spatial: Vec<AttentionCache>,
    temporal_self: Vec<AttentionCache>,
    temporal_audio: Vec<AttentionCache>,
}

struct ForwardCache {
    audio_inputs: [Tensor; 3],
    pe_t: Tensor,
    bucket_feat: Tensor,
    reference: Tensor,
    z_rows: Tensor,
    ctx_rows: Option<Tensor>,
    stages: Vec<StageCache>,
    h_final: Tensor,
    frames: usize,
    tokens: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Adds `row` to every row of `t` (last axis).
fn add_row(t: &Tensor, row: &Tensor) -> Result<Tensor> {
    let n = row.len();
    let mut data = t.data().to_vec();
    for chunk in data.chunks_mut(n) {
        chunk.iter_mut().zip(row.data()).for_each(|(a, b)| *a += b);
    }
    Tensor::new(t.dims(), data).map(|x| x.with_precision(t.precision().join(row.precision())))
}

/// Rows `(i, p, :)` for all frames `i` of an `[f, hw, H]` tensor.
fn gather_location(h: &Tensor, p: usize) -> Tensor {
    let (f, hw, c) = (h.dim(0), h.dim(1), h.dim(2));
    let mut data = Vec::with_capacity(f * c);
    for i in 0..f {
        let start = (i * hw + p) * c;
        data.extend_from_slice(&h.data()[start..start + c]);
    }
    Tensor::new(&[f, c], data)
        .expect("sizes from source")
        .with_precision(h.precision())
}

fn add_to_location(h: &mut Tensor, p: usize, v: &Tensor) {
    let (f, hw, c) = (h.dim(0), h.dim(1), h.dim(2));
    let data = h.data_mut();
    for i in 0..f {
        let start = (i * hw + p) * c;
        data[start..start + c]
            .iter_mut()
            .zip(v.slab(i))
            .for_each(|(a, b)| *a += b);
    }
}

/// Cross-attention from one frame's spatial tokens `[(h·w) × c]` to that
/// frame's audio context `[d × c]`, gated per cell by `mask`, with residual.
pub fn spatial_audio_attend(
    z_s: &Tensor,
    audio_frame: &Tensor,
    mask: &FaceMask,
    w: &AttentionWeights,
) -> Result<Tensor> {
    z_s.expect_rank(2, "spatial tokens")?;
    if mask.cells() != z_s.dim(0) {
        return Err(Error::dim("mask cells", z_s.dim(0), mask.cells()));
    }
    let (y, _) = cross_attention_forward(z_s, audio_frame, w)?;
    Ok(gated_residual(z_s, &y, mask.mask.data()))
}

/// `x + m ⊙ y` with `m` broadcast over channels.
fn gated_residual(x: &Tensor, y: &Tensor, mask: &[f64]) -> Tensor {
    let c = x.dim(x.rank() - 1);
    let mut out = x.clone();
    for ((o, yv), &m) in out.data_mut().chunks_mut(c).zip(y.data().chunks(c)).zip(mask) {
        if m != 0.0 {
            o.iter_mut().zip(yv).for_each(|(a, b)| *a += m * b);
        }
    }
    out
}

fn spatial_audio_cached(
    h: &mut Tensor,
    audio: &Tensor,
    mask: &[f64],
    w: &AttentionWeights,
) -> Result<Vec<AttentionCache>> {
    let mut caches = Vec::with_capacity(h.dim(0));
    for i in 0..h.dim(0) {
        let x = h.index(i);
        let (y, cache) = cross_attention_forward(&x, &audio.index(i), w)?;
        let out = gated_residual(&x, &y, mask);
        h.slab_mut(i).copy_from_slice(out.data());
        caches.push(cache);
    }
    Ok(caches)
}

/// Cross-attention from each spatial location's temporal sequence to the
/// pooled audio tokens, with residual. `z_t`: `[(h·w) × f × c]`.
pub fn temporal_audio_attend(
    z_t: &Tensor,
    pooled: &PooledAudioEmbedding,
    w: &AttentionWeights,
) -> Result<Tensor> {
    z_t.expect_rank(3, "temporal tokens")?;
    let mut h = z_t.swap_leading()?;
    temporal_cached(&mut h, |_| Ok(pooled.tokens.clone()), w)?;
    h.swap_leading()
}

/// Runs attention for every spatial location of `h` in place, with the
/// context for location `p` given by `ctx(p, seq)`.
fn temporal_cached(
    h: &mut Tensor,
    ctx: impl Fn(usize) -> Result<Tensor>,
    w: &AttentionWeights,
) -> Result<Vec<AttentionCache>> {
    h.expect_rank(3, "temporal tokens")?;
    let hw = h.dim(1);
    let mut caches = Vec::with_capacity(hw);
    let mut updates = Vec::with_capacity(hw);
    for p in 0..hw {
        let seq = gather_location(h, p);
        let (y, cache) = cross_attention_forward(&seq, &ctx(p)?, w)?;
        updates.push(y);
        caches.push(cache);
    }
    for (p, y) in updates.iter().enumerate() {
        add_to_location(h, p, y);
    }
    Ok(caches)
}

impl ToyDenoiser {
    pub fn random(config: ToyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hid = config.hidden;
        let audio_proj = AudioProjector::random(config.audio_width, hid, hid, &mut rng);
        let lin_in = Linear::random(config.latent_channels, hid, true, &mut rng);
        let time_proj = Linear::random(config.time_pe_dim, hid, true, &mut rng);
        let bucket_proj = Linear::random(2 * config.bucket_pe_dim, hid, false, &mut rng);
        let ref_proj = Linear::random(config.ref_width, hid, true, &mut rng);
        let stages = (0..config.down_stages + config.up_stages)
            .map(|_| ToyStage::random(hid, &mut rng))
            .collect();
        let lin_out = Linear::random(hid, config.latent_channels, true, &mut rng);
        Ok(Self {
            config,
            audio_proj,
            lin_in,
            time_proj,
            bucket_proj,
            ref_proj,
            stages,
            lin_out,
        })
    }

    /// Down stage whose output is added at the start of stage `s`.
    fn skip_source(&self, s: usize) -> Option<usize> {
        let down = self.config.down_stages;
        let j = s.checked_sub(down)?;
        (j < down).then(|| down - 1 - j)
    }

    fn check_inputs(&self, x: &ToyInputs) -> Result<(usize, usize, usize)> {
        let cfg = &self.config;
        x.z.expect_rank(4, "toy latent")?;
        if x.z.dims()[1..] != cfg.frame_dims() {
            return Err(Error::dim(
                "toy latent frame elements",
                cfg.frame_dims().iter().product(),
                x.z.len() / x.z.dim(0).max(1),
            ));
        }
        let f = x.z.dim(0);
        x.audio.expect_rank(3, "toy audio")?;
        if x.audio.dim(0) != f {
            return Err(Error::dim("audio frames", f, x.audio.dim(0)));
        }
        if x.audio.dim(2) != cfg.audio_width {
            return Err(Error::dim("audio channels", cfg.audio_width, x.audio.dim(2)));
        }
        x.reference.expect_dims(&[cfg.ref_width], "reference embedding")?;
        x.mask.expect_dims(&[cfg.height, cfg.width], "face mask")?;
        let o = match &x.context {
            Some(c) => {
                c.expect_rank(4, "motion context")?;
                if c.dims()[1..] != cfg.frame_dims() {
                    return Err(Error::dim(
                        "motion context frame elements",
                        cfg.frame_dims().iter().product(),
                        c.len() / c.dim(0).max(1),
                    ));
                }
                c.dim(0)
            }
            None => 0,
        };
        Ok((f, x.audio.dim(1), o))
    }

    pub fn forward(&self, x: &ToyInputs) -> Result<Tensor> {
        Ok(self.forward_cached(x)?.0)
    }

    fn forward_cached(&self, x: &ToyInputs) -> Result<(Tensor, ForwardCache)> {
        let (f, d, o) = self.check_inputs(x)?;
        let cfg = &self.config;
        let (hw, hid, c) = (cfg.height * cfg.width, cfg.hidden, cfg.latent_channels);

        let a_flat = x.audio.reshape(&[f * d, cfg.audio_width])?;
        let (a, audio_inputs) = self.audio_proj.forward_cached(&a_flat)?;
        let a = a.reshape(&[f, d, hid])?;
        let pooled = a.mean_leading()?;

        let pe_t = sinusoidal_encode(x.t as u64, cfg.time_pe_dim)?;
        let bucket_feat = bucket_features(&x.buckets, cfg.bucket_pe_dim)?;
        let cond = self
            .time_proj
            .forward(&pe_t)?
            .add(&self.bucket_proj.forward(&bucket_feat)?)?
            .add(&self.ref_proj.forward(&x.reference)?)?;

        let z_rows = x.z.reshape(&[f, hw, c])?;
        let mut h = self.lin_in.forward(&z_rows)?;
        let ctx_rows = x
            .context
            .as_ref()
            .filter(|_| o > 0)
            .map(|ctx| ctx.reshape(&[o, hw, c]))
            .transpose()?;
        let ctx_h = ctx_rows.as_ref().map(|r| self.lin_in.forward(r)).transpose()?;

        let mut skips: Vec<Tensor> = Vec::with_capacity(cfg.down_stages);
        let mut caches = Vec::with_capacity(self.stages.len());
        for (s, st) in self.stages.iter().enumerate() {
            if let Some(k) = self.skip_source(s) {
                h = h.add(&skips[k])?;
            }
            let res_x = h.clone();
            let u = add_row(&st.res_in.forward(&h)?, &cond)?;
            let v = u.map(|x| x * sigmoid(x));
            h = h.add(&st.res_out.forward(&v)?)?;

            let spatial = spatial_audio_cached(&mut h, &a, x.mask.data(), &st.spatial_audio)?;

            let snapshot = h.clone();
            let temporal_self = temporal_cached(
                &mut h,
                |p| {
                    let seq = gather_location(&snapshot, p);
                    match &ctx_h {
                        Some(ch) => Tensor::concat_leading(&[&gather_location(ch, p), &seq]),
                        None => Ok(seq),
                    }
                },
                &st.temporal_self,
            )?;
            let temporal_audio = temporal_cached(&mut h, |_| Ok(pooled.clone()), &st.temporal_audio)?;

            if s < cfg.down_stages {
                skips.push(h.clone());
            }
            caches.push(StageCache {
                res_x,
                u,
                v,
                spatial,
                temporal_self,
                temporal_audio,
            });
        }
        let out = self.lin_out.forward(&h)?.reshape(x.z.dims())?;
        Ok((
            out,
            ForwardCache {
                audio_inputs,
                pe_t,
                bucket_feat,
                reference: x.reference.clone(),
                z_rows,
                ctx_rows,
                stages: caches,
                h_final: h,
                frames: f,
                tokens: d,
            },
        ))
    }

    fn backward(&self, cache: &ForwardCache, d_out: &Tensor, mask: &Tensor) -> Result<ToyDenoiser> {
        let cfg = &self.config;
        let (f, d) = (cache.frames, cache.tokens);
        let (hw, hid, c) = (cfg.height * cfg.width, cfg.hidden, cfg.latent_channels);
        let mask = mask.reshape(&[hw])?;
        let mut g = self.zeros_like();

        let d_out = d_out.reshape(&[f, hw, c])?;
        let mut dh = self.lin_out.backward(&cache.h_final, &d_out, &mut g.lin_out)?;
        let mut d_audio = Tensor::zeros(&[f, d, hid]);
        let mut d_pooled = Tensor::zeros(&[d, hid]);
        let mut d_cond = Tensor::zeros(&[hid]);
        let o = cache.ctx_rows.as_ref().map_or(0, |r| r.dim(0));
        let mut d_ctx_h = Tensor::zeros(&[o, hw, hid]);
        let mut d_skips: Vec<Option<Tensor>> = vec![None; cfg.down_stages];

        for s in (0..self.stages.len()).rev() {
            let st = &self.stages[s];
            let sc = &cache.stages[s];
            let gs = &mut g.stages[s];
            if s < cfg.down_stages {
                if let Some(ds) = d_skips[s].take() {
                    dh.add_assign(&ds)?;
                }
            }

            let mut dxs = Vec::with_capacity(hw);
            for p in 0..hw {
                let dy = gather_location(&dh, p);
                let gr = cross_attention_backward(&sc.temporal_audio[p], &dy, &st.temporal_audio, &mut gs.temporal_audio)?;
                d_pooled.add_assign(&gr.dctx)?;
                dxs.push(gr.dx);
            }
            for (p, dx) in dxs.iter().enumerate() {
                add_to_location(&mut dh, p, dx);
            }

            let mut updates = Vec::with_capacity(hw);
            for p in 0..hw {
                let dy = gather_location(&dh, p);
                let gr = cross_attention_backward(&sc.temporal_self[p], &dy, &st.temporal_self, &mut gs.temporal_self)?;
                let mut dseq = gr.dx;
                if o > 0 {
                    let dctx = gr.dctx.data();
                    let ctx_part = Tensor::new(&[o, hid], dctx[..o * hid].to_vec())?;
                    add_to_location(&mut d_ctx_h, p, &ctx_part);
                    let self_part = Tensor::new(&[f, hid], dctx[o * hid..].to_vec())?;
                    dseq.add_assign(&self_part)?;
                } else {
                    dseq.add_assign(&gr.dctx)?;
                }
                updates.push(dseq);
            }
            for (p, dseq) in updates.iter().enumerate() {
                add_to_location(&mut dh, p, dseq);
            }

            for i in 0..f {
                let dy_frame = dh.index(i);
                let mut gated = dy_frame.data().to_vec();
                for (p, &m) in mask.data().iter().enumerate() {
                    gated[p * hid..(p + 1) * hid].iter_mut().for_each(|v| *v *= m);
                }
                let gated = Tensor::new(&[hw, hid], gated)?;
                let gr = cross_attention_backward(&sc.spatial[i], &gated, &st.spatial_audio, &mut gs.spatial_audio)?;
                dh.slab_mut(i)
                    .iter_mut()
                    .zip(gr.dx.data())
                    .for_each(|(a, b)| *a += b);
                d_audio
                    .slab_mut(i)
                    .iter_mut()
                    .zip(gr.dctx.data())
                    .for_each(|(a, b)| *a += b);
            }

            let dv = st.res_out.backward(&sc.v, &dh, &mut gs.res_out)?;
            let du_data: Vec<f64> = dv
                .data()
                .iter()
                .zip(sc.u.data())
                .map(|(&g, &u)| {
                    let sg = sigmoid(u);
                    g * sg * (1.0 + u * (1.0 - sg))
                })
                .collect();
            let du = Tensor::new(dv.dims(), du_data)?;
            for row in du.data().chunks(hid) {
                d_cond.data_mut().iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            let dx = st.res_in.backward(&sc.res_x, &du, &mut gs.res_in)?;
            dh.add_assign(&dx)?;

            if let Some(k) = self.skip_source(s) {
                d_skips[k] = Some(dh.clone());
            }
        }

        self.lin_in.backward(&cache.z_rows, &dh, &mut g.lin_in)?;
        if let Some(rows) = &cache.ctx_rows {
            self.lin_in.backward(rows, &d_ctx_h, &mut g.lin_in)?;
        }
        self.time_proj.backward(&cache.pe_t, &d_cond, &mut g.time_proj)?;
        self.bucket_proj.backward(&cache.bucket_feat, &d_cond, &mut g.bucket_proj)?;
        self.ref_proj.backward(&cache.reference, &d_cond, &mut g.ref_proj)?;

        let share = d_pooled.scale(1.0 / f as f64);
        for i in 0..f {
            d_audio
                .slab_mut(i)
                .iter_mut()
                .zip(share.data())
                .for_each(|(a, b)| *a += b);
        }
        let d_audio = d_audio.reshape(&[f * d, hid])?;
        self.audio_proj.backward(&cache.audio_inputs, &d_audio, &mut g.audio_proj)?;
        Ok(g)
    }

    /// Mean squared error of the noise prediction against `target`.
    pub fn loss(&self, x: &ToyInputs, target: &Tensor) -> Result<f64> {
        let pred = self.forward(x)?;
        Ok(pred.sub(target)?.sq_norm() / target.len() as f64)
    }

    pub fn loss_and_grad(&self, x: &ToyInputs, target: &Tensor) -> Result<(f64, ToyDenoiser)> {
        let (pred, cache) = self.forward_cached(x)?;
        let diff = pred.sub(target)?;
        let n = target.len() as f64;
        let loss = diff.sq_norm() / n;
        let grad = self.backward(&cache, &diff.scale(2.0 / n), &x.mask)?;
        Ok((loss, grad))
    }

    /// Inputs for one guidance branch: dropped conditions become zeros.
    pub fn branch_inputs(z: &Tensor, t: usize, cond: &ClipCondition<'_>, branch: Branch) -> ToyInputs {
        let audio = if branch.uses_audio() {
            cond.audio.tokens.clone()
        } else {
            Tensor::zeros(cond.audio.tokens.dims())
        };
        let reference = if branch.uses_reference() {
            cond.reference.vector.clone()
        } else {
            Tensor::zeros(cond.reference.vector.dims())
        };
        ToyInputs {
            z: z.clone(),
            t,
            audio,
            reference,
            buckets: cond.buckets,
            mask: cond.mask.mask.clone(),
            context: cond.context.map(|c| c.frames.clone()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors = Vec::new();
        self.visit(&mut |t| tensors.push(t.clone()));
        let named: Vec<(String, &Tensor)> = tensors
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("p{i:03}"), t))
            .collect();
        write_bundle(path, &named, serde_json::to_value(&self.config)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = read_bundle(path)?;
        let config: ToyConfig = serde_json::from_value(header.meta)?;
        let mut model = Self::random(config, 0)?;
        let mut expected = Vec::new();
        model.visit(&mut |t| expected.push(t.dims().to_vec()));
        if expected.len() != tensors.len() {
            return Err(Error::dim("checkpoint tensors", expected.len(), tensors.len()));
        }
        let mut flat = Vec::with_capacity(model.num_params());
        for (dims, (name, t)) in expected.iter().zip(&tensors) {
            if t.dims() != dims.as_slice() {
                return Err(Error::Input(format!("checkpoint tensor {name} has dims {:?}, expected {dims:?}", t.dims())));
            }
            flat.extend_from_slice(t.data());
        }
        model.load_flat(&flat)?;
        Ok(model)
    }
}

impl Backbone for ToyDenoiser {
    fn clip_len(&self) -> Option<usize> {
        Some(self.config.clip_len)
    }

    fn predict_noise(
        &self,
        z: &Tensor,
        t: usize,
        _schedule: &NoiseSchedule,
        cond: &ClipCondition<'_>,
        branch: Branch,
    ) -> Result<Tensor> {
        self.forward(&Self::branch_inputs(z, t, cond, branch))
    }
}

/// The toy training loss as a function of the flattened parameters.
pub struct ToyLossObjective {
    pub model: ToyDenoiser,
    pub inputs: ToyInputs,
    pub target: Tensor,
}

impl Objective for ToyLossObjective {
    fn value(&self, params: &[f64]) -> Result<f64> {
        let mut m = self.model.clone();
        m.load_flat(params)?;
        m.loss(&self.inputs, &self.target)
    }

    fn value_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut m = self.model.clone();
        m.load_flat(params)?;
        let (loss, g) = m.loss_and_grad(&self.inputs, &self.target)?;
        Ok((loss, g.flatten()))
    }
}
