//! Denoisers whose noise prediction is the exact posterior mean under a
//! Gaussian data model. Both share the conditional mean: a seeded linear map
//! of each frame's token-averaged audio plus a map of the reference vector.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conditioning::{AudioEmbedding, ReferenceEmbedding};
use crate::denoiser::{Backbone, Branch, ClipCondition, NoiseSchedule};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Latent frame shape `[h, w, c]`.
    pub frame_dims: [usize; 3],
    pub audio_width: usize,
    pub ref_width: usize,
    pub prior_std: f64,
    /// RMS gain of the audio-to-mean map per unit input.
    pub audio_gain: f64,
    pub ref_gain: f64,
    pub seed: u64,
}

impl OracleConfig {
    pub fn frame_elems(&self) -> usize {
        self.frame_dims.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.frame_elems() == 0 || self.audio_width == 0 {
            return Err(Error::config("oracle needs non-empty frames and audio"));
        }
        if !(self.prior_std > 0.0) {
            return Err(Error::Range {
                what: "prior_std".into(),
                value: self.prior_std,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// Conditional mean `μ(frame) = G·mean_tokens(audio) + R·reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMean {
    config: OracleConfig,
    /// `[E × audio_width]`
    audio_map: Tensor,
    /// `[E × ref_width]`
    ref_map: Tensor,
}

impl ConditionalMean {
    pub fn new(config: OracleConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let e = config.frame_elems();
        let mut draw = |rows: usize, cols: usize, gain: f64| {
            let s = gain / (cols.max(1) as f64).sqrt();
            Tensor::from_fn(&[rows, cols], |_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                s * v
            })
        };
        let audio_map = draw(e, config.audio_width, config.audio_gain);
        let ref_map = draw(e, config.ref_width, config.ref_gain);
        Ok(Self {
            config,
            audio_map,
            ref_map,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// `[frames, E]` means for the given branch.
    pub fn frame_means(
        &self,
        audio: &AudioEmbedding,
        reference: &ReferenceEmbedding,
        branch: Branch,
    ) -> Result<Tensor> {
        let f = audio.frames();
        let e = self.config.frame_elems();
        let mut out = Tensor::zeros(&[f, e]);
        if branch.uses_audio() {
            if audio.width() != self.config.audio_width {
                return Err(Error::dim("oracle audio channels", self.config.audio_width, audio.width()));
            }
            for i in 0..f {
                let summary = audio.tokens.index(i).mean_leading()?;
                let m = self.audio_map.matmul(&summary.reshape(&[audio.width(), 1])?)?;
                out.slab_mut(i)
                    .iter_mut()
                    .zip(m.data())
                    .for_each(|(o, v)| *o += v);
            }
        }
        if branch.uses_reference() && self.config.ref_width > 0 {
            if reference.width() != self.config.ref_width {
                return Err(Error::dim("oracle reference width", self.config.ref_width, reference.width()));
            }
            let r = self
                .ref_map
                .matmul(&reference.vector.reshape(&[reference.width(), 1])?)?;
            for i in 0..f {
                out.slab_mut(i)
                    .iter_mut()
                    .zip(r.data())
                    .for_each(|(o, v)| *o += v);
            }
        }
        Ok(out)
    }

    fn check_latent(&self, z: &Tensor) -> Result<usize> {
        z.expect_rank(4, "latent clip")?;
        if z.dims()[1..] != self.config.frame_dims {
            return Err(Error::dim(
                "latent frame elements",
                self.config.frame_elems(),
                z.len() / z.dim(0).max(1),
            ));
        }
        Ok(z.dim(0))
    }
}

/// Frames independent with prior `N(μ, s²·I)`; the prediction is elementwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PerFrameGaussianOracle {
    pub mean: ConditionalMean,
}

impl PerFrameGaussianOracle {
    pub fn new(config: OracleConfig) -> Result<Self> {
        Ok(Self {
            mean: ConditionalMean::new(config)?,
        })
    }

    /// `ε̂ = sqrt(1−ᾱ)/(ᾱ·s² + 1 − ᾱ) · (z − sqrt(ᾱ)·μ)`
    pub fn coefficient(&self, alpha_bar: f64) -> f64 {
        let s2 = self.mean.config.prior_std.powi(2);
        (1.0 - alpha_bar).sqrt() / (alpha_bar * s2 + 1.0 - alpha_bar)
    }
}

impl Backbone for PerFrameGaussianOracle {
    fn predict_noise(
        &self,
        z: &Tensor,
        t: usize,
        schedule: &NoiseSchedule,
        cond: &ClipCondition<'_>,
        branch: Branch,
    ) -> Result<Tensor> {
        self.mean.check_latent(z)?;
        let ab = schedule.alpha_bar(t);
        let mu = self.mean.frame_means(cond.audio, cond.reference, branch)?;
        let (c, sab) = (self.coefficient(ab), ab.sqrt());
        let data = z
            .data()
            .iter()
            .zip(mu.data())
            .map(|(&zv, &m)| c * (zv - sab * m))
            .collect();
        Ok(Tensor::from_op(z.dims().to_vec(), data, z.precision()))
    }
}

/// Frames within a window share a stationary prior `Σ_ij = s²·ρ^|i−j|`
/// along time, independently per latent element. Motion-frame context enters
/// as noisy observations of the clean frames just before the window.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledGaussianOracle {
    pub mean: ConditionalMean,
    pub rho: f64,
    /// Observation noise variance of motion-frame context.
    pub context_noise: f64,
}

pub const DEFAULT_RHO: f64 = 0.9;
pub const DEFAULT_CONTEXT_NOISE: f64 = 0.01;

impl CoupledGaussianOracle {
    pub fn new(config: OracleConfig, rho: f64, context_noise: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Range {
                what: "rho".into(),
                value: rho,
                min: 0.0,
                max: 1.0,
            });
        }
        if !(context_noise > 0.0) {
            return Err(Error::Range {
                what: "context_noise".into(),
                value: context_noise,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        Ok(Self {
            mean: ConditionalMean::new(config)?,
            rho,
            context_noise,
        })
    }

    fn prior(&self, i: usize, j: usize) -> f64 {
        self.mean.config.prior_std.powi(2) * self.rho.powi(i.abs_diff(j) as i32)
    }
}

impl Backbone for CoupledGaussianOracle {
    fn predict_noise(
        &self,
        z: &Tensor,
        t: usize,
        schedule: &NoiseSchedule,
        cond: &ClipCondition<'_>,
        branch: Branch,
    ) -> Result<Tensor> {
        let f = self.mean.check_latent(z)?;
        let e = self.mean.config.frame_elems();
        let ab = schedule.alpha_bar(t);
        let sab = ab.sqrt();
        let mu = self.mean.frame_means(cond.audio, cond.reference, branch)?;
        let ctx = cond.context.filter(|c| c.has_predecessor && !c.is_empty());
        let o = ctx.map_or(0, |c| c.len());
        let n = o + f;

        // Joint observation: context rows first, then the window.
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (ci, cj) = (i < o, j < o);
                let p = self.prior(i, j);
                k[(i, j)] = match (ci, cj) {
                    (true, true) => p,
                    (false, false) => ab * p,
                    _ => sab * p,
                };
            }
            k[(i, i)] += if i < o { self.context_noise } else { 1.0 - ab };
        }
        let mut w = DMatrix::<f64>::zeros(n, e);
        if let Some(c) = ctx {
            let mu_c = self.mean.frame_means(c.audio, cond.reference, branch)?;
            for r in 0..o {
                let (xs, ms) = (c.frames.slab(r), mu_c.slab(r));
                for col in 0..e {
                    w[(r, col)] = xs[col] - ms[col];
                }
            }
        }
        for r in 0..f {
            let (zs, ms) = (z.slab(r), mu.slab(r));
            for col in 0..e {
                w[(o + r, col)] = zs[col] - sab * ms[col];
            }
        }
        let chol = k.cholesky().ok_or_else(|| Error::Numerical {
            index: 0,
            detail: format!("window covariance not positive definite at t={t}"),
        })?;
        let sol = chol.solve(&w);
        let s = (1.0 - ab).sqrt();
        let mut data = Vec::with_capacity(f * e);
        for r in 0..f {
            data.extend((0..e).map(|col| s * sol[(o + r, col)]));
        }
        Ok(Tensor::from_op(z.dims().to_vec(), data, z.precision()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::FaceMask;
    use crate::denoiser::{denoise_clip, GuidanceConfig, LatentClip, MotionContext};
    use crate::motion::MotionBuckets;

    fn config() -> OracleConfig {
        OracleConfig {
            frame_dims: [2, 2, 1],
            audio_width: 3,
            ref_width: 2,
            prior_std: 1.0,
            audio_gain: 0.5,
            ref_gain: 0.25,
            seed: 7,
        }
    }

    fn audio(f: usize) -> AudioEmbedding {
        AudioEmbedding::new(Tensor::from_fn(&[f, 2, 3], |i| (i as f64 * 0.37).sin())).unwrap()
    }

    #[test]
    fn unconditional_mean_is_zero() {
        let m = ConditionalMean::new(config()).unwrap();
        let r = ReferenceEmbedding::new(Tensor::vector(vec![1.0, -1.0])).unwrap();
        let mu = m.frame_means(&audio(3), &r, Branch::Unconditional).unwrap();
        assert_eq!(mu.sum(), 0.0);
        let mu_i = m.frame_means(&audio(3), &r, Branch::Image).unwrap();
        assert_eq!(mu_i.slab(0), mu_i.slab(2));
    }

    #[test]
    fn per_frame_chain_matches_product_of_step_ratios() {
        let oracle = PerFrameGaussianOracle::new(config()).unwrap();
        let schedule = NoiseSchedule::cosine(6).unwrap();
        let a = audio(2);
        let r = ReferenceEmbedding::new(Tensor::vector(vec![0.4, 0.1])).unwrap();
        let mask = FaceMask::ones(2, 2);
        let cond = ClipCondition {
            audio: &a,
            reference: &r,
            buckets: MotionBuckets::default(),
            mask: &mask,
            context: None,
        };
        let g = GuidanceConfig::new(1.0, 1.0).unwrap();
        let z_t = Tensor::from_fn(&[2, 2, 2, 1], |i| 0.3 * i as f64 - 1.0);
        let mut clip = LatentClip::new(z_t.clone(), 0).unwrap();
        for t in schedule.timesteps() {
            clip = denoise_clip(&clip, &cond, &oracle, &schedule, t, &g, None).unwrap();
        }
        // Each step maps (z − √ᾱ μ) by a scalar ratio; ᾱ_0 = 1 lands on x0.
        let mut k = 1.0;
        for t in schedule.timesteps() {
            let (ab, abp) = (schedule.alpha_bar(t), schedule.alpha_bar(t - 1));
            let c = oracle.coefficient(ab);
            k *= abp.sqrt() * (1.0 - (1.0 - ab).sqrt() * c) / ab.sqrt() + (1.0 - abp).sqrt() * c;
        }
        let mu = oracle.mean.frame_means(&a, &r, Branch::ImageAudio).unwrap();
        let sab = schedule.alpha_bar(6).sqrt();
        for i in 0..z_t.len() {
            let expect = mu.data()[i] + k * (z_t.data()[i] - sab * mu.data()[i]);
            assert!((clip.frames.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn coupled_with_zero_correlation_matches_per_frame() {
        let per = PerFrameGaussianOracle::new(config()).unwrap();
        let coupled = CoupledGaussianOracle::new(config(), 0.0, DEFAULT_CONTEXT_NOISE).unwrap();
        let schedule = NoiseSchedule::cosine(10).unwrap();
        let a = audio(3);
        let r = ReferenceEmbedding::zeros(2);
        let mask = FaceMask::ones(2, 2);
        let cond = ClipCondition {
            audio: &a,
            reference: &r,
            buckets: MotionBuckets::default(),
            mask: &mask,
            context: None,
        };
        let z = Tensor::from_fn(&[3, 2, 2, 1], |i| (i as f64).cos());
        for branch in Branch::ALL {
            let x = per.predict_noise(&z, 4, &schedule, &cond, branch).unwrap();
            let y = coupled.predict_noise(&z, 4, &schedule, &cond, branch).unwrap();
            assert!(x.max_abs_diff(&y) < 1e-12);
        }
    }

    #[test]
    fn context_without_predecessor_is_ignored() {
        let oracle = CoupledGaussianOracle::new(config(), DEFAULT_RHO, DEFAULT_CONTEXT_NOISE).unwrap();
        let schedule = NoiseSchedule::cosine(10).unwrap();
        let a = audio(3);
        let ca = audio(2);
        let r = ReferenceEmbedding::zeros(2);
        let mask = FaceMask::ones(2, 2);
        let frames = Tensor::filled(&[2, 2, 2, 1], 5.0);
        let mut cond = ClipCondition {
            audio: &a,
            reference: &r,
            buckets: MotionBuckets::default(),
            mask: &mask,
            context: None,
        };
        let z = Tensor::from_fn(&[3, 2, 2, 1], |i| (i as f64).sin());
        let bare = oracle.predict_noise(&z, 5, &schedule, &cond, Branch::ImageAudio).unwrap();
        cond.context = Some(MotionContext {
            frames: &frames,
            audio: &ca,
            has_predecessor: false,
        });
        let first = oracle.predict_noise(&z, 5, &schedule, &cond, Branch::ImageAudio).unwrap();
        assert_eq!(bare, first);
        cond.context = Some(MotionContext {
            frames: &frames,
            audio: &ca,
            has_predecessor: true,
        });
        let seen = oracle.predict_noise(&z, 5, &schedule, &cond, Branch::ImageAudio).unwrap();
        assert!(seen.max_abs_diff(&bare) > 1e-3);
    }

    #[test]
    fn invalid_rho_rejected() {
        assert!(CoupledGaussianOracle::new(config(), 1.0, 0.01).is_err());
        assert!(CoupledGaussianOracle::new(config(), 0.5, 0.0).is_err());
    }
}
