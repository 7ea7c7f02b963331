use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::conditioning::{FaceBox, RawAudioFeatures, ReferenceEmbedding};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Driver `sin(2π·i / period)`.
    Sinusoid,
    /// Smoothed Gaussian noise, standardized.
    CoupledRandom,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid" => Ok(Self::Sinusoid),
            "coupled_random" => Ok(Self::CoupledRandom),
            _ => Err(Error::config(format!("unknown synthetic kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub kind: SyntheticKind,
    pub l: usize,
    pub frame_dims: [usize; 3],
    pub seed: u64,
    pub fps: f64,
    pub audio_rate_hz: f64,
    pub stages: usize,
    pub stage_width: usize,
    pub ref_width: usize,
    pub period: f64,
    pub audio_noise: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::CoupledRandom,
            l: 40,
            frame_dims: [8, 8, 4],
            seed: 0,
            fps: 25.0,
            audio_rate_hz: 50.0,
            stages: 5,
            stage_width: 2,
            ref_width: 8,
            period: 16.0,
            audio_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// `[l, h, w, c]` clean latents.
    pub target: Tensor,
    pub audio: RawAudioFeatures,
    /// Per-frame motion driver.
    pub driver: Vec<f64>,
    /// Latent direction the driver moves along, `[h·w·c]`.
    pub direction: Tensor,
    /// Static per-element offset, `[h·w·c]`.
    pub base: Tensor,
    /// Per-channel loadings of the driver in the audio features.
    pub audio_loadings: Vec<f64>,
    pub boxes: Vec<FaceBox>,
    pub reference: ReferenceEmbedding,
}

fn standardize(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    xs.iter_mut().for_each(|x| *x = (*x - mean) / sd);
}

/// Linear interpolation of `driver` at fractional frame position `p`.
fn interpolate(driver: &[f64], p: f64) -> f64 {
    let last = (driver.len() - 1) as f64;
    let p = p.clamp(0.0, last);
    let i = p.floor() as usize;
    let frac = p - i as f64;
    if i + 1 >= driver.len() {
        driver[i]
    } else {
        driver[i] * (1.0 - frac) + driver[i + 1] * frac
    }
}

/// A latent sequence whose frames move along one direction by a driver
/// signal, plus audio features that observe the same driver with noise.
pub fn gen_synthetic(params: &SyntheticParams) -> Result<SyntheticData> {
    if params.l == 0 || params.frame_dims.contains(&0) || params.stages == 0 || params.stage_width == 0 {
        return Err(Error::config("synthetic dimensions must be positive"));
    }
    if !(params.fps > 0.0 && params.audio_rate_hz > 0.0 && params.period > 0.0) {
        return Err(Error::config("fps, audio rate and period must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let l = params.l;
    let e: usize = params.frame_dims.iter().product();

    let driver: Vec<f64> = match params.kind {
        SyntheticKind::Sinusoid => (0..l).map(|i| (TAU * i as f64 / params.period).sin()).collect(),
        SyntheticKind::CoupledRandom => {
            let (mut a, mut b) = (0.0, 0.0);
            let mut d: Vec<f64> = (0..l)
                .map(|_| {
                    a = 0.8 * a + normal();
                    b = 0.8 * b + a;
                    b
                })
                .collect();
            standardize(&mut d);
            d
        }
    };

    let mut direction: Vec<f64> = (0..e).map(|_| normal()).collect();
    let rms = (direction.iter().map(|v| v * v).sum::<f64>() / e as f64).sqrt();
    direction.iter_mut().for_each(|v| *v /= rms);
    let base: Vec<f64> = (0..e).map(|_| 0.5 * normal()).collect();

    let mut target = Vec::with_capacity(l * e);
    for &d in &driver {
        target.extend(direction.iter().zip(&base).map(|(dir, b)| b + d * dir));
    }

    let width = params.stages * params.stage_width;
    let loadings: Vec<f64> = (0..width)
        .map(|_| {
            let v = normal();
            v.signum() * (0.5 + v.abs().min(1.5))
        })
        .collect();
    let n_tokens = ((l as f64) / params.fps * params.audio_rate_hz).round().max(1.0) as usize;
    let mut stages = Vec::with_capacity(params.stages);
    for s in 0..params.stages {
        let mut data = Vec::with_capacity(n_tokens * params.stage_width);
        for j in 0..n_tokens {
            let p = j as f64 / params.audio_rate_hz * params.fps - 0.5;
            let drv = interpolate(&driver, p);
            for c in 0..params.stage_width {
                data.push(loadings[s * params.stage_width + c] * drv + params.audio_noise * normal());
            }
        }
        stages.push(Tensor::new(&[n_tokens, params.stage_width], data)?);
    }
    let audio = RawAudioFeatures::new(params.audio_rate_hz, stages)?;

    let boxes = driver
        .iter()
        .map(|&d| {
            let cx = (0.5 + 0.05 * d).clamp(0.25, 0.75);
            FaceBox::new(cx - 0.2, 0.3, cx + 0.2, 0.7)
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = ReferenceEmbedding::new(Tensor::from_fn(&[params.ref_width], |_| 0.5 * normal()))?;

    Ok(SyntheticData {
        target: Tensor::new(&[l, params.frame_dims[0], params.frame_dims[1], params.frame_dims[2]], target)?,
        audio,
        driver,
        direction: Tensor::vector(direction),
        base: Tensor::vector(base),
        audio_loadings: loadings,
        boxes,
        reference,
    })
}
