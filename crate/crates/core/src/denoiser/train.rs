use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::{NoiseSchedule, ToyDenoiser, ToyInputs};
use crate::error::{Error, Result};
use crate::motion::MotionBuckets;
use crate::numerics::{Params, Tensor};

/// Condition dropout probabilities; the remainder keeps both conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutConfig {
    pub p_audio: f64,
    pub p_image: f64,
    pub p_both: f64,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            p_audio: 0.05,
            p_image: 0.05,
            p_both: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dropped {
    Nothing,
    Audio,
    Image,
    Both,
}

#[derive(Debug, Clone, Copy)]
pub struct DropoutSampler {
    cfg: DropoutConfig,
}

impl DropoutSampler {
    pub fn new(cfg: DropoutConfig) -> Result<Self> {
        for (what, p) in [("p_audio", cfg.p_audio), ("p_image", cfg.p_image), ("p_both", cfg.p_both)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Range {
                    what: what.into(),
                    value: p,
                    min: 0.0,
                    max: 1.0,
                });
            }
        }
        let total = cfg.p_audio + cfg.p_image + cfg.p_both;
        if total > 1.0 + 1e-12 {
            return Err(Error::Range {
                what: "dropout total".into(),
                value: total,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(Self { cfg })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Dropped {
        let u: f64 = rng.random();
        let c = self.cfg;
        if u < c.p_audio {
            Dropped::Audio
        } else if u < c.p_audio + c.p_image {
            Dropped::Image
        } else if u < c.p_audio + c.p_image + c.p_both {
            Dropped::Both
        } else {
            Dropped::Nothing
        }
    }
}

/// One clean training clip with its conditions.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    /// `[f, h, w, c]`
    pub x0: Tensor,
    /// `[f, d, audio_width]`
    pub audio: Tensor,
    pub reference: Tensor,
    pub buckets: MotionBuckets,
    /// `[h, w]`
    pub mask: Tensor,
    pub context: Option<Tensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub optimizer: Optimizer,
    pub diffusion_steps: usize,
    pub dropout: DropoutConfig,
    pub seed: u64,
    /// Loss above this (or non-finite) aborts training.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 3e-3,
            optimizer: Optimizer::Adam,
            diffusion_steps: 25,
            dropout: DropoutConfig::default(),
            seed: 0,
            divergence_limit: 1e6,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// What the training hook sees after each update.
#[derive(Debug, Clone, Copy)]
pub struct TrainEvent<'a> {
    pub step: usize,
    pub loss: f64,
    pub dropped: Dropped,
    /// The inputs actually fed to the model.
    pub inputs: &'a ToyInputs,
}

/// Trains `model` on noise prediction with condition dropout.
pub fn train_toy(
    mut model: ToyDenoiser,
    data: &[TrainingSample],
    cfg: &TrainConfig,
    hook: &mut dyn FnMut(&TrainEvent<'_>),
) -> Result<(ToyDenoiser, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Range {
            what: "lr".into(),
            value: cfg.lr,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let schedule = NoiseSchedule::cosine(cfg.diffusion_steps)?;
    let sampler = DropoutSampler::new(cfg.dropout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut flat = model.flatten();
    let mut adam = Adam::new(flat.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let sample = &data[rng.random_range(0..data.len())];
        let t = rng.random_range(1..=schedule.steps());
        let noise = Tensor::from_fn(sample.x0.dims(), |_| StandardNormal.sample(&mut rng));
        let z = schedule.add_noise(&sample.x0, &noise, t)?;
        let dropped = sampler.draw(&mut rng);
        let audio = match dropped {
            Dropped::Audio | Dropped::Both => Tensor::zeros(sample.audio.dims()),
            _ => sample.audio.clone(),
        };
        let reference = match dropped {
            Dropped::Image | Dropped::Both => Tensor::zeros(sample.reference.dims()),
            _ => sample.reference.clone(),
        };
        let inputs = ToyInputs {
            z,
            t,
            audio,
            reference,
            buckets: sample.buckets,
            mask: sample.mask.clone(),
            context: sample.context.clone(),
        };
        let (loss, grad) = model.loss_and_grad(&inputs, &noise)?;
        if !loss.is_finite() || loss > cfg.divergence_limit {
            return Err(Error::Diverged { step, loss });
        }
        let g = grad.flatten();
        match cfg.optimizer {
            Optimizer::Sgd => flat.iter_mut().zip(&g).for_each(|(p, gi)| *p -= cfg.lr * gi),
            Optimizer::Adam => adam.update(&mut flat, &g, cfg.lr),
        }
        model.load_flat(&flat)?;
        losses.push(loss);
        hook(&TrainEvent {
            step,
            loss,
            dropped,
            inputs: &inputs,
        });
    }
    Ok((model, losses))
}

#[derive(Serialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for (step, &loss) in losses.iter().enumerate() {
        w.serialize(LossRow { step, loss })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
