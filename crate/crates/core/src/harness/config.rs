use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::io::read_json;
use crate::conditioning::DEFAULT_WINDOW_SEC;
use crate::costmodel::CostConfig;
use crate::denoiser::{GuidanceConfig, OracleConfig, DEFAULT_CONTEXT_NOISE, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::harness::synth::{SyntheticKind, SyntheticParams};
use crate::motion::MotionBuckets;
use crate::numerics::Precision;
use crate::scheduler::{ShiftConfig, Strategy, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    OracleIndependent,
    OracleCoupled,
    ToyTrained,
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle_independent" => Ok(Self::OracleIndependent),
            "oracle_coupled" => Ok(Self::OracleCoupled),
            "toy_trained" => Ok(Self::ToyTrained),
            _ => Err(Error::config(format!("unknown backbone {s:?}"))),
        }
    }
}

/// How the motion buckets of a run are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BucketMode {
    /// A seeded predictor on pooled audio and the reference, scaled by `beta`.
    Predicted,
    Fixed { m_t: u32, m_e: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub prior_std: f64,
    pub audio_gain: f64,
    pub ref_gain: f64,
    pub rho: f64,
    pub context_noise: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            prior_std: 1.0,
            audio_gain: 0.1,
            ref_gain: 0.1,
            rho: DEFAULT_RHO,
            context_noise: DEFAULT_CONTEXT_NOISE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub id: String,
    pub strategy: StrategyConfig,
    pub l: usize,
    pub f: usize,
    pub alpha: usize,
    pub steps: usize,
    pub guidance: GuidanceConfig,
    pub beta: f64,
    pub buckets: BucketMode,
    pub seed: u64,
    pub backbone: BackboneKind,
    pub toy_checkpoint: Option<PathBuf>,
    pub data: SyntheticKind,
    /// Latent frame shape `[h, w, c]`.
    pub frame_dims: [usize; 3],
    pub ref_width: usize,
    pub fps: f64,
    pub audio_window_sec: f64,
    pub oracle: OracleParams,
    pub precision: Precision,
    pub parallel: bool,
    pub output_dir: PathBuf,
    pub cost: CostConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            id: "default".into(),
            strategy: StrategyConfig {
                kind: Strategy::Shift,
                o: 4,
            },
            l: 40,
            f: 8,
            alpha: 7,
            steps: 25,
            guidance: GuidanceConfig::default(),
            beta: 1.0,
            buckets: BucketMode::Predicted,
            seed: 0,
            backbone: BackboneKind::OracleCoupled,
            toy_checkpoint: None,
            data: SyntheticKind::CoupledRandom,
            frame_dims: [8, 8, 4],
            ref_width: 8,
            fps: 25.0,
            audio_window_sec: DEFAULT_WINDOW_SEC,
            oracle: OracleParams::default(),
            precision: Precision::F32,
            parallel: true,
            output_dir: PathBuf::from("out"),
            cost: CostConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        Ok(cfg)
    }

    /// Shift geometry. The sweep and the relaxed path accept any `alpha`.
    pub fn shift(&self) -> Result<ShiftConfig> {
        ShiftConfig::relaxed(self.l, self.f, self.alpha, self.steps)
    }

    pub fn synthetic(&self) -> SyntheticParams {
        SyntheticParams {
            kind: self.data,
            l: self.l,
            frame_dims: self.frame_dims,
            seed: self.seed,
            fps: self.fps,
            ref_width: self.ref_width,
            ..SyntheticParams::default()
        }
    }

    pub fn oracle_config(&self, audio_width: usize) -> OracleConfig {
        OracleConfig {
            frame_dims: self.frame_dims,
            audio_width,
            ref_width: self.ref_width,
            prior_std: self.oracle.prior_std,
            audio_gain: self.oracle.audio_gain,
            ref_gain: self.oracle.ref_gain,
            // The conditional-mean maps are part of the model, not the sample.
            seed: 0x5eed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['/', '\\']) {
            return Err(Error::config(format!("experiment id {:?} is not a plain name", self.id)));
        }
        self.shift()?;
        self.strategy.validate(self.f)?;
        self.guidance.validate()?;
        self.cost.validate()?;
        if let BucketMode::Fixed { m_t, m_e } = self.buckets {
            MotionBuckets::new(m_t, m_e, self.beta)?;
        } else {
            MotionBuckets::new(0, 0, self.beta)?;
        }
        if self.frame_dims.contains(&0) || self.ref_width == 0 {
            return Err(Error::config("frame dims and reference width must be positive"));
        }
        if !(self.fps > 0.0) || !(self.audio_window_sec > 0.0) {
            return Err(Error::config("fps and audio window must be positive"));
        }
        if self.backbone == BackboneKind::ToyTrained {
            let path = self
                .toy_checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("toy_trained backbone needs toy_checkpoint"))?;
            if !path.exists() {
                return Err(Error::config(format!("checkpoint {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = ExperimentConfig::default();
        assert_eq!((c.alpha, c.steps, c.beta), (7, 25, 1.0));
        assert_eq!((c.guidance.r_i, c.guidance.r_a), (2.0, 7.5));
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"id":"x","alpha":3,"buckets":{"mode":"fixed","m_t":4,"m_e":9}}"#).unwrap();
        assert_eq!(c.alpha, 3);
        assert_eq!(c.l, 40);
        assert_eq!(c.buckets, BucketMode::Fixed { m_t: 4, m_e: 9 });
    }

    #[test]
    fn missing_checkpoint_rejected() {
        let c = ExperimentConfig {
            backbone: BackboneKind::ToyTrained,
            toy_checkpoint: Some("/nonexistent/ckpt.json".into()),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            backbone: BackboneKind::ToyTrained,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn overlap_not_below_clip_rejected() {
        let c = ExperimentConfig {
            strategy: StrategyConfig {
                kind: Strategy::Overlap,
                o: 8,
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
