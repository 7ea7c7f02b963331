#![allow(dead_code)]

use shiftfuse::denoiser::{CoupledGaussianOracle, OracleConfig, PerFrameGaussianOracle};
use shiftfuse::harness::{prepare, ExperimentConfig, Prepared};
use shiftfuse::numerics::Precision;
use shiftfuse::scheduler::SequenceCondition;

pub fn setup(l: usize, frame_dims: [usize; 3], seed: u64, precision: Precision) -> (ExperimentConfig, Prepared) {
    let cfg = ExperimentConfig {
        l,
        seed,
        frame_dims,
        precision,
        ..Default::default()
    };
    let prep = prepare(&cfg).unwrap();
    (cfg, prep)
}

pub fn condition(prep: &Prepared) -> SequenceCondition<'_> {
    SequenceCondition {
        audio: &prep.audio,
        reference: &prep.data.reference,
        buckets: prep.buckets,
        mask: &prep.mask,
    }
}

pub fn oracle_config(cfg: &ExperimentConfig, prep: &Prepared) -> OracleConfig {
    cfg.oracle_config(prep.audio.width())
}

pub fn per_frame(cfg: &ExperimentConfig, prep: &Prepared) -> PerFrameGaussianOracle {
    PerFrameGaussianOracle::new(oracle_config(cfg, prep)).unwrap()
}

pub fn coupled(cfg: &ExperimentConfig, prep: &Prepared) -> CoupledGaussianOracle {
    CoupledGaussianOracle::new(oracle_config(cfg, prep), cfg.oracle.rho, cfg.oracle.context_noise).unwrap()
}
