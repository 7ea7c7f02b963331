use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::io::{write_json, write_tensor};
use crate::conditioning::{align_audio, build_face_mask, pool_temporal, AudioEmbedding, FaceMask};
use crate::costmodel::{
    cost_motion_frames, cost_overlap, cost_overlap_structural, cost_shift, reconcile, CostConfig, CostCounter,
    CostReport, RunShape,
};
use crate::denoiser::{
    Backbone, CoupledGaussianOracle, NoiseSchedule, PerFrameGaussianOracle, ToyConfig, ToyDenoiser, ToyInputs,
    ToyLossObjective, TrainingSample,
};
use crate::error::{Error, Result};
use crate::harness::config::{BackboneKind, BucketMode, ExperimentConfig};
use crate::harness::metrics::{clip_boundaries, seam_metric, SeamReport};
use crate::harness::synth::{gen_synthetic, SyntheticData};
use crate::motion::{predict_buckets, BucketPredictor, MotionBuckets};
use crate::numerics::{grad_check, GradCheckReport, Params, Precision, Tensor};
use crate::scheduler::{plan_windows, run_strategy, Runner, SequenceCondition, ShiftConfig, Strategy, StrategyConfig};

const PREDICTOR_SEED: u64 = 0xb0c4;
const PREDICTOR_HIDDEN: usize = 16;

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: String,
    pub strategy: Strategy,
    pub alpha: usize,
    pub seed: u64,
    pub seam_ratio: f64,
    pub smoothness_proxy: f64,
    /// Guided window steps executed.
    pub counted_forwards: u64,
    pub closed_form_cost: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub sequence: Tensor,
    pub seam: SeamReport,
    pub cost: CostReport,
    pub dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn row(&self) -> ResultRow {
        ResultRow {
            id: self.config.id.clone(),
            strategy: self.config.strategy.kind,
            alpha: self.config.alpha,
            seed: self.config.seed,
            seam_ratio: self.seam.seam_ratio,
            smoothness_proxy: self.seam.smoothness_proxy,
            counted_forwards: self.cost.counts.window_steps,
            closed_form_cost: self.cost.closed_form,
        }
    }
}

/// Everything a run conditions on, derived from the config and seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: SyntheticData,
    pub audio: AudioEmbedding,
    pub mask: FaceMask,
    pub buckets: MotionBuckets,
    /// `z_T`, `[l, h, w, c]`.
    pub noise: Tensor,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = gen_synthetic(&cfg.synthetic())?;
    let audio = align_audio(&data.audio, cfg.l, cfg.fps, cfg.audio_window_sec)?;
    let [h, w, c] = cfg.frame_dims;
    let mask = build_face_mask(&data.boxes, h, w)?;
    let buckets = match cfg.buckets {
        BucketMode::Fixed { m_t, m_e } => MotionBuckets::new(m_t, m_e, cfg.beta)?,
        BucketMode::Predicted => {
            let mut rng = ChaCha8Rng::seed_from_u64(PREDICTOR_SEED);
            let predictor = BucketPredictor::random(audio.width(), cfg.ref_width, PREDICTOR_HIDDEN, &mut rng);
            predict_buckets(&pool_temporal(&audio)?, &data.reference, &predictor, cfg.beta)?
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let noise = Tensor::from_fn(&[cfg.l, h, w, c], |_| StandardNormal.sample(&mut rng)).with_precision(cfg.precision);
    Ok(Prepared {
        data,
        audio,
        mask,
        buckets,
        noise,
    })
}

pub fn build_backbone(cfg: &ExperimentConfig, audio_width: usize) -> Result<Box<dyn Backbone>> {
    let oracle = cfg.oracle_config(audio_width);
    Ok(match cfg.backbone {
        BackboneKind::OracleIndependent => Box::new(PerFrameGaussianOracle::new(oracle)?),
        BackboneKind::OracleCoupled => Box::new(CoupledGaussianOracle::new(
            oracle,
            cfg.oracle.rho,
            cfg.oracle.context_noise,
        )?),
        BackboneKind::ToyTrained => {
            let path = cfg
                .toy_checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("toy_trained backbone needs toy_checkpoint"))?;
            let model = ToyDenoiser::load(path)?;
            if model.config.frame_dims() != cfg.frame_dims || model.config.audio_width != audio_width {
                return Err(Error::config(format!(
                    "checkpoint expects frames {:?} and audio width {}, run has {:?} and {audio_width}",
                    model.config.frame_dims(),
                    model.config.audio_width,
                    cfg.frame_dims
                )));
            }
            Box::new(model)
        }
    })
}

/// Denoises the seeded sequence without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(Tensor, SeamReport, CostReport)> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let backbone = build_backbone(cfg, prep.audio.width())?;
    let schedule = NoiseSchedule::cosine(cfg.steps)?;
    let counter = CostCounter::new();
    let runner = Runner::new(backbone.as_ref(), &schedule, cfg.guidance)
        .with_counter(&counter)
        .parallel(cfg.parallel);
    let cond = SequenceCondition {
        audio: &prep.audio,
        reference: &prep.data.reference,
        buckets: prep.buckets,
        mask: &prep.mask,
    };
    let shift = cfg.shift()?;
    let z0 = run_strategy(&runner, &prep.noise, &cond, cfg.strategy, &shift)?;
    let seam = seam_metric(&z0, &clip_boundaries(cfg.l, cfg.f))?;
    let shape = RunShape {
        l: cfg.l,
        f: cfg.f,
        o: strategy_o(cfg.strategy),
        steps: cfg.steps,
    };
    let cost = reconcile(cfg.strategy.kind, shape, counter.snapshot(), &cfg.cost)?;
    cost.ensure()?;
    Ok((z0, seam, cost))
}

fn strategy_o(s: StrategyConfig) -> usize {
    match s.kind {
        Strategy::Overlap | Strategy::MotionFrames => s.o,
        Strategy::Shift | Strategy::Independent => 0,
    }
}

/// Runs one experiment and writes its artifacts under `output_dir/id`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let wrap = |e: Error| Error::Experiment {
        id: cfg.id.clone(),
        source: Box::new(e),
    };
    let (sequence, seam, cost) = simulate(cfg).map_err(wrap)?;
    let dir = cfg.run_dir();
    let outcome = ExperimentOutcome {
        config: cfg.clone(),
        sequence,
        seam,
        cost,
        dir: dir.clone(),
    };
    write_outcome(&outcome).map_err(wrap)?;
    Ok(outcome)
}

fn write_outcome(o: &ExperimentOutcome) -> Result<()> {
    write_json(&o.dir.join("config.json"), &o.config)?;
    write_tensor(&o.dir.join("sequence.json"), &o.sequence)?;
    write_json(&o.dir.join("seam.json"), &o.seam)?;
    write_json(&o.dir.join("cost.json"), &o.cost)?;
    write_rows(&o.dir.join("results.csv"), &[o.row()])
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_many(configs: Vec<ExperimentConfig>) -> Result<Vec<ResultRow>> {
    let outcomes: Vec<ExperimentOutcome> = configs.par_iter().map(run_experiment).collect::<Result<_>>()?;
    Ok(outcomes.iter().map(ExperimentOutcome::row).collect())
}

/// Every strategy on every seed; rows are ordered by strategy then seed.
pub fn compare_strategies(base: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<ResultRow>> {
    let root = base.run_dir();
    let configs = Strategy::ALL
        .iter()
        .flat_map(|&kind| {
            let root = &root;
            seeds.iter().map(move |&seed| ExperimentConfig {
                id: format!("{}-s{seed}", kind.name()),
                strategy: StrategyConfig { kind, o: base.strategy.o },
                seed,
                output_dir: root.clone(),
                ..base.clone()
            })
        })
        .collect();
    let rows = run_many(configs)?;
    write_rows(&root.join("compare.csv"), &rows)?;
    Ok(rows)
}

/// Shift fusion at each `alpha` on every seed.
pub fn sweep_alpha(base: &ExperimentConfig, alphas: &[usize], seeds: &[u64]) -> Result<Vec<ResultRow>> {
    let root = base.run_dir();
    let configs = alphas
        .iter()
        .flat_map(|&alpha| {
            let root = &root;
            seeds.iter().map(move |&seed| ExperimentConfig {
                id: format!("a{alpha}-s{seed}"),
                strategy: StrategyConfig {
                    kind: Strategy::Shift,
                    o: 0,
                },
                alpha,
                seed,
                output_dir: root.clone(),
                ..base.clone()
            })
        })
        .collect();
    let rows = run_many(configs)?;
    write_rows(&root.join("sweep.csv"), &rows)?;
    Ok(rows)
}

/// The window plan as pretty JSON.
pub fn trace_windows(cfg: &ShiftConfig) -> Result<String> {
    let plan = plan_windows(cfg)?;
    let mut text = serde_json::to_string_pretty(&plan)?;
    text.push('\n');
    Ok(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCosts {
    pub n: f64,
    pub shift: f64,
    pub overlap: f64,
    pub overlap_structural: f64,
    pub motion_frames: f64,
}

pub fn closed_form_costs(shape: RunShape, cfg: &CostConfig) -> Result<ClosedFormCosts> {
    cfg.validate()?;
    let n = shape.n();
    Ok(ClosedFormCosts {
        n,
        shift: cost_shift(shape.steps, n, cfg.omega),
        overlap: cost_overlap(shape.steps, n, shape.o, shape.f, cfg.omega)?,
        overlap_structural: cost_overlap_structural(shape.steps, shape.l, shape.f, shape.o, cfg.omega)?,
        motion_frames: cost_motion_frames(shape.steps, n, shape.o, shape.f, cfg)?,
    })
}

/// Clean `f`-frame clips cut from seeded synthetic sequences, each carrying
/// the `o` frames before it as context when they exist.
pub fn toy_training_set(cfg: &ExperimentConfig, sequences: usize, o: usize) -> Result<Vec<TrainingSample>> {
    if o >= cfg.f {
        return Err(Error::config(format!("context o={o} must be below f={}", cfg.f)));
    }
    let mut out = Vec::new();
    for s in 0..sequences as u64 {
        let c = ExperimentConfig {
            seed: cfg.seed.wrapping_add(s),
            ..cfg.clone()
        };
        let prep = prepare(&c)?;
        for start in (0..=cfg.l.saturating_sub(cfg.f)).step_by(cfg.f) {
            let idx: Vec<usize> = (start..start + cfg.f).collect();
            let context = if o > 0 && start >= o {
                Some(prep.data.target.gather(&(start - o..start).collect::<Vec<_>>())?)
            } else {
                None
            };
            out.push(TrainingSample {
                x0: prep.data.target.gather(&idx)?,
                audio: prep.audio.gather(&idx)?.tokens,
                reference: prep.data.reference.vector.clone(),
                buckets: prep.buckets,
                mask: prep.mask.mask.clone(),
                context,
            });
        }
    }
    Ok(out)
}

/// Toy architecture matching an experiment's latent and conditioning shapes.
pub fn toy_config_for(cfg: &ExperimentConfig, audio_width: usize) -> ToyConfig {
    ToyConfig {
        clip_len: cfg.f,
        height: cfg.frame_dims[0],
        width: cfg.frame_dims[1],
        latent_channels: cfg.frame_dims[2],
        audio_width,
        ref_width: cfg.ref_width,
        ..ToyConfig::default()
    }
}

/// Finite-difference check of the toy loss gradient over every parameter.
pub fn toy_gradcheck(config: ToyConfig, context: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let model = ToyDenoiser::random(config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut draw = |dims: &[usize]| Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0));
    let frame = [config.clip_len, config.height, config.width, config.latent_channels];
    let inputs = ToyInputs {
        z: draw(&frame),
        t: 7,
        audio: draw(&[config.clip_len, 2, config.audio_width]),
        reference: draw(&[config.ref_width]),
        buckets: MotionBuckets::new(5, 11, 1.0)?,
        mask: Tensor::from_fn(&[config.height, config.width], |i| ((i % 3) != 0) as u8 as f64),
        context: (context > 0).then(|| draw(&[context, config.height, config.width, config.latent_channels])),
    };
    let target = draw(&frame);
    let params = Tensor::vector(model.flatten());
    if params.precision() != Precision::F64 {
        return Err(Error::config("gradient checks require 64-bit mode"));
    }
    grad_check(&ToyLossObjective { model, inputs, target }, &params, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(strategy: Strategy) -> ExperimentConfig {
        ExperimentConfig {
            id: "t".into(),
            strategy: StrategyConfig { kind: strategy, o: 4 },
            l: 20,
            steps: 5,
            frame_dims: [2, 2, 2],
            ..Default::default()
        }
    }

    #[test]
    fn every_strategy_reconciles() {
        for s in Strategy::ALL {
            let (z, seam, cost) = simulate(&quick(s)).unwrap();
            assert_eq!(z.dims(), &[20, 2, 2, 2]);
            assert!(z.is_finite());
            assert!(cost.matches(), "{cost:?}");
            assert!(seam.seam_ratio >= 0.0);
        }
    }

    #[test]
    fn parallel_and_serial_agree() {
        let a = simulate(&quick(Strategy::Shift)).unwrap().0;
        let b = simulate(&ExperimentConfig {
            parallel: false,
            ..quick(Strategy::Shift)
        })
        .unwrap()
        .0;
        assert_eq!(a, b);
    }

    #[test]
    fn errors_carry_experiment_id() {
        let cfg = ExperimentConfig {
            id: "bad".into(),
            output_dir: std::env::temp_dir(),
            ..quick(Strategy::Shift)
        };
        let cfg = ExperimentConfig { steps: 0, ..cfg };
        match run_experiment(&cfg) {
            Err(Error::Experiment { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn training_set_shapes() {
        let cfg = quick(Strategy::Shift);
        let set = toy_training_set(&cfg, 2, 2).unwrap();
        assert_eq!(set.len(), 2 * 2);
        assert!(set[0].context.is_none());
        assert_eq!(set[1].context.as_ref().unwrap().dims(), &[2, 2, 2, 2]);
        assert_eq!(set[1].x0.dims(), &[8, 2, 2, 2]);
    }

    #[test]
    fn single_step_trace_starts_at_zero() {
        let json = trace_windows(&ShiftConfig::new(20, 8, 3, 1).unwrap()).unwrap();
        let plan: crate::scheduler::WindowPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(plan.timesteps.len(), 1);
        assert_eq!(plan.timesteps[0].start, 0);
    }
}
