use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shiftfuse::conditioning::io::{write_audio_features, write_json, write_tensor, BoxRecord};
use shiftfuse::costmodel::{CostConfig, RunShape};
use shiftfuse::denoiser::{train_toy, write_loss_csv, Optimizer, ToyConfig, ToyDenoiser, TrainConfig};
use shiftfuse::harness::{
    closed_form_costs, compare_strategies, prepare, run_experiment, sweep_alpha, toy_config_for, toy_gradcheck,
    toy_training_set, trace_windows, BackboneKind, ExperimentConfig,
};
use shiftfuse::numerics::Precision;
use shiftfuse::scheduler::{ShiftConfig, Strategy};

#[derive(Parser)]
#[command(name = "shiftfuse", version, about = "Shift-fusion long-sequence denoising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Generate(ExperimentArgs),
    /// Run every strategy on a set of seeds.
    CompareStrategies {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Number of seeds, starting at the configured seed.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Shift fusion over several offsets.
    SweepAlpha {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5, 7, 9])]
        alphas: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Closed-form costs of each strategy.
    Cost {
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[arg(long, default_value_t = 96)]
        l: usize,
        #[arg(long, default_value_t = 16)]
        f: usize,
        #[arg(long, default_value_t = 8)]
        o: usize,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long, default_value_t = 0.3)]
        omega_r: f64,
        #[arg(long, default_value_t = 0.1)]
        omega_m: f64,
    },
    /// Dump the shift window plan as JSON.
    TraceWindows {
        #[arg(long, default_value_t = 20)]
        l: usize,
        #[arg(long, default_value_t = 8)]
        f: usize,
        #[arg(long, default_value_t = 3)]
        alpha: usize,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of the toy denoiser gradient.
    Gradcheck {
        #[arg(long, default_value_t = 4)]
        frames: usize,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        context: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the toy denoiser on synthetic clips and save a checkpoint.
    TrainToy {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 4)]
        sequences: usize,
        #[arg(long, default_value_t = 300)]
        train_steps: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, default_value_t = false)]
        sgd: bool,
        /// Context frames attached to each clip.
        #[arg(long, default_value_t = 0)]
        context: usize,
    },
    /// Write the synthetic target, audio features and face boxes.
    GenData(ExperimentArgs),
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root.
    #[arg(long, env = "SHIFTFUSE_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Overlap or motion-frame count.
    #[arg(long)]
    o: Option<usize>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long)]
    alpha: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    backbone: Option<BackboneKind>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    r_i: Option<f64>,
    #[arg(long)]
    r_a: Option<f64>,
    #[arg(long)]
    audio_gain: Option<f64>,
    #[arg(long)]
    f64: bool,
    #[arg(long)]
    serial: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            out => c.output_dir,
            id => c.id,
            seed => c.seed,
            strategy => c.strategy.kind,
            o => c.strategy.o,
            l => c.l,
            f => c.f,
            alpha => c.alpha,
            steps => c.steps,
            backbone => c.backbone,
            beta => c.beta,
            r_i => c.guidance.r_i,
            r_a => c.guidance.r_a,
            audio_gain => c.oracle.audio_gain,
        }
        if let Some(p) = &self.checkpoint {
            c.toy_checkpoint = Some(p.clone());
        }
        if self.f64 {
            c.precision = Precision::F64;
        }
        if self.serial {
            c.parallel = false;
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => {
            let out = run_experiment(&args.resolve()?)?;
            print_json(&out.row())
        }
        Command::CompareStrategies { exp, seeds } => {
            let cfg = exp.resolve()?;
            let list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            print_json(&compare_strategies(&cfg, &list)?)
        }
        Command::SweepAlpha { exp, alphas, seeds } => {
            let cfg = exp.resolve()?;
            let list: Vec<u64> = (cfg.seed..cfg.seed + seeds).collect();
            print_json(&sweep_alpha(&cfg, &alphas, &list)?)
        }
        Command::Cost {
            steps,
            l,
            f,
            o,
            omega,
            omega_r,
            omega_m,
        } => {
            let cfg = CostConfig { omega, omega_r, omega_m };
            print_json(&closed_form_costs(RunShape { l, f, o, steps }, &cfg)?)
        }
        Command::TraceWindows {
            l,
            f,
            alpha,
            steps,
            output,
        } => {
            let text = trace_windows(&ShiftConfig::new(l, f, alpha, steps)?)?;
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Gradcheck {
            frames,
            size,
            context,
            eps,
            tol,
            seed,
        } => {
            let config = ToyConfig {
                clip_len: frames,
                height: size,
                width: size,
                ..ToyConfig::default()
            };
            let report = toy_gradcheck(config, context, eps, seed)?;
            print_json(&report)?;
            if report.max_rel_error >= tol {
                bail!("max relative error {} is not below {tol}", report.max_rel_error);
            }
            Ok(())
        }
        Command::TrainToy {
            exp,
            sequences,
            train_steps,
            lr,
            sgd,
            context,
        } => {
            let cfg = exp.resolve()?;
            let samples = toy_training_set(&cfg, sequences, context)?;
            let audio_width = samples[0].audio.dim(2);
            let model = ToyDenoiser::random(toy_config_for(&cfg, audio_width), cfg.seed)?;
            let train = TrainConfig {
                steps: train_steps,
                lr,
                optimizer: if sgd { Optimizer::Sgd } else { Optimizer::Adam },
                diffusion_steps: cfg.steps,
                seed: cfg.seed,
                ..TrainConfig::default()
            };
            let (model, losses) = train_toy(model, &samples, &train, &mut |_| {})?;
            let dir = cfg.run_dir();
            let ckpt = dir.join("toy.json");
            model.save(&ckpt)?;
            write_loss_csv(&dir.join("losses.csv"), &losses)?;
            #[derive(Serialize)]
            struct Summary {
                checkpoint: PathBuf,
                first_loss: f64,
                last_loss: f64,
            }
            print_json(&Summary {
                checkpoint: ckpt,
                first_loss: losses.first().copied().unwrap_or(f64::NAN),
                last_loss: losses.last().copied().unwrap_or(f64::NAN),
            })
        }
        Command::GenData(args) => {
            let cfg = args.resolve()?;
            let prep = prepare(&cfg)?;
            let dir = cfg.run_dir();
            write_tensor(&dir.join("target.json"), &prep.data.target)?;
            write_audio_features(&dir.join("audio.json"), &prep.data.audio)?;
            let boxes: Vec<BoxRecord> = prep
                .data
                .boxes
                .iter()
                .enumerate()
                .map(|(frame, &rect)| BoxRecord { frame, rect })
                .collect();
            write_json(&dir.join("boxes.json"), &boxes)?;
            print_json(&dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": msg.trim() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let report = match err.downcast_ref::<shiftfuse::Error>() {
                Some(e) => serde_json::to_value(e.report()),
                None => Ok(serde_json::json!({ "error": "cli", "message": format!("{err:#}") })),
            };
            match report {
                Ok(v) => eprintln!("{v}"),
                Err(_) => eprintln!("{{\"error\":\"cli\"}}"),
            }
            ExitCode::FAILURE
        }
    }
}
