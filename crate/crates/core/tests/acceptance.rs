//! Acceptance suite: one line per criterion, nonzero exit if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shiftfuse::conditioning::{FaceBox, FaceMask, PooledAudioEmbedding, ReferenceEmbedding};
use shiftfuse::costmodel::{cost_motion_frames, cost_overlap, cost_overlap_structural, cost_shift, CostConfig};
use shiftfuse::denoiser::{
    guided_predict, spatial_audio_attend, train_toy, DropoutConfig, Dropped, GuidanceConfig, NoiseSchedule,
    ToyConfig, ToyDenoiser, TrainConfig, TrainingSample,
};
use shiftfuse::harness::{run_experiment, simulate, toy_gradcheck, trace_windows, ExperimentConfig};
use shiftfuse::motion::{
    bucket_from_boxes, predict_buckets, scale_buckets, BoxStatistic, BucketPredictor, MotionBuckets,
};
use shiftfuse::numerics::{AttentionWeights, Precision, Tensor};
use shiftfuse::scheduler::{
    plan_windows, run_independent, run_shift, Runner, ShiftConfig, Strategy, StrategyConfig,
};

use common::{condition, per_frame, setup};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// 1. Every index written once per timestep; starts follow `(k·α) mod l`.
fn coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let l = rng.random_range(3..=256);
        let f = rng.random_range(2..l);
        let alpha = rng.random_range(1..f);
        let steps = rng.random_range(1..=12);
        let plan = plan_windows(&ShiftConfig::new(l, f, alpha, steps).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if plan.timesteps.len() != steps {
            return Err(format!("case {case}: {} timesteps", plan.timesteps.len()));
        }
        for (k, step) in plan.timesteps.iter().enumerate() {
            let start = (k * alpha) % l;
            if step.start != start || step.t != steps - k {
                return Err(format!("case {case} k={k}: start {} t {}", step.start, step.t));
            }
            let mut hits = vec![0u32; l];
            for (w, win) in step.windows.iter().enumerate() {
                if win.start != (start + w * f) % l || win.indices.len() != f {
                    return Err(format!("case {case} k={k}: window {w} starts at {}", win.start));
                }
                for j in 0..f {
                    let i = (win.start + j) % l;
                    if win.indices[j] != i {
                        return Err(format!("case {case}: window index {} != {i}", win.indices[j]));
                    }
                    if !win.duplicate[j] {
                        hits[i] += 1;
                    }
                }
            }
            if hits.iter().any(|&h| h != 1) {
                return Err(format!("case {case} k={k}: coverage {hits:?}"));
            }
        }
    }
    Ok("1000 plans, exact".into())
}

/// 2. Hand-derived plan for l=20, f=8, α=3, T=2.
fn golden_trace() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/trace_l20_f8_a3_t2.json");
    let want: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let text = trace_windows(&ShiftConfig::new(20, 8, 3, 2).unwrap()).map_err(|e| e.to_string())?;
    let got: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    check(got == want, "window indices and duplicate flags".into())
}

/// 3. Per-frame oracle: shift fusion equals independent clips bit for bit.
fn partition_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50u64 {
        let l = rng.random_range(3..64);
        let f = rng.random_range(2..l);
        let alpha = rng.random_range(1..f);
        let steps = rng.random_range(1..=10);
        let (cfg, prep) = setup(l, [2, 2, 2], 100 + case, Precision::F32);
        let backbone = per_frame(&cfg, &prep);
        let schedule = NoiseSchedule::cosine(steps).unwrap();
        let runner = Runner::new(&backbone, &schedule, GuidanceConfig::default());
        let cond = condition(&prep);
        let a = run_shift(&runner, &prep.noise, &cond, &ShiftConfig::new(l, f, alpha, steps).unwrap())
            .map_err(|e| e.to_string())?;
        let b = run_independent(&runner, &prep.noise, &cond, f).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("case {case}: l={l} f={f} alpha={alpha} differ by {}", a.max_abs_diff(&b)));
        }
    }
    Ok("50 configs, bit-exact".into())
}

/// 4. Coupled benchmark: shift ≥30% below independent, motion frames in between.
fn seam_improvement() -> Outcome {
    let mut passing = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let mut r = BTreeMap::new();
        for kind in [Strategy::Shift, Strategy::Independent, Strategy::MotionFrames] {
            let cfg = ExperimentConfig {
                seed,
                strategy: StrategyConfig { kind, o: 4 },
                ..Default::default()
            };
            let (_, seam, _) = simulate(&cfg).map_err(|e| e.to_string())?;
            r.insert(kind.name(), seam.seam_ratio);
        }
        let (s, i, m) = (r["shift"], r["independent"], r["motion_frames"]);
        let ok = s <= 0.7 * i && s < m && m < i;
        passing += ok as usize;
        lines.push(format!("{s:.2}/{m:.2}/{i:.2}"));
    }
    check(
        passing >= 9,
        format!("{passing}/10 seeds; shift/motion/independent = {}", lines.join(" ")),
    )
}

/// 5. Closed forms against independently arranged formulas.
fn cost_equality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        // Dyadic inputs keep the shift and overlap products exact in any order.
        let steps = rng.random_range(1..100usize);
        let f = 1usize << rng.random_range(1..7);
        let o = rng.random_range(0..f);
        let n = rng.random_range(1..200) as f64 / 4.0;
        let omega = rng.random_range(1..64) as f64 / 8.0;
        let shift = n * omega * steps as f64;
        let overlap = (n * f as f64 + o as f64) * omega * steps as f64 / f as f64;
        let cfg = CostConfig {
            omega,
            omega_r: rng.random_range(0.0..3.0),
            omega_m: rng.random_range(0.0..3.0),
        };
        let grown = ((f + o) * (f + o) - f * f) as f64 / (f * f) as f64;
        let motion = n * (omega * steps as f64 + cfg.omega_r * o as f64 + cfg.omega_m * steps as f64 * grown);
        let got_mf = cost_motion_frames(steps, n, o, f, &cfg).map_err(|e| e.to_string())?;
        if cost_shift(steps, n, omega) != shift
            || cost_overlap(steps, n, o, f, omega).map_err(|e| e.to_string())? != overlap
            || (got_mf - motion).abs() > 1e-9 * motion
        {
            return Err(format!("case {case}: T={steps} n={n} o={o} f={f}"));
        }
    }
    let worked = cost_motion_frames(
        25,
        6.0,
        8,
        16,
        &CostConfig {
            omega: 10.0,
            omega_r: 2.0,
            omega_m: 1.0,
        },
    )
    .map_err(|e| e.to_string())?;
    check(worked == 1783.5, format!("100 configs; worked example {worked}"))
}

/// 6. Calibrated ordering shift < motion frames < overlap.
fn cost_ordering() -> Outcome {
    let cfg = CostConfig {
        omega: 1.0,
        omega_r: 0.3,
        omega_m: 0.1,
    };
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [1usize, 2] {
        let s = cost_shift(25, n as f64, 1.0);
        let m = cost_motion_frames(25, n as f64, 8, 16, &cfg).map_err(|e| e.to_string())?;
        let o = cost_overlap(25, n as f64, 8, 16, 1.0).map_err(|e| e.to_string())?;
        ok &= s < m && m < o;
        detail.push(format!("n={n}: {s} < {m} < {o}"));
    }
    for n in 2..=20usize {
        let s = cost_shift(25, n as f64, 1.0);
        let m = cost_motion_frames(25, n as f64, 8, 16, &cfg).map_err(|e| e.to_string())?;
        let o = cost_overlap_structural(25, 16 * n, 16, 8, 1.0).map_err(|e| e.to_string())?;
        ok &= s < m && m < o;
    }
    detail.push("window-count overlap form holds for n=2..20".into());
    check(ok, detail.join("; "))
}

/// 7. Toy denoiser gradient against central differences.
fn gradient_soundness() -> Outcome {
    let config = ToyConfig {
        clip_len: 4,
        height: 8,
        width: 8,
        ..ToyConfig::default()
    };
    let r = toy_gradcheck(config, 0, 1e-3, 7).map_err(|e| e.to_string())?;
    check(
        r.max_rel_error < 1e-4,
        format!("max rel error {:.3e} over {} parameters", r.max_rel_error, r.checked),
    )
}

/// 8. Zero-mask identity and guidance endpoints, bit-exact.
fn conditioning_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut draw = |dims: &[usize]| Tensor::from_fn(dims, |_| rng.random_range(-3.0..3.0));
    let w = AttentionWeights::random(4, 4, 3, &mut ChaCha8Rng::seed_from_u64(9));
    let z = draw(&[6, 4]);
    let audio = draw(&[3, 4]);
    let same = spatial_audio_attend(&z, &audio, &FaceMask::zeros(2, 3), &w).map_err(|e| e.to_string())? == z;
    let (u, i, ia) = (draw(&[5, 3]), draw(&[5, 3]), draw(&[5, 3]));
    let g11 = guided_predict(&u, &i, &ia, &GuidanceConfig::new(1.0, 1.0).unwrap()).map_err(|e| e.to_string())?;
    let g00 = guided_predict(&u, &i, &ia, &GuidanceConfig::new(0.0, 0.0).unwrap()).map_err(|e| e.to_string())?;
    check(
        same && g11 == ia && g00 == u,
        format!("mask identity {same}, (1,1)->ia {}, (0,0)->u {}", g11 == ia, g00 == u),
    )
}

/// 9. Bucket zero, clamp, β-monotonicity, and scaling example.
fn bucket_contracts() -> Outcome {
    let still = vec![FaceBox::new(0.2, 0.2, 0.6, 0.6).unwrap(); 5];
    let zero = bucket_from_boxes(&still, 4096.0, BoxStatistic::Centers).map_err(|e| e.to_string())?;
    let wild: Vec<FaceBox> = (0..6)
        .map(|k| {
            let x = if k % 2 == 0 { 0.0 } else { 0.8 };
            FaceBox::new(x, 0.0, x + 0.2, 0.2).unwrap()
        })
        .collect();
    let clamped = bucket_from_boxes(&wild, 4096.0, BoxStatistic::Centers).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut monotone = true;
    for _ in 0..1000 {
        let p = BucketPredictor::random(6, 4, 8, &mut rng);
        let audio = PooledAudioEmbedding {
            tokens: Tensor::from_fn(&[3, 6], |_| rng.random_range(-2.0..2.0)),
        };
        let reference = ReferenceEmbedding::new(Tensor::from_fn(&[4], |_| rng.random_range(-2.0..2.0))).unwrap();
        let mut prev = MotionBuckets::new(0, 0, 1.0).unwrap();
        for beta in [0.5, 1.0, 2.0, 3.0] {
            let b = predict_buckets(&audio, &reference, &p, beta).map_err(|e| e.to_string())?;
            monotone &= b.m_t >= prev.m_t && b.m_e >= prev.m_e;
            prev = b;
        }
    }
    let scaled = scale_buckets((10.0, 20.0), 2.0).map_err(|e| e.to_string())?;
    let example = (scaled.m_t, scaled.m_e) == (20, 40);
    check(
        zero == 0 && clamped == 128 && monotone && example,
        format!("still {zero}, extreme {clamped}, monotone {monotone}, (10,20)x2 -> ({}, {})", scaled.m_t, scaled.m_e),
    )
}

/// 10. Dropout rates over 10,000 seeded training steps.
fn dropout_rates() -> Outcome {
    let config = ToyConfig {
        clip_len: 1,
        height: 1,
        width: 1,
        latent_channels: 1,
        hidden: 2,
        audio_width: 1,
        ref_width: 1,
        time_pe_dim: 2,
        bucket_pe_dim: 2,
        down_stages: 1,
        up_stages: 1,
    };
    let model = ToyDenoiser::random(config, 0).map_err(|e| e.to_string())?;
    let sample = TrainingSample {
        x0: Tensor::filled(&[1, 1, 1, 1], 0.5),
        audio: Tensor::filled(&[1, 1, 1], 1.0),
        reference: Tensor::filled(&[1], 1.0),
        buckets: MotionBuckets::default(),
        mask: Tensor::filled(&[1, 1], 1.0),
        context: None,
    };
    let train = TrainConfig {
        steps: 10_000,
        lr: 1e-4,
        dropout: DropoutConfig::default(),
        seed: 10,
        ..TrainConfig::default()
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    train_toy(model, &[sample], &train, &mut |e| {
        let key = match e.dropped {
            Dropped::Audio => "audio",
            Dropped::Image => "image",
            Dropped::Both => "both",
            Dropped::Nothing => "none",
        };
        *counts.entry(key).or_default() += 1;
    })
    .map_err(|e| e.to_string())?;
    let rate = |k: &str| counts.get(k).copied().unwrap_or(0) as f64 / 10_000.0;
    let ok = ["audio", "image", "both"].iter().all(|k| (rate(k) - 0.05).abs() <= 0.007)
        && (rate("none") - 0.85).abs() <= 0.007 * 3.0;
    check(
        ok,
        format!("audio {:.4}, image {:.4}, both {:.4}", rate("audio"), rate("image"), rate("both")),
    )
}

/// 11. Every strategy rerun writes identical bytes.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for kind in Strategy::ALL {
        let cfg = ExperimentConfig {
            id: kind.name().into(),
            strategy: StrategyConfig { kind, o: 4 },
            output_dir: tmp.path().to_path_buf(),
            ..Default::default()
        };
        let snapshot = |dir: &Path| -> Result<BTreeMap<String, Vec<u8>>, String> {
            let mut out = BTreeMap::new();
            for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
                let e = e.map_err(|e| e.to_string())?;
                out.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).map_err(|e| e.to_string())?);
            }
            Ok(out)
        };
        let dir = run_experiment(&cfg).map_err(|e| e.to_string())?.dir;
        let first = snapshot(&dir)?;
        run_experiment(&cfg).map_err(|e| e.to_string())?;
        if snapshot(&dir)? != first {
            return Err(format!("{} output changed between runs", kind.name()));
        }
    }
    Ok("4 strategies, 6 files each".into())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("coverage", coverage, Duration::from_secs(5)),
        ("golden trace", golden_trace, Duration::from_secs(1)),
        ("partition invariance", partition_invariance, Duration::from_secs(10)),
        ("seam improvement", seam_improvement, Duration::from_secs(120)),
        ("cost equality", cost_equality, Duration::from_secs(1)),
        ("cost ordering", cost_ordering, Duration::from_secs(1)),
        ("gradient soundness", gradient_soundness, Duration::from_secs(30)),
        ("conditioning identities", conditioning_identities, Duration::from_secs(1)),
        ("bucket contracts", bucket_contracts, Duration::from_secs(2)),
        ("dropout rates", dropout_rates, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let (tag, detail) = match outcome {
            Ok(d) if took <= *budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        failed += (tag == "FAIL") as usize;
        println!("criterion {:>2} {tag} {name} ({:.2}s): {detail}", k + 1, took.as_secs_f64());
    }
    println!("acceptance: {} of 11 passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
