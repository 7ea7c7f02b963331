//! Closed-form compute cost of each strategy, and counters that tally what a
//! run actually executed so the two can be reconciled.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::Strategy;

/// Unit costs. `omega` is one guided window step on `f` frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub omega: f64,
    pub omega_r: f64,
    pub omega_m: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            omega: 1.0,
            omega_r: 0.3,
            omega_m: 0.1,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("omega", self.omega), ("omega_r", self.omega_r), ("omega_m", self.omega_m)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Range {
                    what: what.into(),
                    value: v,
                    min: 0.0,
                    max: f64::INFINITY,
                });
            }
        }
        Ok(())
    }
}

fn check_clip(f: usize, o: usize, strict: bool) -> Result<()> {
    if f == 0 {
        return Err(Error::config("clip length must be positive"));
    }
    if (strict && o >= f) || o > f {
        return Err(Error::Range {
            what: "overlap".into(),
            value: o as f64,
            min: 0.0,
            max: (f - strict as usize) as f64,
        });
    }
    Ok(())
}

/// `Ω·T·n`
pub fn cost_shift(steps: usize, n: f64, omega: f64) -> f64 {
    omega * steps as f64 * n
}

/// `Ω·T·(n + o/f)`
pub fn cost_overlap(steps: usize, n: f64, o: usize, f: usize, omega: f64) -> Result<f64> {
    check_clip(f, o, true)?;
    Ok(omega * steps as f64 * (n + o as f64 / f as f64))
}

/// Windows actually tiled by an overlapping sweep over `l` frames: stride `f − o`.
pub fn overlap_windows(l: usize, f: usize, o: usize) -> Result<usize> {
    check_clip(f, o, true)?;
    if l <= f {
        return Ok(1);
    }
    Ok((l - o).div_ceil(f - o))
}

/// `Ω·T·⌈(l − o)/(f − o)⌉`
pub fn cost_overlap_structural(steps: usize, l: usize, f: usize, o: usize, omega: f64) -> Result<f64> {
    Ok(omega * steps as f64 * overlap_windows(l, f, o)? as f64)
}

/// `Ω·T·n + ω_r·o·n + ω_m·T·n·(2of + o²)/f²`
pub fn cost_motion_frames(steps: usize, n: f64, o: usize, f: usize, cfg: &CostConfig) -> Result<f64> {
    check_clip(f, o, false)?;
    let (t, o, f) = (steps as f64, o as f64, f as f64);
    Ok(cfg.omega * t * n + cfg.omega_r * o * n + cfg.omega_m * t * n * (2.0 * o * f + o * o) / (f * f))
}

/// Thread-safe tallies of executed work.
#[derive(Debug, Default)]
pub struct CostCounter {
    window_steps: AtomicU64,
    model_evals: AtomicU64,
    window_frames: AtomicU64,
    reference_frames: AtomicU64,
    motion_extra: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounts {
    /// Guided window steps; each is one unit of `Ω`.
    pub window_steps: u64,
    pub model_evals: u64,
    pub window_frames: u64,
    /// Motion frames encoded once per clip.
    pub reference_frames: u64,
    /// Sum of `2·o·f + o²` over window steps carrying motion context.
    pub motion_extra: u64,
}

impl CostCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_window_step(&self, frames: usize, evals: usize) {
        self.window_steps.fetch_add(1, Ordering::Relaxed);
        self.model_evals.fetch_add(evals as u64, Ordering::Relaxed);
        self.window_frames.fetch_add(frames as u64, Ordering::Relaxed);
    }

    pub fn record_reference(&self, o: usize) {
        self.reference_frames.fetch_add(o as u64, Ordering::Relaxed);
    }

    pub fn record_motion_context(&self, o: usize, f: usize) {
        let extra = 2 * o * f + o * o;
        self.motion_extra.fetch_add(extra as u64, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CostCounts {
        CostCounts {
            window_steps: self.window_steps.load(Ordering::Relaxed),
            model_evals: self.model_evals.load(Ordering::Relaxed),
            window_frames: self.window_frames.load(Ordering::Relaxed),
            reference_frames: self.reference_frames.load(Ordering::Relaxed),
            motion_extra: self.motion_extra.load(Ordering::Relaxed),
        }
    }

    pub fn reset(&self) {
        for a in [
            &self.window_steps,
            &self.model_evals,
            &self.window_frames,
            &self.reference_frames,
            &self.motion_extra,
        ] {
            a.store(0, Ordering::Relaxed);
        }
    }
}

/// Geometry of a run, as needed to evaluate the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunShape {
    pub l: usize,
    pub f: usize,
    pub o: usize,
    pub steps: usize,
}

impl RunShape {
    pub fn n(&self) -> f64 {
        self.l as f64 / self.f as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub strategy: Strategy,
    pub l: usize,
    pub f: usize,
    pub o: usize,
    pub steps: usize,
    pub counts: CostCounts,
    /// Cost implied by the counters.
    pub counted: f64,
    /// Closed form evaluated at `n = l/f`.
    pub closed_form: f64,
    /// What the counted cost is checked against.
    pub expected: f64,
    /// `closed_form − expected`, attributable to partial windows at the ends.
    pub end_effects: f64,
    pub rel_error: f64,
}

pub const RECONCILE_TOLERANCE: f64 = 1e-9;

impl CostReport {
    pub fn matches(&self) -> bool {
        self.rel_error <= RECONCILE_TOLERANCE
    }

    pub fn ensure(&self) -> Result<()> {
        if !self.matches() {
            return Err(Error::Reconciliation {
                term: self.strategy.name().into(),
                counted: self.counted,
                expected: self.expected,
            });
        }
        Ok(())
    }
}

/// Compares executed counts against the closed form for `strategy`.
pub fn reconcile(strategy: Strategy, shape: RunShape, counts: CostCounts, cfg: &CostConfig) -> Result<CostReport> {
    cfg.validate()?;
    let RunShape { l, f, o, steps } = shape;
    check_clip(f, o, false)?;
    let n = shape.n();
    let tiles = l.div_ceil(f) as f64;
    let base = cfg.omega * counts.window_steps as f64;
    let (counted, closed_form, expected) = match strategy {
        Strategy::Shift | Strategy::Independent => {
            (base, cost_shift(steps, n, cfg.omega), cost_shift(steps, tiles, cfg.omega))
        }
        Strategy::Overlap => (
            base,
            cost_overlap(steps, n, o, f, cfg.omega)?,
            cost_overlap_structural(steps, l, f, o, cfg.omega)?,
        ),
        Strategy::MotionFrames => {
            let ff = (f * f) as f64;
            let counted = base
                + cfg.omega_r * counts.reference_frames as f64
                + cfg.omega_m * counts.motion_extra as f64 / ff;
            (
                counted,
                cost_motion_frames(steps, n, o, f, cfg)?,
                cost_motion_frames(steps, tiles, o, f, cfg)?,
            )
        }
    };
    let rel_error = (counted - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
    Ok(CostReport {
        strategy,
        l,
        f,
        o,
        steps,
        counts,
        counted,
        closed_form,
        expected,
        end_effects: closed_form - expected,
        rel_error,
    })
}

#[derive(Serialize)]
struct CostRow<'a> {
    strategy: &'a str,
    l: usize,
    f: usize,
    o: usize,
    steps: usize,
    window_steps: u64,
    model_evals: u64,
    counted: f64,
    closed_form: f64,
    expected: f64,
    end_effects: f64,
    rel_error: f64,
}

pub fn write_cost_csv(path: &Path, reports: &[CostReport]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(CostRow {
            strategy: r.strategy.name(),
            l: r.l,
            f: r.f,
            o: r.o,
            steps: r.steps,
            window_steps: r.counts.window_steps,
            model_evals: r.counts.model_evals,
            counted: r.counted,
            closed_form: r.closed_form,
            expected: r.expected,
            end_effects: r.end_effects,
            rel_error: r.rel_error,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::Strategy;
    use proptest::prelude::{prop_assert, proptest};

    #[test]
    fn worked_values() {
        let cfg = CostConfig::default();
        assert_eq!(cost_shift(25, 4.0, 1.0), 100.0);
        assert!((cost_overlap(25, 4.0, 8, 16, 1.0).unwrap() - 112.5).abs() < 1e-12);
        // 100 + 0.3·8·4 + 0.1·25·4·(256 + 64)/256 = 100 + 9.6 + 12.5
        assert!((cost_motion_frames(25, 4.0, 8, 16, &cfg).unwrap() - 122.1).abs() < 1e-12);
    }

    #[test]
    fn zero_overlap_motion_frames_equals_shift() {
        let cfg = CostConfig::default();
        assert_eq!(cost_motion_frames(25, 3.0, 0, 8, &cfg).unwrap(), cost_shift(25, 3.0, 1.0));
    }

    #[test]
    fn overlap_must_be_smaller_than_clip() {
        assert!(cost_overlap(25, 2.0, 8, 8, 1.0).is_err());
        assert!(overlap_windows(40, 8, 9).is_err());
    }

    #[test]
    fn overlap_window_count() {
        assert_eq!(overlap_windows(16, 8, 4).unwrap(), 3);
        assert_eq!(overlap_windows(40, 16, 8).unwrap(), 4);
        assert_eq!(overlap_windows(5, 8, 4).unwrap(), 1);
    }

    #[test]
    fn counter_sums_are_order_free() {
        let c = CostCounter::new();
        c.record_window_step(8, 3);
        c.record_window_step(8, 3);
        c.record_reference(4);
        c.record_motion_context(4, 8);
        let s = c.snapshot();
        assert_eq!(s.window_steps, 2);
        assert_eq!(s.model_evals, 6);
        assert_eq!(s.window_frames, 16);
        assert_eq!(s.motion_extra, 80);
        c.reset();
        assert_eq!(c.snapshot(), CostCounts::default());
    }

    #[test]
    fn reconcile_flags_mismatch() {
        let shape = RunShape { l: 16, f: 8, o: 0, steps: 2 };
        let good = CostCounts { window_steps: 4, ..Default::default() };
        assert!(reconcile(Strategy::Shift, shape, good, &CostConfig::default()).unwrap().ensure().is_ok());
        let bad = CostCounts { window_steps: 5, ..Default::default() };
        let r = reconcile(Strategy::Shift, shape, bad, &CostConfig::default()).unwrap();
        assert!(matches!(r.ensure(), Err(Error::Reconciliation { .. })));
    }

    proptest! {
        #[test]
        fn costs_are_linear_in_omega_and_steps(
            steps in 1usize..60, n in 1usize..12, f in 2usize..32, o_frac in 0.0f64..1.0, k in 0.1f64..10.0
        ) {
            let o = ((f - 1) as f64 * o_frac) as usize;
            let n = n as f64;
            let cfg = CostConfig::default();
            let scaled = CostConfig { omega: cfg.omega * k, omega_r: cfg.omega_r * k, omega_m: cfg.omega_m * k };
            let a = cost_motion_frames(steps, n, o, f, &cfg).unwrap();
            let b = cost_motion_frames(steps, n, o, f, &scaled).unwrap();
            prop_assert!((b - k * a).abs() <= 1e-9 * b.abs().max(1.0));
            let s1 = cost_shift(steps, n, 1.0);
            let s2 = cost_shift(2 * steps, n, 1.0);
            prop_assert!((s2 - 2.0 * s1).abs() < 1e-9);
            prop_assert!(cost_overlap(steps, n, o, f, 1.0).unwrap() >= s1);
            prop_assert!(cost_motion_frames(steps, n, o, f, &cfg).unwrap() >= s1);
        }
    }
}
