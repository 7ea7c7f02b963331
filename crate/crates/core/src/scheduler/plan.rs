use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sequence length `l`, clip length `f`, per-step start offset `alpha` and
/// timestep count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub l: usize,
    pub f: usize,
    pub alpha: usize,
    pub steps: usize,
}

impl ShiftConfig {
    /// Requires `0 < alpha < f < l`.
    pub fn new(l: usize, f: usize, alpha: usize, steps: usize) -> Result<Self> {
        let cfg = Self { l, f, alpha, steps };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Accepts any `alpha` and `1 <= f <= l`, for degenerate comparisons.
    pub fn relaxed(l: usize, f: usize, alpha: usize, steps: usize) -> Result<Self> {
        let cfg = Self { l, f, alpha, steps };
        cfg.validate_relaxed()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_relaxed()?;
        if !(0 < self.alpha && self.alpha < self.f && self.f < self.l) {
            return Err(Error::config(format!(
                "shift requires 0 < alpha < f < l, got alpha={}, f={}, l={}",
                self.alpha, self.f, self.l
            )));
        }
        Ok(())
    }

    pub fn validate_relaxed(&self) -> Result<()> {
        if self.f == 0 || self.f > self.l {
            return Err(Error::config(format!("clip length {} must lie in [1, l={}]", self.f, self.l)));
        }
        if self.steps == 0 {
            return Err(Error::config("at least one timestep is required"));
        }
        Ok(())
    }

    /// Start of the `k`-th executed step.
    pub fn start(&self, k: usize) -> usize {
        ((k as u128 * self.alpha as u128) % self.l as u128) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    /// `start + f`, before wrapping.
    pub end: usize,
    /// Sequence indices, `(start + j) mod l`.
    pub indices: Vec<usize>,
    /// True where the index was already written earlier in the same step.
    pub duplicate: Vec<bool>,
}

impl Window {
    pub fn fresh(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.indices
            .iter()
            .zip(&self.duplicate)
            .enumerate()
            .filter(|(_, (_, &d))| !d)
            .map(|(j, (&i, _))| (j, i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPlan {
    /// Executed step index, 0-based.
    pub k: usize,
    /// Diffusion timestep being reversed (`T - k`).
    pub t: usize,
    pub start: usize,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub l: usize,
    pub f: usize,
    pub alpha: usize,
    pub steps: usize,
    pub timesteps: Vec<StepPlan>,
}

/// Windows of length `f` starting at `start`, advancing by `f` and wrapping
/// modulo `l`, until every index has been written once.
pub fn plan_step(l: usize, f: usize, start: usize) -> Vec<Window> {
    let mut written = vec![false; l];
    let mut remaining = l;
    let mut s = start % l;
    let mut windows = Vec::with_capacity(l.div_ceil(f) + 1);
    while remaining > 0 {
        if s >= l {
            s -= l;
        }
        let indices: Vec<usize> = (0..f).map(|j| (s + j) % l).collect();
        let duplicate = indices
            .iter()
            .map(|&i| {
                let dup = written[i];
                if !dup {
                    written[i] = true;
                    remaining -= 1;
                }
                dup
            })
            .collect();
        windows.push(Window {
            start: s,
            end: s + f,
            indices,
            duplicate,
        });
        s += f;
    }
    windows
}

pub fn plan_windows(cfg: &ShiftConfig) -> Result<WindowPlan> {
    cfg.validate_relaxed()?;
    Ok(plan_unchecked(cfg))
}

pub(crate) fn plan_unchecked(cfg: &ShiftConfig) -> WindowPlan {
    let timesteps = (0..cfg.steps)
        .map(|k| {
            let start = cfg.start(k);
            StepPlan {
                k,
                t: cfg.steps - k,
                start,
                windows: plan_step(cfg.l, cfg.f, start),
            }
        })
        .collect();
    WindowPlan {
        l: cfg.l,
        f: cfg.f,
        alpha: cfg.alpha,
        steps: cfg.steps,
        timesteps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn flags(w: &Window) -> Vec<bool> {
        w.duplicate.clone()
    }

    #[test]
    fn twenty_by_eight_from_zero() {
        let w = plan_step(20, 8, 0);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].indices, (0..8).collect::<Vec<_>>());
        assert_eq!(w[1].indices, (8..16).collect::<Vec<_>>());
        assert_eq!(w[2].indices, vec![16, 17, 18, 19, 0, 1, 2, 3]);
        assert_eq!(flags(&w[2]), [vec![false; 4], vec![true; 4]].concat());
    }

    #[test]
    fn twenty_by_eight_from_three() {
        let w = plan_step(20, 8, 3);
        assert_eq!(w[0].indices, (3..11).collect::<Vec<_>>());
        assert_eq!(w[1].indices, (11..19).collect::<Vec<_>>());
        assert_eq!(w[2].indices, vec![19, 0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(flags(&w[2]), [vec![false; 4], vec![true; 4]].concat());
    }

    #[test]
    fn exact_tiling_has_no_wrap() {
        let w = plan_step(16, 8, 0);
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| w.duplicate.iter().all(|d| !d) && w.end <= 16));
    }

    #[test]
    fn starts_accumulate_alpha() {
        let plan = plan_windows(&ShiftConfig::new(40, 8, 7, 3).unwrap()).unwrap();
        let starts: Vec<usize> = plan.timesteps.iter().map(|s| s.start).collect();
        assert_eq!(starts, vec![0, 7, 14]);
        assert_eq!(plan.timesteps[0].t, 3);
    }

    #[test]
    fn clip_one_short_of_sequence_wraps_almost_entirely() {
        let w = plan_step(9, 8, 0);
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].indices, vec![8, 0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(w[1].duplicate.iter().filter(|&&d| d).count(), 7);
    }

    #[test]
    fn strict_validation() {
        assert!(ShiftConfig::new(20, 8, 0, 2).is_err());
        assert!(ShiftConfig::new(20, 8, 8, 2).is_err());
        assert!(ShiftConfig::new(8, 8, 3, 2).is_err());
        assert!(ShiftConfig::relaxed(8, 8, 8, 2).is_ok());
        assert!(ShiftConfig::relaxed(8, 9, 1, 2).is_err());
    }

    proptest! {
        #[test]
        fn every_index_written_once_per_step(l in 3usize..=256, f_frac in 0.0f64..1.0, a_frac in 0.0f64..1.0, steps in 1usize..8) {
            let f = 2 + ((l - 2) as f64 * f_frac) as usize;
            let f = f.min(l - 1);
            let alpha = 1 + ((f - 1) as f64 * a_frac) as usize;
            let alpha = alpha.min(f - 1);
            let cfg = ShiftConfig::new(l, f, alpha, steps).unwrap();
            let plan = plan_windows(&cfg).unwrap();
            for (k, step) in plan.timesteps.iter().enumerate() {
                prop_assert_eq!(step.start, (k * alpha) % l);
                prop_assert_eq!(step.windows[0].start, step.start);
                let mut count = vec![0usize; l];
                for w in &step.windows {
                    prop_assert_eq!(w.indices.len(), f);
                    for (_, i) in w.fresh() {
                        count[i] += 1;
                    }
                }
                prop_assert!(count.iter().all(|&c| c == 1));
                prop_assert!(step.windows.len() <= l.div_ceil(f) + 1);
                if step.start == 0 {
                    prop_assert_eq!(step.windows.len(), l.div_ceil(f));
                }
            }
        }
    }
}
