//! Window scheduling over long latent sequences: position-shift fusion and
//! the independent, overlapping and motion-frame baselines.

mod plan;
mod run;

pub use plan::{plan_step, plan_windows, ShiftConfig, StepPlan, Window, WindowPlan};
pub use run::{
    crossfade_weights, run_independent, run_motion_frames, run_overlap, run_shift, run_strategy,
    Runner, SequenceCondition, Strategy, StrategyConfig,
};
