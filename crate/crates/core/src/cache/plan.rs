//! Per-step directives: which branches run, whether attention is reused,
//! and when the guidance bias is re-recorded.

use serde::{Deserialize, Serialize};

use super::config::{CacheConfig, WeightMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepDirective {
    pub step: usize,
    pub cond_full: bool,
    pub uncond_full: bool,
    pub attn_reuse: bool,
    pub record_cfg_bias: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPlan {
    pub steps: Vec<StepDirective>,
    /// First step at which guidance caching is active.
    pub cfg_activation: usize,
    /// Step whose full evaluation warms the feature cache (second full
    /// attention step); the extrapolation weight ramps from here.
    pub dfr_start: Option<usize>,
}

impl StepPlan {
    /// Every branch fully computed on every step.
    pub fn full(steps: usize) -> Self {
        Self {
            steps: (0..steps)
                .map(|step| StepDirective {
                    step,
                    cond_full: true,
                    uncond_full: true,
                    attn_reuse: false,
                    record_cfg_bias: false,
                })
                .collect(),
            cfg_activation: steps.saturating_sub(1),
            dfr_start: None,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn reuse_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().filter(|d| d.attn_reuse).map(|d| d.step)
    }

    pub fn reconstructed_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().filter(|d| !d.uncond_full).map(|d| d.step)
    }

    pub fn uncond_evals(&self) -> usize {
        self.steps.iter().filter(|d| d.uncond_full).count()
    }

    pub fn cond_evals(&self) -> usize {
        self.steps.iter().filter(|d| d.cond_full).count()
    }

    /// Predictor calls per branch with full attention: `(cond, uncond)`.
    pub fn full_attention_calls(&self) -> (usize, usize) {
        let full = |d: &&StepDirective| !d.attn_reuse;
        (
            self.steps.iter().filter(|d| d.cond_full).filter(full).count(),
            self.steps.iter().filter(|d| d.uncond_full).filter(full).count(),
        )
    }

    /// Checks the structural invariants of a plan.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let Some(first) = self.steps.first() else {
            return bad("empty plan".into());
        };
        if !(first.cond_full && first.uncond_full) || first.attn_reuse {
            return bad("step 0 must be fully computed".into());
        }
        let mut full_seen = 0;
        for (i, d) in self.steps.iter().enumerate() {
            if d.step != i {
                return bad(format!("directive {i} labelled step {}", d.step));
            }
            if !d.cond_full {
                return bad(format!("step {i}: conditional branch must always run"));
            }
            if d.record_cfg_bias && !(d.cond_full && d.uncond_full) {
                return bad(format!("step {i}: bias recording needs both branches"));
            }
            if d.attn_reuse && full_seen < 2 {
                return bad(format!("step {i}: reuse before two full attention steps"));
            }
            if !d.attn_reuse {
                full_seen += 1;
            }
        }
        Ok(())
    }
}

/// Guidance-cache activation step `min(⌈fraction·S⌉, S−1)`.
pub fn cfg_activation_step(steps: usize, fraction: f64) -> usize {
    let raw = (fraction * steps as f64 - 1e-9).ceil().max(0.0) as usize;
    raw.min(steps.saturating_sub(1))
}

/// The combined plan: attention reuse on off-cadence steps once two full
/// steps exist, and unconditional reconstruction between guidance refreshes.
/// Bias refresh steps compute attention in full.
pub fn build_plan(steps: usize, config: &CacheConfig) -> Result<StepPlan> {
    build_plan_with(steps, config, true)
}

/// [`build_plan`], optionally without forcing full attention on refresh
/// steps for strategies that never record a bias.
pub(crate) fn build_plan_with(steps: usize, config: &CacheConfig, full_refresh: bool) -> Result<StepPlan> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("plan needs ≥ 2 steps, got {steps}")));
    }
    config.validate()?;
    let activation = cfg_activation_step(steps, config.cfg_start_fraction);
    let mut full_seen = 0;
    let mut dfr_start = None;
    let mut out = Vec::with_capacity(steps);
    for s in 0..steps {
        let refresh = s >= activation && (s - activation) % config.cfg_interval == 0;
        let on_cadence = s % config.dfr_interval == 0 || (full_refresh && refresh);
        let attn_reuse = !on_cadence && full_seen >= 2;
        if !attn_reuse {
            full_seen += 1;
            if full_seen == 2 {
                dfr_start = Some(s);
            }
        }
        let (uncond_full, record) = if s < activation {
            (true, false)
        } else if refresh {
            (true, true)
        } else {
            (false, false)
        };
        out.push(StepDirective {
            step: s,
            cond_full: true,
            uncond_full,
            attn_reuse,
            record_cfg_bias: record,
        });
    }
    let has_reuse = out.iter().any(|d| d.attn_reuse);
    Ok(StepPlan {
        steps: out,
        cfg_activation: activation,
        dfr_start: if has_reuse { dfr_start } else { None },
    })
}

/// Extrapolation weight at reuse step `s` given the warm-up step and `S`.
pub fn w_of(s: usize, start: usize, steps: usize, mode: WeightMode) -> Result<f64> {
    if start > s || s + 1 > steps {
        return Err(Error::InvalidArgument(format!(
            "weight requested at step {s} outside [{start}, {}]",
            steps.saturating_sub(1)
        )));
    }
    Ok(match mode {
        WeightMode::None => 0.0,
        WeightMode::Constant(w) => w,
        WeightMode::Linear => {
            let span = steps - 1 - start;
            if span == 0 {
                1.0
            } else {
                (s - start) as f64 / span as f64
            }
        }
    })
}
