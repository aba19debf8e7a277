//! Guided reverse sampling with pluggable caching strategies.

use serde::{Deserialize, Serialize};

use super::schedule::{NoiseSchedule, ScheduleKind};
use crate::cache::{apply_strategy, w_of, CacheStrategy, FeatureCache, StepDirective, StepPlan, UncondSource};
use crate::cfg_cache::{enhancement_weights, reconstruct_uncond, record_bias, CfgBiasCache};
use crate::denoisers::{ConditionId, HookSet, LayerHook, NoisePredictor, Prediction, NULL_CONDITION};
use crate::error::{Error, Result};
use crate::numerics::{LatentTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    #[default]
    Ddim,
    Ancestral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub guidance_scale: f64,
    pub seed: u64,
    pub condition_id: ConditionId,
    pub schedule_kind: ScheduleKind,
    pub timesteps: usize,
    pub mode: SamplerMode,
    /// Also evaluate the true unconditional output on steps that skip it and
    /// keep per-layer conditional features. Never affects the sample.
    pub diagnostics: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 30,
            guidance_scale: 7.5,
            seed: 0,
            condition_id: 1,
            schedule_kind: ScheduleKind::LinearBeta,
            timesteps: 1000,
            mode: SamplerMode::Ddim,
            diagnostics: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidArgument(format!("need ≥ 2 sampling steps, got {}", self.steps)));
        }
        if self.steps > self.timesteps {
            return Err(Error::InvalidArgument(format!(
                "{} sampling steps exceed {} diffusion timesteps",
                self.steps, self.timesteps
            )));
        }
        if !(self.guidance_scale >= 0.0) || !self.guidance_scale.is_finite() {
            return Err(Error::InvalidArgument(format!("guidance scale {} must be ≥ 0", self.guidance_scale)));
        }
        if self.condition_id == NULL_CONDITION {
            return Err(Error::InvalidArgument("condition 0 is the null condition".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.schedule_kind, self.timesteps)
    }
}

/// Everything that happened at one sampling step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub timestep: usize,
    pub directive: StepDirective,
    pub eps_cond: LatentTensor,
    /// The unconditional prediction fed to guidance (possibly reconstructed).
    pub eps_uncond: LatentTensor,
    pub eps: LatentTensor,
    pub uncond_source: UncondSource,
    /// Freshly computed unconditional output on skipped steps (diagnostics).
    pub uncond_truth: Option<LatentTensor>,
    /// Attention features used by the conditional branch (diagnostics).
    pub cond_features: Option<Vec<LatentTensor>>,
    pub attention_evals: usize,
    pub model_calls: usize,
    pub macs: u64,
    pub w: f64,
}

impl StepRecord {
    pub fn true_uncond(&self) -> Option<&LatentTensor> {
        match self.uncond_source {
            UncondSource::Computed => Some(&self.eps_uncond),
            _ => self.uncond_truth.as_ref(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub x_final: LatentTensor,
    pub trace: Vec<StepRecord>,
    pub plan: StepPlan,
    /// Diffusion timestep at which the guidance emphasis switches.
    pub t0: usize,
}

impl SampleOutput {
    pub fn total_macs(&self) -> u64 {
        self.trace.iter().map(|r| r.macs).sum()
    }

    pub fn attention_evals(&self) -> usize {
        self.trace.iter().map(|r| r.attention_evals).sum()
    }

    pub fn model_calls(&self) -> usize {
        self.trace.iter().map(|r| r.model_calls).sum()
    }
}

/// `(1+g)·eps_c − g·eps_u`.
pub fn cfg_combine(eps_c: &LatentTensor, eps_u: &LatentTensor, g: f64) -> Result<LatentTensor> {
    eps_c.lincomb((1.0 + g) as f32, eps_u, -g as f32)
}

fn x0_estimate(x_t: &LatentTensor, eps: &LatentTensor, ab: f64) -> Result<LatentTensor> {
    if !(ab > 0.0) {
        return Err(Error::InvalidArgument("ᾱ_t must be positive".into()));
    }
    x_t.lincomb((1.0 / ab.sqrt()) as f32, eps, (-(1.0 - ab).sqrt() / ab.sqrt()) as f32)
}

/// Deterministic update from timestep `t` to `t_next < t`.
pub fn ddim_step(x_t: &LatentTensor, eps: &LatentTensor, t: usize, t_next: usize, schedule: &NoiseSchedule) -> Result<LatentTensor> {
    x_t.check_same_shape(eps)?;
    let ab = schedule.alpha_bar(t)?;
    let ab_next = schedule.alpha_bar(t_next)?;
    let x0 = x0_estimate(x_t, eps, ab)?;
    x0.lincomb(ab_next.sqrt() as f32, eps, (1.0 - ab_next).sqrt() as f32)
}

/// Posterior mean and standard deviation of `x_{t_next}` given `x_t` and
/// the predicted noise, for the strided ancestral update.
pub fn ancestral_moments(
    x_t: &LatentTensor,
    eps: &LatentTensor,
    t: usize,
    t_next: usize,
    schedule: &NoiseSchedule,
) -> Result<(LatentTensor, f64)> {
    x_t.check_same_shape(eps)?;
    let ab = schedule.alpha_bar(t)?;
    let ab_next = schedule.alpha_bar(t_next)?;
    let alpha = ab / ab_next;
    let beta = 1.0 - alpha;
    let x0 = x0_estimate(x_t, eps, ab)?;
    let c0 = ab_next.sqrt() * beta / (1.0 - ab);
    let ct = alpha.sqrt() * (1.0 - ab_next) / (1.0 - ab);
    let mean = x0.lincomb(c0 as f32, x_t, ct as f32)?;
    let var = (1.0 - ab_next) / (1.0 - ab) * beta;
    Ok((mean, var.max(0.0).sqrt()))
}

pub fn ancestral_step(
    x_t: &LatentTensor,
    eps: &LatentTensor,
    t: usize,
    t_next: usize,
    schedule: &NoiseSchedule,
    noise: &LatentTensor,
) -> Result<LatentTensor> {
    let (mean, sigma) = ancestral_moments(x_t, eps, t, t_next, schedule)?;
    mean.lincomb(1.0, noise, sigma as f32)
}

/// One sampler step `s` of `steps`. Ancestral noise for step `s` comes from
/// its own counter stream, so it does not depend on what ran before.
pub fn reverse_step(
    x_t: &LatentTensor,
    eps: &LatentTensor,
    s: usize,
    steps: usize,
    schedule: &NoiseSchedule,
    mode: SamplerMode,
    seed: u64,
) -> Result<LatentTensor> {
    if s >= steps {
        return Err(Error::InvalidArgument(format!("step {s} outside 0..{steps}")));
    }
    let t = schedule.timestep(s, steps);
    let t_next = schedule.timestep(s + 1, steps);
    match mode {
        SamplerMode::Ddim => ddim_step(x_t, eps, t, t_next, schedule),
        SamplerMode::Ancestral => {
            let noise = LatentTensor::randn(x_t.shape(), seed, s as u64 + 1);
            ancestral_step(x_t, eps, t, t_next, schedule, &noise)
        }
    }
}

/// Guidance-emphasis switch: `t0_fraction` of the way through the active
/// span in sampling order.
pub fn switch_timestep(plan: &StepPlan, schedule: &NoiseSchedule, steps: usize, fraction: f64) -> usize {
    let t_start = schedule.timestep(plan.cfg_activation, steps) as f64;
    let t_end = schedule.timestep(steps - 1, steps) as f64;
    (t_start - fraction * (t_start - t_end)).round() as usize
}

fn features_used(hooks: &HookSet, pred: &Prediction) -> Vec<LatentTensor> {
    pred.recorded
        .iter()
        .enumerate()
        .map(|(l, rec)| match (hooks.get(l), rec) {
            (LayerHook::Replace(f), _) => f.clone(),
            (_, Some(f)) => f.clone(),
            _ => unreachable!("strategy hooks either record or replace"),
        })
        .collect()
}

/// Runs `steps` guided steps from seeded Gaussian noise under `strategy`.
pub fn sample(
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    shape: Shape,
    config: &SamplerConfig,
    strategy: &CacheStrategy,
) -> Result<SampleOutput> {
    let plan = strategy.plan(config.steps)?;
    sample_with_plan(model, schedule, shape, config, strategy, plan)
}

/// Like [`sample`] with an explicit plan.
pub fn sample_with_plan(
    model: &dyn NoisePredictor,
    schedule: &NoiseSchedule,
    shape: Shape,
    config: &SamplerConfig,
    strategy: &CacheStrategy,
    plan: StepPlan,
) -> Result<SampleOutput> {
    config.validate()?;
    strategy.config.validate()?;
    if schedule.total_steps() != config.timesteps {
        return Err(Error::InvalidArgument(format!(
            "schedule has {} timesteps, config says {}",
            schedule.total_steps(),
            config.timesteps
        )));
    }
    let steps = config.steps;
    if plan.len() != steps {
        return Err(Error::PlanLength {
            plan: plan.len(),
            steps,
        });
    }
    plan.validate()?;
    let layers = model.layer_count();
    let source = strategy.kind.uncond_source();
    let weight_mode = strategy.weight_mode();
    let cutoff = strategy.config.cutoff;
    let t0 = switch_timestep(&plan, schedule, steps, strategy.config.t0_fraction);
    let g = config.guidance_scale;

    let mut x = LatentTensor::randn(shape, config.seed, 0);
    let mut cond_cache = FeatureCache::new(layers);
    let mut uncond_cache = FeatureCache::new(layers);
    let mut bias: Option<CfgBiasCache> = None;
    let mut last_uncond: Option<LatentTensor> = None;
    let mut trace = Vec::with_capacity(steps);

    for directive in &plan.steps {
        let s = directive.step;
        let t = schedule.timestep(s, steps);
        let w = match (directive.attn_reuse, plan.dfr_start) {
            (true, Some(start)) => w_of(s, start, steps, weight_mode)?,
            (true, None) => return Err(Error::CacheUnderflow { layer: 0, step: s }),
            (false, _) => 0.0,
        };

        let cond_hooks = apply_strategy(directive, &cond_cache, w)?;
        let cond = model.predict(&x, t, config.condition_id, &cond_hooks)?;
        cond_cache.absorb(s, &cond.recorded);
        let cond_features = config.diagnostics.then(|| features_used(&cond_hooks, &cond));
        let mut macs = cond.macs;
        let mut attention_evals = cond.attention_evals;
        let mut model_calls = 1;

        let (eps_u, used_source, truth) = if directive.uncond_full {
            let hooks = apply_strategy(directive, &uncond_cache, w)?;
            let un = model.predict(&x, t, NULL_CONDITION, &hooks)?;
            uncond_cache.absorb(s, &un.recorded);
            macs += un.macs;
            attention_evals += un.attention_evals;
            model_calls += 1;
            if directive.record_cfg_bias && source == UncondSource::Reconstructed {
                bias = Some(record_bias(&cond.eps, &un.eps, cutoff, s)?);
            }
            last_uncond = Some(un.eps.clone());
            (un.eps, UncondSource::Computed, None)
        } else {
            let eps_u = match source {
                UncondSource::Reconstructed => {
                    let b = bias.as_ref().ok_or(Error::MissingUncond(s))?;
                    let (w1, w2) = enhancement_weights(t, t0, strategy.config.alpha1, strategy.config.alpha2);
                    reconstruct_uncond(&cond.eps, b, w1, w2, cutoff)?
                }
                UncondSource::CondCopy => cond.eps.clone(),
                UncondSource::Stale => last_uncond.clone().ok_or(Error::NoStaleUncond(s))?,
                UncondSource::Computed => {
                    return Err(Error::InvalidArgument(format!(
                        "strategy {} cannot skip the unconditional branch at step {s}",
                        strategy.kind
                    )))
                }
            };
            let truth = if config.diagnostics {
                Some(model.predict(&x, t, NULL_CONDITION, &HookSet::pass(layers))?.eps)
            } else {
                None
            };
            (eps_u, source, truth)
        };

        let eps = cfg_combine(&cond.eps, &eps_u, g)?;
        x = reverse_step(&x, &eps, s, steps, schedule, config.mode, config.seed)?;
        trace.push(StepRecord {
            step: s,
            timestep: t,
            directive: *directive,
            eps_cond: cond.eps,
            eps_uncond: eps_u,
            eps,
            uncond_source: used_source,
            uncond_truth: truth,
            cond_features,
            attention_evals,
            model_calls,
            macs,
            w,
        });
    }
    Ok(SampleOutput {
        x_final: x,
        trace,
        plan,
        t0,
    })
}
