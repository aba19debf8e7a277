use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::LatentTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    LinearBeta,
    Cosine,
}

const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 2e-2;
const COSINE_OFFSET: f64 = 0.008;
const COSINE_FLOOR: f64 = 1e-5;

/// Cumulative signal coefficients `ᾱ_t` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, total_steps: usize) -> Result<Self> {
        if total_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs T ≥ 2, got {total_steps}"
            )));
        }
        let t_max = total_steps as f64;
        let alpha_bar = match kind {
            ScheduleKind::LinearBeta => {
                let mut acc = 1.0;
                let mut out = Vec::with_capacity(total_steps + 1);
                out.push(1.0);
                for i in 1..=total_steps {
                    let frac = (i - 1) as f64 / (total_steps - 1) as f64;
                    let beta = BETA_START + frac * (BETA_END - BETA_START);
                    acc *= 1.0 - beta;
                    out.push(acc);
                }
                out
            }
            ScheduleKind::Cosine => {
                let f = |t: f64| {
                    ((t / t_max + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2)
                        .cos()
                        .powi(2)
                };
                let f0 = f(0.0);
                // Affine squeeze onto [floor, 1] keeps the sequence strictly decreasing.
                (0..=total_steps)
                    .map(|t| COSINE_FLOOR + (1.0 - COSINE_FLOOR) * f(t as f64) / f0)
                    .collect()
            }
        };
        Ok(Self { alpha_bar })
    }

    /// Custom schedule; requires `ᾱ_0 = 1`, strictly decreasing, all positive.
    pub fn from_alpha_bars(alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 3 {
            return Err(Error::InvalidArgument("schedule needs T ≥ 2".into()));
        }
        if alpha_bar[0] != 1.0
            || alpha_bar.windows(2).any(|w| !(w[1] < w[0]))
            || !(alpha_bar[alpha_bar.len() - 1] > 0.0)
        {
            return Err(Error::InvalidArgument(
                "ᾱ must start at 1, decrease strictly and stay positive".into(),
            ));
        }
        Ok(Self { alpha_bar })
    }

    /// `T`, the number of diffusion timesteps.
    pub fn total_steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or(Error::TimestepOutOfRange {
                t,
                max: self.total_steps(),
            })
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Diffusion timestep visited at sampling step `s` of `steps`;
    /// `s = steps` maps to 0.
    pub fn timestep(&self, s: usize, steps: usize) -> usize {
        let t = self.total_steps() as f64 * (1.0 - s as f64 / steps as f64);
        t.round() as usize
    }

    pub fn timesteps(&self, steps: usize) -> Vec<usize> {
        (0..=steps).map(|s| self.timestep(s, steps)).collect()
    }
}

/// Forward corruption `√ᾱ_t·x0 + √(1−ᾱ_t)·noise`.
pub fn q_sample(
    x0: &LatentTensor,
    t: usize,
    noise: &LatentTensor,
    schedule: &NoiseSchedule,
) -> Result<LatentTensor> {
    let ab = schedule.alpha_bar(t)?;
    x0.lincomb(ab.sqrt() as f32, noise, (1.0 - ab).sqrt() as f32)
}
