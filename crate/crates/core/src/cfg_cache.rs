//! Guidance caching: the unconditional-minus-conditional bias is recorded in
//! the frequency domain at refresh steps and added back, with
//! phase-dependent low/high emphasis, to later conditional outputs.

use serde::{Deserialize, Serialize};

use crate::diffusion::StepRecord;
use crate::error::{Error, Result};
use crate::numerics::{fft2, ifft2, make_masks, LatentTensor, SpectrumTensor};

/// Centered low- and high-band bias spectra recorded at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CfgBiasCache {
    pub delta_low: SpectrumTensor,
    pub delta_high: SpectrumTensor,
    pub recorded_step: usize,
    pub cutoff: f64,
}

fn bands(x: &LatentTensor, low: &[bool], high: &[bool]) -> Result<(SpectrumTensor, SpectrumTensor)> {
    let s = fft2(x)?.shifted();
    Ok((s.masked(low)?, s.masked(high)?))
}

pub fn record_bias(eps_c: &LatentTensor, eps_u: &LatentTensor, cutoff: f64, step: usize) -> Result<CfgBiasCache> {
    eps_c.check_same_shape(eps_u)?;
    let mask = make_masks(eps_c.height(), eps_c.width(), cutoff)?;
    let (u_low, u_high) = bands(eps_u, &mask.low, &mask.high)?;
    let (c_low, c_high) = bands(eps_c, &mask.low, &mask.high)?;
    Ok(CfgBiasCache {
        delta_low: u_low.sub(&c_low)?,
        delta_high: u_high.sub(&c_high)?,
        recorded_step: step,
        cutoff,
    })
}

/// `(1 + α1·[t > t0], 1 + α2·[t ≤ t0])` for diffusion timestep `t`.
pub fn enhancement_weights(t: usize, t0: usize, alpha1: f64, alpha2: f64) -> (f64, f64) {
    if t > t0 {
        (1.0 + alpha1, 1.0)
    } else {
        (1.0, 1.0 + alpha2)
    }
}

pub fn reconstruct_uncond(eps_c: &LatentTensor, bias: &CfgBiasCache, w1: f64, w2: f64, cutoff: f64) -> Result<LatentTensor> {
    if cutoff != bias.cutoff {
        return Err(Error::CutoffMismatch {
            recorded: bias.cutoff,
            requested: cutoff,
        });
    }
    if eps_c.shape() != bias.delta_low.shape() {
        return Err(Error::ShapeMismatch {
            expected: bias.delta_low.shape(),
            actual: eps_c.shape(),
        });
    }
    let mask = make_masks(eps_c.height(), eps_c.width(), cutoff)?;
    let (c_low, c_high) = bands(eps_c, &mask.low, &mask.high)?;
    let f_low = bias.delta_low.scale(w1).add(&c_low)?;
    let f_high = bias.delta_high.scale(w2).add(&c_high)?;
    ifft2(&f_low.add(&f_high)?)
}

/// Same-step conditional output used as the unconditional one.
pub fn baseline_cond_copy(eps_c: &LatentTensor) -> LatentTensor {
    eps_c.clone()
}

/// Most recent fully computed unconditional output strictly before step `s`.
pub fn baseline_stale_uncond(trace: &[StepRecord], s: usize) -> Result<LatentTensor> {
    trace
        .iter()
        .filter(|r| r.step < s && r.directive.uncond_full)
        .last()
        .map(|r| r.eps_uncond.clone())
        .ok_or(Error::NoStaleUncond(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEnergy {
    pub step: usize,
    pub t: usize,
    pub low_energy: f64,
    pub high_energy: f64,
}

/// Low/high band energy of the true unconditional-minus-conditional bias at
/// every step where the true unconditional output is known.
pub fn bias_frequency_trend(trace: &[StepRecord], cutoff: f64) -> Result<Vec<BiasEnergy>> {
    let mut out = Vec::new();
    for r in trace {
        let Some(eps_u) = r.true_uncond() else { continue };
        let bias = record_bias(&r.eps_cond, eps_u, cutoff, r.step)?;
        out.push(BiasEnergy {
            step: r.step,
            t: r.timestep,
            low_energy: bias.delta_low.energy(None),
            high_energy: bias.delta_high.energy(None),
        });
    }
    if out.is_empty() && !trace.is_empty() {
        return Err(Error::MissingUncond(trace[0].step));
    }
    Ok(out)
}
