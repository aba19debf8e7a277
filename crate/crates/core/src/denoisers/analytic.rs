//! Exact posterior-mean noise predictor for Gaussian data.
//!
//! With `x0 ~ N(μ_c, s²·I)` the optimal noise prediction is affine in `x_t`:
//!
//! ```text
//! x̂0 = (s²·√ᾱ·x_t + (1−ᾱ)·μ_c) / (ᾱ·s² + 1 − ᾱ)
//! ε* = (x_t − √ᾱ·x̂0) / √(1−ᾱ)
//! ```
//!
//! The predicted noise `ε*` is exposed as the single hookable feature, so
//! caching strategies can be measured against ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConditionId, HookSet, LayerHook, MacBreakdown, NoisePredictor, Prediction};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::numerics::{LatentTensor, Shape};

/// Per-condition Gaussian data distributions sharing one isotropic variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWorld {
    variance: f64,
    means: Vec<LatentTensor>,
}

impl GaussianWorld {
    /// `means[0]` belongs to the null condition.
    pub fn new(variance: f64, means: Vec<LatentTensor>) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!("variance {variance} must be ≥ 0")));
        }
        let Some(first) = means.first() else {
            return Err(Error::InvalidArgument("world needs at least a null mean".into()));
        };
        for m in &means[1..] {
            first.check_same_shape(m)?;
        }
        if !means[1..].iter().any(|m| m != first) {
            return Err(Error::InvalidArgument(
                "some condition mean must differ from the null mean".into(),
            ));
        }
        Ok(Self { variance, means })
    }

    /// Smooth null mean plus per-condition patterns mixing low and high
    /// spatial frequencies, drifting slowly across frames.
    pub fn synthetic(shape: Shape, conditions: usize, variance: f64, seed: u64) -> Result<Self> {
        let [frames, channels, h, w] = shape;
        if h < 4 || w < 4 {
            return Err(Error::InvalidArgument(format!("synthetic world needs H, W ≥ 4, got {h}×{w}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        #[derive(Clone, Copy)]
        struct Wave {
            ky: f64,
            kx: f64,
            amp: f64,
            phase: f64,
            drift: f64,
        }
        let waves = |rng: &mut ChaCha8Rng, count: usize, lo: usize, hi: usize, amp: f64| -> Vec<Wave> {
            (0..count)
                .map(|_| Wave {
                    ky: rng.gen_range(lo..=hi) as f64,
                    kx: rng.gen_range(lo..=hi) as f64,
                    amp: amp * rng.gen_range(0.5..1.0),
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    drift: rng.gen_range(-0.3..0.3),
                })
                .collect()
        };
        let render = |layers: &[Vec<Wave>]| -> Result<LatentTensor> {
            let mut data = Vec::with_capacity(shape.iter().product());
            for f in 0..frames {
                for c in 0..channels {
                    for y in 0..h {
                        for x in 0..w {
                            let mut v = 0.0;
                            for wave in &layers[c] {
                                let arg = std::f64::consts::TAU * (wave.ky * y as f64 / h as f64 + wave.kx * x as f64 / w as f64)
                                    + wave.phase
                                    + wave.drift * f as f64;
                                v += wave.amp * arg.cos();
                            }
                            data.push(v as f32);
                        }
                    }
                }
            }
            LatentTensor::from_vec(shape, data)
        };
        let high_lo = (h.min(w) / 4).max(2);
        let high_hi = (h.min(w) / 2).max(high_lo);
        let base: Vec<Vec<Wave>> = (0..channels).map(|_| waves(&mut rng, 3, 0, 2, 0.5)).collect();
        let mut means = vec![render(&base)?];
        for _ in 0..conditions.max(1) {
            let layers: Vec<Vec<Wave>> = base
                .iter()
                .map(|b| {
                    let mut l = b.clone();
                    l.extend(waves(&mut rng, 2, 0, 2, 0.4));
                    l.extend(waves(&mut rng, 2, high_lo, high_hi, 0.2));
                    l
                })
                .collect();
            means.push(render(&layers)?);
        }
        Self::new(variance, means)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn shape(&self) -> Shape {
        self.means[0].shape()
    }

    pub fn conditions(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, condition: ConditionId) -> Result<&LatentTensor> {
        self.means
            .get(condition as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown condition {condition}")))
    }
}

fn coefficients(t: usize, schedule: &NoiseSchedule) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::InvalidArgument("no noise to predict at t = 0".into()));
    }
    let ab = schedule.alpha_bar(t)?;
    Ok((ab.sqrt(), (1.0 - ab).sqrt()))
}

fn posterior_x0(x_t: &LatentTensor, t: usize, mean: &LatentTensor, variance: f64, schedule: &NoiseSchedule) -> Result<LatentTensor> {
    let ab = schedule.alpha_bar(t)?;
    let denom = ab * variance + 1.0 - ab;
    let a = (variance * ab.sqrt() / denom) as f32;
    let b = ((1.0 - ab) / denom) as f32;
    x_t.lincomb(a, mean, b)
}

fn eps_from_x0(x_t: &LatentTensor, x0: &LatentTensor, t: usize, schedule: &NoiseSchedule) -> Result<LatentTensor> {
    let (sa, sn) = coefficients(t, schedule)?;
    x_t.lincomb((1.0 / sn) as f32, x0, (-sa / sn) as f32)
}

/// Posterior-mean noise `E[ε | x_t]` under condition `c`.
pub fn analytic_predict(
    x_t: &LatentTensor,
    t: usize,
    condition: ConditionId,
    world: &GaussianWorld,
    schedule: &NoiseSchedule,
) -> Result<LatentTensor> {
    coefficients(t, schedule)?;
    let x0 = posterior_x0(x_t, t, world.mean(condition)?, world.variance, schedule)?;
    eps_from_x0(x_t, &x0, t, schedule)
}

#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    world: GaussianWorld,
    schedule: NoiseSchedule,
}

impl AnalyticDenoiser {
    pub fn new(world: GaussianWorld, schedule: NoiseSchedule) -> Self {
        Self { world, schedule }
    }

    pub fn world(&self) -> &GaussianWorld {
        &self.world
    }
}

impl NoisePredictor for AnalyticDenoiser {
    fn layer_count(&self) -> usize {
        1
    }

    fn feature_shape(&self, shape: Shape) -> Shape {
        shape
    }

    fn mac_breakdown(&self, _shape: Shape) -> Option<MacBreakdown> {
        None
    }

    fn predict(&self, x_t: &LatentTensor, t: usize, condition: ConditionId, hooks: &HookSet) -> Result<Prediction> {
        hooks.check(1)?;
        x_t.check_same_shape(&self.world.means[0])?;
        coefficients(t, &self.schedule)?;
        let (eps, recorded, evals) = match hooks.get(0) {
            LayerHook::Replace(f) => (f.clone(), None, 0),
            hook => {
                let x0 = posterior_x0(x_t, t, self.world.mean(condition)?, self.world.variance, &self.schedule)?;
                let eps = eps_from_x0(x_t, &x0, t, &self.schedule)?;
                let rec = matches!(hook, LayerHook::Record).then(|| eps.clone());
                (eps, rec, 1)
            }
        };
        Ok(Prediction {
            eps,
            recorded: vec![recorded],
            macs: 0,
            attention_evals: evals,
        })
    }
}
