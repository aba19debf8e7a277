use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the extrapolation weight evolves over reuse steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Rises linearly from 0 when the feature cache warms up to 1 at the last step.
    #[default]
    Linear,
    Constant(f64),
    /// Plain reuse of the last cached feature.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    /// Attention is fully computed on steps that are multiples of this.
    pub dfr_interval: usize,
    pub dfr_weight: WeightMode,
    /// Fraction of the sampling steps after which guidance caching starts.
    pub cfg_start_fraction: f64,
    /// Both branches are recomputed every this many steps once caching is active.
    pub cfg_interval: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Position of the low/high emphasis switch inside the active span,
    /// measured in sampling order.
    pub t0_fraction: f64,
    /// Radial low/high frequency cutoff.
    pub cutoff: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            dfr_interval: 2,
            dfr_weight: WeightMode::Linear,
            cfg_start_fraction: 1.0 / 3.0,
            cfg_interval: 5,
            alpha1: 0.2,
            alpha2: 0.2,
            t0_fraction: 0.5,
            cutoff: 0.25,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dfr_interval < 1 {
            return bad("dfr_interval must be ≥ 1".into());
        }
        if self.cfg_interval < 1 {
            return bad("cfg_interval must be ≥ 1".into());
        }
        if !(0.0..1.0).contains(&self.cfg_start_fraction) {
            return bad(format!("cfg_start_fraction {} outside [0, 1)", self.cfg_start_fraction));
        }
        if !(self.alpha1 >= -1.0 && self.alpha2 >= -1.0) {
            return bad(format!("alpha1/alpha2 must be ≥ -1, got {}/{}", self.alpha1, self.alpha2));
        }
        if !(0.0..=1.0).contains(&self.t0_fraction) {
            return bad(format!("t0_fraction {} outside [0, 1]", self.t0_fraction));
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return bad(format!("cutoff {} outside [0, 1]", self.cutoff));
        }
        if let WeightMode::Constant(w) = self.dfr_weight {
            if !w.is_finite() {
                return bad("constant weight must be finite".into());
            }
        }
        Ok(())
    }
}
