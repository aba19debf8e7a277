use std::path::{Path, PathBuf};

use fastercache::denoisers::NoisePredictor;
use fastercache::numerics::Shape;
use fastercache::{
    AnalyticDenoiser, CacheConfig, CacheStrategy, GaussianWorld, NoiseSchedule, SamplerConfig, StrategyKind, TinyDit,
    TinyDitConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticParams {
    pub variance: f64,
    /// Number of non-null conditions in the synthetic world.
    pub conditions: usize,
    pub world_seed: u64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        Self {
            variance: 0.25,
            conditions: 3,
            world_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Analytic(AnalyticParams),
    TinyDit {
        #[serde(flatten)]
        config: TinyDitConfig,
        /// Flat `f32` weights; the sidecar sits next to it with a `.json` extension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<PathBuf>,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::Analytic(AnalyticParams::default())
    }
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Analytic(_) => "analytic",
            Self::TinyDit { .. } => "tiny_dit",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "analytic" => Some(Self::Analytic(AnalyticParams::default())),
            "tiny_dit" => Some(Self::TinyDit {
                config: TinyDitConfig::default(),
                weights: None,
            }),
            _ => None,
        }
    }

    pub fn build(&self, shape: Shape, schedule: &NoiseSchedule) -> Result<Box<dyn NoisePredictor>> {
        Ok(match self {
            Self::Analytic(p) => {
                let world = GaussianWorld::synthetic(shape, p.conditions, p.variance, p.world_seed)?;
                Box::new(AnalyticDenoiser::new(world, schedule.clone()))
            }
            Self::TinyDit { config, weights } => {
                let model = match weights {
                    Some(path) => TinyDit::load(path, &path.with_extension("json"))?,
                    None => TinyDit::new(config.clone())?,
                };
                model.config().check_latent(shape)?;
                Box::new(model)
            }
        })
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    /// Latent shape `[frames, channels, height, width]`.
    pub shape: Shape,
    pub sampler: SamplerConfig,
    pub cache: CacheConfig,
    pub strategy: StrategyKind,
    /// Timed repetitions per strategy; 0 skips timing.
    pub repetitions: usize,
    pub warmup: usize,
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            shape: [8, 4, 32, 32],
            sampler: SamplerConfig::default(),
            cache: CacheConfig::default(),
            strategy: StrategyKind::FasterCache,
            repetitions: 5,
            warmup: 1,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: fastercache::Error| CliError::config(e.to_string());
        self.sampler.validate().map_err(wrap)?;
        self.cache.validate().map_err(wrap)?;
        let [f, c, h, w] = self.shape;
        if f == 0 || c == 0 {
            return Err(CliError::config(format!("shape {:?} has an empty axis", self.shape)));
        }
        if h < 11 || w < 11 {
            return Err(CliError::config(format!(
                "spatial size {h}×{w} is below the 11×11 similarity window"
            )));
        }
        match &self.model {
            ModelConfig::Analytic(p) => {
                if !(p.variance >= 0.0) {
                    return Err(CliError::config(format!("variance {} must be ≥ 0", p.variance)));
                }
                if self.sampler.condition_id as usize > p.conditions.max(1) {
                    return Err(CliError::config(format!(
                        "condition {} outside the {} synthetic conditions",
                        self.sampler.condition_id, p.conditions
                    )));
                }
            }
            ModelConfig::TinyDit { config, weights } => {
                if weights.is_none() {
                    config.validate().map_err(wrap)?;
                    config.check_latent(self.shape).map_err(wrap)?;
                }
            }
        }
        Ok(())
    }

    pub fn cache_strategy(&self) -> CacheStrategy {
        CacheStrategy::new(self.strategy, self.cache.clone())
    }

    pub fn with_strategy(&self, strategy: StrategyKind) -> Self {
        Self {
            strategy,
            ..self.clone()
        }
    }
}
