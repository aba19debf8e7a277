use serde::{Deserialize, Serialize};

use super::config::{CacheConfig, WeightMode};
use super::plan::{build_plan_with, StepPlan};
use crate::error::Result;

/// Where the unconditional prediction comes from on steps that skip it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncondSource {
    Computed,
    /// Conditional output plus the cached frequency-split bias.
    Reconstructed,
    /// Conditional output of the same step, unchanged.
    CondCopy,
    /// Last fully computed unconditional output, unchanged.
    Stale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    NoCache,
    VanillaFr,
    DynamicFr,
    CfgCacheOnly,
    #[serde(rename = "fastercache")]
    FasterCache,
    CondCopy,
    StaleUncond,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        Self::NoCache,
        Self::VanillaFr,
        Self::DynamicFr,
        Self::CfgCacheOnly,
        Self::FasterCache,
        Self::CondCopy,
        Self::StaleUncond,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoCache => "no_cache",
            Self::VanillaFr => "vanilla_fr",
            Self::DynamicFr => "dynamic_fr",
            Self::CfgCacheOnly => "cfg_cache_only",
            Self::FasterCache => "fastercache",
            Self::CondCopy => "cond_copy",
            Self::StaleUncond => "stale_uncond",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn reuses_attention(self) -> bool {
        matches!(self, Self::VanillaFr | Self::DynamicFr | Self::FasterCache)
    }

    pub fn uncond_source(self) -> UncondSource {
        match self {
            Self::CfgCacheOnly | Self::FasterCache => UncondSource::Reconstructed,
            Self::CondCopy => UncondSource::CondCopy,
            Self::StaleUncond => UncondSource::Stale,
            Self::NoCache | Self::VanillaFr | Self::DynamicFr => UncondSource::Computed,
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A strategy kind together with its cache parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheStrategy {
    pub kind: StrategyKind,
    pub config: CacheConfig,
}

impl CacheStrategy {
    pub fn new(kind: StrategyKind, config: CacheConfig) -> Self {
        Self { kind, config }
    }

    pub fn weight_mode(&self) -> WeightMode {
        match self.kind {
            StrategyKind::VanillaFr => WeightMode::None,
            _ => self.config.dfr_weight,
        }
    }

    /// The combined plan with the parts this strategy does not use switched
    /// back to full computation.
    pub fn plan(&self, steps: usize) -> Result<StepPlan> {
        let records_bias = self.kind.uncond_source() == UncondSource::Reconstructed;
        let mut plan = build_plan_with(steps, &self.config, records_bias)?;
        if !self.kind.reuses_attention() {
            plan.steps.iter_mut().for_each(|d| d.attn_reuse = false);
            plan.dfr_start = None;
        }
        if self.kind.uncond_source() == UncondSource::Computed {
            plan.steps.iter_mut().for_each(|d| {
                d.uncond_full = true;
                d.record_cfg_bias = false;
            });
        }
        Ok(plan)
    }
}
