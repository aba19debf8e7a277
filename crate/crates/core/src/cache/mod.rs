//! Step planning and attention-feature reuse.

mod config;
mod plan;
mod reuse;
mod strategy;

pub use config::{CacheConfig, WeightMode};
pub use plan::{build_plan, cfg_activation_step, w_of, StepDirective, StepPlan};
pub use reuse::{apply_strategy, dynamic_reuse, CacheSlot, FeatureCache, LayerCache};
pub use strategy::{CacheStrategy, StrategyKind, UncondSource};
