//! Training-free acceleration for guided diffusion sampling.
//!
//! Two caches plug into an ordinary DDIM/ancestral sampling loop:
//!
//! - attention outputs are fully computed on a fixed cadence and, in
//!   between, extrapolated from the two most recent full evaluations
//!   ([`cache`]);
//! - the unconditional guidance branch is skipped between refresh steps and
//!   rebuilt from the conditional output plus a cached low/high frequency
//!   bias ([`cfg_cache`]).
//!
//! [`denoisers`] provides an exact Gaussian denoiser for fidelity checks
//! and a tiny seeded transformer for cost measurements.

pub mod cache;
pub mod cfg_cache;
pub mod denoisers;
pub mod diffusion;
mod error;
pub mod numerics;

pub use cache::{build_plan, CacheConfig, CacheStrategy, StepPlan, StrategyKind, WeightMode};
pub use denoisers::{AnalyticDenoiser, GaussianWorld, NoisePredictor, TinyDit, TinyDitConfig};
pub use diffusion::{sample, NoiseSchedule, SampleOutput, SamplerConfig, SamplerMode, ScheduleKind};
pub use error::{Error, Result};
pub use numerics::{LatentTensor, SpectrumTensor};

/// Version stamped into every file this crate and its tools write.
pub const SCHEMA_VERSION: u32 = 1;
