use thiserror::Error;

/// Errors raised by the sampling engine and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: [usize; 4],
        actual: [usize; 4],
    },
    #[error("data length {len} does not match shape {shape:?}")]
    BadLength { shape: [usize; 4], len: usize },
    #[error("empty tensor")]
    Empty,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("timestep {t} out of range 0..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("hook count {hooks} does not match layer count {layers}")]
    HookCount { hooks: usize, layers: usize },
    #[error("plan has {plan} steps but sampler expects {steps}")]
    PlanLength { plan: usize, steps: usize },
    #[error("feature cache for layer {layer} is not warm at step {step}")]
    CacheUnderflow { layer: usize, step: usize },
    #[error("cutoff mismatch: bias recorded at {recorded}, requested {requested}")]
    CutoffMismatch { recorded: f64, requested: f64 },
    #[error("no fully computed unconditional output before step {0}")]
    NoStaleUncond(usize),
    #[error("trace has no unconditional output at step {0}")]
    MissingUncond(usize),
    #[error("weights: {0}")]
    Weights(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
