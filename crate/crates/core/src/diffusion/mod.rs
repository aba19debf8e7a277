//! Noise schedules, the forward process, and the guided reverse sampler.

mod sampler;
mod schedule;

pub use sampler::{
    ancestral_moments, ancestral_step, cfg_combine, ddim_step, reverse_step, sample, sample_with_plan,
    switch_timestep, SampleOutput, SamplerConfig, SamplerMode, StepRecord,
};
pub use schedule::{q_sample, NoiseSchedule, ScheduleKind};
