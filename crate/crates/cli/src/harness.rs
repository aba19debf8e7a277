use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use fastercache::cfg_cache::bias_frequency_trend;
use fastercache::denoisers::NoisePredictor;
use fastercache::diffusion::SampleOutput;
use fastercache::numerics::{mse, psnr, ssim};
use fastercache::{sample, CacheStrategy, NoiseSchedule, StrategyKind, SCHEMA_VERSION};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::{
    summary_fields, write_json, write_run, AblationReport, CostSummary, CsvTable, Fidelity, LatencyStats, Psnr,
    RunReport, StepSummary, SweepReport, Timing, SUMMARY_HEADER,
};

/// A model, schedule and configuration ready to sample.
pub struct Experiment {
    pub config: ExperimentConfig,
    schedule: NoiseSchedule,
    model: Box<dyn NoisePredictor>,
}

/// The no-cache run every strategy is compared against.
pub struct Reference {
    pub output: SampleOutput,
    pub latency: Option<LatencyStats>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let schedule = config.sampler.schedule()?;
        let model = config.model.build(config.shape, &schedule)?;
        Ok(Self {
            config,
            schedule,
            model,
        })
    }

    fn strategy(&self, kind: StrategyKind) -> CacheStrategy {
        CacheStrategy::new(kind, self.config.cache.clone())
    }

    pub fn sample(&self, kind: StrategyKind, diagnostics: bool) -> Result<SampleOutput> {
        let sampler = fastercache::SamplerConfig {
            diagnostics,
            ..self.config.sampler.clone()
        };
        Ok(sample(
            self.model.as_ref(),
            &self.schedule,
            self.config.shape,
            &sampler,
            &self.strategy(kind),
        )?)
    }

    /// Median-friendly latency samples after the configured warm-up runs.
    pub fn time(&self, kind: StrategyKind) -> Result<Option<LatencyStats>> {
        if self.config.repetitions == 0 {
            return Ok(None);
        }
        for _ in 0..self.config.warmup {
            black_box(self.sample(kind, false)?);
        }
        let mut samples = Vec::with_capacity(self.config.repetitions);
        for _ in 0..self.config.repetitions {
            let start = Instant::now();
            black_box(self.sample(kind, false)?);
            samples.push(start.elapsed().as_secs_f64() * 1e3);
        }
        Ok(Some(LatencyStats::from_samples(samples)))
    }

    pub fn reference(&self) -> Result<Reference> {
        Ok(Reference {
            output: self.sample(StrategyKind::NoCache, true)?,
            latency: self.time(StrategyKind::NoCache)?,
        })
    }

    /// Measures `kind` against an already computed reference.
    pub fn run_against(&self, kind: StrategyKind, reference: &Reference) -> Result<RunReport> {
        let out = self.sample(kind, true)?;
        let latency = self.time(kind)?;
        let base = &reference.output;

        let range = |v: &[f32]| {
            let (lo, hi) = v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            (hi - lo) as f64
        };
        let peak = Some(range(base.x_final.data())).filter(|p| *p > 0.0).unwrap_or(1.0);
        let fidelity = Fidelity {
            mse: mse(&out.x_final, &base.x_final)?,
            psnr_db: Psnr(psnr(&out.x_final, &base.x_final, peak)?),
            ssim: ssim(&out.x_final, &base.x_final, peak)?,
            peak,
        };

        let bias = bias_frequency_trend(&out.trace, self.config.cache.cutoff)?;
        let mut steps = Vec::with_capacity(out.trace.len());
        for (r, b) in out.trace.iter().zip(&base.trace) {
            let features = match (&r.cond_features, &b.cond_features) {
                (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| mse(x, y)).sum::<fastercache::Result<f64>>()?,
                _ => return Err(CliError::Runtime(format!("step {} lacks feature snapshots", r.step))),
            };
            let truth = r
                .true_uncond()
                .ok_or_else(|| CliError::Runtime(format!("step {} lacks the true unconditional output", r.step)))?;
            let energy = bias
                .iter()
                .find(|e| e.step == r.step)
                .ok_or_else(|| CliError::Runtime(format!("step {} lacks a bias measurement", r.step)))?;
            steps.push(StepSummary {
                step: r.step,
                t: r.timestep,
                attn_reuse: r.directive.attn_reuse,
                uncond_full: r.directive.uncond_full,
                record_cfg_bias: r.directive.record_cfg_bias,
                w: r.w,
                feature_mse: features,
                uncond_mse: mse(&r.eps_uncond, truth)?,
                bias_low_energy: energy.low_energy,
                bias_high_energy: energy.high_energy,
            });
        }

        let plan = &out.plan;
        let calls = plan.cond_evals() + plan.uncond_evals();
        let (cond_full, uncond_full) = plan.full_attention_calls();
        let reuse_calls = (calls - cond_full - uncond_full) as u64;
        let predicted = self
            .model
            .mac_breakdown(self.config.shape)
            .map(|b| calls as u64 * b.total() - reuse_calls * b.self_attention.iter().sum::<u64>());
        let macs = out.total_macs();
        let reference_macs = base.total_macs();
        let cost = CostSummary {
            macs,
            reference_macs,
            predicted_macs: predicted,
            mac_reduction: (macs > 0).then(|| reference_macs as f64 / macs as f64),
            attention_evals: out.attention_evals(),
            reference_attention_evals: base.attention_evals(),
            uncond_evals: plan.uncond_evals(),
            model_calls: out.model_calls(),
            reuse_steps: plan.reuse_steps().count(),
            reconstructed_steps: plan.reconstructed_steps().count(),
        };

        let timing = match (latency, &reference.latency) {
            (Some(strategy), Some(reference)) => Some(Timing {
                warmup: self.config.warmup,
                speedup: reference.median_ms / strategy.median_ms,
                strategy,
                reference: reference.clone(),
            }),
            _ => None,
        };

        let first = (&out.trace[0], &base.trace[0]);
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            strategy: kind,
            config: self.config.with_strategy(kind),
            t0: out.t0,
            seed_consistent: first.0.eps_cond == first.1.eps_cond && first.0.eps_uncond == first.1.eps_uncond,
            cost,
            fidelity,
            steps,
            timing,
        })
    }
}

/// Runs the configured strategy and the no-cache reference with shared seeds.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let exp = Experiment::new(config.clone())?;
    let reference = exp.reference()?;
    exp.run_against(config.strategy, &reference)
}

/// Runs every strategy against one shared reference. When `dir` is given,
/// each report is written as soon as it completes.
pub fn ablate(config: &ExperimentConfig, dir: Option<&Path>) -> Result<AblationReport> {
    let exp = Experiment::new(config.clone())?;
    let reference = exp.reference()?;
    let mut reports = Vec::with_capacity(StrategyKind::ALL.len());
    for kind in StrategyKind::ALL {
        let report = exp.run_against(kind, &reference)?;
        if let Some(dir) = dir {
            write_run(dir, &report)?;
        }
        reports.push(report);
    }
    Ok(AblationReport {
        schema_version: SCHEMA_VERSION,
        reports,
    })
}

pub const SWEEP_PARAMETERS: [&str; 7] = [
    "dfr_interval",
    "cfg_interval",
    "alpha1",
    "alpha2",
    "cutoff",
    "t0_fraction",
    "guidance_scale",
];

fn canonical(name: &str) -> Option<&'static str> {
    match name {
        "rho" => Some("cutoff"),
        "g" => Some("guidance_scale"),
        other => SWEEP_PARAMETERS.iter().copied().find(|p| *p == other),
    }
}

/// Sets one sweepable parameter by name.
pub fn apply_parameter(config: &mut ExperimentConfig, name: &str, value: f64) -> Result<()> {
    let name = canonical(name).ok_or_else(|| {
        CliError::config(format!("unknown sweep parameter {name:?}; expected one of {SWEEP_PARAMETERS:?}"))
    })?;
    let integer = || {
        if value >= 0.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(CliError::config(format!("{name} needs a non-negative integer, got {value}")))
        }
    };
    match name {
        "dfr_interval" => config.cache.dfr_interval = integer()?,
        "cfg_interval" => config.cache.cfg_interval = integer()?,
        "alpha1" => config.cache.alpha1 = value,
        "alpha2" => config.cache.alpha2 = value,
        "cutoff" => config.cache.cutoff = value,
        "t0_fraction" => config.cache.t0_fraction = value,
        "guidance_scale" => config.sampler.guidance_scale = value,
        _ => unreachable!("canonical names are exhaustive"),
    }
    Ok(())
}

/// One run of the configured strategy per parameter value.
pub fn sweep(config: &ExperimentConfig, parameter: &str, values: &[f64]) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(CliError::config("sweep needs at least one value"));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            apply_parameter(&mut c, parameter, v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let shares_reference = canonical(parameter) != Some("guidance_scale");
    let mut shared: Option<Reference> = None;
    let mut reports = Vec::with_capacity(values.len());
    for c in configs {
        let exp = Experiment::new(c)?;
        let report = if shares_reference {
            if shared.is_none() {
                shared = Some(exp.reference()?);
            }
            exp.run_against(config.strategy, shared.as_ref().expect("set above"))?
        } else {
            exp.run_against(config.strategy, &exp.reference()?)?
        };
        reports.push(report);
    }
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        parameter: canonical(parameter).unwrap_or(parameter).to_string(),
        values: values.to_vec(),
        reports,
    })
}

pub fn summary_table<'a>(reports: impl IntoIterator<Item = &'a RunReport>) -> CsvTable {
    let mut t = CsvTable::new(&SUMMARY_HEADER);
    for r in reports {
        t.row(summary_fields(r));
    }
    t
}

pub fn sweep_table(report: &SweepReport) -> CsvTable {
    let mut header = vec!["parameter", "value"];
    header.extend(SUMMARY_HEADER);
    let mut t = CsvTable::new(&header);
    for (v, r) in report.values.iter().zip(&report.reports) {
        let mut row = vec![report.parameter.clone(), v.to_string()];
        row.extend(summary_fields(r));
        t.row(row);
    }
    t
}

/// The step plan of the configured strategy with its diffusion timesteps.
pub fn plan_table(config: &ExperimentConfig) -> Result<CsvTable> {
    config.validate()?;
    let steps = config.sampler.steps;
    let plan = config.cache_strategy().plan(steps)?;
    let schedule = config.sampler.schedule()?;
    let mut t = CsvTable::new(&["step", "t", "cond_full", "uncond_full", "attn_reuse", "record_cfg_bias"]);
    for d in &plan.steps {
        t.row([
            d.step.to_string(),
            schedule.timestep(d.step, steps).to_string(),
            d.cond_full.to_string(),
            d.uncond_full.to_string(),
            d.attn_reuse.to_string(),
            d.record_cfg_bias.to_string(),
        ]);
    }
    Ok(t)
}

pub fn write_ablation(dir: &Path, report: &AblationReport) -> Result<()> {
    write_json(&dir.join("ablation.json"), report)?;
    summary_table(&report.reports).write(&dir.join("ablation.csv"))
}

pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    let stem = format!("sweep_{}", report.parameter);
    write_json(&dir.join(format!("{stem}.json")), report)?;
    sweep_table(report).write(&dir.join(format!("{stem}.csv")))
}
