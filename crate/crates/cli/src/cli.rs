use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use fastercache::{SamplerMode, ScheduleKind, StrategyKind, WeightMode};

use crate::config::{ExperimentConfig, ModelConfig};
use crate::error::{CliError, Result};
use crate::figures::render_all;
use crate::harness::{ablate, plan_table, run, sweep, write_ablation, write_sweep};
use crate::report::{write_file, write_run, AnyReport};

pub const OUT_DIR_ENV: &str = "FASTERCACHE_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fastercache", version, about = "Diffusion sampling with feature and guidance caching")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy against the no-cache reference.
    Run(ExperimentArgs),
    /// Run every strategy against one shared reference.
    Ablate(ExperimentArgs),
    /// Run the configured strategy once per parameter value.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// dfr_interval, cfg_interval, alpha1, alpha2, cutoff (rho), t0_fraction or guidance_scale (g).
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Render SVG charts from saved reports.
    Plot {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Write the step plan as CSV.
    PlanDump(ExperimentArgs),
}

fn parse_weight(s: &str) -> std::result::Result<WeightMode, String> {
    match s {
        "linear" => Ok(WeightMode::Linear),
        "none" => Ok(WeightMode::None),
        _ => s
            .strip_prefix("constant:")
            .and_then(|w| w.parse().ok())
            .map(WeightMode::Constant)
            .ok_or_else(|| format!("expected linear, none or constant:<w>, got {s}")),
    }
}

fn parse_strategy(s: &str) -> std::result::Result<StrategyKind, String> {
    StrategyKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown strategy {s}; expected one of {}", names.join(", "))
    })
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 4], String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| format!("bad dimension {d:?}")))
        .collect::<std::result::Result<_, _>>()?;
    dims.try_into().map_err(|_| format!("shape needs four comma-separated sizes, got {s}"))
}

fn parse_mode(s: &str) -> std::result::Result<SamplerMode, String> {
    match s {
        "ddim" => Ok(SamplerMode::Ddim),
        "ancestral" => Ok(SamplerMode::Ancestral),
        _ => Err(format!("unknown sampler {s}")),
    }
}

fn parse_schedule(s: &str) -> std::result::Result<ScheduleKind, String> {
    match s {
        "linear_beta" => Ok(ScheduleKind::LinearBeta),
        "cosine" => Ok(ScheduleKind::Cosine),
        _ => Err(format!("unknown schedule {s}")),
    }
}

/// Experiment settings; flags override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// JSON document with ExperimentConfig fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    /// analytic or tiny_dit.
    #[arg(long)]
    pub model: Option<String>,
    /// Latent shape as F,C,H,W.
    #[arg(long, value_parser = parse_shape)]
    pub shape: Option<[usize; 4]>,
    #[arg(long)]
    pub guidance_scale: Option<f64>,
    #[arg(long)]
    pub condition: Option<u32>,
    #[arg(long, value_parser = parse_mode)]
    pub sampler: Option<SamplerMode>,
    #[arg(long, value_parser = parse_schedule)]
    pub schedule: Option<ScheduleKind>,
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub dfr_interval: Option<usize>,
    /// linear, none or constant:<w>.
    #[arg(long, value_parser = parse_weight)]
    pub dfr_weight: Option<WeightMode>,
    #[arg(long)]
    pub cfg_start_fraction: Option<f64>,
    #[arg(long)]
    pub cfg_interval: Option<usize>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub t0_fraction: Option<f64>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Weights file for the tiny DiT, with a `.json` sidecar beside it.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

/// Which flags must be present when no config file is given.
#[derive(Debug, Clone, Copy)]
pub struct Required {
    pub seed: bool,
    pub steps: bool,
    pub strategy: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self, required: Required) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let missing: Vec<&str> = [
                    (required.seed && self.seed.is_none(), "--seed"),
                    (required.steps && self.steps.is_none(), "--steps"),
                    (required.strategy && self.strategy.is_none(), "--strategy"),
                    (self.out.is_none(), "--out"),
                ]
                .into_iter()
                .filter_map(|(gone, flag)| gone.then_some(flag))
                .collect();
                if !missing.is_empty() {
                    return Err(CliError::config(format!(
                        "without --config these flags are required: {}",
                        missing.join(", ")
                    )));
                }
                ExperimentConfig::default()
            }
        };
        if let Some(name) = &self.model {
            if name != cfg.model.name() {
                cfg.model = ModelConfig::from_name(name)
                    .ok_or_else(|| CliError::config(format!("unknown model {name}; expected analytic or tiny_dit")))?;
            }
        }
        if let Some(path) = &self.weights {
            match &mut cfg.model {
                ModelConfig::TinyDit { weights, .. } => *weights = Some(path.clone()),
                ModelConfig::Analytic(_) => return Err(CliError::config("--weights needs --model tiny_dit")),
            }
        }
        set(&mut cfg.sampler.seed, self.seed);
        set(&mut cfg.sampler.steps, self.steps);
        set(&mut cfg.strategy, self.strategy);
        set(&mut cfg.shape, self.shape);
        set(&mut cfg.sampler.guidance_scale, self.guidance_scale);
        set(&mut cfg.sampler.condition_id, self.condition);
        set(&mut cfg.sampler.mode, self.sampler);
        set(&mut cfg.sampler.schedule_kind, self.schedule);
        set(&mut cfg.sampler.timesteps, self.timesteps);
        set(&mut cfg.cache.dfr_interval, self.dfr_interval);
        set(&mut cfg.cache.dfr_weight, self.dfr_weight);
        set(&mut cfg.cache.cfg_start_fraction, self.cfg_start_fraction);
        set(&mut cfg.cache.cfg_interval, self.cfg_interval);
        set(&mut cfg.cache.alpha1, self.alpha1);
        set(&mut cfg.cache.alpha2, self.alpha2);
        set(&mut cfg.cache.t0_fraction, self.t0_fraction);
        set(&mut cfg.cache.cutoff, self.cutoff);
        set(&mut cfg.repetitions, self.repetitions);
        set(&mut cfg.warmup, self.warmup);
        if self.out.is_some() {
            cfg.out_dir = self.out.clone();
        }
        if cfg.out_dir.is_none() {
            return Err(CliError::config(format!("no output directory: pass --out or set {OUT_DIR_ENV}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(dst: &mut T, src: Option<T>) {
    if let Some(v) = src {
        *dst = v;
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().expect("resolve guarantees an output directory")
}

/// Executes one command and returns the files it wrote.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    let all = Required {
        seed: true,
        steps: true,
        strategy: true,
    };
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve(all)?;
            let report = run(&cfg)?;
            let files = write_run(&out_dir(&cfg), &report)?;
            Ok(vec![files.report, files.steps])
        }
        Command::Ablate(args) => {
            let cfg = args.resolve(Required { strategy: false, ..all })?;
            let dir = out_dir(&cfg);
            let report = ablate(&cfg, Some(&dir))?;
            write_ablation(&dir, &report)?;
            Ok(vec![dir.join("ablation.json"), dir.join("ablation.csv")])
        }
        Command::Sweep {
            experiment,
            param,
            values,
        } => {
            let cfg = experiment.resolve(all)?;
            let dir = out_dir(&cfg);
            let report = sweep(&cfg, &param, &values)?;
            write_sweep(&dir, &report)?;
            let stem = format!("sweep_{}", report.parameter);
            Ok(vec![dir.join(format!("{stem}.json")), dir.join(format!("{stem}.csv"))])
        }
        Command::Plot { reports, out } => {
            let dir = out.ok_or_else(|| CliError::config(format!("no output directory: pass --out or set {OUT_DIR_ENV}")))?;
            let loaded = reports.iter().map(|p| AnyReport::load(p)).collect::<Result<Vec<_>>>()?;
            let mut written = Vec::new();
            for (name, svg) in render_all(&loaded) {
                let path = dir.join(name);
                write_file(&path, svg.as_bytes())?;
                written.push(path);
            }
            Ok(written)
        }
        Command::PlanDump(args) => {
            let cfg = args.resolve(Required { seed: false, ..all })?;
            let path = out_dir(&cfg).join(format!("plan_{}.csv", cfg.strategy));
            plan_table(&cfg)?.write(&path)?;
            Ok(vec![path])
        }
    }
}
