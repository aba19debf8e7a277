use std::fmt;
use std::path::{Path, PathBuf};

use fastercache::cfg_cache::BiasEnergy;
use fastercache::{StrategyKind, SCHEMA_VERSION};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// PSNR in dB; identical samples serialize as the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Psnr(pub f64);

impl Psnr {
    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Psnr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PsnrVisitor;
        impl Visitor<'_> for PsnrVisitor {
            type Value = Psnr;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number of decibels or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Psnr, E> {
                Ok(Psnr(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Psnr, E> {
                Ok(Psnr(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Psnr, E> {
                Ok(Psnr(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Psnr, E> {
                match v {
                    "inf" => Ok(Psnr(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(PsnrVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    /// Multiply-accumulates executed by the strategy run.
    pub macs: u64,
    pub reference_macs: u64,
    /// MACs implied by the step plan and the per-call breakdown.
    pub predicted_macs: Option<u64>,
    /// `reference_macs / macs`.
    pub mac_reduction: Option<f64>,
    pub attention_evals: usize,
    pub reference_attention_evals: usize,
    pub uncond_evals: usize,
    pub model_calls: usize,
    pub reuse_steps: usize,
    pub reconstructed_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub mse: f64,
    pub psnr_db: Psnr,
    pub ssim: f64,
    /// Data range of the reference sample used as the metric peak.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub t: usize,
    pub attn_reuse: bool,
    pub uncond_full: bool,
    pub record_cfg_bias: bool,
    pub w: f64,
    /// Attention-feature MSE against the reference run, summed over layers.
    pub feature_mse: f64,
    /// MSE of the unconditional prediction used against the true one.
    pub uncond_mse: f64,
    pub bias_low_energy: f64,
    pub bias_high_energy: f64,
}

impl StepSummary {
    pub fn bias(&self) -> BiasEnergy {
        BiasEnergy {
            step: self.step,
            t: self.t,
            low_energy: self.bias_low_energy,
            high_energy: self.bias_high_energy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub stddev_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_ms: Vec<f64>) -> Self {
        let n = samples_ms.len().max(1) as f64;
        let mean = samples_ms.iter().sum::<f64>() / n;
        let var = if samples_ms.len() > 1 {
            samples_ms.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = samples_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => 0.0,
            k if k % 2 == 1 => sorted[k / 2],
            k => 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]),
        };
        Self {
            samples_ms,
            mean_ms: mean,
            median_ms: median,
            stddev_ms: var.sqrt(),
        }
    }
}

/// Wall-clock measurements; the only non-deterministic part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub warmup: usize,
    pub strategy: LatencyStats,
    pub reference: LatencyStats,
    /// Reference median latency over strategy median latency.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub strategy: StrategyKind,
    pub config: ExperimentConfig,
    /// Diffusion timestep where guidance emphasis switches from low to high.
    pub t0: usize,
    /// Step-0 outputs equal the reference run bit for bit.
    pub seed_consistent: bool,
    pub cost: CostSummary,
    pub fidelity: Fidelity,
    pub steps: Vec<StepSummary>,
    pub timing: Option<Timing>,
}

impl RunReport {
    pub fn speedup(&self) -> Option<f64> {
        self.timing.as_ref().map(|t| t.speedup)
    }

    pub fn median_ms(&self) -> Option<f64> {
        self.timing.as_ref().map(|t| t.strategy.median_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub reports: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub parameter: String,
    pub values: Vec<f64>,
    pub reports: Vec<RunReport>,
}

/// Any report the harness writes, distinguished by its keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyReport {
    Sweep(SweepReport),
    Ablation(AblationReport),
    Run(Box<RunReport>),
}

impl AnyReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(CliError::format(path, format!("unsupported schema version {v}"))),
            None => return Err(CliError::format(path, "missing schema_version")),
        }
        serde_json::from_value(value).map_err(|e| CliError::format(path, e))
    }

    pub fn runs(&self) -> Vec<&RunReport> {
        match self {
            Self::Run(r) => vec![r.as_ref()],
            Self::Ablation(a) => a.reports.iter().collect(),
            Self::Sweep(s) => s.reports.iter().collect(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// CSV text with a leading `# schema_version=N` comment line.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(format!("# schema_version={SCHEMA_VERSION}\n").into_bytes());
        writer.write_record(header).expect("writing to memory");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("flushing to memory")
    }

    pub fn write(self, path: &Path) -> Result<()> {
        write_file(path, &self.into_bytes())
    }
}

/// Reads a CSV written by [`CsvTable`], skipping the schema comment.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::format(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::format(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::format(path, e))?;
    Ok((header, rows))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const SUMMARY_HEADER: [&str; 13] = [
    "strategy",
    "macs",
    "mac_reduction",
    "attention_evals",
    "uncond_evals",
    "mse",
    "psnr_db",
    "ssim",
    "median_ms",
    "stddev_ms",
    "speedup",
    "reuse_steps",
    "reconstructed_steps",
];

pub fn summary_fields(r: &RunReport) -> Vec<String> {
    vec![
        r.strategy.to_string(),
        r.cost.macs.to_string(),
        opt(r.cost.mac_reduction),
        r.cost.attention_evals.to_string(),
        r.cost.uncond_evals.to_string(),
        r.fidelity.mse.to_string(),
        r.fidelity.psnr_db.to_string(),
        r.fidelity.ssim.to_string(),
        opt(r.median_ms()),
        opt(r.timing.as_ref().map(|t| t.strategy.stddev_ms)),
        opt(r.speedup()),
        r.cost.reuse_steps.to_string(),
        r.cost.reconstructed_steps.to_string(),
    ]
}

pub fn steps_table(r: &RunReport) -> CsvTable {
    let mut t = CsvTable::new(&[
        "step",
        "t",
        "attn_reuse",
        "uncond_full",
        "record_cfg_bias",
        "w",
        "feature_mse",
        "uncond_mse",
        "bias_low_energy",
        "bias_high_energy",
    ]);
    for s in &r.steps {
        t.row([
            s.step.to_string(),
            s.t.to_string(),
            s.attn_reuse.to_string(),
            s.uncond_full.to_string(),
            s.record_cfg_bias.to_string(),
            s.w.to_string(),
            s.feature_mse.to_string(),
            s.uncond_mse.to_string(),
            s.bias_low_energy.to_string(),
            s.bias_high_energy.to_string(),
        ]);
    }
    t
}

/// Paths written for one run.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub report: PathBuf,
    pub steps: PathBuf,
}

pub fn write_run(dir: &Path, r: &RunReport) -> Result<RunFiles> {
    let files = RunFiles {
        report: dir.join(format!("run_{}.json", r.strategy)),
        steps: dir.join(format!("run_{}_steps.csv", r.strategy)),
    };
    write_json(&files.report, r)?;
    steps_table(r).write(&files.steps)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_sentinel_round_trips() {
        assert_eq!(serde_json::to_string(&Psnr(f64::INFINITY)).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&Psnr(20.0)).unwrap(), "20.0");
        assert!(serde_json::from_str::<Psnr>("\"inf\"").unwrap().is_infinite());
        assert_eq!(serde_json::from_str::<Psnr>("6.5").unwrap(), Psnr(6.5));
        assert!(serde_json::from_str::<Psnr>("\"nan\"").is_err());
    }

    #[test]
    fn latency_statistics() {
        let s = LatencyStats::from_samples(vec![3.0, 1.0, 2.0, 10.0, 4.0]);
        assert_eq!(s.median_ms, 3.0);
        assert_eq!(s.mean_ms, 4.0);
        assert!((s.stddev_ms - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(LatencyStats::from_samples(vec![1.0, 3.0]).median_ms, 2.0);
    }

    #[test]
    fn csv_has_schema_line() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(["1", "x,y"]);
        let text = String::from_utf8(t.into_bytes()).unwrap();
        assert_eq!(text, "# schema_version=1\na,b\n1,\"x,y\"\n");
    }
}
