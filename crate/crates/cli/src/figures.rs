//! Charts derived from saved reports.

use crate::plot::{BarChart, LineChart, Series};
use crate::report::{AnyReport, RunReport};

/// A run together with the name it is plotted under.
pub struct Labelled<'a> {
    pub label: String,
    pub run: &'a RunReport,
}

pub fn labelled(reports: &[AnyReport]) -> Vec<Labelled<'_>> {
    let mut out = Vec::new();
    for report in reports {
        match report {
            AnyReport::Sweep(s) => {
                for (v, r) in s.values.iter().zip(&s.reports) {
                    out.push(Labelled {
                        label: format!("{}={v}", s.parameter),
                        run: r,
                    });
                }
            }
            other => out.extend(other.runs().into_iter().map(|r| Labelled {
                label: r.strategy.to_string(),
                run: r,
            })),
        }
    }
    out
}

pub fn feature_mse_chart(runs: &[Labelled<'_>]) -> LineChart {
    LineChart {
        title: "Attention feature MSE against full inference".into(),
        x_label: "sampling step".into(),
        y_label: "feature MSE (log)".into(),
        log_y: true,
        series: runs
            .iter()
            .map(|l| Series {
                name: l.label.clone(),
                points: l.run.steps.iter().map(|s| (s.step as f64, s.feature_mse)).collect(),
            })
            .collect(),
    }
}

pub fn bias_chart(runs: &[Labelled<'_>]) -> LineChart {
    let steps = runs.first().map(|l| l.run.steps.as_slice()).unwrap_or_default();
    let series = |name: &str, f: fn(&crate::report::StepSummary) -> f64| Series {
        name: name.into(),
        points: steps.iter().map(|s| (s.t as f64, f(s))).collect(),
    };
    LineChart {
        title: "Guidance bias energy by frequency band".into(),
        x_label: "diffusion timestep t".into(),
        y_label: "energy (log)".into(),
        log_y: true,
        series: vec![
            series("low", |s| s.bias_low_energy),
            series("high", |s| s.bias_high_energy),
        ],
    }
}

pub fn latency_chart(runs: &[Labelled<'_>]) -> BarChart {
    BarChart {
        title: "Median sampling latency".into(),
        y_label: "ms".into(),
        bars: runs
            .iter()
            .filter_map(|l| l.run.median_ms().map(|m| (l.label.clone(), m)))
            .collect(),
    }
}

pub fn mac_chart(runs: &[Labelled<'_>]) -> BarChart {
    BarChart {
        title: "Multiply-accumulates relative to full inference".into(),
        y_label: "MAC fraction".into(),
        bars: runs
            .iter()
            .filter(|l| l.run.cost.reference_macs > 0)
            .map(|l| (l.label.clone(), l.run.cost.macs as f64 / l.run.cost.reference_macs as f64))
            .collect(),
    }
}

/// `(file name, svg)` for every chart.
pub fn render_all(reports: &[AnyReport]) -> Vec<(&'static str, String)> {
    let runs = labelled(reports);
    vec![
        ("feature_mse.svg", feature_mse_chart(&runs).to_svg()),
        ("bias_energy.svg", bias_chart(&runs).to_svg()),
        ("latency.svg", latency_chart(&runs).to_svg()),
        ("macs.svg", mac_chart(&runs).to_svg()),
    ]
}
