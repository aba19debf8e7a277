//! Self-contained SVG line and bar charts.

use std::fmt::Write;

use fastercache::SCHEMA_VERSION;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    pub bars: Vec<(String, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Maps a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=TICKS)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / TICKS as f64)
            .collect()
    }
}

struct Canvas {
    svg: String,
}

impl Canvas {
    fn new(title: &str) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, "<desc>schema_version={SCHEMA_VERSION}</desc>");
        let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        Self { svg }
    }

    fn frame(&mut self, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            self.svg,
            r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            self.svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 14.0,
            escape(x_label)
        );
        let _ = writeln!(
            self.svg,
            r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn y_ticks(&mut self, axis: &Axis, log: bool) {
        for v in axis.ticks() {
            let y = axis.map(v);
            let text = if log { label(10f64.powf(v)) } else { label(v) };
            let _ = writeln!(
                self.svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
                LEFT,
                WIDTH - RIGHT
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                text
            );
        }
    }

    fn x_ticks(&mut self, axis: &Axis) {
        for v in axis.ticks() {
            let x = axis.map(v);
            let y = HEIGHT - BOTTOM;
            let _ = writeln!(
                self.svg,
                r#"<line x1="{x:.2}" y1="{y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                y + 4.0
            );
            let _ = writeln!(
                self.svg,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y + 18.0,
                label(v)
            );
        }
    }

    fn no_data(&mut self) {
        let _ = writeln!(
            self.svg,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="#888888">no data</text>"##,
            (LEFT + WIDTH - RIGHT) / 2.0,
            (TOP + HEIGHT - BOTTOM) / 2.0
        );
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, name) in names.iter().enumerate() {
            let y = TOP + 8.0 + 18.0 * i as f64;
            let x = WIDTH - RIGHT + 14.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{}"/>"#,
                y - 10.0,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(self.svg, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, escape(name));
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

impl LineChart {
    /// Points that can be drawn: finite, and positive on a log axis.
    fn drawable(&self) -> Vec<Vec<(f64, f64)>> {
        self.series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, if self.log_y { y.log10() } else { y }))
                    .collect()
            })
            .collect()
    }

    pub fn to_svg(&self) -> String {
        let mut c = Canvas::new(&self.title);
        c.frame(&self.x_label, &self.y_label);
        let data = self.drawable();
        let all = || data.iter().flatten();
        let (Some((xl, xh)), Some((yl, yh))) = (bounds(all().map(|p| p.0)), bounds(all().map(|p| p.1))) else {
            c.no_data();
            return c.finish();
        };
        let xa = Axis::new(xl, xh, LEFT, WIDTH - RIGHT);
        let ya = Axis::new(yl, yh, HEIGHT - BOTTOM, TOP);
        c.y_ticks(&ya, self.log_y);
        c.x_ticks(&xa);
        for (i, pts) in data.iter().enumerate() {
            if pts.is_empty() {
                continue;
            }
            let coords: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", xa.map(x), ya.map(y)))
                .collect();
            let colour = PALETTE[i % PALETTE.len()];
            let _ = writeln!(
                c.svg,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
        let names: Vec<&str> = self.series.iter().map(|s| s.name.as_str()).collect();
        c.legend(&names);
        c.finish()
    }
}

impl BarChart {
    pub fn to_svg(&self) -> String {
        let mut c = Canvas::new(&self.title);
        c.frame("", &self.y_label);
        let bars: Vec<&(String, f64)> = self.bars.iter().filter(|(_, v)| v.is_finite()).collect();
        let Some((_, hi)) = bounds(bars.iter().map(|b| b.1)) else {
            c.no_data();
            return c.finish();
        };
        let ya = Axis::new(0.0, hi.max(0.0), HEIGHT - BOTTOM, TOP);
        c.y_ticks(&ya, false);
        let slot = (WIDTH - RIGHT - LEFT) / bars.len() as f64;
        for (i, (_, v)) in bars.iter().enumerate() {
            let x = LEFT + slot * (i as f64 + 0.15);
            let top = ya.map(v.max(0.0));
            let _ = writeln!(
                c.svg,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                slot * 0.7,
                HEIGHT - BOTTOM - top,
                PALETTE[i % PALETTE.len()]
            );
            let _ = writeln!(
                c.svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                x + slot * 0.35,
                top - 4.0,
                label(*v)
            );
        }
        let names: Vec<&str> = bars.iter().map(|b| b.0.as_str()).collect();
        c.legend(&names);
        c.finish()
    }
}
