//! Small deterministic SVG charts.

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Report;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("chart has no data: {0}")]
    EmptySeries(String),
    #[error("non-finite value in series {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    /// Polylines with point marks.
    Line,
    /// The first series as bars, the rest as lines over them.
    Histogram,
    /// Step curves.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw marks only.
    #[serde(default)]
    pub scatter: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { name: name.into(), points, scatter: false }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { name: name.into(), points, scatter: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Axis ranges; derived from the data when absent.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64, span: f64) -> String {
    let decimals = if span >= 50.0 {
        0
    } else if span >= 5.0 {
        1
    } else {
        2
    };
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
}

fn marks(out: &mut String, pts: &[(f64, f64)], color: &str) {
    for (x, y) in pts {
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
    }
}

/// Renders a standalone SVG. Output depends only on `spec`.
pub fn render_svg(spec: &ChartSpec) -> Result<String, ChartError> {
    if spec.series.is_empty() {
        return Err(ChartError::EmptySeries(spec.title.clone()));
    }
    for s in &spec.series {
        if s.points.is_empty() {
            return Err(ChartError::EmptySeries(s.name.clone()));
        }
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ChartError::NonFinite(s.name.clone()));
        }
    }
    let all = || spec.series.iter().flat_map(|s| s.points.iter());
    let frame = Frame {
        x: spec.x_range.unwrap_or_else(|| range(all().map(|p| p.0))),
        y: spec.y_range.unwrap_or_else(|| range(all().map(|p| p.1).chain(std::iter::once(0.0)))),
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&spec.title));

    // axes and ticks
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{x0:.2},{y0:.2} V{y1:.2} H{x1:.2}" fill="none" stroke="black"/>"#);
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let xp = frame.px(xv);
        let _ = writeln!(out, r#"<line x1="{xp:.2}" y1="{y1:.2}" x2="{xp:.2}" y2="{:.2}" stroke="black"/>"#, y1 + 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y1 + 18.0,
            tick_label(xv, frame.x.1 - frame.x.0)
        );
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let yp = frame.py(yv);
        let _ = writeln!(out, r#"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv, frame.y.1 - frame.y.0)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(&spec.y_label)
    );

    for (n, s) in spec.series.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|(x, y)| (frame.px(*x), frame.py(*y))).collect();
        if spec.kind == ChartKind::Histogram && n == 0 {
            let mut xs: Vec<f64> = s.points.iter().map(|p| p.0).collect();
            xs.sort_by(f64::total_cmp);
            let step = xs.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
            let step = if step.is_finite() { step } else { (frame.x.1 - frame.x.0) / 10.0 };
            let w = (frame.px(step) - frame.px(0.0)).abs();
            let base = frame.py(frame.y.0.max(0.0).min(frame.y.1));
            for (x, y) in &pts {
                let (top, h) = if *y < base { (*y, base - y) } else { (base, y - base) };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.5" stroke="{color}"/>"#,
                    x - w / 2.0,
                    w
                );
            }
        } else if pts.len() == 1 || s.scatter {
            marks(&mut out, &pts, color);
        } else if spec.kind == ChartKind::Cumulative {
            let mut steps = Vec::with_capacity(pts.len() * 2);
            for (i, p) in pts.iter().enumerate() {
                if i > 0 {
                    steps.push((p.0, pts[i - 1].1));
                }
                steps.push(*p);
            }
            polyline(&mut out, &steps, color);
        } else {
            polyline(&mut out, &pts, color);
            marks(&mut out, &pts, color);
        }
        let ly = TOP + 10.0 + 20.0 * n as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(out, r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Charts drawn for a report, keyed by file stem.
pub fn charts_for(report: &Report) -> Vec<(String, ChartSpec)> {
    match report {
        Report::Question(r) => {
            let same = r.per_point.iter().map(|p| (p.pct as f64, p.fraction_same_as_full)).collect();
            let acc = r.per_point.iter().map(|p| (p.pct as f64, p.mean_accuracy)).collect();
            vec![(
                "question".into(),
                ChartSpec {
                    kind: ChartKind::Line,
                    title: "Answers under partial questions".into(),
                    x_label: "Length of partial question (%)".into(),
                    y_label: "Fraction of questions".into(),
                    series: vec![Series::new("same as full question", same), Series::new("accuracy", acc)],
                    x_range: Some((0.0, 100.0)),
                    y_range: Some((0.0, 1.0)),
                },
            )]
        }
        Report::Image(r) => {
            let h = &r.histogram;
            let total = h.total();
            let bars = h
                .counts
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mid = (h.edges[i] + h.edges[i + 1]) / 2.0;
                    (mid, if total == 0 { 0.0 } else { *c as f64 / total as f64 })
                })
                .collect();
            let cum: Vec<(f64, f64)> = h.cumulative_at_least.clone();
            let spec = |kind, series| ChartSpec {
                kind,
                title: "Same answer across images".into(),
                x_label: "Share of images with the modal answer".into(),
                y_label: "Fraction of questions".into(),
                series,
                x_range: Some((0.0, 1.0)),
                y_range: Some((0.0, 1.0)),
            };
            vec![
                (
                    "image".into(),
                    spec(ChartKind::Histogram, vec![Series::new("questions", bars), Series::new("at least x", cum.clone())]),
                ),
                ("image_cumulative".into(), spec(ChartKind::Cumulative, vec![Series::new("at least x", cum)])),
            ]
        }
        Report::Novelty(r) | Report::AnswerNovelty(r) if !r.binned.is_empty() => {
            let (stem, x_label) = match report {
                Report::Novelty(_) => ("novelty", "Average distance to k nearest training instances"),
                _ => ("answer_novelty", "Average answer distance to k nearest training instances"),
            };
            vec![(
                stem.into(),
                ChartSpec {
                    kind: ChartKind::Line,
                    title: format!("Accuracy against distance (k = {}, bins of test instances)", r.best_k),
                    x_label: x_label.into(),
                    y_label: "Accuracy".into(),
                    series: vec![Series::scatter("bin mean", r.binned.clone())],
                    x_range: None,
                    y_range: Some((0.0, 1.0)),
                },
            )]
        }
        _ => Vec::new(),
    }
}
