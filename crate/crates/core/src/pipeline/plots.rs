//! Minimal SVG line plots of benchmark sweeps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::benchmark::{BenchmarkReport, BenchmarkRow};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.5 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders `series` as polylines with markers on shared axes. Non-finite
/// points are skipped. Identical output for identical input.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || {
        series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite())
    };
    let (x0, x1) = range(pts().map(|p| p.0));
    let (y0, y1) = range(pts().map(|p| p.1));
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (x, y) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    if pts().next().is_none() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="gray">no data</text>"#,
            LEFT + pw / 2.0,
            TOP + ph / 2.0
        );
    }
    for (i, se) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let p: Vec<(f64, f64)> = se
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| (sx(x), sy(y)))
            .collect();
        if p.len() > 1 {
            let coords: Vec<String> = p.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
        }
        for (x, y) in &p {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{colour}"/>"#);
        }
        if let [(x, y)] = p[..] {
            let (_, v) = se
                .points
                .iter()
                .find(|(a, b)| a.is_finite() && b.is_finite())
                .copied()
                .unwrap_or_default();
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{v:.3}</text>"#, x + 6.0, y - 6.0);
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&se.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn methods(report: &BenchmarkReport) -> Vec<String> {
    let mut m: Vec<String> = Vec::new();
    for r in &report.rows {
        if r.method != "raw" && !m.contains(&r.method) {
            m.push(r.method.clone());
        }
    }
    m
}

fn series_by(
    report: &BenchmarkReport,
    keep: impl Fn(&BenchmarkRow) -> bool,
    x: impl Fn(&BenchmarkRow) -> f64,
    y: impl Fn(&BenchmarkRow) -> Option<f64>,
) -> Vec<Series> {
    methods(report)
        .into_iter()
        .map(|m| Series {
            points: report
                .rows
                .iter()
                .filter(|r| r.method == m && keep(r))
                .filter_map(|r| y(r).map(|v| (x(r), v)))
                .collect(),
            label: m,
        })
        .collect()
}

/// `(file name, svg)` pairs: `E_B` against `P` at the first outlier
/// fraction, and `E_W` against the outlier fraction at `P = 2` (or the
/// largest `P` below it).
pub fn benchmark_plots(report: &BenchmarkReport) -> Vec<(String, String)> {
    let f0 = report.rows.first().map(|r| r.outlier_fraction).unwrap_or(0.0);
    let ps: Vec<u32> = {
        let mut v: Vec<u32> = report.rows.iter().filter_map(|r| r.p).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut sweep = series_by(
        report,
        |r| r.outlier_fraction == f0,
        |r| r.p.unwrap_or(0) as f64,
        BenchmarkRow::mean_inter,
    );
    if let Some(v) = report.find("raw", None, f0).and_then(BenchmarkRow::mean_inter) {
        sweep.push(Series {
            label: "raw".into(),
            points: ps.iter().map(|&p| (p as f64, v)).collect(),
        });
    }
    let p_sel = ps
        .iter()
        .copied()
        .filter(|&p| p <= 2)
        .max()
        .or(ps.first().copied());
    let mut outliers = series_by(
        report,
        |r| r.p == p_sel,
        |r| r.outlier_fraction,
        BenchmarkRow::mean_intra,
    );
    outliers.push(Series {
        label: "raw".into(),
        points: report
            .rows
            .iter()
            .filter(|r| r.method == "raw")
            .filter_map(|r| r.mean_intra().map(|v| (r.outlier_fraction, v)))
            .collect(),
    });
    vec![
        (
            "p_sweep.svg".into(),
            line_plot(
                &format!("inter-slice error, outlier fraction {f0}"),
                "P",
                "E_B (pixels)",
                &sweep,
            ),
        ),
        (
            "outliers.svg".into(),
            line_plot(
                &format!(
                    "intra-slice error, P = {}",
                    p_sel.map(|p| p.to_string()).unwrap_or("-".into())
                ),
                "outlier fraction",
                "E_W (pixels)",
                &outliers,
            ),
        ),
    ]
}

pub fn emit_plots(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    benchmark_plots(report)
        .into_iter()
        .map(|(name, svg)| {
            let p = dir.join(name);
            std::fs::write(&p, svg).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
