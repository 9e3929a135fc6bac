use std::fmt::Write as _;
use std::path::Path;

use super::{Method, RunRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "scenario,method,sweep_value,replication,projection_error,cov_frobenius_error,wall_ms,seed";

pub fn write_records(path: impl AsRef<Path>, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_HEADER.split(','))?;
    for rec in records {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Spec(format!("unexpected CSV header `{header}`")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One plotted line: mean projection error per sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Mean projection error per method and sweep value, in first-seen order.
pub fn mean_series(records: &[RunRecord]) -> Vec<Series> {
    let mut methods: Vec<Method> = Vec::new();
    let mut sweeps: Vec<f64> = Vec::new();
    for rec in records {
        if !methods.contains(&rec.method) {
            methods.push(rec.method);
        }
        if !sweeps.iter().any(|s| s.to_bits() == rec.sweep_value.to_bits()) {
            sweeps.push(rec.sweep_value);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let points = sweeps
                .iter()
                .filter_map(|&x| {
                    let (sum, count) = records
                        .iter()
                        .filter(|r| r.method == method && r.sweep_value.to_bits() == x.to_bits())
                        .fold((0.0, 0usize), |(s, c), r| (s + r.projection_error, c + 1));
                    (count > 0).then(|| (x, sum / count as f64))
                })
                .collect();
            Series { name: method.to_string(), points }
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Minimal standalone SVG line plot with axes, ticks and a legend.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 55.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (y0, y1) = (y0.min(0.0), y1 * 1.05);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(svg, r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/>"#, top + ph, top + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{px}" y="{}" text-anchor="middle">{fx:.3}</text>"#, top + ph + 18.0);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{py}" x2="{left}" y2="{py}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{fy:.3}</text>"#, left - 8.0, py + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, height - 12.0, escape(x_label));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 20.0 * k as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 25.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 32.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}
