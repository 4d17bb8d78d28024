//! Run artifacts: JSON reports, prediction CSVs, residual statistics and a
//! small self-contained SVG plotter for truth-versus-prediction figures.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::format_float;
use crate::error::{Error, Result};

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

/// CSV with the columns `velocity,truth,prediction`, one row per sample.
pub fn write_prediction_csv(
    path: impl AsRef<Path>,
    velocities: &[f64],
    truth: &[f64],
    predictions: &[f64],
) -> Result<()> {
    check_lengths(velocities, truth, predictions)?;
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["velocity", "truth", "prediction"])?;
    for i in 0..velocities.len() {
        writer.write_record([
            format_float(velocities[i]),
            format_float(truth[i]),
            format_float(predictions[i]),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Aggregate prediction-error statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub rmse: f64,
    pub mean_abs: f64,
    pub max_abs: f64,
}

pub fn residual_stats(truth: &[f64], predictions: &[f64]) -> Result<ResidualStats> {
    if truth.is_empty() || truth.len() != predictions.len() {
        return Err(Error::invalid(format!(
            "residual stats need equal nonzero lengths, got {} and {}",
            truth.len(),
            predictions.len()
        )));
    }
    let mut sum_sq = 0.0;
    let mut sum_abs = 0.0;
    let mut max_abs: f64 = 0.0;
    for (&t, &p) in truth.iter().zip(predictions) {
        let r = (p - t).abs();
        sum_sq += r * r;
        sum_abs += r;
        max_abs = max_abs.max(r);
    }
    let n = truth.len() as f64;
    Ok(ResidualStats { rmse: (sum_sq / n).sqrt(), mean_abs: sum_abs / n, max_abs })
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;

/// Static figure: truth as dots, prediction as a line sorted by velocity.
pub fn render_svg_plot(
    title: &str,
    velocities: &[f64],
    truth: &[f64],
    predictions: &[f64],
) -> Result<String> {
    check_lengths(velocities, truth, predictions)?;
    let (x_lo, x_hi) = padded_range(velocities);
    let (y_lo, y_hi) =
        padded_range(&truth.iter().chain(predictions).copied().collect::<Vec<_>>());
    let x_px = |v: f64| MARGIN + (v - x_lo) / (x_hi - x_lo) * (SVG_WIDTH - 2.0 * MARGIN);
    let y_px = |t: f64| SVG_HEIGHT - MARGIN - (t - y_lo) / (y_hi - y_lo) * (SVG_HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="13">"#
    );
    let _ = writeln!(svg, r#"<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        SVG_WIDTH / 2.0,
        escape_xml(title)
    );

    // Axes with five ticks each.
    let (x0, y0) = (MARGIN, SVG_HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M {x0} {top} L {x0} {y0} L {right} {y0}" fill="none" stroke="black"/>"#,
        top = MARGIN,
        right = SVG_WIDTH - MARGIN
    );
    for k in 0..5 {
        let f = k as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let xp = x_px(xv);
        let yp = y_px(yv);
        let _ = writeln!(svg, r#"<line x1="{xp:.1}" y1="{y0}" x2="{xp:.1}" y2="{:.1}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            tick_label(xv)
        );
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{yp:.1}" x2="{x0}" y2="{yp:.1}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{yp:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            x0 - 9.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">velocity</text>"#,
        SVG_WIDTH / 2.0,
        SVG_HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">torque</text>"#,
        SVG_HEIGHT / 2.0,
        SVG_HEIGHT / 2.0
    );

    for (&v, &t) in velocities.iter().zip(truth) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="2.2" fill="#4477aa" fill-opacity="0.55"/>"##,
            x_px(v),
            y_px(t)
        );
    }

    let mut order: Vec<usize> = (0..velocities.len()).collect();
    order.sort_by(|&a, &b| velocities[a].total_cmp(&velocities[b]));
    let mut points = String::new();
    for &i in &order {
        let _ = write!(points, "{:.1},{:.1} ", x_px(velocities[i]), y_px(predictions[i]));
    }
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#cc3311" stroke-width="1.8"/>"##,
        points.trim_end()
    );

    // Legend, top right.
    let lx = SVG_WIDTH - MARGIN - 150.0;
    let _ = writeln!(svg, r##"<circle cx="{lx}" cy="50" r="3" fill="#4477aa"/>"##);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="54">truth</text>"#, lx + 10.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="70" x2="{lx}" y2="70" stroke="#cc3311" stroke-width="1.8"/>"##,
        lx - 8.0
    );
    let _ = writeln!(svg, r#"<text x="{:.1}" y="74">prediction</text>"#, lx + 10.0);
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg_plot(
    path: impl AsRef<Path>,
    title: &str,
    velocities: &[f64],
    truth: &[f64],
    predictions: &[f64],
) -> Result<()> {
    let svg = render_svg_plot(title, velocities, truth, predictions)?;
    std::fs::write(path.as_ref(), svg)?;
    Ok(())
}

fn check_lengths(velocities: &[f64], truth: &[f64], predictions: &[f64]) -> Result<()> {
    if velocities.is_empty()
        || velocities.len() != truth.len()
        || velocities.len() != predictions.len()
    {
        return Err(Error::invalid(format!(
            "plot data needs equal nonzero lengths, got {}/{}/{}",
            velocities.len(),
            truth.len(),
            predictions.len()
        )));
    }
    if velocities.iter().chain(truth).chain(predictions).any(|v| !v.is_finite()) {
        return Err(Error::invalid("plot data must be finite"));
    }
    Ok(())
}

/// Data range widened by 5% on each side; degenerate ranges get a unit pad.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(0.01..10000.0).contains(&a) {
        return format!("{v:.2e}");
    }
    let mut s = format!("{v:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
