//! Minimal SVG line plots for sweep results. No templating, just string
//! assembly; the output is a single self-contained file.

use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::SweepResult;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0; // room for the legend
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"];

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 10_000.0 || v.abs() < 1e-3) {
        return format!("{v:.2e}");
    }
    let mut s = format!("{v:.4}");
    while s.contains('.') && (s.ends_with('0') || s.ends_with('.')) {
        s.pop();
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Pull one metric ("mae", "rmse" or "pehe") out of a sweep as plot series,
/// skipping failed points.
pub fn sweep_to_plot(sweep: &SweepResult, metric: &str) -> Result<LinePlot> {
    let pick = |r: &crate::eval::MetricsReport| -> Result<f64> {
        match metric {
            "mae" => Ok(r.mae),
            "rmse" => Ok(r.rmse),
            "pehe" => Ok(r.pehe),
            other => Err(Error::Config(format!("unknown metric '{other}'"))),
        }
    };
    let mut series = Vec::with_capacity(sweep.curves.len());
    for curve in &sweep.curves {
        let mut points = Vec::new();
        for (p, &axis) in curve.points.iter().zip(&sweep.axis_values) {
            if let Some(r) = p {
                points.push((axis, pick(r)?));
            }
        }
        series.push(Series { name: curve.variant.clone(), points });
    }
    Ok(LinePlot {
        title: format!("{metric} vs {}", sweep.axis_name),
        x_label: sweep.axis_name.clone(),
        y_label: metric.into(),
        series,
    })
}

pub fn render_line_plot(plot: &LinePlot) -> Result<String> {
    let finite: Vec<(f64, f64)> = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::Config("plot has no finite points".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y0 == y1 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = (y1 - y0) * 0.05;
    y0 -= pad;
    y1 += pad;

    let plot_w = W - MARGIN_L - MARGIN_R;
    let plot_h = H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_T + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        escape(&plot.title)
    ));

    // grid and ticks
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let gx = MARGIN_L + f * plot_w;
        let gy = MARGIN_T + plot_h - f * plot_h;
        svg.push_str(&format!(
            "<line x1=\"{gx:.1}\" y1=\"{MARGIN_T}\" x2=\"{gx:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_T + plot_h
        ));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{gy:.1}\" x2=\"{:.1}\" y2=\"{gy:.1}\" stroke=\"#ddd\"/>\n",
            MARGIN_L + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{gx:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_T + plot_h + 16.0,
            tick_label(x0 + f * (x1 - x0))
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
            MARGIN_L - 6.0,
            gy + 4.0,
            tick_label(y0 + f * (y1 - y0))
        ));
    }

    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{y}\" stroke=\"black\"/>\n<line x1=\"{MARGIN_L}\" y1=\"{y}\" x2=\"{x}\" y2=\"{y}\" stroke=\"black\"/>\n",
        y = MARGIN_T + plot_h,
        x = MARGIN_L + plot_w
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        H - 12.0,
        escape(&plot.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(&plot.y_label)
    ));

    // one polyline per series, plus point markers and a legend entry
    for (i, series) in plot.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        for c in &coords {
            let (px, py) = c.split_once(',').expect("formatted above");
            svg.push_str(&format!("<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"{color}\"/>\n"));
        }
        let ly = MARGIN_T + 14.0 + i as f64 * 18.0;
        let lx = W - MARGIN_R + 12.0;
        svg.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 18.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            lx + 24.0,
            ly + 4.0,
            escape(&series.name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(svg: &str, path: &Path) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}
