//! Deterministic SVG line charts for label-efficiency curves.
//!
//! Hand-rolled SVG keeps the output byte-stable (fixed float formatting, no
//! timestamps, no library version strings), which the rerun-determinism
//! tests rely on. One chart shows accuracy against label fraction with one
//! polyline per dataset.

use crate::{validation, CliResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Fixed series palette; cycles when a chart has more datasets than colors.
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// One line on the chart: a dataset's accuracy per label fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(fraction, accuracy_percent)` pairs; sorted by fraction on render.
    pub points: Vec<(f64, f64)>,
}

/// Render a chart to SVG text.
///
/// Every series needs at least two points — a single-point "curve" almost
/// always means a truncated sweep, so it is rejected with the series name
/// rather than silently drawn as a dot.
pub fn render_chart(title: &str, series: &[Series]) -> CliResult<String> {
    if series.is_empty() {
        return Err(validation("plot: no series to draw"));
    }
    let mut series: Vec<Series> = series.to_vec();
    series.sort_by(|a, b| a.name.cmp(&b.name));
    for s in &mut series {
        if s.points.len() < 2 {
            return Err(validation(format!(
                "plot: series `{}` has {} point(s); need at least 2 fractions",
                s.name,
                s.points.len()
            )));
        }
        s.points
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite fractions"));
    }

    // Fixed x domain (fractions live in (0, 1]); y snaps down to a decade
    // below the worst accuracy so flat high-90s curves do not look like
    // horizontal lines glued to the top edge.
    let y_min_data = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .fold(f64::INFINITY, f64::min);
    let y_min = ((y_min_data / 10.0).floor() * 10.0 - 10.0).clamp(0.0, 90.0);
    let y_max = 100.0;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |f: f64| MARGIN_LEFT + f * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));

    // Gridlines and y labels every 10 points of accuracy.
    let mut tick = y_min;
    while tick <= y_max + 1e-9 {
        let y = y_of(tick);
        svg.push_str(&format!(
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{tick:.0}</text>\n",
            MARGIN_LEFT - 8.0,
            y + 4.0
        ));
        tick += 10.0;
    }
    // X ticks at every 20% of labels.
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let x = x_of(f);
        svg.push_str(&format!(
            "  <line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{:.0}%</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            f * 100.0
        ));
    }
    // Axis titles.
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">labelled fraction</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">accuracy (%)</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // Series: polyline, point markers, legend entry.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(f, v)| format!("{:.2},{:.2}", x_of(f), y_of(v.clamp(y_min, y_max))))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(f, v) in &s.points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(f),
                y_of(v.clamp(y_min, y_max))
            ));
        }
        let ly = MARGIN_TOP + 14.0 + i as f64 * 18.0;
        let lx = MARGIN_LEFT + plot_w + 16.0;
        svg.push_str(&format!(
            "  <rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            ly - 10.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"12\">{}</text>\n",
            lx + 18.0,
            escape(&s.name)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Minimal XML text escaping for labels.
fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
