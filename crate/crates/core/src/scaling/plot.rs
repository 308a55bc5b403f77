use std::fmt::Write;

use super::{extrapolate, PowerLawFit, ScalingSeries};

/// One series of a log-log plot, with its fitted line if any.
pub struct PlotSeries<'a> {
    pub series: &'a ScalingSeries,
    pub fit: Option<&'a PowerLawFit>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Log-log scatter of error against examples per label, with +-std error
/// bars and fitted lines. Fitted lines extend to `x_max` when given.
pub fn svg_plot(series: &[PlotSeries<'_>], x_max: Option<f64>) -> String {
    let points = series.iter().flat_map(|s| &s.series.points);
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, 0.0f64, f64::INFINITY, 0.0f64);
    for p in points {
        lo_x = lo_x.min(p.n);
        hi_x = hi_x.max(p.n);
        let low = if p.error - p.std > 0.0 { p.error - p.std } else { p.error };
        lo_y = lo_y.min(low);
        hi_y = hi_y.max(p.error + p.std);
    }
    if let Some(x) = x_max {
        hi_x = hi_x.max(x);
        for f in series.iter().filter_map(|s| s.fit) {
            lo_y = lo_y.min(extrapolate(f, x));
        }
    }
    if !lo_x.is_finite() {
        (lo_x, hi_x, lo_y, hi_y) = (1.0, 10.0, 0.01, 1.0);
    }
    let (x0, x1) = (lo_x.log10().floor(), hi_x.log10().ceil().max(lo_x.log10().floor() + 1.0));
    let (y0, y1) = (lo_y.log10().floor(), hi_y.log10().ceil().max(lo_y.log10().floor() + 1.0));
    let px = |n: f64| MARGIN + (n.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |e: f64| HEIGHT - MARGIN - (e.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(d));
        let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{top}" x2="{x:.1}" y2="{bottom}" stroke="#ddd"/>"##);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" text-anchor="middle">1e{d}</text>"#, bottom + 18.0);
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(d));
        let _ = writeln!(svg, r##"<line x1="{left}" y1="{y:.1}" x2="{right}" y2="{y:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">1e{d}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">examples per label</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">test error</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for p in &s.series.points {
            let (x, y) = (px(p.n), py(p.error));
            if p.std > 0.0 {
                let lo = (p.error - p.std).max(10f64.powf(y0));
                let _ = writeln!(
                    svg,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    py(lo),
                    py(p.error + p.std)
                );
            }
            let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{color}"/>"#);
        }
        if let Some(f) = s.fit {
            let from = s.series.points.iter().map(|p| p.n).fold(f64::INFINITY, f64::min);
            let to = x_max.unwrap_or_else(|| s.series.points.iter().map(|p| p.n).fold(0.0, f64::max));
            if from.is_finite() {
                let _ = writeln!(
                    svg,
                    r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-dasharray="5,3"/>"#,
                    px(from),
                    py(extrapolate(f, from)),
                    px(to),
                    py(extrapolate(f, to))
                );
            }
        }
        let legend = match s.fit {
            Some(f) => format!("{} (c0 = {:.3}, rho = {:.3})", s.series.label, f.c0, f.rho),
            None => s.series.label.clone(),
        };
        let ly = top + 16.0 + 16.0 * k as f64;
        let _ = writeln!(svg, r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#, right - 220.0, ly - 4.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{}</text>"#, right - 210.0, escape(&legend));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
