//! Minimal self-contained SVG line charts.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

pub struct Panel<'a> {
    pub title: String,
    pub series: Vec<Series<'a>>,
}

const WIDTH: f64 = 800.0;
const PANEL_H: f64 = 170.0;
const MARGIN: f64 = 48.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertically stacked panels sharing the x axis (sample index).
pub fn line_chart(title: &str, panels: &[Panel<'_>]) -> String {
    let height = 30.0 + panels.len() as f64 * PANEL_H;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="18" font-size="14">{}</text>"#, esc(title));
    for (p, panel) in panels.iter().enumerate() {
        let top = 30.0 + p as f64 * PANEL_H;
        let (x0, x1) = (MARGIN, WIDTH - 12.0);
        let (y0, y1) = (top + 18.0, top + PANEL_H - 22.0);
        let finite = panel.series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 0.5, hi.max(0.0) + 0.5) };
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{}</text>"#, top + 12.0, esc(&panel.title));
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(svg, r#"<text x="4" y="{}">{hi:.3}</text>"#, y0 + 10.0);
        let _ = writeln!(svg, r#"<text x="4" y="{y1}">{lo:.3}</text>"#);
        for (k, s) in panel.series.iter().enumerate() {
            let n = s.values.len().max(2) - 1;
            let pts: Vec<String> = s
                .values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, v)| {
                    let x = x0 + (x1 - x0) * i as f64 / n as f64;
                    let y = y1 - (y1 - y0) * (v - lo) / (hi - lo);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                s.color,
                pts.join(" ")
            );
            let lx = x1 - 150.0 + 75.0 * k as f64;
            let _ = writeln!(
                svg,
                r#"<text x="{lx}" y="{}" fill="{}">{}</text>"#,
                top + 12.0,
                s.color,
                esc(s.label)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
