//! Minimal self-contained SVG charts of rejection rate against sample size.

use super::{CellSummary, TestKind};
use std::collections::BTreeSet;
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;

fn series_style(test: TestKind) -> (&'static str, &'static str) {
    match test {
        TestKind::Standardized => ("#1f77b4", ""),
        TestKind::Effective => ("#ff7f0e", "8 4"),
        TestKind::Parametric => ("#2ca02c", "2 3"),
        TestKind::Sandwich => ("#d62728", "10 3 2 3"),
    }
}

/// Renders one scenario: rejection rate versus log(n), one polyline per
/// test, with a horizontal line at the nominal level.
pub fn rejection_plot_svg(scenario: &str, cells: &[CellSummary], alpha: f64) -> String {
    let cells: Vec<&CellSummary> = cells.iter().filter(|c| c.scenario == scenario).collect();
    let ns: BTreeSet<usize> = cells.iter().map(|c| c.n).collect();
    let (log_min, log_max) = match (ns.iter().next(), ns.iter().next_back()) {
        (Some(&lo), Some(&hi)) if hi > lo => ((lo as f64).ln(), (hi as f64).ln()),
        (Some(&lo), _) => ((lo as f64).ln() - 0.5, (lo as f64).ln() + 0.5),
        _ => (1.0, 2.0),
    };
    let y_max = cells
        .iter()
        .map(|c| c.reject_rate)
        .fold(2.5 * alpha, f64::max)
        * 1.1;

    let x_of = |n: usize| {
        MARGIN_LEFT
            + ((n as f64).ln() - log_min) / (log_max - log_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    };
    let y_of = |rate: f64| HEIGHT - MARGIN_BOTTOM - rate / y_max * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/><text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        scenario
    );
    // axes
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = write!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    for &n in &ns {
        let x = x_of(n);
        let _ = write!(
            svg,
            r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{n}</text>"#,
            y0 + 5.0,
            y0 + 20.0
        );
    }
    for k in 0..=4 {
        let rate = y_max * k as f64 / 4.0;
        let y = y_of(rate);
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{rate:.3}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">sample size (log scale)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    // nominal level
    let y_alpha = y_of(alpha);
    let _ = write!(
        svg,
        r##"<line x1="{x0}" y1="{y_alpha}" x2="{x1}" y2="{y_alpha}" stroke="#888" stroke-dasharray="3 3"/><text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#555">nominal {alpha}</text>"##,
        x1 + 6.0,
        y_alpha + 4.0
    );

    let mut legend_row = 0;
    for test in TestKind::ALL {
        let mut points: Vec<(usize, f64)> = cells
            .iter()
            .filter(|c| c.test == test)
            .map(|c| (c.n, c.reject_rate))
            .collect();
        if points.is_empty() {
            continue;
        }
        points.sort_by_key(|p| p.0);
        let (color, dash) = series_style(test);
        let path: Vec<String> = points
            .iter()
            .map(|&(n, r)| format!("{:.2},{:.2}", x_of(n), y_of(r)))
            .collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash_attr}/>"#,
            path.join(" ")
        );
        for &(n, r) in &points {
            let _ = write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.4" fill="{color}"/>"#,
                x_of(n),
                y_of(r)
            );
        }
        let ly = MARGIN_TOP + 14.0 + legend_row as f64 * 18.0;
        let _ = write!(
            svg,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.8"{dash_attr}/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            x1 + 8.0,
            x1 + 36.0,
            x1 + 42.0,
            ly + 4.0,
            test.name()
        );
        legend_row += 1;
    }
    svg.push_str("</svg>");
    svg
}
