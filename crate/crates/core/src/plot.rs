//! Static log-y line charts written directly as SVG.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiment::MetricsTable;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the series on a shared linear x axis and a log10 y axis.
/// Points with non-positive or non-finite values are dropped.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series]) -> Result<String> {
    let kept: Vec<(&str, Vec<(f64, f64)>)> = series
        .iter()
        .map(|s| {
            let pts = s.points.iter().copied().filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0).collect();
            (s.label.as_str(), pts)
        })
        .collect();
    let all: Vec<(f64, f64)> = kept.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("no positive values to plot on a log scale".into()));
    }
    let x_min = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut x_max = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let lo = all.iter().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min).floor() as i32;
    let mut hi = all.iter().map(|p| p.1.log10()).fold(f64::NEG_INFINITY, f64::max).ceil() as i32;
    if hi <= lo {
        hi = lo + 1;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| TOP + (hi as f64 - y.log10()) / (hi - lo) as f64 * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##
    );

    let step = ((hi - lo) as f64 / 10.0).ceil().max(1.0) as i32;
    let mut e = lo;
    while e <= hi {
        let y = sy(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.1}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
        e += step;
    }
    for k in 0..=5 {
        let x = x_min + (x_max - x_min) * k as f64 / 5.0;
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0,
            tick_label(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );

    for (k, (label, pts)) in kept.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick_label(x: f64) -> String {
    if x == x.round() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.3}")
    }
}

/// One series per (table, column). Tables without data rows are rejected.
pub fn plot_tables(tables: &[(String, MetricsTable)], columns: &[String], title: &str) -> Result<String> {
    if tables.is_empty() || columns.is_empty() {
        return Err(Error::InvalidArgument("need at least one table and one column".into()));
    }
    let mut series = Vec::new();
    for (name, table) in tables {
        if table.rows.is_empty() {
            return Err(Error::InvalidArgument(format!("{name}: no data rows")));
        }
        for column in columns {
            let points = table
                .series(column)
                .ok_or_else(|| Error::InvalidArgument(format!("{name}: no column {column:?}")))?;
            let label = if tables.len() == 1 { column.clone() } else { format!("{name}: {column}") };
            series.push(Series { label, points });
        }
    }
    line_chart_svg(title, "t", &series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> Series {
        Series { label: "gap <x>".into(), points: (1..=50).map(|t| (t as f64, 1.0 / t as f64)).collect() }
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let a = line_chart_svg("demo", "t", &[decay()]).unwrap();
        assert_eq!(a, line_chart_svg("demo", "t", &[decay()]).unwrap());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("gap &lt;x&gt;"));
        assert!(a.contains("1e-2") && a.contains("1e0"));
    }

    #[test]
    fn nothing_positive_is_an_error() {
        let s = Series { label: "z".into(), points: vec![(1.0, 0.0), (2.0, -1.0)] };
        assert!(line_chart_svg("t", "t", &[s]).is_err());
    }

    #[test]
    fn empty_table_is_rejected() {
        let table = MetricsTable { metadata: vec![], header: vec!["t".into(), "a".into()], rows: vec![] };
        assert!(plot_tables(&[("f".into(), table)], &["a".into()], "x").is_err());
    }
}
