//! Horizontal bar chart of importances, with CI whiskers when available.

use std::fmt::Write;

use crate::error::{CliError, CliResult};
use crate::run::ResultRow;

const WIDTH: f64 = 640.0;
const BAR_H: f64 = 22.0;
const GAP: f64 = 8.0;
const LEFT: f64 = 120.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG: bars sorted by importance (largest on top), a zero line,
/// labelled axes, and whiskers only for rows with both finite-or-infinite
/// confidence bounds. Infinite bounds are clipped to the plot area.
pub fn render_svg(rows: &[ResultRow], title: &str) -> CliResult<String> {
    if rows.is_empty() {
        return Err(CliError::runtime("nothing to plot: no feature rows"));
    }
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| b.importance.0.total_cmp(&a.importance.0));

    // value range covers bars, finite CI ends and zero
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for r in &sorted {
        for v in [Some(r.importance.0), r.conf_lower.map(|n| n.0), r.conf_upper.map(|n| n.0)].into_iter().flatten() {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (if lo < 0.0 { lo - pad } else { lo }, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let x = |v: f64| LEFT + (v.clamp(lo, hi) - lo) / (hi - lo) * plot_w;
    let n = sorted.len() as f64;
    let plot_h = n * (BAR_H + GAP) + GAP;
    let height = TOP + plot_h + BOTTOM;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let x0 = x(0.0);
    for (i, r) in sorted.iter().enumerate() {
        let y = TOP + GAP + i as f64 * (BAR_H + GAP);
        let v = r.importance.0;
        let (bx, bw) = if v >= 0.0 { (x0, x(v) - x0) } else { (x(v), x0 - x(v)) };
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{bx:.2}" y="{y:.2}" width="{:.2}" height="{BAR_H}" fill="#4878a8"><title>{}: {}</title></rect>"##,
            bw.max(0.0),
            escape(&r.feature),
            r.importance.text()
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 6.0,
            y + BAR_H / 2.0,
            escape(&r.feature)
        );
        if let (Some(l), Some(u)) = (r.conf_lower, r.conf_upper) {
            if !l.0.is_nan() && !u.0.is_nan() {
                let (xl, xu, ym) = (x(l.0), x(u.0), y + BAR_H / 2.0);
                let _ = writeln!(
                    s,
                    r#"<g class="whisker" stroke="black"><line x1="{xl:.2}" y1="{ym:.2}" x2="{xu:.2}" y2="{ym:.2}"/><line x1="{xl:.2}" y1="{:.2}" x2="{xl:.2}" y2="{:.2}"/><line x1="{xu:.2}" y1="{:.2}" x2="{xu:.2}" y2="{:.2}"/></g>"#,
                    ym - 5.0,
                    ym + 5.0,
                    ym - 5.0,
                    ym + 5.0
                );
            }
        }
    }
    let axis_y = TOP + plot_h;
    let _ = writeln!(
        s,
        r##"<line class="zero" x1="{x0:.2}" y1="{TOP}" x2="{x0:.2}" y2="{axis_y:.2}" stroke="#333" stroke-dasharray="4 3"/>"##
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#, WIDTH - RIGHT);
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let tx = x(v);
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.2}" y1="{axis_y:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            axis_y + 4.0,
            axis_y + 16.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="{:.2}" y="{:.2}" text-anchor="middle">Importance</text>"#,
        LEFT + plot_w / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">Feature</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 1e4) {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Num;

    fn row(f: &str, v: f64, ci: Option<(f64, f64)>) -> ResultRow {
        ResultRow {
            feature: f.into(),
            importance: Num(v),
            se: None,
            statistic: None,
            p_value: None,
            conf_lower: ci.map(|c| Num(c.0)),
            conf_upper: ci.map(|c| Num(c.1)),
            rank: 0,
        }
    }

    fn attr(el: &str, name: &str) -> f64 {
        let key = format!(" {name}=\"");
        let start = el.find(&key).unwrap() + key.len();
        el[start..].split('"').next().unwrap().parse().unwrap()
    }

    #[test]
    fn one_bar_per_row_and_no_whiskers_without_ci() {
        let rows = [row("a", 1.0, None), row("b", 3.0, None), row("c", 0.0, None), row("d", 2.0, None)];
        let svg = render_svg(&rows, "t").unwrap();
        assert_eq!(svg.matches("<rect").count(), 4);
        assert_eq!(svg.matches("whisker").count(), 0);
        // sorted: b first
        let first = svg.lines().find(|l| l.contains("<rect")).unwrap();
        assert!(first.contains("<title>b: "));
    }

    #[test]
    fn negative_bars_sit_left_of_zero_and_whiskers_clip_infinity() {
        let rows = [row("neg", -1.0, Some((-1.5, f64::INFINITY))), row("pos", 2.0, Some((1.0, 3.0)))];
        let svg = render_svg(&rows, "t").unwrap();
        assert_eq!(svg.matches("class=\"whisker\"").count(), 2);
        let zero = svg.lines().find(|l| l.contains("class=\"zero\"")).unwrap();
        let x0 = attr(zero, "x1");
        let neg = svg.lines().find(|l| l.contains("<title>neg")).unwrap();
        assert!(attr(neg, "x") + attr(neg, "width") <= x0 + 1e-9);
        assert!(attr(neg, "x") < x0);
        assert!(!svg.contains("inf\""));
        assert!(render_svg(&[], "t").is_err());
    }
}
