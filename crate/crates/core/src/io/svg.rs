//! Reliability diagrams as standalone SVG. Every bar carries its bin values
//! as data attributes so the plot can be checked against the CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{BinMode, BinnedReliability};

use super::report::fmt_f64;

const WIDTH: f64 = 400.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn px(v: f64) -> String {
    format!("{v:.3}")
}

pub fn render_reliability_svg(rel: &BinnedReliability) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let m = rel.bins.len().max(1);
    let bar_w = plot_w / m as f64;
    let (x_label, y_label) = match rel.mode {
        BinMode::Confidence => ("confidence", "accuracy"),
        BinMode::Uncertainty => ("uncertainty", "error"),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" data-mode="{mode}" data-total="{total}">"#,
        w = WIDTH,
        h = HEIGHT,
        mode = rel.mode.name(),
        total = rel.total
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    for (i, b) in rel.bins.iter().enumerate() {
        let rate = if b.outcome_rate.is_finite() {
            b.outcome_rate.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let h = rate * plot_h;
        let x = MARGIN + i as f64 * bar_w;
        let y = HEIGHT - MARGIN - h;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{}" y="{}" width="{}" height="{}" fill="#4c72b0" stroke="#1f3b63" data-bin="{i}" data-count="{}" data-mean-stat="{}" data-outcome-rate="{}"/>"##,
            px(x),
            px(y),
            px(bar_w),
            px(h),
            b.count,
            fmt_f64(b.mean_stat),
            fmt_f64(b.outcome_rate),
        );
    }
    let _ = writeln!(
        s,
        r##"<line class="identity" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#555555" stroke-dasharray="4 4"/>"##,
        x0 = px(MARGIN),
        y0 = px(HEIGHT - MARGIN),
        x1 = px(WIDTH - MARGIN),
        y1 = px(MARGIN)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"##,
        m = px(MARGIN),
        pw = px(plot_w),
        ph = px(plot_h)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14">{x_label}</text>"#,
        px(WIDTH / 2.0),
        px(HEIGHT - MARGIN / 3.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 {x} {y})">{y_label}</text>"#,
        x = px(MARGIN / 3.0),
        y = px(HEIGHT / 2.0)
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.2}</text>"#,
            px(MARGIN + v * plot_w),
            px(HEIGHT - MARGIN + 14.0)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.2}</text>"#,
            px(MARGIN - 4.0),
            px(HEIGHT - MARGIN - v * plot_h + 3.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_reliability_svg(rel: &BinnedReliability, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_reliability_svg(rel)).map_err(|e| Error::io(path, e))
}

/// `(bin, count, mean_stat, outcome_rate)` recovered from the bar attributes.
pub fn parse_svg_bins(svg: &str) -> Vec<(usize, usize, f64, f64)> {
    fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
        let key = format!(" {name}=\"");
        let start = tag.find(&key)? + key.len();
        let len = tag[start..].find('"')?;
        Some(&tag[start..start + len])
    }
    svg.lines()
        .filter(|l| l.contains("class=\"bar\""))
        .filter_map(|l| {
            Some((
                attr(l, "data-bin")?.parse().ok()?,
                attr(l, "data-count")?.parse().ok()?,
                attr(l, "data-mean-stat")?.parse().ok()?,
                attr(l, "data-outcome-rate")?.parse().ok()?,
            ))
        })
        .collect()
}
