//! Minimal static SVG charts: line, bar and heatmap.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(title: &str, width: f64, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    s
}

/// Range padded so that flat data still gets a visible axis.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn axes(s: &mut String, x_label: &str, y_label: &str, (y_lo, y_hi): (f64, f64)) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

/// One polyline per series, with a legend on the right.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = open(title, WIDTH, HEIGHT);
    let points = || series.iter().flat_map(|(_, pts)| pts.iter());
    let (x_lo, x_hi) = {
        let (lo, hi) = points().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 1.0, lo + 1.0)
        } else {
            (0.0, 1.0)
        }
    };
    let y_range = bounds(points().map(|p| p.1));
    axes(&mut s, x_label, y_label, y_range);
    let px = |x: f64| LEFT + (WIDTH - RIGHT - LEFT) * (x - x_lo) / (x_hi - x_lo);
    let py = |y: f64| HEIGHT - BOTTOM - (HEIGHT - BOTTOM - TOP) * (y - y_range.0) / (y_range.1 - y_range.0);
    let ticks: Vec<f64> = {
        let mut xs: Vec<f64> = points().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let step = xs.len().div_ceil(12).max(1);
        xs.into_iter().step_by(step).collect()
    };
    for x in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x),
            HEIGHT - BOTTOM + 16.0
        );
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 18.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars with an optional note printed above each bar.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64, Option<String>)]) -> String {
    let mut s = open(title, WIDTH, HEIGHT);
    let y_range = bounds(bars.iter().map(|b| b.1).chain([0.0]));
    axes(&mut s, "", y_label, y_range);
    let py = |y: f64| HEIGHT - BOTTOM - (HEIGHT - BOTTOM - TOP) * (y - y_range.0) / (y_range.1 - y_range.0);
    let slot = (WIDTH - RIGHT - LEFT) / bars.len().max(1) as f64;
    for (i, (label, value, note)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let (top, bottom) = (py(value.max(0.0)), py(value.min(0.0)));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.7,
            (bottom - top).max(0.5),
            PALETTE[0]
        );
        let cx = x + slot * 0.35;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            escape(label)
        );
        if let Some(note) = note {
            let _ = writeln!(
                s,
                r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                top - 4.0,
                escape(note)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Square matrix of values in [-1, 1]; `None` cells are hatched grey.
pub fn heatmap(title: &str, labels: &[String], values: &[Vec<Option<f64>>]) -> String {
    let n = labels.len().max(1);
    let cell = 52.0;
    let margin = 170.0;
    let size = margin + cell * n as f64 + 20.0;
    let mut s = open(title, size, size);
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (margin + cell * j as f64, margin + cell * i as f64);
            let (fill, text) = match v {
                Some(v) => (diverging(*v), format!("{v:.2}")),
                None => ("#bbbbbb".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, label) in labels.iter().enumerate() {
        let c = margin + cell * i as f64 + cell / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            margin - 6.0,
            c + 4.0,
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="start" transform="rotate(-45 {c} {})">{}</text>"#,
            margin - 6.0,
            margin - 6.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Blue for negative, red for positive, white at zero.
fn diverging(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let fade = |a: f64| (255.0 - (255.0 - a) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(214.0), fade(39.0), fade(40.0))
    } else {
        (fade(31.0), fade(119.0), fade(180.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_svg_documents() {
        let line = line_chart("t", "x", "y", &[("a<b".into(), vec![(1.0, 0.1), (2.0, 0.2)])]);
        let bars = bar_chart("t", "y", &[("x".into(), -0.5, Some("n=3".into()))]);
        let heat = heatmap("t", &["a".into(), "b".into()], &[vec![Some(1.0), None], vec![None, Some(1.0)]]);
        for svg in [&line, &bars, &heat] {
            assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        }
        assert!(line.contains("a&lt;b"));
        assert!(heat.contains("n/a"));
    }

    #[test]
    fn diverging_scale_endpoints() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#d62728");
        assert_eq!(diverging(-1.0), "#1f77b4");
    }

    #[test]
    fn empty_inputs_still_render() {
        assert!(line_chart("t", "x", "y", &[]).contains("</svg>"));
        assert!(bar_chart("t", "y", &[]).contains("</svg>"));
    }
}
