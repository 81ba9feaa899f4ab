//! Minimal self-contained SVG line plots of trace columns against time.

use std::fmt::Write;

use chatterfree::{EventKind, SimTrace};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn event_color(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Crossing => "#7f7f7f",
        EventKind::SlidingEntry => "#2ca02c",
        EventKind::SlidingExit => "#d62728",
        EventKind::RegimeChange => "#9467bd",
        EventKind::Grazing => "#ff7f0e",
    }
}

/// Pads a degenerate range so it maps to a finite span.
fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders `columns` (name, state index) of `trace`, with a tick on the
/// time axis for every event.
pub fn render_svg(trace: &SimTrace, columns: &[(String, usize)]) -> String {
    let (t0, t1) = match (trace.samples.first(), trace.samples.last()) {
        (Some(a), Some(b)) if b.t > a.t => (a.t, b.t),
        (Some(a), _) => (a.t, a.t + 1.0),
        _ => (0.0, 1.0),
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &trace.samples {
        for &(_, i) in columns {
            lo = lo.min(s.state[i]);
            hi = hi.max(s.state[i]);
        }
    }
    let (y0, y1) = span(lo, hi);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |t: f64| LEFT + (t - t0) / (t1 - t0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=TICKS {
        let f = k as f64 / TICKS as f64;
        let t = t0 + f * (t1 - t0);
        let y = y0 + f * (y1 - y0);
        let (x, yy) = (px(t), py(y));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + plot_h,
            TOP + plot_h + 18.0,
            label(t)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ccc"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0,
            label(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    for e in &trace.events {
        let x = px(e.t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"><title>{} at {:.6}: {} -&gt; {}</title></line>"#,
            TOP + plot_h - 10.0,
            TOP + plot_h,
            event_color(e.kind),
            e.kind,
            e.t,
            xml_escape(&e.from),
            xml_escape(&e.to)
        );
    }
    for (n, (name, i)) in columns.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut points = String::new();
        for s in &trace.samples {
            let _ = write!(points, "{:.2},{:.2} ", px(s.t), py(s.state[*i]));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        );
        let ly = TOP + 10.0 + 18.0 * n as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chatterfree::TraceSample;

    #[test]
    fn single_sample_renders() {
        let trace = SimTrace {
            samples: vec![TraceSample {
                t: 0.0,
                state: vec![1.0, 2.0],
                regime: "q1".into(),
            }],
            ..Default::default()
        };
        let svg = render_svg(&trace, &[("a".into(), 0), ("b".into(), 1)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_range_is_padded() {
        let (a, b) = span(3.0, 3.0);
        assert!(a < 3.0 && b > 3.0);
    }
}
