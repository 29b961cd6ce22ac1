//! Static log-log plots written as plain SVG text.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Runs beyond this many are left out of the picture, not the statistics.
pub const MAX_DRAWN_RUNS: usize = 200;

pub struct Reference {
    /// Curve is `anchor_y·(n/anchor_n)^{−rate}`.
    pub rate: f64,
    pub anchor_n: f64,
    pub anchor_y: f64,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub runs: &'a [Vec<(f64, f64)>],
    pub mean: &'a [(f64, f64)],
    pub reference: Option<Reference>,
}

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, n: f64) -> f64 {
        LEFT + (n.log10() - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y.log10() - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn usable(p: &(f64, f64)) -> bool {
    p.0 > 0.0 && p.1 > 0.0 && p.1.is_finite()
}

fn polyline(out: &mut String, axes: &Axes, pts: &[(f64, f64)], style: &str) {
    // Non-positive gaps cannot be drawn on a log axis; they split the line.
    let mut seg = String::new();
    let flush = |seg: &mut String, out: &mut String| {
        if seg.matches(' ').count() >= 2 {
            let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, seg.trim_end());
        }
        seg.clear();
    };
    for p in pts {
        if usable(p) {
            let _ = write!(seg, "{:.2},{:.2} ", axes.px(p.0), axes.py(p.1));
        } else {
            flush(&mut seg, out);
        }
    }
    flush(&mut seg, out);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(plot: &Plot<'_>) -> String {
    let all = plot.runs.iter().take(MAX_DRAWN_RUNS).flatten().chain(plot.mean).filter(|p| usable(p));
    let (mut nx0, mut nx1, mut ny0, mut ny1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(n, y) in all {
        nx0 = nx0.min(n.log10());
        nx1 = nx1.max(n.log10());
        ny0 = ny0.min(y.log10());
        ny1 = ny1.max(y.log10());
    }
    if !nx0.is_finite() {
        (nx0, nx1, ny0, ny1) = (0.0, 1.0, 0.0, 1.0);
    }
    let axes = Axes {
        x0: nx0.floor(),
        x1: nx1.ceil().max(nx0.floor() + 1.0),
        y0: ny0.floor(),
        y1: ny1.ceil().max(ny0.floor() + 1.0),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(plot.title));
    let (xl, xr, yt, yb) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<rect x="{xl}" y="{yt}" width="{}" height="{}" fill="none" stroke="black"/>"#, xr - xl, yb - yt);
    let decade_step = |span: f64| ((span / 8.0).ceil()).max(1.0) as i64;
    let sx = decade_step(axes.x1 - axes.x0);
    for k in (axes.x0 as i64..=axes.x1 as i64).step_by(sx as usize) {
        let x = axes.px(10f64.powi(k as i32));
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{yt}" x2="{x:.2}" y2="{yb}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"#, yb + 16.0);
    }
    let sy = decade_step(axes.y1 - axes.y0);
    for k in (axes.y0 as i64..=axes.y1 as i64).step_by(sy as usize) {
        let y = axes.py(10f64.powi(k as i32));
        let _ = writeln!(s, r##"<line x1="{xl}" y1="{y:.2}" x2="{xr}" y2="{y:.2}" stroke="#dddddd"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"#, xl - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (xl + xr) / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">f(X_n) - f*</text>"#,
        (yt + yb) / 2.0,
        (yt + yb) / 2.0
    );
    let _ = writeln!(s, r#"<clipPath id="plot-area"><rect x="{xl}" y="{yt}" width="{}" height="{}"/></clipPath>"#, xr - xl, yb - yt);
    let _ = writeln!(s, r#"<g clip-path="url(#plot-area)">"#);
    for run in plot.runs.iter().take(MAX_DRAWN_RUNS) {
        polyline(&mut s, &axes, run, r#"stroke="steelblue" stroke-opacity="0.15" stroke-width="1""#);
    }
    polyline(&mut s, &axes, plot.mean, r#"stroke="navy" stroke-width="3""#);
    if let Some(r) = &plot.reference {
        let ns = [10f64.powf(axes.x0), 10f64.powf(axes.x1)];
        let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (n, r.anchor_y * (n / r.anchor_n).powf(-r.rate))).collect();
        polyline(&mut s, &axes, &pts, r#"stroke="crimson" stroke-width="1.5" stroke-dasharray="8 3 2 3""#);
    }
    let _ = writeln!(s, "</g>");
    if let Some(r) = &plot.reference {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" fill="crimson">reference slope -{:.4}</text>"#,
            xr - 8.0,
            yt + 16.0,
            r.rate
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_every_layer() {
        let mean: Vec<(f64, f64)> = (0..5).map(|k| (10f64.powi(k), 10f64.powi(-k))).collect();
        let runs = vec![mean.clone(), mean.iter().map(|&(n, y)| (n, 2.0 * y)).collect()];
        let svg = render(&Plot {
            title: "a < b",
            runs: &runs,
            mean: &mean,
            reference: Some(Reference {
                rate: 1.0,
                anchor_n: 1e3,
                anchor_y: 1e-3,
            }),
        });
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("stroke-opacity=\"0.15\"").count(), 2);
        assert!(svg.contains("stroke-width=\"3\""));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn zero_gaps_break_the_line() {
        let pts = vec![(1.0, 1.0), (10.0, 0.5), (100.0, 0.0), (1000.0, 0.1), (1e4, 0.05)];
        let svg = render(&Plot {
            title: "",
            runs: &[],
            mean: &pts,
            reference: None,
        });
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
