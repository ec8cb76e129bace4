//! Minimal self-contained SVG line charts and histograms.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed y range; `None` fits the data.
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fits `[lo, hi]` with some padding, widening degenerate ranges.
fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            x1 - x0,
            y1 - y0
        );
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r##"<line x1="{xp:.2}" y1="{y1}" x2="{xp:.2}" y2="{y0}" stroke="#e0e0e0"/>"##
            );
            let _ = writeln!(
                out,
                r##"<line x1="{x0}" y1="{yp:.2}" x2="{x1}" y2="{yp:.2}" stroke="#e0e0e0"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{xp:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y1 + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                x0 - 6.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            H - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }
}

impl LineChart {
    pub fn render(&self) -> String {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut xl, mut xh, mut yl, mut yh) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            xl = xl.min(x);
            xh = xh.max(x);
            yl = yl.min(y);
            yh = yh.max(y);
        }
        let frame = Frame {
            x: span(xl, xh),
            y: self.y_range.unwrap_or_else(|| span(yl, yh)),
        };
        let mut out = String::new();
        frame.axes(&mut out, &self.title, &self.x_label, &self.y_label);
        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                coords.join(" ")
            );
            for c in &coords {
                let (cx, cy) = c.split_once(',').expect("formatted pair");
                let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = W - RIGHT + 12.0;
            let _ = writeln!(
                out,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                lx + 20.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}">{}</text>"#,
                lx + 26.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub title: String,
    pub x_label: String,
    /// `(lo, hi, count)`.
    pub bins: Vec<(f64, f64, usize)>,
}

impl Histogram {
    pub fn render(&self) -> String {
        let xl = self.bins.first().map_or(0.0, |b| b.0);
        let xh = self.bins.last().map_or(1.0, |b| b.1);
        let ymax = self.bins.iter().map(|b| b.2).max().unwrap_or(1).max(1) as f64;
        let frame = Frame {
            x: span(xl, xh),
            y: (0.0, ymax * 1.05),
        };
        let mut out = String::new();
        frame.axes(&mut out, &self.title, &self.x_label, "count");
        for &(lo, hi, c) in &self.bins {
            let (x0, x1) = (frame.px(lo), frame.px(hi));
            let (y0, y1) = (frame.py(c as f64), frame.py(0.0));
            let _ = writeln!(
                out,
                r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
                (x1 - x0).max(0.0),
                (y1 - y0).max(0.0)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}
