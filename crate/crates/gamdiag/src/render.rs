//! Minimal static SVG output for headless runs: lines, bands, points and
//! heatmap rasters. Interactive views are the web client's job.

use std::fmt::Write as _;

use gamdiag_core::grid::{GlyphGrid, GlyphPayload, HexSummaryGrid, SummarySeries};
use gamdiag_core::qq::BinnedQQ;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

struct Canvas {
    x: (f64, f64),
    y: (f64, f64),
    body: String,
}

impl Canvas {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if !(lo.is_finite() && hi.is_finite()) {
                (0.0, 1.0)
            } else if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Canvas {
            x: widen(x),
            y: widen(y),
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn points(&self, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
        let mut s = String::new();
        for (x, y) in pts.into_iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            let _ = write!(s, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        s.trim_end().to_string()
    }

    fn polyline(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, stroke: &str, width: f64) {
        let p = self.points(pts);
        let _ = writeln!(
            self.body,
            r#"<polyline points="{p}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    /// Filled region between `lower` and `upper` over shared `x`.
    fn band(&mut self, x: &[f64], lower: &[f64], upper: &[f64], fill: &str) {
        let fwd = x.iter().zip(lower).map(|(&a, &b)| (a, b));
        let back = x.iter().zip(upper).rev().map(|(&a, &b)| (a, b));
        let p = self.points(fwd.chain(back));
        let _ = writeln!(self.body, r#"<polygon points="{p}" fill="{fill}" fill-opacity="0.5" stroke="none"/>"#);
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{r}" fill="{fill}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}"/>"#,
            self.px(a.0),
            self.py(a.1),
            self.px(b.0),
            self.py(b.1)
        );
    }

    fn rect(&mut self, x: (f64, f64), y: (f64, f64), fill: &str, opacity: f64) {
        let (x0, x1) = (self.px(x.0), self.px(x.1));
        let (y0, y1) = (self.py(y.1), self.py(y.0));
        let _ = writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="{opacity:.3}"/>"#,
            (x1 - x0).max(0.0),
            (y1 - y0).max(0.0)
        );
    }

    fn polygon(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, fill: &str, stroke: &str) {
        let p = self.points(pts);
        let _ = writeln!(self.body, r#"<polygon points="{p}" fill="{fill}" stroke="{stroke}"/>"#);
    }

    fn finish(self, title: &str, xlab: &str, ylab: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        s.push_str(&self.body);
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            s,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        let _ = writeln!(s, r#"<text x="{l}" y="{}">{:.3}</text>"#, b + 14.0, self.x.0);
        let _ = writeln!(s, r#"<text x="{r}" y="{}" text-anchor="end">{:.3}</text>"#, b + 14.0, self.x.1);
        let _ = writeln!(s, r#"<text x="{}" y="{b}" text-anchor="end">{:.3}</text>"#, l - 4.0, self.y.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, l - 4.0, t + 10.0, self.y.1);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, b + 30.0, escape(xlab));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylab)
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, t - 14.0, escape(title));
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent<'a>(vals: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Blue-white-red for `t` in `[-1, 1]`: blue below zero, red above.
pub fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let (end, a) = if t < 0.0 { ((33.0, 102.0, 172.0), -t) } else { ((178.0, 24.0, 43.0), t) };
    let mix = |c: f64| (255.0 + (c - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

pub fn qq_svg(q: &BinnedQQ) -> String {
    let all = q.s.iter().chain(&q.s_bar);
    let (lo, hi) = extent(all);
    let mut c = Canvas::new(extent(&q.s_bar), (lo, hi));
    for b in &q.bands {
        c.band(&q.s_bar, &b.lower, &b.upper, "#9ecae1");
    }
    if let Some(e) = &q.envelope {
        c.band(&q.s_bar, &e.lo, &e.hi, "#bdbdbd");
    }
    c.segment((lo, lo), (hi, hi), "#888");
    c.polyline(q.s_bar.iter().copied().zip(q.s.iter().copied()), "black", 1.5);
    c.finish("QQ plot", "theoretical quantile", "residual quantile")
}

pub fn series_svg(s: &SummarySeries) -> String {
    let ys = s.s.iter().chain(&s.lo).chain(&s.hi).flatten();
    let mut c = Canvas::new(extent(&s.edges), extent(ys));
    for k in 0..s.b() {
        if let (Some(lo), Some(hi)) = (s.lo[k], s.hi[k]) {
            c.segment((s.centers[k], lo), (s.centers[k], hi), "#6baed6");
        }
        if let Some(v) = s.s[k] {
            let outside = matches!((s.lo[k], s.hi[k]), (Some(lo), Some(hi)) if v < lo || v > hi);
            c.circle(s.centers[k], v, 3.0, if outside { "#b2182b" } else { "black" });
        }
    }
    c.finish(&format!("{} by bin", s.summary.name()), "covariate", s.summary.name())
}

pub fn hex_svg(g: &HexSummaryGrid) -> String {
    let xs: Vec<f64> = g.hexes.iter().map(|h| h.center[0]).collect();
    let ys: Vec<f64> = g.hexes.iter().map(|h| h.center[1]).collect();
    let (rx, ry) = (g.lattice.w * g.lattice.scale[0], g.lattice.w * g.lattice.scale[1]);
    let (x0, x1) = extent(&xs);
    let (y0, y1) = extent(&ys);
    let mut c = Canvas::new((x0 - rx, x1 + rx), (y0 - ry, y1 + ry));
    // pointy-top hexagon with circumradius w/√3 in lattice units
    let radius = 1.0 / 3f64.sqrt();
    for h in &g.hexes {
        let corners = (0..6).map(|k| {
            let a = std::f64::consts::PI / 3.0 * k as f64 + std::f64::consts::PI / 6.0;
            (h.center[0] + rx * radius * a.cos(), h.center[1] + ry * radius * a.sin())
        });
        let fill = match h.z {
            Some(z) if !h.flag => diverging(z / 3.0),
            _ => "#d9d9d9".to_string(),
        };
        c.polygon(corners, &fill, "white");
    }
    c.finish(&format!("standardised {}", g.summary.name()), "x1", "x2")
}

pub fn glyph_svg(g: &GlyphGrid) -> String {
    let (x0, x1) = extent(g.cells.iter().flat_map(|c| [&c.bounds[0], &c.bounds[1]]));
    let (y0, y1) = extent(g.cells.iter().flat_map(|c| [&c.bounds[2], &c.bounds[3]]));
    let mut c = Canvas::new((x0, x1), (y0, y1));
    for cell in &g.cells {
        let [a0, a1, b0, b1] = cell.bounds;
        c.rect((a0, a1), (b0, b1), "none", 0.0);
        let inset = |t: f64, lo: f64, hi: f64| lo + (hi - lo) * (0.1 + 0.8 * t);
        match &cell.payload {
            GlyphPayload::Worm { z, d, half_width, outside } => {
                let lim = d.iter().chain(half_width).fold(1e-9f64, |m, v| m.max(v.abs()));
                let (zlo, zhi) = extent(z);
                let span = (zhi - zlo).max(1e-9);
                let pt = |i: usize| {
                    (
                        inset((z[i] - zlo) / span, a0, a1),
                        inset(0.5 + 0.5 * d[i] / lim, b0, b1),
                    )
                };
                c.segment((inset(0.0, a0, a1), inset(0.5, b0, b1)), (inset(1.0, a0, a1), inset(0.5, b0, b1)), "#ccc");
                for i in 1..z.len() {
                    let stroke = if outside[i] || outside[i - 1] { "black" } else { "#969696" };
                    c.segment(pt(i - 1), pt(i), stroke);
                }
            }
            GlyphPayload::Kde { density } => {
                let peak = density.iter().cloned().fold(1e-12f64, f64::max);
                let m = density.len().max(2) - 1;
                let pts: Vec<(f64, f64)> = density
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (inset(i as f64 / m as f64, a0, a1), inset(v / peak, b0, b1)))
                    .collect();
                c.polyline(pts, "black", 1.0);
            }
            GlyphPayload::Empty => {}
        }
    }
    c.finish("residual glyphs", "x1", "x2")
}

/// Raster of an `x`-major grid; `None` cells stay blank. Colours are
/// diverging around zero, scaled by the largest magnitude, with optional
/// per-cell opacity.
pub fn heatmap_svg(
    x: &[f64],
    y: &[f64],
    values: &[Option<f64>],
    opacity: Option<&[f64]>,
    title: &str,
    labels: (&str, &str),
) -> String {
    let half = |v: &[f64], i: usize| -> (f64, f64) {
        let lo = if i == 0 { v[0] - (v.get(1).copied().unwrap_or(v[0] + 1.0) - v[0]) / 2.0 } else { (v[i - 1] + v[i]) / 2.0 };
        let hi = if i + 1 == v.len() {
            v[i] + (v[i] - v.get(i.wrapping_sub(1)).copied().unwrap_or(v[i] - 1.0)) / 2.0
        } else {
            (v[i] + v[i + 1]) / 2.0
        };
        (lo, hi)
    };
    let (xl, xh) = (half(x, 0).0, half(x, x.len() - 1).1);
    let (yl, yh) = (half(y, 0).0, half(y, y.len() - 1).1);
    let mut c = Canvas::new((xl, xh), (yl, yh));
    let scale = values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for i in 0..x.len() {
        for j in 0..y.len() {
            let k = i * y.len() + j;
            if let Some(v) = values[k] {
                let a = opacity.map_or(1.0, |o| o[k]);
                c.rect(half(x, i), half(y, j), &diverging(v / scale), a);
            }
        }
    }
    c.finish(title, labels.0, labels.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_ends() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(-1.0), "#2166ac");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(f64::NAN), "#ffffff");
    }

    #[test]
    fn heatmap_cells() {
        let svg = heatmap_svg(&[0.0, 1.0], &[0.0, 1.0, 2.0], &[Some(1.0), None, Some(-1.0), Some(0.0), None, None], None, "t", ("x", "y"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // three filled cells plus the background and frame
        assert_eq!(svg.matches("<rect").count(), 5);
    }
}
