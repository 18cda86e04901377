//! A small SVG plotting layer: axes, lines, scatter, heat maps and
//! marching-squares contours.

use std::fmt::Write;
use std::path::Path;

use crate::error::Result;

pub type Rgb = [u8; 3];

pub const PALETTE: [Rgb; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

const VIRIDIS: [Rgb; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

fn lerp_colors(stops: &[Rgb], t: f64) -> Rgb {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + f * (f64::from(b) - f64::from(a))).round() as u8;
    [
        mix(stops[i][0], stops[i + 1][0]),
        mix(stops[i][1], stops[i + 1][1]),
        mix(stops[i][2], stops[i + 1][2]),
    ]
}

/// Sequential map on `[0, 1]`.
pub fn viridis(t: f64) -> Rgb {
    lerp_colors(&VIRIDIS, t)
}

/// Blue-white-red map on `[-1, 1]`.
pub fn diverging(t: f64) -> Rgb {
    lerp_colors(&[[33, 102, 172], [247, 247, 247], [178, 24, 43]], (t + 1.0) / 2.0)
}

pub fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Roughly `target` round tick positions inside `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// `[lo, hi]` of the finite values, padded when degenerate.
pub fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// A data region mapped onto a pixel box.
#[derive(Debug, Clone, Copy)]
pub struct Panel {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub xlim: (f64, f64),
    pub ylim: (f64, f64),
}

impl Panel {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.xlim.0) / (self.xlim.1 - self.xlim.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.ylim.0) / (self.ylim.1 - self.ylim.0) * self.height
    }
}

pub struct Axes<'a> {
    pub title: &'a str,
    pub xlabel: &'a str,
    pub ylabel: &'a str,
}

pub struct Figure {
    width: f64,
    height: f64,
    body: String,
}

impl Figure {
    pub fn new(width: f64, height: f64) -> Self {
        Figure {
            width,
            height,
            body: String::new(),
        }
    }

    /// Draws a frame with ticks and labels and returns its panel.
    pub fn panel(&mut self, bbox: [f64; 4], xlim: (f64, f64), ylim: (f64, f64), axes: &Axes) -> Panel {
        let [left, top, width, height] = bbox;
        let p = Panel {
            left,
            top,
            width,
            height,
            xlim,
            ylim,
        };
        let b = &mut self.body;
        let _ = writeln!(
            b,
            r#"<rect x="{left:.1}" y="{top:.1}" width="{width:.1}" height="{height:.1}" fill="none" stroke="black"/>"#
        );
        for t in ticks(xlim.0, xlim.1, 5) {
            let x = p.px(t);
            let y = top + height;
            let _ = writeln!(
                b,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
                y + 4.0
            );
            let _ = writeln!(
                b,
                r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                y + 15.0,
                tick_label(t)
            );
        }
        for t in ticks(ylim.0, ylim.1, 5) {
            let y = p.py(t);
            let _ = writeln!(
                b,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{left:.1}" y2="{y:.1}" stroke="black"/>"#,
                left - 4.0
            );
            let _ = writeln!(
                b,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
                left - 6.0,
                y + 3.5,
                tick_label(t)
            );
        }
        self.text(left + width / 2.0, top - 8.0, axes.title, 13.0, "middle");
        self.text(left + width / 2.0, top + height + 32.0, axes.xlabel, 11.0, "middle");
        let (x, y) = (left - 42.0, top + height / 2.0);
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="11" text-anchor="middle" transform="rotate(-90 {x:.1} {y:.1})">{}</text>"#,
            escape(axes.ylabel)
        );
        p
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn clip_open(&mut self, p: &Panel) {
        let _ = writeln!(
            self.body,
            r#"<svg x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" viewBox="{:.1} {:.1} {:.1} {:.1}" overflow="hidden">"#,
            p.left, p.top, p.width, p.height, p.left, p.top, p.width, p.height
        );
    }

    fn clip_close(&mut self) {
        self.body.push_str("</svg>\n");
    }

    pub fn line(&mut self, p: &Panel, xs: &[f64], ys: &[f64], color: Rgb, width: f64, dashed: bool) {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.1},{:.1}", p.px(*x), p.py(*y)))
            .collect();
        if pts.is_empty() {
            return;
        }
        self.clip_open(p);
        let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="{width}"{dash}/>"#,
            pts.join(" "),
            hex(color)
        );
        self.clip_close();
    }

    /// Step outline of a histogram with the given bin edges.
    pub fn steps(&mut self, p: &Panel, edges: &[f64], heights: &[f64], color: Rgb, dashed: bool) {
        let mut xs = Vec::with_capacity(2 * heights.len());
        let mut ys = Vec::with_capacity(2 * heights.len());
        for (i, h) in heights.iter().enumerate() {
            xs.extend([edges[i], edges[i + 1]]);
            ys.extend([*h, *h]);
        }
        self.line(p, &xs, &ys, color, 1.5, dashed);
    }

    pub fn scatter(&mut self, p: &Panel, points: &[(f64, f64)], colors: &[Rgb], radius: f64) {
        self.clip_open(p);
        for ((x, y), c) in points.iter().zip(colors) {
            if x.is_finite() && y.is_finite() {
                let _ = writeln!(
                    self.body,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="{radius}" fill="{}" fill-opacity="0.7"/>"#,
                    p.px(*x),
                    p.py(*y),
                    hex(*c)
                );
            }
        }
        self.clip_close();
    }

    /// Filled cells; `colors` is row-major with `ny` rows of `nx` cells,
    /// row 0 at the bottom. `None` cells stay blank.
    pub fn cells(&mut self, p: &Panel, nx: usize, ny: usize, colors: &[Option<Rgb>]) {
        let (w, h) = (p.width / nx as f64, p.height / ny as f64);
        for j in 0..ny {
            for i in 0..nx {
                if let Some(c) = colors[j * nx + i] {
                    let _ = writeln!(
                        self.body,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        p.left + i as f64 * w,
                        p.top + p.height - (j + 1) as f64 * h,
                        w + 0.05,
                        h + 0.05,
                        hex(c)
                    );
                }
            }
        }
    }

    /// Iso-lines of `values` (`ys.len()` rows of `xs.len()` samples).
    #[allow(clippy::too_many_arguments)]
    pub fn contours(
        &mut self,
        p: &Panel,
        xs: &[f64],
        ys: &[f64],
        values: &[f64],
        levels: &[f64],
        color: Rgb,
        dashed: bool,
    ) {
        self.clip_open(p);
        let dash = if dashed { r#" stroke-dasharray="4,2""# } else { "" };
        for level in levels {
            let mut d = String::new();
            for ((x0, y0), (x1, y1)) in marching_squares(xs, ys, values, *level) {
                let _ = write!(d, "M{:.1},{:.1}L{:.1},{:.1}", p.px(x0), p.py(y0), p.px(x1), p.py(y1));
            }
            if !d.is_empty() {
                let _ = writeln!(
                    self.body,
                    r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.2"{dash}/>"#,
                    hex(color)
                );
            }
        }
        self.clip_close();
    }

    /// Legend entries stacked in the panel's top-right corner.
    pub fn legend(&mut self, p: &Panel, entries: &[(&str, Rgb, bool)]) {
        let x = p.left + p.width - 120.0;
        for (k, (label, color, dashed)) in entries.iter().enumerate() {
            let y = p.top + 14.0 + 14.0 * k as f64;
            let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                self.body,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"{dash}/>"#,
                x + 18.0,
                hex(*color)
            );
            self.text(x + 22.0, y + 3.5, label, 10.0, "start");
        }
    }

    /// Vertical color bar to the right of `p`; `map` takes `[0, 1]`.
    pub fn colorbar(&mut self, p: &Panel, lo: f64, hi: f64, map: &dyn Fn(f64) -> Rgb, label: &str) {
        let x = p.left + p.width + 12.0;
        let steps = 50;
        let h = p.height / steps as f64;
        for k in 0..steps {
            let t = (k as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x:.1}" y="{:.2}" width="12" height="{:.2}" fill="{}"/>"#,
                p.top + p.height - (k + 1) as f64 * h,
                h + 0.05,
                hex(map(t))
            );
        }
        self.text(x + 16.0, p.top + p.height, &tick_label(lo), 10.0, "start");
        self.text(x + 16.0, p.top + 8.0, &tick_label(hi), 10.0, "start");
        self.text(x + 6.0, p.top - 6.0, label, 10.0, "middle");
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }

    pub fn save(self, path: &Path) -> Result<()> {
        super::wetb::write_atomic(path, self.finish().as_bytes())
    }
}

type Segment = ((f64, f64), (f64, f64));

/// Line segments of the `level` iso-line of a sampled field. Saddle cells
/// are resolved by the cell mean.
pub fn marching_squares(xs: &[f64], ys: &[f64], values: &[f64], level: f64) -> Vec<Segment> {
    let (nx, ny) = (xs.len(), ys.len());
    let mut out = Vec::new();
    if nx < 2 || ny < 2 || values.len() != nx * ny {
        return out;
    }
    let v = |i: usize, j: usize| values[j * nx + i];
    let cross = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        let t = if b.2 == a.2 { 0.5 } else { (level - a.2) / (b.2 - a.2) };
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    };
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // Corners counter-clockwise from bottom-left.
            let c = [
                (xs[i], ys[j], v(i, j)),
                (xs[i + 1], ys[j], v(i + 1, j)),
                (xs[i + 1], ys[j + 1], v(i + 1, j + 1)),
                (xs[i], ys[j + 1], v(i, j + 1)),
            ];
            if c.iter().any(|k| !k.2.is_finite()) {
                continue;
            }
            let mask = c
                .iter()
                .enumerate()
                .fold(0u8, |m, (k, p)| m | (u8::from(p.2 > level) << k));
            // Edge k joins corner k and corner k + 1.
            let e = |k: usize| cross(c[k], c[(k + 1) % 4]);
            let centre_above = c.iter().map(|k| k.2).sum::<f64>() / 4.0 > level;
            let pairs: &[(usize, usize)] = match mask {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 if centre_above => &[(0, 1), (2, 3)],
                5 => &[(3, 0), (1, 2)],
                10 if centre_above => &[(3, 0), (1, 2)],
                _ => &[(0, 1), (2, 3)],
            };
            for (a, b) in pairs {
                out.push((e(*a), e(*b)));
            }
        }
    }
    out
}
