//! Parametric diagram images: ten outline/fill shapes rendered with random
//! position, scale and rotation jitter onto a small grayscale grid.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NtdError, Result};
use crate::lnn::Dataset;
use crate::matrix::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rectangle,
    Cross,
    Line,
    TwoLines,
    Triangle,
    Diamond,
    Arrow,
    Ribbon,
    Heart,
    Face,
}

impl Shape {
    pub const ALL: [Shape; 10] = [
        Shape::Rectangle,
        Shape::Cross,
        Shape::Line,
        Shape::TwoLines,
        Shape::Triangle,
        Shape::Diamond,
        Shape::Arrow,
        Shape::Ribbon,
        Shape::Heart,
        Shape::Face,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Rectangle => "rectangle",
            Shape::Cross => "cross",
            Shape::Line => "line",
            Shape::TwoLines => "two_lines",
            Shape::Triangle => "triangle",
            Shape::Diamond => "diamond",
            Shape::Arrow => "arrow",
            Shape::Ribbon => "ribbon",
            Shape::Heart => "heart",
            Shape::Face => "face",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = NtdError;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|sh| sh.name() == s.trim())
            .ok_or_else(|| NtdError::Invalid(format!("unknown diagram class {s:?}")))
    }
}

type Pt = (f64, f64);

/// Grayscale canvas in [0, 1]; shapes are described in the square [-1, 1]^2.
struct Canvas {
    size: usize,
    px: Vec<f64>,
    center: Pt,
    scale: f64,
    rot: f64,
}

impl Canvas {
    fn new(size: usize, center: Pt, scale: f64, rot: f64) -> Self {
        Self {
            size,
            px: vec![0.0; size * size],
            center,
            scale,
            rot,
        }
    }

    /// Shape coordinates to pixel coordinates (y grows downward).
    fn map(&self, (x, y): Pt) -> Pt {
        let (s, c) = self.rot.sin_cos();
        let (rx, ry) = (x * c - y * s, x * s + y * c);
        let half = self.size as f64 / 2.0;
        (
            half + (self.center.0 + rx * self.scale) * half,
            half - (self.center.1 + ry * self.scale) * half,
        )
    }

    fn plot(&mut self, col: usize, row: usize, value: f64) {
        let p = &mut self.px[row * self.size + col];
        *p = p.max(value.clamp(0.0, 1.0));
    }

    fn stroke(&mut self, a: Pt, b: Pt) {
        let (a, b) = (self.map(a), self.map(b));
        let width = 0.55;
        for row in 0..self.size {
            for col in 0..self.size {
                let p = (col as f64 + 0.5, row as f64 + 0.5);
                let d = seg_dist(p, a, b);
                // soft edge one pixel wide
                self.plot(col, row, 1.0 - (d - width).max(0.0));
            }
        }
    }

    fn polyline(&mut self, pts: &[Pt], closed: bool) {
        for w in pts.windows(2) {
            self.stroke(w[0], w[1]);
        }
        if closed && pts.len() > 2 {
            self.stroke(pts[pts.len() - 1], pts[0]);
        }
    }

    fn fill(&mut self, pts: &[Pt]) {
        let mapped: Vec<Pt> = pts.iter().map(|&p| self.map(p)).collect();
        for row in 0..self.size {
            for col in 0..self.size {
                if inside((col as f64 + 0.5, row as f64 + 0.5), &mapped) {
                    self.plot(col, row, 1.0);
                }
            }
        }
        self.polyline(pts, true);
    }

    fn ring(&mut self, center: Pt, r: f64, steps: usize) {
        let pts: Vec<Pt> = (0..steps)
            .map(|s| {
                let a = std::f64::consts::TAU * s as f64 / steps as f64;
                (center.0 + r * a.cos(), center.1 + r * a.sin())
            })
            .collect();
        self.polyline(&pts, true);
    }
}

fn seg_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

fn inside(p: Pt, poly: &[Pt]) -> bool {
    let mut hit = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            hit = !hit;
        }
        j = i;
    }
    hit
}

fn draw(shape: Shape, c: &mut Canvas) {
    match shape {
        Shape::Rectangle => c.polyline(&[(-0.7, -0.5), (0.7, -0.5), (0.7, 0.5), (-0.7, 0.5)], true),
        Shape::Cross => {
            c.stroke((-0.7, 0.0), (0.7, 0.0));
            c.stroke((0.0, -0.7), (0.0, 0.7));
        }
        Shape::Line => c.stroke((-0.7, -0.7), (0.7, 0.7)),
        Shape::TwoLines => {
            c.stroke((-0.7, 0.35), (0.7, 0.35));
            c.stroke((-0.7, -0.35), (0.7, -0.35));
        }
        Shape::Triangle => c.polyline(&[(-0.7, -0.6), (0.7, -0.6), (0.0, 0.7)], true),
        Shape::Diamond => c.polyline(&[(0.0, -0.75), (0.6, 0.0), (0.0, 0.75), (-0.6, 0.0)], true),
        Shape::Arrow => {
            c.stroke((-0.7, 0.0), (0.7, 0.0));
            c.stroke((0.7, 0.0), (0.35, 0.35));
            c.stroke((0.7, 0.0), (0.35, -0.35));
        }
        Shape::Ribbon => {
            c.fill(&[(-0.7, 0.45), (0.0, 0.0), (-0.7, -0.45)]);
            c.fill(&[(0.7, 0.45), (0.0, 0.0), (0.7, -0.45)]);
        }
        Shape::Heart => {
            let pts: Vec<Pt> = (0..32)
                .map(|s| {
                    let t = std::f64::consts::TAU * s as f64 / 32.0;
                    let x = 16.0 * t.sin().powi(3);
                    let y = 13.0 * t.cos()
                        - 5.0 * (2.0 * t).cos()
                        - 2.0 * (3.0 * t).cos()
                        - (4.0 * t).cos();
                    (x / 22.0, (y + 2.5) / 22.0)
                })
                .collect();
            c.fill(&pts);
        }
        Shape::Face => {
            c.ring((0.0, 0.0), 0.75, 24);
            c.plot_disc((-0.3, 0.25));
            c.plot_disc((0.3, 0.25));
            c.polyline(
                &[(-0.35, -0.25), (-0.15, -0.4), (0.15, -0.4), (0.35, -0.25)],
                false,
            );
        }
    }
}

impl Canvas {
    fn plot_disc(&mut self, center: Pt) {
        let (cx, cy) = self.map(center);
        for row in 0..self.size {
            for col in 0..self.size {
                let d = ((col as f64 + 0.5 - cx).powi(2) + (row as f64 + 0.5 - cy).powi(2)).sqrt();
                self.plot(col, row, 1.0 - (d - 0.6).max(0.0));
            }
        }
    }
}

/// Renders one image of `shape`, row-major, values in [0, 1].
pub fn render<R: Rng>(shape: Shape, size: usize, rng: &mut R) -> Vec<f64> {
    let center = (rng.random_range(-0.12..0.12), rng.random_range(-0.12..0.12));
    let scale = rng.random_range(0.7..0.9);
    let rot = rng.random_range(-0.15..0.15);
    let mut canvas = Canvas::new(size, center, scale, rot);
    draw(shape, &mut canvas);
    canvas.px
}

#[derive(Debug, Clone)]
pub struct DiagramSet {
    pub data: Dataset,
    pub classes: Vec<Shape>,
    pub size: usize,
    /// Class index of every sample.
    pub labels: Vec<usize>,
}

/// `per_class` images of each class, interleaved class by class, with one-hot
/// targets over `classes` in the given order.
pub fn gen_diagrams(
    classes: &[Shape],
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<DiagramSet> {
    if per_class < 1 || classes.is_empty() || size < 4 {
        return Err(NtdError::Invalid(
            "need per_class >= 1, at least one class, and size >= 4".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = per_class * classes.len();
    let mut x = Mat::zeros(n, size * size);
    let mut y = Mat::zeros(n, classes.len());
    let mut labels = Vec::with_capacity(n);
    let mut s = 0;
    for _ in 0..per_class {
        for (c, &shape) in classes.iter().enumerate() {
            x.row_mut(s).copy_from_slice(&render(shape, size, &mut rng));
            y[(s, c)] = 1.0;
            labels.push(c);
            s += 1;
        }
    }
    Ok(DiagramSet {
        data: Dataset::new(x, y)?,
        classes: classes.to_vec(),
        size,
        labels,
    })
}

/// Plain (P2) PGM with maxval 255.
pub fn write_pgm<W: Write>(mut out: W, pixels: &[f64], size: usize) -> Result<()> {
    writeln!(out, "P2\n{size} {size}\n255")?;
    for row in pixels.chunks(size) {
        let line: Vec<String> = row
            .iter()
            .map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}
