//! Static SVG panels, one per task row of `U`.

use std::fmt::Write;
use std::str::FromStr;

use ntd_core::matrix::Mat;

use crate::Usage;

/// Qualitative palette; task `c` always uses entry `c % len`.
pub const PALETTE: [(u8, u8, u8); 8] = [
    (31, 119, 180),
    (214, 39, 40),
    (44, 160, 44),
    (148, 103, 189),
    (255, 127, 14),
    (23, 190, 207),
    (227, 119, 194),
    (127, 127, 127),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// One bar per column, inputs and outputs in separate groups.
    Bar,
    /// Inputs as a `width x height` image, row-major.
    Grid { width: usize, height: usize },
    /// Inputs as `series` rows of `window` lags.
    Series { series: usize, window: usize },
}

impl FromStr for Layout {
    type Err = Usage;

    fn from_str(s: &str) -> Result<Self, Usage> {
        let bad = || Usage(format!("layout {s:?} is not bar, grid:WxH or series:S:W"));
        let num = |t: &str| t.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad);
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["bar"] => Ok(Layout::Bar),
            ["grid", dims] => {
                let (w, h) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
                Ok(Layout::Grid {
                    width: num(w)?,
                    height: num(h)?,
                })
            }
            ["series", sr, w] => Ok(Layout::Series {
                series: num(sr)?,
                window: num(w)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Layout::Bar => write!(f, "bar"),
            Layout::Grid { width, height } => write!(f, "grid:{width}x{height}"),
            Layout::Series { series, window } => write!(f, "series:{series}:{window}"),
        }
    }
}

impl Layout {
    pub fn check(&self, input_width: usize) -> Result<(), Usage> {
        let cells = match *self {
            Layout::Bar => return Ok(()),
            Layout::Grid { width, height } => width * height,
            Layout::Series { series, window } => series * window,
        };
        if cells != input_width {
            return Err(Usage(format!(
                "layout {self} has {cells} input cells but the decomposition has {input_width} inputs"
            )));
        }
        Ok(())
    }
}

pub fn hex(rgb: (u8, u8, u8)) -> String {
    format!("#{:02x}{:02x}{:02x}", rgb.0, rgb.1, rgb.2)
}

/// Linear blend from white at `value = 0` to `rgb` at `value = max`.
pub fn shade(rgb: (u8, u8, u8), value: f64, max: f64) -> String {
    let t = if max > 0.0 {
        (value / max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mix = |c: u8| (255.0 + t * (f64::from(c) - 255.0)).round() as u8;
    hex((mix(rgb.0), mix(rgb.1), mix(rgb.2)))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const MARGIN: f64 = 16.0;
const TITLE: f64 = 22.0;
const BAR_W: f64 = 8.0;
const BAR_H: f64 = 80.0;
const GAP: f64 = 24.0;
const LABEL: f64 = 14.0;

struct Canvas {
    body: String,
}

impl Canvas {
    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let _ = write!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}""#
        );
        if let Some(s) = stroke {
            let _ = write!(self.body, r#" stroke="{s}" stroke-width="0.5""#);
        }
        self.body.push_str("/>\n");
    }

    fn text(&mut self, x: f64, y: f64, size: f64, fill: &str, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" fill="{fill}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    /// Bars of one block with height and shade scaled to `max`; returns the width used.
    fn bars(
        &mut self,
        x0: f64,
        y0: f64,
        values: &[f64],
        max: f64,
        rgb: (u8, u8, u8),
        caption: &str,
    ) -> f64 {
        let base = y0 + BAR_H;
        self.rect(
            x0,
            y0,
            values.len() as f64 * BAR_W,
            BAR_H,
            "#ffffff",
            Some("#cccccc"),
        );
        for (i, &v) in values.iter().enumerate() {
            let h = if max > 0.0 {
                BAR_H * (v / max).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let x = x0 + i as f64 * BAR_W;
            self.rect(x, base - h, BAR_W, h, &shade(rgb, v, max), None);
        }
        let width = values.len() as f64 * BAR_W;
        self.text(
            x0 + width / 2.0,
            base + LABEL - 2.0,
            10.0,
            "#333333",
            "middle",
            caption,
        );
        width
    }

    /// Heatmap of `rows x cols` cells, cell `(r, c)` holding `values[r * cols + c]`.
    fn heatmap(
        &mut self,
        (x0, y0): (f64, f64),
        (rows, cols): (usize, usize),
        cell: (f64, f64),
        values: &[f64],
        max: f64,
        rgb: (u8, u8, u8),
    ) {
        for r in 0..rows {
            for c in 0..cols {
                let v = values[r * cols + c];
                self.rect(
                    x0 + c as f64 * cell.0,
                    y0 + r as f64 * cell.1,
                    cell.0,
                    cell.1,
                    &shade(rgb, v, max),
                    None,
                );
            }
        }
        let _ = writeln!(
            self.body,
            r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999999" stroke-width="0.5"/>"##,
            cols as f64 * cell.0,
            rows as f64 * cell.1
        );
    }
}

/// Panel contents shared by the SVG and the JSON summary.
pub struct PanelInfo {
    pub task: usize,
    pub color: String,
    pub members: usize,
}

/// Renders every row of `u`. Input and output blocks are shaded against
/// their own maximum over all tasks so panels compare directly.
pub fn render(
    u: &Mat,
    input_width: usize,
    layout: Layout,
    members: &[usize],
) -> Result<(String, Vec<PanelInfo>), Usage> {
    layout.check(input_width)?;
    if input_width > u.cols() {
        return Err(Usage(format!(
            "input width {input_width} exceeds the {} columns of U",
            u.cols()
        )));
    }
    let output_width = u.cols() - input_width;
    let block_max = |range: std::ops::Range<usize>| {
        (0..u.rows())
            .flat_map(|c| u.row(c)[range.clone()].to_vec())
            .fold(0.0f64, f64::max)
    };
    let in_max = block_max(0..input_width);
    let out_max = block_max(input_width..u.cols());

    let (in_w, in_h) = match layout {
        Layout::Bar => (input_width as f64 * BAR_W, BAR_H + LABEL),
        Layout::Grid { width, height } => {
            let cell = (200.0 / width.max(height) as f64).clamp(4.0, 16.0);
            (width as f64 * cell, height as f64 * cell + LABEL)
        }
        Layout::Series { series, window } => {
            let cw = (360.0 / window as f64).clamp(3.0, 16.0);
            (window as f64 * cw, series as f64 * 14.0 + LABEL)
        }
    };
    let out_block_w = output_width as f64 * BAR_W;
    let panel_w = in_w + GAP + out_block_w;
    let panel_h = TITLE + in_h.max(BAR_H + LABEL);
    let width = (2.0 * MARGIN + panel_w).max(160.0);
    let height = 2.0 * MARGIN + u.rows() as f64 * (panel_h + MARGIN);

    let mut cv = Canvas {
        body: String::new(),
    };
    let mut panels = Vec::new();
    for c in 0..u.rows() {
        let rgb = PALETTE[c % PALETTE.len()];
        let row = u.row(c);
        let x0 = MARGIN;
        let y0 = MARGIN + c as f64 * (panel_h + MARGIN);
        let n = members.get(c).copied().unwrap_or(0);
        cv.text(
            x0,
            y0 + 14.0,
            13.0,
            &hex(rgb),
            "start",
            &format!("task {c} ({n} units)"),
        );
        let top = y0 + TITLE;
        let (inputs, outputs) = row.split_at(input_width);
        match layout {
            Layout::Bar => {
                cv.bars(x0, top, inputs, in_max, rgb, "inputs");
            }
            Layout::Grid { width, height } => {
                let cell = (in_w / width as f64, (in_h - LABEL) / height as f64);
                cv.heatmap((x0, top), (height, width), cell, inputs, in_max, rgb);
                cv.text(
                    x0 + in_w / 2.0,
                    top + in_h - 2.0,
                    10.0,
                    "#333333",
                    "middle",
                    "inputs",
                );
            }
            Layout::Series { series, window } => {
                let cell = (in_w / window as f64, (in_h - LABEL) / series as f64);
                cv.heatmap((x0, top), (series, window), cell, inputs, in_max, rgb);
                cv.text(
                    x0 + in_w / 2.0,
                    top + in_h - 2.0,
                    10.0,
                    "#333333",
                    "middle",
                    "inputs (series x lag)",
                );
            }
        }
        let ox = x0 + in_w + GAP;
        cv.bars(ox, top, outputs, out_max, rgb, "outputs");
        if layout != Layout::Bar {
            for j in 0..output_width {
                cv.text(
                    ox + (j as f64 + 0.5) * BAR_W,
                    top - 2.0,
                    7.0,
                    "#333333",
                    "middle",
                    &j.to_string(),
                );
            }
        }
        panels.push(PanelInfo {
            task: c,
            color: hex(rgb),
            members: n,
        });
    }

    let svg = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n{}</svg>\n",
        cv.body
    );
    Ok((svg, panels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_parse_and_print() {
        for s in ["bar", "grid:20x20", "series:3:36"] {
            assert_eq!(s.parse::<Layout>().unwrap().to_string(), s);
        }
        for s in ["", "grid:20", "grid:0x4", "series:3", "pie", "bar:1"] {
            assert!(s.parse::<Layout>().is_err(), "{s}");
        }
    }

    #[test]
    fn shade_endpoints() {
        assert_eq!(shade((10, 20, 30), 0.0, 1.0), "#ffffff");
        assert_eq!(shade((10, 20, 30), 1.0, 1.0), "#0a141e");
        assert_eq!(shade((10, 20, 30), 5.0, 0.0), "#ffffff");
    }

    #[test]
    fn grid_cell_count_must_match() {
        let u = Mat::zeros(2, 403);
        assert!(render(
            &u,
            400,
            Layout::Grid {
                width: 20,
                height: 20
            },
            &[]
        )
        .is_ok());
        assert!(render(
            &u,
            400,
            Layout::Grid {
                width: 20,
                height: 19
            },
            &[]
        )
        .is_err());
    }
}
