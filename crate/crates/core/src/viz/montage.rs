//! Activation-trace movie frames and rollout grids.

use rayon::prelude::*;

use super::font::{text_width, GLYPH_H};
use super::image::{gray, Rgb, RgbImage, BLACK};
use crate::env::{Rollout, StepRecord, FRAME_HEIGHT, FRAME_WIDTH};
use crate::error::{Error, Result};
use crate::nn::{ActivationTrace, NetworkSpec};
use crate::tensor::Tensor;

const PAD: usize = 6;
const GAP: usize = 2;
const LABEL_H: usize = GLYPH_H + 3;
const MAX_GRID_COLS: usize = 16;
const TARGET_CELL: usize = 18;
const FC_COLS: usize = 64;
const FC_CELL: usize = 4;
const BAR_W: usize = 12;
const BAR_H: usize = 60;
const BACKGROUND: Rgb = [24, 24, 28];
const LABEL: Rgb = [200, 200, 200];
const BAR: Rgb = [150, 150, 150];
const BAR_ARGMAX: Rgb = [230, 60, 50];

/// Placement of one channel grid: `cols × rows` maps, each `map_h × map_w`
/// scaled by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPane {
    pub x: usize,
    pub y: usize,
    pub channels: usize,
    pub cols: usize,
    pub rows: usize,
    pub map_h: usize,
    pub map_w: usize,
    pub scale: usize,
}

impl GridPane {
    fn new(channels: usize, map_h: usize, map_w: usize, x: usize, y: usize) -> Self {
        let cols = channels.clamp(1, MAX_GRID_COLS);
        let scale = (TARGET_CELL / map_h.max(map_w).max(1)).max(1);
        GridPane { x, y, channels, cols, rows: channels.div_ceil(cols), map_h, map_w, scale }
    }

    pub fn width(&self) -> usize {
        self.cols * (self.map_w * self.scale + GAP) - GAP
    }

    pub fn height(&self) -> usize {
        self.rows * (self.map_h * self.scale + GAP) - GAP
    }

    /// Top-left pixel of channel `c`.
    pub fn cell_origin(&self, c: usize) -> (usize, usize) {
        let (r, k) = (c / self.cols, c % self.cols);
        (self.x + k * (self.map_w * self.scale + GAP), self.y + r * (self.map_h * self.scale + GAP))
    }
}

/// Fixed pixel layout of a trace frame: the RGB frame on the left, then top
/// to bottom on the right the observation channels, one grid per conv
/// layer, the fc strip and the per-action output bars.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontageLayout {
    pub width: usize,
    pub height: usize,
    pub frame_origin: (usize, usize),
    pub obs: GridPane,
    pub conv: Vec<GridPane>,
    pub fc: GridPane,
    pub bars_origin: (usize, usize),
    pub n_actions: usize,
}

impl MontageLayout {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        let x = PAD + FRAME_WIDTH + PAD;
        let mut y = PAD + LABEL_H;
        let [c, h, w] = spec.input;
        let obs = GridPane::new(c, h, w, x, y);
        y += obs.height() + PAD + LABEL_H;
        let mut conv = Vec::new();
        for ((hh, ww), l) in spec.conv_output_sizes()?.into_iter().zip(&spec.conv_layers) {
            let pane = GridPane::new(l.out_channels, hh, ww, x, y);
            y += pane.height() + PAD + LABEL_H;
            conv.push(pane);
        }
        let fc_cols = spec.fc_width.clamp(1, FC_COLS);
        let fc = GridPane { x, y, channels: spec.fc_width, cols: fc_cols, rows: spec.fc_width.div_ceil(fc_cols), map_h: 1, map_w: 1, scale: FC_CELL };
        y += fc.height() + PAD + LABEL_H;
        let bars_origin = (x, y);
        y += BAR_H + PAD;
        let bars_w = spec.n_actions * (BAR_W + GAP);
        let right = [obs.width(), fc.width(), bars_w].into_iter().chain(conv.iter().map(GridPane::width)).max().unwrap_or(0);
        Ok(MontageLayout {
            width: x + right + PAD,
            height: y.max(PAD + FRAME_HEIGHT + PAD),
            frame_origin: (PAD, PAD),
            obs,
            conv,
            fc,
            bars_origin,
            n_actions: spec.n_actions,
        })
    }
}

/// Min/max of every traced layer over a whole rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRanges {
    pub conv: Vec<(f32, f32)>,
    pub fc: (f32, f32),
    pub output: (f32, f32),
}

fn range_of<'a>(ts: impl Iterator<Item = &'a Tensor>) -> (f32, f32) {
    ts.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), t| (lo.min(t.min()), hi.max(t.max())))
}

impl ActivationRanges {
    pub fn from_traces(traces: &[ActivationTrace]) -> Result<Self> {
        let first = traces.first().ok_or(Error::MissingTrace)?;
        Ok(ActivationRanges {
            conv: (0..first.conv.len()).map(|i| range_of(traces.iter().map(|t| &t.conv[i]))).collect(),
            fc: range_of(traces.iter().map(|t| &t.fc)),
            output: range_of(traces.iter().map(|t| &t.head_q)),
        })
    }
}

/// Min-max scaling into `[0, 1]`; a degenerate range maps to 0.5.
pub fn normalize(v: f32, (lo, hi): (f32, f32)) -> f64 {
    if hi > lo {
        f64::from((v - lo) / (hi - lo))
    } else {
        0.5
    }
}

fn draw_maps(img: &mut RgbImage, pane: &GridPane, data: &[f32], range: Option<(f32, f32)>) {
    let per = pane.map_h * pane.map_w;
    for c in 0..pane.channels {
        let (ox, oy) = pane.cell_origin(c);
        for y in 0..pane.map_h {
            for x in 0..pane.map_w {
                let v = data[c * per + y * pane.map_w + x];
                let g = match range {
                    Some(r) => normalize(v, r),
                    None => f64::from(v),
                };
                img.fill_rect(ox + x * pane.scale, oy + y * pane.scale, pane.scale, pane.scale, gray(g));
            }
        }
    }
}

fn label(img: &mut RgbImage, pane: &GridPane, s: &str) {
    img.text(pane.x, pane.y - LABEL_H + 1, s, LABEL);
}

/// One movie frame for a recorded step.
pub fn render_trace_frame(
    step: &StepRecord,
    trace: &ActivationTrace,
    ranges: &ActivationRanges,
    layout: &MontageLayout,
) -> Result<RgbImage> {
    if trace.conv.len() != layout.conv.len() || trace.head_q.len() != layout.n_actions || trace.fc.len() != layout.fc.channels {
        return Err(Error::shape("render_trace_frame", "trace matching the layout", "different layer sizes"));
    }
    let mut img = RgbImage::new(layout.width, layout.height, BACKGROUND);
    let (fx, fy) = layout.frame_origin;
    img.blit(&RgbImage::from_frame(&step.frame), fx, fy, 1);

    label(&mut img, &layout.obs, "OBS");
    draw_maps(&mut img, &layout.obs, step.obs.data(), None);
    for (i, pane) in layout.conv.iter().enumerate() {
        label(&mut img, pane, &format!("CONV{}", i + 1));
        draw_maps(&mut img, pane, trace.conv[i].data(), Some(ranges.conv[i]));
    }
    label(&mut img, &layout.fc, "FC");
    draw_maps(&mut img, &layout.fc, trace.fc.data(), Some(ranges.fc));

    let (bx, by) = layout.bars_origin;
    img.text(bx, by - LABEL_H + 1, "OUT", LABEL);
    let q = trace.head_q.data();
    let best = crate::tensor::argmax(q);
    for (a, &v) in q.iter().enumerate() {
        let h = (normalize(v, ranges.output) * BAR_H as f64).round() as usize;
        let x = bx + a * (BAR_W + GAP);
        img.fill_rect(x, by, BAR_W, BAR_H, BLACK);
        img.fill_rect(x, by + BAR_H - h, BAR_W, h, if a == best { BAR_ARGMAX } else { BAR });
    }
    Ok(img)
}

/// Every frame of a rollout's activation movie, normalized per rollout.
pub fn render_trace_frames(rollout: &Rollout, spec: &NetworkSpec) -> Result<Vec<RgbImage>> {
    let traces = rollout.traces.as_ref().ok_or(Error::MissingTrace)?;
    if traces.is_empty() {
        return Ok(Vec::new());
    }
    let layout = MontageLayout::new(spec)?;
    let ranges = ActivationRanges::from_traces(traces)?;
    rollout.steps.par_iter().zip(traces).map(|(s, t)| render_trace_frame(s, t, &ranges, &layout)).collect()
}

/// Tiles the frame at `step` of every rollout; `cells[row][col]` with rows
/// for runs and columns for algorithms. Rollouts that ended earlier show
/// their last frame; empty rollouts show black.
pub fn render_rollout_grid(cells: &[Vec<&Rollout>], row_labels: &[String], col_labels: &[String], step: usize) -> Result<RgbImage> {
    let rows = cells.len();
    let cols = cells.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("rollout grid"));
    }
    if cells.iter().any(|r| r.len() != cols) || row_labels.len() != rows || col_labels.len() != cols {
        return Err(Error::Config("rollout grid rows and labels must be rectangular".into()));
    }
    let left = PAD + row_labels.iter().map(|s| text_width(s)).max().unwrap_or(0) + PAD;
    let top = PAD + LABEL_H;
    let tile_w = FRAME_WIDTH + PAD;
    let tile_h = FRAME_HEIGHT + PAD;
    let mut img = RgbImage::new(left + cols * tile_w, top + rows * tile_h, BACKGROUND);
    for (c, l) in col_labels.iter().enumerate() {
        img.text(left + c * tile_w, PAD, l, LABEL);
    }
    for (r, row) in cells.iter().enumerate() {
        img.text(PAD, top + r * tile_h + FRAME_HEIGHT / 2, &row_labels[r], LABEL);
        for (c, rollout) in row.iter().enumerate() {
            let (x, y) = (left + c * tile_w, top + r * tile_h);
            match rollout.steps.get(step).or(rollout.steps.last()) {
                Some(s) => img.blit(&RgbImage::from_frame(&s.frame), x, y, 1),
                None => img.fill_rect(x, y, FRAME_WIDTH, FRAME_HEIGHT, BLACK),
            }
        }
    }
    Ok(img)
}

/// Pixel origin of tile `(row, col)` in a grid built by
/// [`render_rollout_grid`] with the same row labels.
pub fn grid_tile_origin(row_labels: &[String], row: usize, col: usize) -> (usize, usize) {
    let left = PAD + row_labels.iter().map(|s| text_width(s)).max().unwrap_or(0) + PAD;
    (left + col * (FRAME_WIDTH + PAD), PAD + LABEL_H + row * (FRAME_HEIGHT + PAD))
}
