use super::font::{text_width, GLYPH_H};
use super::image::{Rgb, RgbImage};
use crate::distinguisher::ConfusionMatrix;
use crate::env::{Rollout, STACK_DEPTH};
use crate::error::{Error, Result};
use crate::filters::first_layer_filters;
use crate::model::FrozenModel;
use crate::patches::PatchHit;
use crate::tensor::Tensor;

const PAD: usize = 4;
const BACKGROUND: Rgb = [24, 24, 28];
const LABEL: Rgb = [200, 200, 200];

/// Conv1 filters, one row of four temporal channels per filter, eight
/// filters per row. Zero is mid-gray; the scale is shared by all filters.
pub fn filter_mosaic(model: &FrozenModel) -> Result<RgbImage> {
    let filters = first_layer_filters(model)?;
    let w = model.tensor("conv1.w").expect("checked by first_layer_filters");
    let k = w.shape()[2];
    let scale = 4;
    let peak = w.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let cell = k * scale;
    let filter_w = STACK_DEPTH * (cell + 1) + PAD;
    let per_row = 8;
    let rows = filters.len().div_ceil(per_row);
    let mut img = RgbImage::new(PAD + per_row * filter_w, PAD + rows * (cell + PAD), BACKGROUND);
    for (f, data) in filters.iter().enumerate() {
        let (ox, oy) = (PAD + (f % per_row) * filter_w, PAD + (f / per_row) * (cell + PAD));
        for t in 0..STACK_DEPTH {
            let vals: Vec<f32> = data[t * k * k..(t + 1) * k * k]
                .iter()
                .map(|&v| if peak > 0.0 { 0.5 + 0.5 * v / peak } else { 0.5 })
                .collect();
            img.blit(&RgbImage::from_gray(k, k, &vals), ox + t * (cell + 1), oy, scale);
        }
    }
    Ok(img)
}

/// Top patches side by side with their raw-frame crops, one hit per row.
pub fn contact_sheet(hits: &[PatchHit], rollout: &Rollout) -> Result<RgbImage> {
    if hits.is_empty() {
        return Err(Error::Empty("patch hits"));
    }
    let scale = 2;
    let patch_w = hits.iter().map(|h| h.rect.width()).max().unwrap_or(0) * scale;
    let crop_w = hits.iter().map(|h| h.frame_rect.width()).max().unwrap_or(0);
    let row_h = hits.iter().map(|h| (h.rect.height() * scale).max(h.frame_rect.height())).max().unwrap_or(0).max(GLYPH_H);
    let label_w = text_width("#0000 0000.00");
    let mut img = RgbImage::new(PAD + label_w + PAD + patch_w + PAD + crop_w + PAD, PAD + hits.len() * (row_h + PAD), BACKGROUND);
    for (i, h) in hits.iter().enumerate() {
        let y = PAD + i * (row_h + PAD);
        img.text(PAD, y, &format!("#{} {:.2}", h.step, h.value), LABEL);
        let patch = RgbImage::from_gray(h.rect.width(), h.rect.height(), &h.patch);
        let px = PAD + label_w + PAD;
        img.blit(&patch, px, y, scale);
        let frame = &rollout
            .steps
            .get(h.step)
            .ok_or_else(|| Error::Config(format!("hit step {} is outside the rollout", h.step)))?
            .frame;
        let cx = px + patch_w + PAD;
        let r = h.frame_rect;
        for fy in r.y0..r.y1 {
            for fx in r.x0..r.x1 {
                img.put(cx + fx - r.x0, y + fy - r.y0, frame.pixel(fy, fx));
            }
        }
    }
    Ok(img)
}

/// The channels of a `[c, h, w]` input in a horizontal strip.
pub fn dream_strip(input: &Tensor) -> Result<RgbImage> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::shape("dream_strip", "[c, h, w]", format!("{s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let scale = 2;
    let mut img = RgbImage::new(PAD + c * (w * scale + PAD), h * scale + 2 * PAD, BACKGROUND);
    for ch in 0..c {
        let tile = RgbImage::from_gray(w, h, &input.data()[ch * h * w..(ch + 1) * h * w]);
        img.blit(&tile, PAD + ch * (w * scale + PAD), PAD, scale);
    }
    Ok(img)
}

/// Counts shaded from white (zero) to dark blue (largest cell), with class
/// names down the side and across the top.
pub fn confusion_heatmap(cm: &ConfusionMatrix) -> RgbImage {
    let n = cm.n_classes();
    let cell = 28;
    let label_w = cm.class_names.iter().map(|s| text_width(s)).max().unwrap_or(0);
    let top = PAD + GLYPH_H + PAD;
    let left = PAD + label_w + PAD;
    let width = (left + n * cell + PAD).max(left + cm.class_names.iter().enumerate().map(|(j, s)| j * cell + text_width(s)).max().unwrap_or(0) + PAD);
    let mut img = RgbImage::new(width, top + n * cell + PAD, [255, 255, 255]);
    let peak = cm.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    for (j, name) in cm.class_names.iter().enumerate() {
        img.text(left + j * cell, PAD, name, [0, 0, 0]);
    }
    for (i, row) in cm.counts.iter().enumerate() {
        img.text(PAD, top + i * cell + (cell - GLYPH_H) / 2, &cm.class_names[i], [0, 0, 0]);
        for (j, &v) in row.iter().enumerate() {
            let t = v as f64 / peak;
            let shade = |full: f64, dark: f64| (full + (dark - full) * t).round() as u8;
            let c = [shade(255.0, 8.0), shade(255.0, 48.0), shade(255.0, 107.0)];
            img.fill_rect(left + j * cell, top + i * cell, cell - 1, cell - 1, c);
            let text = v.to_string();
            let ink = if t > 0.5 { [255, 255, 255] } else { [0, 0, 0] };
            img.text(left + j * cell + (cell - 1 - text_width(&text).min(cell - 1)) / 2, top + i * cell + (cell - GLYPH_H) / 2, &text, ink);
        }
    }
    img
}
