use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::font::{glyph, ADVANCE, GLYPH_H, GLYPH_W};
use crate::env::{RgbFrame, FRAME_HEIGHT, FRAME_WIDTH};
use crate::error::Result;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const WHITE: Rgb = [255, 255, 255];

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Maps `[0, 1]` to an 8-bit gray level, clamping outside values.
pub fn gray(v: f64) -> Rgb {
    let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [g, g, g]
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        RgbImage { width, height, data: fill.iter().copied().cycle().take(width * height * 3).collect() }
    }

    pub fn from_frame(frame: &RgbFrame) -> Self {
        RgbImage { width: FRAME_WIDTH, height: FRAME_HEIGHT, data: frame.bytes().to_vec() }
    }

    /// Grayscale image from row-major `[0, 1]` values.
    pub fn from_gray(width: usize, height: usize, values: &[f32]) -> Self {
        assert_eq!(values.len(), width * height);
        RgbImage { width, height, data: values.iter().flat_map(|&v| gray(f64::from(v))).collect() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes one pixel; out-of-bounds writes are ignored.
    pub fn put(&mut self, x: usize, y: usize, c: Rgb) {
        if x < self.width && y < self.height {
            let i = (y * self.width + x) * 3;
            self.data[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn fill_rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, c: Rgb) {
        for y in y0..(y0 + h).min(self.height) {
            for x in x0..(x0 + w).min(self.width) {
                self.put(x, y, c);
            }
        }
    }

    pub fn outline(&mut self, x0: usize, y0: usize, w: usize, h: usize, c: Rgb) {
        if w == 0 || h == 0 {
            return;
        }
        for x in x0..x0 + w {
            self.put(x, y0, c);
            self.put(x, y0 + h - 1, c);
        }
        for y in y0..y0 + h {
            self.put(x0, y, c);
            self.put(x0 + w - 1, y, c);
        }
    }

    /// Copies `src` with its top-left at `(x0, y0)`, each source pixel
    /// becoming a `scale × scale` block.
    pub fn blit(&mut self, src: &RgbImage, x0: usize, y0: usize, scale: usize) {
        for y in 0..src.height * scale {
            for x in 0..src.width * scale {
                self.put(x0 + x, y0 + y, src.get(x / scale, y / scale));
            }
        }
    }

    pub fn text(&mut self, x0: usize, y0: usize, s: &str, c: Rgb) {
        for (k, ch) in s.chars().enumerate() {
            let rows = glyph(ch);
            for (dy, bits) in rows.iter().enumerate().take(GLYPH_H) {
                for dx in 0..GLYPH_W {
                    if bits >> (GLYPH_W - 1 - dx) & 1 == 1 {
                        self.put(x0 + k * ADVANCE + dx, y0 + dy, c);
                    }
                }
            }
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_png(&mut out)?;
        Ok(out)
    }

    fn write_png<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.data)?;
        writer.finish()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_png(BufWriter::new(File::create(path)?))
    }
}
