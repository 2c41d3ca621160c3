use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FRAME_HEIGHT: usize = 210;
pub const FRAME_WIDTH: usize = 160;
pub const FRAME_BYTES: usize = FRAME_HEIGHT * FRAME_WIDTH * 3;
pub const OBS_SIZE: usize = 84;
pub const STACK_DEPTH: usize = 4;
pub const RAM_BYTES: usize = 128;

/// Raw 210×160 RGB screen, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame(Vec<u8>);

impl RgbFrame {
    pub fn new(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != FRAME_BYTES {
            return Err(Error::shape("RgbFrame", format!("{FRAME_BYTES} bytes"), bytes.len().to_string()));
        }
        Ok(RgbFrame(bytes))
    }

    pub fn filled(rgb: [u8; 3]) -> Self {
        RgbFrame(rgb.iter().copied().cycle().take(FRAME_BYTES).collect())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * FRAME_WIDTH + x) * 3;
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }

    pub fn fill_rect(&mut self, y0: usize, x0: usize, h: usize, w: usize, rgb: [u8; 3]) {
        for y in y0..(y0 + h).min(FRAME_HEIGHT) {
            for x in x0..(x0 + w).min(FRAME_WIDTH) {
                let i = (y * FRAME_WIDTH + x) * 3;
                self.0[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }
}

/// The emulator's 128-byte (1024-bit) memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RamState(pub [u8; RAM_BYTES]);

impl Default for RamState {
    fn default() -> Self {
        RamState([0; RAM_BYTES])
    }
}

impl RamState {
    /// 1024 binary features, most significant bit of each byte first.
    pub fn bits(&self) -> Vec<f64> {
        self.0.iter().flat_map(|&b| (0..8).rev().map(move |k| f64::from((b >> k) & 1))).collect()
    }
}

/// ITU-R 601 luma scaled to [0, 1], then bilinear resize to 84×84
/// (half-pixel centres, edge clamped).
pub fn grayscale_downsample(frame: &RgbFrame) -> Tensor {
    let luma: Vec<f64> = frame
        .bytes()
        .chunks_exact(3)
        .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
        .collect();
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = axis(OBS_SIZE, FRAME_HEIGHT);
    let cols = axis(OBS_SIZE, FRAME_WIDTH);
    let mut out = Vec::with_capacity(OBS_SIZE * OBS_SIZE);
    for &(y0, y1, ty) in &rows {
        for &(x0, x1, tx) in &cols {
            let at = |y: usize, x: usize| luma[y * FRAME_WIDTH + x];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
            let bottom = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
            let v = top * (1.0 - ty) + bottom * ty;
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Tensor::new(vec![OBS_SIZE, OBS_SIZE], out).expect("84x84")
}

/// Stacks the four most recent 84×84 frames oldest→newest (channel 3 is the
/// present). Short histories repeat their earliest frame.
pub fn stack_observation(history: &[Tensor]) -> Result<Tensor> {
    let first = history.first().ok_or(Error::EmptyHistory)?;
    for f in history {
        if f.shape() != first.shape() || f.shape().len() != 2 {
            return Err(Error::shape("stack_observation", format!("{:?} frames", first.shape()), format!("{:?}", f.shape())));
        }
    }
    let recent = &history[history.len().saturating_sub(STACK_DEPTH)..];
    let pad = STACK_DEPTH - recent.len();
    let mut data = Vec::with_capacity(STACK_DEPTH * first.len());
    for _ in 0..pad {
        data.extend_from_slice(recent[0].data());
    }
    for f in recent {
        data.extend_from_slice(f.data());
    }
    let [h, w] = [first.shape()[0], first.shape()[1]];
    Tensor::new(vec![STACK_DEPTH, h, w], data)
}

/// Channel 3 of a stacked observation.
pub fn present_channel(obs: &Tensor) -> &[f32] {
    let n = obs.len() / STACK_DEPTH;
    &obs.data()[(STACK_DEPTH - 1) * n..]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_frame_is_all_ones() {
        let g = grayscale_downsample(&RgbFrame::filled([255, 255, 255]));
        assert_eq!(g.shape(), &[84, 84]);
        assert!(g.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pure_red_is_luma_coefficient() {
        let g = grayscale_downsample(&RgbFrame::filled([255, 0, 0]));
        assert!(g.data().iter().all(|&v| (v - 0.299).abs() < 1e-6));
    }

    #[test]
    fn constant_frames_survive_resize() {
        let c = [37, 140, 201];
        let expect = ((0.299 * 37.0 + 0.587 * 140.0 + 0.114 * 201.0) / 255.0) as f32;
        let g = grayscale_downsample(&RgbFrame::filled(c));
        assert!(g.data().iter().all(|&v| (v - expect).abs() < 1e-6));
    }

    #[test]
    fn stacking_pads_and_drops() {
        let f = |v: f32| Tensor::full(&[84, 84], v);
        let one = stack_observation(&[f(0.5)]).unwrap();
        assert!(one.data().iter().all(|&v| v == 0.5));

        let four = stack_observation(&[f(0.1), f(0.2), f(0.3), f(0.4)]).unwrap();
        for (c, v) in [0.1, 0.2, 0.3, 0.4].into_iter().enumerate() {
            assert!(four.data()[c * 7056..(c + 1) * 7056].iter().all(|&x| x == v));
        }
        let five = stack_observation(&[f(0.0), f(0.1), f(0.2), f(0.3), f(0.4)]).unwrap();
        assert_eq!(five, four);
        assert!(present_channel(&five).iter().all(|&x| x == 0.4));

        let two = stack_observation(&[f(0.1), f(0.2)]).unwrap();
        let firsts: Vec<f32> = (0..4).map(|c| two.data()[c * 7056]).collect();
        assert_eq!(firsts, vec![0.1, 0.1, 0.1, 0.2]);

        assert!(matches!(stack_observation(&[]), Err(Error::EmptyHistory)));
    }

    #[test]
    fn ram_bits_are_msb_first() {
        let mut ram = RamState::default();
        ram.0[0] = 0x80;
        ram.0[1] = 0x01;
        let bits = ram.bits();
        assert_eq!(bits.len(), 1024);
        assert_eq!(&bits[..8], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&bits[8..16], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
