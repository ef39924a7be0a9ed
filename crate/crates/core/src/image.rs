//! Depth-image container shared by the renderer and the extractors.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

/// Row-major grid of contact depths in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    /// Pixel pitch in meters per pixel.
    pub pixel_pitch_m: f64,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, pixel_pitch_m: f64, fill: f64) -> Self {
        Self {
            width,
            height,
            pixel_pitch_m,
            data: vec![fill; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, pixel_pitch_m: f64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            pixel_pitch_m,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Bilinear sample at fractional pixel coordinates, clamped to bounds.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let x = u.clamp(0.0, (self.width - 1) as f64);
        let y = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &d in &self.data {
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    /// Median via selection; ties resolved by element order.
    pub fn median(&self) -> f64 {
        let mut copy = self.data.clone();
        let mid = copy.len() / 2;
        let (_, m, _) = copy.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        *m
    }
}
