//! Contact-region segmentation: deviation thresholding and connected
//! components.

use alloc::vec;
use alloc::vec::Vec;

use crate::image::DepthImage;
#[allow(unused_imports)]
use num_traits::Float;

use super::ExtractionError;

/// Binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
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
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// One 3x3 dilation pass, repeated `iterations` times.
    pub fn dilated(&self, iterations: usize) -> Mask {
        let mut cur = self.clone();
        for _ in 0..iterations {
            let mut next = cur.clone();
            for y in 0..self.height {
                for x in 0..self.width {
                    if cur.get(x, y) {
                        continue;
                    }
                    'scan: for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let nx = x as i64 + dx;
                            let ny = y as i64 + dy;
                            if nx >= 0
                                && ny >= 0
                                && (nx as usize) < self.width
                                && (ny as usize) < self.height
                                && cur.get(nx as usize, ny as usize)
                            {
                                next.set(x, y, true);
                                break 'scan;
                            }
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }
}

/// Absolute deviation of each pixel from the image median.
pub fn deviation_map(img: &DepthImage) -> (Vec<f64>, f64) {
    let median = img.median();
    let dev = img.data().iter().map(|d| (d - median).abs()).collect();
    (dev, median)
}

/// Quantile of a sample by selection (`q` in (0, 1)).
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut copy = values.to_vec();
    let idx = ((copy.len() - 1) as f64 * q).round() as usize;
    let (_, v, _) = copy.select_nth_unstable_by(idx, |a, b| a.partial_cmp(b).unwrap());
    *v
}

/// Label 8-connected components of `keep`; returns (labels, component sizes).
/// Label 0 means background; components are numbered from 1 in row-major
/// discovery order, which keeps the result deterministic.
fn connected_components(keep: &[bool], w: usize, h: usize) -> (Vec<u32>, Vec<usize>) {
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    let mut next = 1u32;
    for start in 0..w * h {
        if !keep[start] || labels[start] != 0 {
            continue;
        }
        let mut size = 0usize;
        stack.push(start);
        labels[start] = next;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (x, y) = (idx % w, idx / w);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if keep[n] && labels[n] == 0 {
                        labels[n] = next;
                        stack.push(n);
                    }
                }
            }
        }
        sizes.push(size);
        next += 1;
    }
    (labels, sizes)
}

/// How the retained component is selected among candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentSelect {
    /// Largest pixel count (ties: first in row-major discovery order).
    LargestArea,
    /// Largest summed depth deviation, favoring the deeper contact.
    LargestWeight,
}

pub(super) fn segment_component(
    img: &DepthImage,
    quantile_frac: f64,
    min_component_px: usize,
    select: ComponentSelect,
) -> Result<(Mask, Vec<f64>), ExtractionError> {
    assert!(quantile_frac > 0.0 && quantile_frac < 1.0, "quantile in (0, 1)");
    let (dev, _) = deviation_map(img);
    let thr = quantile(&dev, quantile_frac);
    let keep: Vec<bool> = dev.iter().map(|d| *d > thr).collect();
    if !keep.iter().any(|k| *k) {
        return Err(ExtractionError::EmptyMask);
    }
    let (w, h) = (img.width(), img.height());
    let (labels, sizes) = connected_components(&keep, w, h);
    let mut best: Option<(f64, u32)> = None;
    for (i, &size) in sizes.iter().enumerate() {
        if size < min_component_px {
            continue;
        }
        let label = i as u32 + 1;
        let score = match select {
            ComponentSelect::LargestArea => size as f64,
            ComponentSelect::LargestWeight => labels
                .iter()
                .zip(dev.iter())
                .filter(|(l, _)| **l == label)
                .map(|(_, d)| *d)
                .sum(),
        };
        if best.map(|(s, _)| score > s).unwrap_or(true) {
            best = Some((score, label));
        }
    }
    let Some((_, label)) = best else {
        return Err(ExtractionError::EmptyMask);
    };
    let mut mask = Mask::new(w, h);
    for (i, &l) in labels.iter().enumerate() {
        if l == label {
            mask.set(i % w, i / w, true);
        }
    }
    Ok((mask, dev))
}

/// Threshold the depth deviation at the given quantile and keep the largest
/// connected component (minimum 50 px).
pub fn binarize(img: &DepthImage, quantile_frac: f64) -> Result<Mask, ExtractionError> {
    segment_component(img, quantile_frac, 50, ComponentSelect::LargestArea).map(|(m, _)| m)
}
