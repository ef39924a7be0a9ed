//! Shi-Tomasi corner detection (minimum eigenvalue of the local structure
//! tensor) with quality thresholding and distance-based suppression.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::canny::{gaussian_blur, sobel};

#[derive(Debug, Clone, Copy)]
pub struct CornerParams {
    pub max_corners: usize,
    /// Fraction of the strongest response kept as threshold.
    pub quality: f64,
    /// Corners closer than this are merged (strongest wins), pixels.
    pub min_distance: f64,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            max_corners: 20,
            quality: 0.05,
            min_distance: 8.0,
        }
    }
}

/// Detect corners on a grayscale image (any scale).
pub fn shi_tomasi(data: &[f64], w: usize, h: usize, params: &CornerParams) -> Vec<(f64, f64)> {
    let smooth = gaussian_blur(data, w, h, 1.0);
    let (gx, gy) = sobel(&smooth, w, h);

    // Structure tensor with a 5x5 Gaussian window.
    let mut weights = [[0.0f64; 5]; 5];
    let sigma = 1.5f64;
    for (dy, row) in weights.iter_mut().enumerate() {
        for (dx, wv) in row.iter_mut().enumerate() {
            let rx = dx as f64 - 2.0;
            let ry = dy as f64 - 2.0;
            *wv = (-(rx * rx + ry * ry) / (2.0 * sigma * sigma)).exp();
        }
    }
    let mut response = vec![0.0; w * h];
    let mut max_resp = 0.0f64;
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for dy in 0..5 {
                for dx in 0..5 {
                    let i = (y + dy - 2) * w + (x + dx - 2);
                    let wv = weights[dy][dx];
                    sxx += wv * gx[i] * gx[i];
                    syy += wv * gy[i] * gy[i];
                    sxy += wv * gx[i] * gy[i];
                }
            }
            let half_tr = (sxx + syy) / 2.0;
            let rad = ((sxx - syy) / 2.0 * ((sxx - syy) / 2.0) + sxy * sxy).max(0.0);
            let lam_min = half_tr - rad.sqrt();
            response[y * w + x] = lam_min;
            max_resp = max_resp.max(lam_min);
        }
    }
    if max_resp <= 0.0 {
        return Vec::new();
    }
    let threshold = params.quality * max_resp;

    // Local maxima above the quality threshold, strongest first; ties break
    // by pixel order for determinism.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in 2..h - 2 {
        for x in 2..w - 2 {
            let r = response[y * w + x];
            if r < threshold {
                continue;
            }
            let mut is_max = true;
            'nms: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = (y as i64 + dy) as usize * w + (x as i64 + dx) as usize;
                    if response[n] > r {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                candidates.push((r, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.2.cmp(&b.2))
            .then(a.1.cmp(&b.1))
    });

    let min_d2 = params.min_distance * params.min_distance;
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for (_, x, y) in candidates {
        let p = (x as f64, y as f64);
        if kept
            .iter()
            .all(|k| (k.0 - p.0).powi(2) + (k.1 - p.1).powi(2) >= min_d2)
        {
            kept.push(p);
            if kept.len() >= params.max_corners {
                break;
            }
        }
    }
    kept
}
