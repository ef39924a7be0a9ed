//! Gaussian smoothing, Sobel gradients, and the Canny edge detector.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::mask::Mask;

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let clamp = |v: i64, max: usize| v.clamp(0, max as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = clamp(x as i64 + k as i64 - radius, w);
                acc += data[y * w + sx] * kv;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = clamp(y as i64 + k as i64 - radius, h);
                acc += tmp[sy * w + x] * kv;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Raw 3x3 Sobel responses (no normalization), zero on the border.
pub fn sobel(data: &[f64], w: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let at = |dx: i64, dy: i64| data[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
            gx[y * w + x] = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1))
                - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
            gy[y * w + x] = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1))
                - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
        }
    }
    (gx, gy)
}

/// Canny edges of a `[0, 255]` image. Thresholds are absolute Sobel
/// magnitudes; non-maximum suppression uses four quantized directions and
/// hysteresis links weak pixels 8-connected to strong ones.
pub fn canny(data: &[f64], w: usize, h: usize, sigma: f64, low: f64, high: f64) -> Mask {
    let smooth = gaussian_blur(data, w, h, sigma);
    let (gx, gy) = sobel(&smooth, w, h);
    let mut mag = vec![0.0; w * h];
    for i in 0..w * h {
        mag[i] = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
    }

    // Non-maximum suppression.
    let mut thin = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if mag[i] < low {
                continue;
            }
            let angle = gy[i].atan2(gx[i]);
            let sector = ((angle + core::f64::consts::PI) / (core::f64::consts::PI / 4.0))
                .round() as i64
                % 4;
            let (d0, d1): ((i64, i64), (i64, i64)) = match sector {
                0 => ((1, 0), (-1, 0)),
                1 => ((1, 1), (-1, -1)),
                2 => ((0, 1), (0, -1)),
                _ => ((-1, 1), (1, -1)),
            };
            let m0 = mag[(y as i64 + d0.1) as usize * w + (x as i64 + d0.0) as usize];
            let m1 = mag[(y as i64 + d1.1) as usize * w + (x as i64 + d1.0) as usize];
            if mag[i] >= m0 && mag[i] >= m1 {
                thin[i] = mag[i];
            }
        }
    }

    // Hysteresis from strong seeds through weak pixels.
    let mut out = Mask::new(w, h);
    let mut stack = Vec::new();
    for i in 0..w * h {
        if thin[i] >= high && !out.get(i % w, i / w) {
            out.set(i % w, i / w, true);
            stack.push(i);
            while let Some(j) = stack.pop() {
                let (x, y) = (j % w, j / w);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 1 || ny < 1 || nx >= w as i64 - 1 || ny >= h as i64 - 1 {
                            continue;
                        }
                        let n = ny as usize * w + nx as usize;
                        if thin[n] >= low && !out.get(nx as usize, ny as usize) {
                            out.set(nx as usize, ny as usize, true);
                            stack.push(n);
                        }
                    }
                }
            }
        }
    }
    out
}
