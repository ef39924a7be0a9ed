//! Weighted total-least-squares line fitting via the principal axis of the
//! weighted covariance.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::wrap_half_angle;

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub centroid: (f64, f64),
    /// Orientation in `(-pi/2, pi/2]`.
    pub angle: f64,
}

impl LineFit {
    pub fn direction(&self) -> (f64, f64) {
        (self.angle.cos(), self.angle.sin())
    }
}

/// Fit a line through weighted points, minimizing weighted orthogonal
/// distance. Returns `None` when the weight mass or spread vanishes.
pub fn weighted_line(points: &[(f64, f64, f64)]) -> Option<LineFit> {
    let wsum: f64 = points.iter().map(|p| p.2).sum();
    if wsum <= 1e-12 {
        return None;
    }
    let mx = points.iter().map(|p| p.0 * p.2).sum::<f64>() / wsum;
    let my = points.iter().map(|p| p.1 * p.2).sum::<f64>() / wsum;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y, w) in points {
        let dx = x - mx;
        let dy = y - my;
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
    }
    if sxx + syy <= 1e-12 {
        return None;
    }
    let angle = wrap_half_angle(0.5 * (2.0 * sxy).atan2(sxx - syy));
    Some(LineFit {
        centroid: (mx, my),
        angle,
    })
}

/// Project points onto the fitted line and return the two extreme points,
/// their midpoint, in pixels.
pub fn line_extent(
    fit: &LineFit,
    points: impl Iterator<Item = (f64, f64)>,
) -> ([(f64, f64); 2], (f64, f64)) {
    let (dx, dy) = fit.direction();
    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for (x, y) in points {
        let t = (x - fit.centroid.0) * dx + (y - fit.centroid.1) * dy;
        t_min = t_min.min(t);
        t_max = t_max.max(t);
    }
    if !t_min.is_finite() || !t_max.is_finite() {
        let c = fit.centroid;
        return ([c, c], c);
    }
    let at = |t: f64| (fit.centroid.0 + t * dx, fit.centroid.1 + t * dy);
    let mid = 0.5 * (t_min + t_max);
    ([at(t_min), at(t_max)], at(mid))
}

/// Collect weighted mask pixels for fitting.
pub fn weighted_pixels(
    mask: &super::mask::Mask,
    weights: &[f64],
) -> Vec<(f64, f64, f64)> {
    let w = mask.width();
    mask.iter_set()
        .map(|(x, y)| (x as f64, y as f64, weights[y * w + x].max(0.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fits_an_exact_line() {
        let pts: Vec<(f64, f64, f64)> = (0..50)
            .map(|i| {
                let x = i as f64;
                (x, 2.0 + 0.5 * x, 1.0)
            })
            .collect();
        let fit = weighted_line(&pts).unwrap();
        assert_relative_eq!(fit.angle, 0.5f64.atan(), epsilon = 1e-12);
    }

    #[test]
    fn weights_pull_the_fit() {
        // Two parallel point rows, one with dominant weight.
        let mut pts = Vec::new();
        for i in 0..40 {
            pts.push((i as f64, 10.0, 10.0));
            pts.push((i as f64, 30.0, 0.1));
        }
        let fit = weighted_line(&pts).unwrap();
        assert!(fit.centroid.1 < 11.0, "centroid {:?}", fit.centroid);
        assert_relative_eq!(fit.angle, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn vertical_line_hits_the_half_angle_boundary() {
        let pts: Vec<(f64, f64, f64)> = (0..50).map(|i| (7.0, i as f64, 1.0)).collect();
        let fit = weighted_line(&pts).unwrap();
        assert_relative_eq!(fit.angle, core::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn extent_spans_the_sample() {
        let pts: Vec<(f64, f64, f64)> = (0..21).map(|i| (i as f64, 5.0, 1.0)).collect();
        let fit = weighted_line(&pts).unwrap();
        let (ends, mid) = line_extent(&fit, pts.iter().map(|p| (p.0, p.1)));
        assert_relative_eq!(ends[0].0.min(ends[1].0), 0.0, epsilon = 1e-12);
        assert_relative_eq!(ends[0].0.max(ends[1].0), 20.0, epsilon = 1e-12);
        assert_relative_eq!(mid.0, 10.0, epsilon = 1e-12);
    }
}
