//! Direct least-squares ellipse fitting (Halir-Flusser decomposition of the
//! Fitzgibbon method), reduced to a 3x3 real eigenproblem.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector2, Vector3};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    /// Semi-major axis length (pixels).
    pub semi_major: f64,
    /// Semi-minor axis length (pixels).
    pub semi_minor: f64,
    /// Major-axis orientation, `(-pi/2, pi/2]`.
    pub angle: f64,
}

/// Real roots of `x^3 + a x^2 + b x + c = 0`.
fn cubic_real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let mut roots = Vec::new();
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    if disc > 1e-18 {
        let s = disc.sqrt();
        let u = (-q / 2.0 + s).cbrt();
        let v = (-q / 2.0 - s).cbrt();
        roots.push(u + v + shift);
    } else if disc.abs() <= 1e-18 {
        let u = (-q / 2.0).cbrt();
        roots.push(2.0 * u + shift);
        roots.push(-u + shift);
    } else {
        let r = (-(p / 3.0).powi(3)).sqrt();
        let phi = (-q / (2.0 * r)).clamp(-1.0, 1.0).acos();
        let m = 2.0 * (-p / 3.0).sqrt();
        for k in 0..3 {
            roots.push(m * ((phi + 2.0 * core::f64::consts::PI * k as f64) / 3.0).cos() + shift);
        }
    }
    roots
}

/// Eigenvector of a 3x3 matrix for a known eigenvalue, by cross products of
/// the rows of `m - lambda I`.
fn eigenvector_for(m: &Matrix3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let a = m - Matrix3::identity() * lambda;
    let r0 = Vector3::new(a[(0, 0)], a[(0, 1)], a[(0, 2)]);
    let r1 = Vector3::new(a[(1, 0)], a[(1, 1)], a[(1, 2)]);
    let r2 = Vector3::new(a[(2, 0)], a[(2, 1)], a[(2, 2)]);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap())?;
    if best.norm() < 1e-12 {
        return None;
    }
    Some(best / best.norm())
}

/// Fit an ellipse to scattered points. Returns `None` when the fit is
/// numerically degenerate or non-elliptic.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Option<Ellipse> {
    if points.len() < 6 {
        return None;
    }
    // Condition the problem by centering and scaling.
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let scale = (points
        .iter()
        .map(|p| (p.0 - mx).abs() + (p.1 - my).abs())
        .sum::<f64>()
        / n)
        .max(1e-9);

    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for p in points {
        let x = (p.0 - mx) / scale;
        let y = (p.1 - my) / scale;
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3.try_inverse()?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Apply the inverse constraint matrix: rows (m3/2, -m2, m1/2).
    let reduced = Matrix3::from_rows(&[
        (m.row(2) / 2.0).into_owned(),
        (-m.row(1)).into_owned(),
        (m.row(0) / 2.0).into_owned(),
    ]);

    // Characteristic polynomial x^3 + a x^2 + b x + c.
    let tr = reduced.trace();
    let m2 = reduced * reduced;
    let a = -tr;
    let b = 0.5 * (tr * tr - m2.trace());
    let c = -reduced.determinant();
    let mut a1: Option<Vector3<f64>> = None;
    for lambda in cubic_real_roots(a, b, c) {
        if let Some(v) = eigenvector_for(&reduced, lambda) {
            // Ellipse constraint 4 a c - b^2 > 0 selects the solution.
            if 4.0 * v[0] * v[2] - v[1] * v[1] > 0.0 {
                a1 = Some(v);
                break;
            }
        }
    }
    let a1 = a1?;
    let a2 = t * a1;

    // Conic in normalized coordinates, then denormalize.
    let (an, bn, cn, dn, en, fn_) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);
    let (s, s2f) = (scale, scale * scale);
    let ca = an / s2f;
    let cb = bn / s2f;
    let cc = cn / s2f;
    let cd = dn / s - 2.0 * an * mx / s2f - bn * my / s2f;
    let ce = en / s - 2.0 * cn * my / s2f - bn * mx / s2f;
    let cf = fn_ + an * mx * mx / s2f + bn * mx * my / s2f + cn * my * my / s2f
        - dn * mx / s
        - en * my / s;

    conic_to_ellipse(ca, cb, cc, cd, ce, cf)
}

fn conic_to_ellipse(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Option<Ellipse> {
    let det = 4.0 * a * c - b * b;
    if det <= 1e-18 {
        return None;
    }
    let cx = (b * e - 2.0 * c * d) / det;
    let cy = (b * d - 2.0 * a * e) / det;
    // Value of the conic at the center.
    let fc = a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f;
    // Eigen-decomposition of the quadratic form [[a, b/2], [b/2, c]].
    let half_tr = (a + c) / 2.0;
    let diff = (a - c) / 2.0;
    let rad = (diff * diff + (b / 2.0) * (b / 2.0)).sqrt();
    let l1 = half_tr + rad;
    let l2 = half_tr - rad;
    if l1.abs() < 1e-18 || l2.abs() < 1e-18 {
        return None;
    }
    let ax1 = -fc / l1;
    let ax2 = -fc / l2;
    if ax1 <= 0.0 || ax2 <= 0.0 {
        return None;
    }
    // The smaller eigenvalue owns the major axis.
    let (major_sq, minor_sq, major_lambda) =
        if ax1 >= ax2 { (ax1, ax2, l1) } else { (ax2, ax1, l2) };
    // Eigenvector of the form matrix for the major-axis eigenvalue; pick the
    // better-conditioned of the two row equations.
    let v_a = Vector2::new(b / 2.0, major_lambda - a);
    let v_b = Vector2::new(major_lambda - c, b / 2.0);
    let v = if v_a.norm() >= v_b.norm() { v_a } else { v_b };
    let angle = if v.norm() < 1e-15 {
        0.0
    } else {
        crate::geometry::wrap_half_angle(v.y.atan2(v.x))
    };
    Some(Ellipse {
        center: (cx, cy),
        semi_major: major_sq.sqrt(),
        semi_minor: minor_sq.sqrt(),
        angle,
    })
}
