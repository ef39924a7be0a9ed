//! Box-constrained convex QP solver: projected Newton on the active set.
//!
//! Minimizes `1/2 z' H z + g' z` subject to `lower <= z <= upper` for
//! symmetric positive-definite `H`. Each iteration freezes the coordinates
//! pressed against their bounds by the gradient, takes a Newton step on the
//! free block, and projects back onto the box with an Armijo backtracking
//! search along the projection arc.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    /// `lower > upper` on some coordinate.
    InfeasibleBox,
    /// The free-block Hessian was not positive definite.
    NotPositiveDefinite,
    DimensionMismatch,
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::InfeasibleBox => write!(f, "box bounds are inconsistent"),
            QpError::NotPositiveDefinite => write!(f, "Hessian is not positive definite"),
            QpError::DimensionMismatch => write!(f, "dimension mismatch"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QpError {}

/// KKT residual of a candidate solution: stationarity on free coordinates,
/// multiplier signs on active ones.
pub fn kkt_residual(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let grad = h * z + g;
    let eps = 1e-10;
    let mut worst = 0.0f64;
    for i in 0..z.len() {
        let at_lower = z[i] <= lower[i] + eps * (1.0 + lower[i].abs());
        let at_upper = z[i] >= upper[i] - eps * (1.0 + upper[i].abs());
        let r = if at_lower && at_upper {
            0.0
        } else if at_lower {
            (-grad[i]).max(0.0)
        } else if at_upper {
            grad[i].max(0.0)
        } else {
            grad[i].abs()
        };
        worst = worst.max(r);
    }
    worst
}

fn objective(h: &DMatrix<f64>, g: &DVector<f64>, z: &DVector<f64>) -> f64 {
    0.5 * (z.transpose() * h * z)[(0, 0)] + g.dot(z)
}

fn clamp_into(z: &mut DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) {
    for i in 0..z.len() {
        z[i] = z[i].max(lower[i]).min(upper[i]);
    }
}

/// Solve the box QP. The KKT residual of the returned point is at most
/// `1e-8` scaled by the gradient magnitude.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Result<DVector<f64>, QpError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lower.len() != n || upper.len() != n {
        return Err(QpError::DimensionMismatch);
    }
    for i in 0..n {
        if lower[i] > upper[i] {
            return Err(QpError::InfeasibleBox);
        }
    }
    // Work on the symmetrized Hessian.
    let hs = (h + h.transpose()) * 0.5;
    let scale = 1.0 + g.amax();
    let tol = 1e-9 * scale;

    let mut z = DVector::zeros(n);
    clamp_into(&mut z, lower, upper);
    let mut obj = objective(&hs, g, &z);

    for _ in 0..200 {
        let grad = &hs * &z + g;
        if kkt_residual(&hs, g, lower, upper, &z) <= tol {
            return Ok(z);
        }
        // Coordinates pinned against their bounds by the gradient.
        let mut free: Vec<usize> = Vec::with_capacity(n);
        for i in 0..n {
            let eps = 1e-12 * (1.0 + z[i].abs());
            let at_lower = z[i] <= lower[i] + eps && grad[i] > 0.0;
            let at_upper = z[i] >= upper[i] - eps && grad[i] < 0.0;
            if !(at_lower || at_upper) {
                free.push(i);
            }
        }
        if free.is_empty() {
            return Ok(z);
        }
        let m = free.len();
        let mut h_ff = DMatrix::zeros(m, m);
        let mut g_f = DVector::zeros(m);
        for (a, &i) in free.iter().enumerate() {
            g_f[a] = grad[i];
            for (b, &j) in free.iter().enumerate() {
                h_ff[(a, b)] = hs[(i, j)];
            }
        }
        let chol = h_ff.cholesky().ok_or(QpError::NotPositiveDefinite)?;
        let d_f = chol.solve(&(-g_f));
        let mut direction = DVector::zeros(n);
        for (a, &i) in free.iter().enumerate() {
            direction[i] = d_f[a];
        }

        // Backtracking along the projection arc.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = &z + &direction * alpha;
            clamp_into(&mut cand, lower, upper);
            let cand_obj = objective(&hs, g, &cand);
            if cand_obj < obj - 1e-16 * (1.0 + obj.abs()) {
                z = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Ok(z);
        }
    }
    Ok(z)
}
