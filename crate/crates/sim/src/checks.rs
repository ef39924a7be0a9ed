//! Finite-difference verification suites behind `check-jacobians`.
//!
//! Each check compares an analytic Jacobian against an independent central
//! difference of the underlying map over randomized states.

use nalgebra::{Vector3, Vector6};
use rand_core::{RngCore, SeedableRng};
use tacservo_core::estimator::EkfConfig;
use tacservo_core::features::{contour_from_points, contour_interaction_matrix, TactileState};
use tacservo_core::geometry::{
    point_interaction_matrix, project, CameraIntrinsics, PointFeature, Twist,
};
use tacservo_core::plant::{rk4_step, rk4_step_jacobians};

pub struct JacobianReport {
    pub point_max_rel_err: f64,
    pub contour_max_rel_err: f64,
    pub transition_max_rel_err: f64,
    pub samples: usize,
}

impl JacobianReport {
    pub fn all_below(&self, tol: f64) -> bool {
        self.point_max_rel_err < tol
            && self.contour_max_rel_err < tol
            && self.transition_max_rel_err < tol
    }
}

struct Rng(rand_chacha::ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }
}

fn random_twist(rng: &mut Rng) -> Twist {
    Twist::new(
        Vector3::new(
            rng.uniform(-0.02, 0.02),
            rng.uniform(-0.02, 0.02),
            rng.uniform(-0.02, 0.02),
        ),
        Vector3::new(
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.5, 0.5),
        ),
    )
}

fn random_state(rng: &mut Rng, intrinsics: &CameraIntrinsics) -> TactileState {
    loop {
        let p1 = PointFeature::new(
            rng.uniform(30.0, 290.0),
            rng.uniform(30.0, 210.0),
            rng.uniform(0.0185, 0.0215),
        );
        let p2 = PointFeature::new(
            rng.uniform(30.0, 290.0),
            rng.uniform(30.0, 210.0),
            rng.uniform(0.0185, 0.0215),
        );
        let dist = ((p2.u - p1.u).powi(2) + (p2.v - p1.v).powi(2)).sqrt();
        if dist < 60.0 {
            continue;
        }
        let beta = (p2.v - p1.v).atan2(p2.u - p1.u);
        if tacservo_core::geometry::wrap_half_angle(beta).abs() > 1.3 {
            continue;
        }
        if let Ok(s) = TactileState::from_points(p1, p2, intrinsics) {
            return s;
        }
    }
}

/// Point interaction matrix against a central difference of the projected
/// motion of a rigidly attached point.
pub fn check_point_jacobian(seed: u64, samples: usize) -> f64 {
    let intrinsics = CameraIntrinsics::default();
    let mut rng = Rng::new(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = Vector3::new(
            rng.uniform(-6e-3, 6e-3),
            rng.uniform(-4e-3, 4e-3),
            rng.uniform(0.017, 0.023),
        );
        let Ok(s) = project(&x, &intrinsics) else { continue };
        let tw = random_twist(&mut rng);
        let xdot = -tw.linear - tw.angular.cross(&x);
        let sp = project(&(x + xdot * h), &intrinsics).unwrap();
        let sm = project(&(x - xdot * h), &intrinsics).unwrap();
        let fd = Vector3::new(
            (sp.u - sm.u) / (2.0 * h),
            (sp.v - sm.v) / (2.0 * h),
            (sp.depth - sm.depth) / (2.0 * h),
        );
        let pred = point_interaction_matrix(&s, &intrinsics).unwrap() * tw.to_vector();
        worst = worst.max((pred - fd).norm() / fd.norm().max(1e-9));
    }
    worst
}

/// Contour interaction matrix against a central difference of the feature
/// map along the point-feature flow.
pub fn check_contour_jacobian(seed: u64, samples: usize) -> f64 {
    let intrinsics = CameraIntrinsics::default();
    let mut rng = Rng::new(seed);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let state = random_state(&mut rng, &intrinsics);
        let tw = random_twist(&mut rng);
        let uv = tw.to_vector();
        let j1 = point_interaction_matrix(&state.p1, &intrinsics).unwrap() * uv;
        let j2 = point_interaction_matrix(&state.p2, &intrinsics).unwrap() * uv;
        let shift = |p: &PointFeature, r: &Vector3<f64>, sgn: f64| {
            PointFeature::new(
                p.u + sgn * h * r[0],
                p.v + sgn * h * r[1],
                p.depth + sgn * h * r[2],
            )
        };
        let r1 = Vector3::new(j1[0], j1[1], j1[2]);
        let r2 = Vector3::new(j2[0], j2[1], j2[2]);
        let xp = contour_from_points(
            &shift(&state.p1, &r1, 1.0),
            &shift(&state.p2, &r2, 1.0),
            &intrinsics,
        )
        .unwrap()
        .as_vector();
        let xm = contour_from_points(
            &shift(&state.p1, &r1, -1.0),
            &shift(&state.p2, &r2, -1.0),
            &intrinsics,
        )
        .unwrap()
        .as_vector();
        let fd = (xp - xm) / (2.0 * h);
        let pred = contour_interaction_matrix(&state.p1, &state.p2, &intrinsics).unwrap() * uv;
        worst = worst.max((pred - fd).norm() / fd.norm().max(1e-9));
    }
    worst
}

/// Discrete transition Jacobian of the filter prediction against a central
/// difference of the RK4 step map.
pub fn check_transition_jacobian(seed: u64, samples: usize) -> f64 {
    let intrinsics = CameraIntrinsics::default();
    let dt = 1.0 / EkfConfig::default().predict_rate_hz;
    let mut rng = Rng::new(seed);
    let steps = [1e-4, 1e-4, 1e-8, 1e-4, 1e-4, 1e-8, 1e-6, 1e-6, 1e-6, 1e-8];
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = random_state(&mut rng, &intrinsics).as_vector();
        let tw = random_twist(&mut rng);
        let (f, _) = rk4_step_jacobians(&x, &tw, dt, &intrinsics).unwrap();
        for (j, h) in steps.iter().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (rk4_step(&xp, &tw, dt, &intrinsics).unwrap()
                - rk4_step(&xm, &tw, dt, &intrinsics).unwrap())
                / (2.0 * h);
            let scale = fd.amax().max(1.0);
            for i in 0..10 {
                worst = worst.max((f[(i, j)] - fd[i]).abs() / scale);
            }
        }
    }
    worst
}

pub fn run_all(seed: u64, samples: usize) -> JacobianReport {
    JacobianReport {
        point_max_rel_err: check_point_jacobian(seed, samples),
        contour_max_rel_err: check_contour_jacobian(seed.wrapping_add(1), samples),
        transition_max_rel_err: check_transition_jacobian(seed.wrapping_add(2), samples),
        samples,
    }
}

/// Twist vector with every component bounded for quick sanity prints.
pub fn format_twist(u: &Vector6<f64>) -> String {
    format!(
        "[{:.4}, {:.4}, {:.4}, {:.4}, {:.4}, {:.4}]",
        u[0], u[1], u[2], u[3], u[4], u[5]
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_jacobians_verify_below_tolerance() {
        let report = run_all(42, 100);
        assert!(
            report.all_below(1e-5),
            "point {} contour {} transition {}",
            report.point_max_rel_err,
            report.contour_max_rel_err,
            report.transition_max_rel_err
        );
    }
}
