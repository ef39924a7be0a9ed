//! Reactive controllers over contour features: a coupled servo law, a
//! decoupled servo law, and the reference generator shared with the MPC.
//!
//! Both servo laws regulate the contour error through damped pseudo-inverses
//! of the contour interaction matrix, with secondary objectives (forward
//! velocity, pitch and depth regulation) injected through null-space
//! projection. The decoupled variant splits the twist into planar and axial
//! components and never lets the error feedback command the optical-axis
//! translation directly.

use nalgebra::{SMatrix, Vector2, Vector4, Vector6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::features::{
    contour_interaction_matrix, decouple, recombine_twist, ContourFeatures, TactileState,
};
use crate::geometry::{wrap_angle, CameraIntrinsics, GeometryError, Twist};
use crate::plant::{CONTACT_DEPTH_MAX_M, CONTACT_DEPTH_MIN_M, FOV_MARGIN_PX};

/// Desired contour features plus the forward-velocity schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourReference {
    pub desired: ContourFeatures,
    /// Maximum forward velocity along the contour (m/s).
    pub v_x_max: f64,
    /// Weight normalizing the contour error in the velocity schedule.
    pub weight_w: SMatrix<f64, 4, 4>,
}

impl Default for ContourReference {
    fn default() -> Self {
        let q = default_q();
        Self {
            desired: ContourFeatures {
                offset: 0.0,
                angle: 0.0,
                pitch: 0.0,
                depth: 0.020,
            },
            v_x_max: 0.005,
            weight_w: q / q.trace(),
        }
    }
}

pub fn default_q() -> SMatrix<f64, 4, 4> {
    SMatrix::<f64, 4, 4>::from_diagonal(&Vector4::new(1e6, 10.0, 10.0, 1e6))
}

pub fn default_r() -> SMatrix<f64, 6, 6> {
    SMatrix::<f64, 6, 6>::from_diagonal(&Vector6::new(10.0, 10.0, 10.0, 1.0, 1.0, 1.0))
}

/// Default state box: field-of-view bounds on the point pixels and the
/// contact band on the feature depth; everything else unconstrained.
pub fn default_state_bounds() -> (SMatrix<f64, 10, 1>, SMatrix<f64, 10, 1>) {
    let inf = f64::INFINITY;
    let lower = SMatrix::<f64, 10, 1>::from_column_slice(&[
        FOV_MARGIN_PX,
        FOV_MARGIN_PX,
        -inf,
        FOV_MARGIN_PX,
        FOV_MARGIN_PX,
        -inf,
        -inf,
        -inf,
        -inf,
        CONTACT_DEPTH_MIN_M,
    ]);
    let upper = SMatrix::<f64, 10, 1>::from_column_slice(&[
        320.0 - FOV_MARGIN_PX,
        240.0 - FOV_MARGIN_PX,
        inf,
        320.0 - FOV_MARGIN_PX,
        240.0 - FOV_MARGIN_PX,
        inf,
        inf,
        inf,
        inf,
        CONTACT_DEPTH_MAX_M,
    ]);
    (lower, upper)
}

/// Default input box: |v| <= 2 cm/s, |w| <= 0.5 rad/s per axis.
pub fn default_input_bounds() -> (Vector6<f64>, Vector6<f64>) {
    let hi = Vector6::new(0.02, 0.02, 0.02, 0.5, 0.5, 0.5);
    (-hi, hi)
}

/// Shared gain set for the reactive controllers and the MPC weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    /// Feature-error gain of the coupled servo (1/s).
    pub servo_gain: SMatrix<f64, 4, 4>,
    /// Tikhonov damping of the pseudo-inverses.
    pub damping: f64,
    /// Depth-regulation gain of the decoupled servo (1/s).
    pub k_depth: f64,
    /// Pitch-regulation gain of the decoupled servo (1/s).
    pub k_pitch: f64,
    pub q: SMatrix<f64, 4, 4>,
    pub r: SMatrix<f64, 6, 6>,
    pub horizon_steps: usize,
    pub dt: f64,
    pub state_bounds: (SMatrix<f64, 10, 1>, SMatrix<f64, 10, 1>),
    pub input_bounds: (Vector6<f64>, Vector6<f64>),
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            servo_gain: SMatrix::<f64, 4, 4>::from_diagonal(&Vector4::new(2.0, 2.0, 2.0, 2.0)),
            damping: 1e-6,
            k_depth: 2.0,
            k_pitch: 2.0,
            q: default_q(),
            r: default_r(),
            horizon_steps: 25,
            dt: 0.02,
            state_bounds: default_state_bounds(),
            input_bounds: default_input_bounds(),
        }
    }
}

/// Component-wise desired-minus-current error with wrapped angles.
pub fn contour_error(desired: &ContourFeatures, current: &ContourFeatures) -> Vector4<f64> {
    Vector4::new(
        desired.offset - current.offset,
        wrap_angle(desired.angle - current.angle),
        wrap_angle(desired.pitch - current.pitch),
        desired.depth - current.depth,
    )
}

/// Forward-velocity schedule: full speed at zero error, decaying with the
/// weighted squared error. Strictly positive and bounded by `v_x_max`.
pub fn forward_velocity_reference(error: &Vector4<f64>, reference: &ContourReference) -> f64 {
    let weighted = (error.transpose() * reference.weight_w * error)[(0, 0)];
    reference.v_x_max / (1.0 + weighted)
}

/// Damped pseudo-inverse of a wide matrix: `J^T (J J^T + damping I)^-1`.
fn damped_pinv_4x6(j: &SMatrix<f64, 4, 6>, damping: f64) -> Option<SMatrix<f64, 6, 4>> {
    let jjt = j * j.transpose() + SMatrix::<f64, 4, 4>::identity() * damping;
    let inv = jjt.cholesky()?;
    Some(j.transpose() * inv.inverse())
}

/// Coupled servo: damped least-squares feature regulation with a forward
/// push in the remaining null space.
pub fn coupled_servo(
    state: &TactileState,
    reference: &ContourReference,
    gains: &ControllerGains,
    intrinsics: &CameraIntrinsics,
) -> Result<Twist, GeometryError> {
    let error = contour_error(&reference.desired, &state.contour);
    let v_xd = forward_velocity_reference(&error, reference);
    let push = Vector6::new(v_xd, 0.0, 0.0, 0.0, 0.0, 0.0);
    coupled_servo_with_push(state, reference, gains, intrinsics, &push)
}

/// Coupled servo with an explicit null-space objective.
pub fn coupled_servo_with_push(
    state: &TactileState,
    reference: &ContourReference,
    gains: &ControllerGains,
    intrinsics: &CameraIntrinsics,
    push: &Vector6<f64>,
) -> Result<Twist, GeometryError> {
    let j = contour_interaction_matrix(&state.p1, &state.p2, intrinsics)?;
    let error = contour_error(&reference.desired, &state.contour);
    let pinv = damped_pinv_4x6(&j, gains.damping).ok_or(GeometryError::DegenerateSegment)?;
    let primary = pinv * (gains.servo_gain * error);
    let null_proj = SMatrix::<f64, 6, 6>::identity() - pinv * j;
    Ok(Twist::from_vector(&(primary + null_proj * push)))
}

fn pinv_row4(row: &SMatrix<f64, 1, 4>, damping: f64) -> SMatrix<f64, 4, 1> {
    let denom = (row * row.transpose())[(0, 0)] + damping;
    row.transpose() / denom
}

fn pinv_row2(row: &SMatrix<f64, 1, 2>, damping: f64) -> SMatrix<f64, 2, 1> {
    let denom = (row * row.transpose())[(0, 0)] + damping;
    row.transpose() / denom
}

/// Decoupled servo: the line angle is regulated by the axial twist pair,
/// the line offset by the planar block (compensating the axial choice), and
/// pitch/depth ride in the null spaces.
pub fn decoupled_servo(
    state: &TactileState,
    reference: &ContourReference,
    gains: &ControllerGains,
    intrinsics: &CameraIntrinsics,
) -> Result<Twist, GeometryError> {
    let j = contour_interaction_matrix(&state.p1, &state.p2, intrinsics)?;
    let parts = decouple(&j);
    let error = contour_error(&reference.desired, &state.contour);
    let v_xd = forward_velocity_reference(&error, reference);

    // Axial pair first: angle regulation plus depth push. The push sign
    // follows this crate's depth sense (camera-frame z shrinks when the
    // sensor presses in, so the depth row of the interaction matrix is
    // negative in v_z).
    let angle_row_z = parts.j_z.row(1).into_owned();
    let pinv_z = pinv_row2(&angle_row_z, gains.damping);
    let lambda_z = Vector2::new(-gains.k_depth * error[3], 0.0);
    let null_z = SMatrix::<f64, 2, 2>::identity() - pinv_z * angle_row_z;
    let v_z = pinv_z * error[1] + null_z * lambda_z;

    // Planar block: offset regulation compensating the axial contribution,
    // with forward velocity and pitch regulation in the null space.
    let offset_row_xy = parts.j_xy.row(0).into_owned();
    let offset_row_z = parts.j_z.row(0).into_owned();
    let pinv_xy = pinv_row4(&offset_row_xy, gains.damping);
    let demand = error[0] - (offset_row_z * v_z)[(0, 0)];
    // Pitch regulation rides the planar null space; sign chosen so the
    // pitch row of the interaction matrix closes the loop.
    let lambda_xy = Vector4::new(v_xd, 0.0, 0.0, -gains.k_pitch * error[2]);
    let null_xy = SMatrix::<f64, 4, 4>::identity() - pinv_xy * offset_row_xy;
    let v_xy = pinv_xy * demand + null_xy * lambda_xy;

    Ok(Twist::from_vector(&recombine_twist(
        &Vector4::new(v_xy[0], v_xy[1], v_xy[2], v_xy[3]),
        &Vector2::new(v_z[0], v_z[1]),
    )))
}

/// Reference pair consumed by the MPC: the scheduled forward twist held for
/// one solve, plus the desired contour vector.
pub fn mpc_reference(
    error: &Vector4<f64>,
    reference: &ContourReference,
) -> (Twist, ContourFeatures) {
    let v_xd = forward_velocity_reference(error, reference);
    (
        Twist::from_vector(&Vector6::new(v_xd, 0.0, 0.0, 0.0, 0.0, 0.0)),
        reference.desired,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointFeature;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    fn aligned_state() -> TactileState {
        TactileState::from_points(
            PointFeature::new(10.0, 120.0, 0.020),
            PointFeature::new(310.0, 120.0, 0.020),
            &intr(),
        )
        .unwrap()
    }

    fn offset_state() -> TactileState {
        TactileState::from_points(
            PointFeature::new(12.0, 100.0, 0.0195),
            PointFeature::new(308.0, 141.0, 0.0203),
            &intr(),
        )
        .unwrap()
    }

    #[test]
    fn contour_error_basics() {
        let d = ContourReference::default().desired;
        assert_eq!(contour_error(&d, &d), Vector4::zeros());
        // Wrapped angle difference stays bounded.
        let mut x = d;
        x.angle = core::f64::consts::PI - 0.01;
        let e = contour_error(&d, &x);
        assert!(e[1].abs() <= core::f64::consts::PI);
        assert_relative_eq!(e[1], -(core::f64::consts::PI - 0.01), epsilon = 1e-12);
        // Sign convention: desired minus current.
        let mut y = d;
        y.offset = 1e-3;
        assert_relative_eq!(contour_error(&d, &y)[0], -1e-3);
    }

    #[test]
    fn forward_velocity_schedule_values() {
        let reference = ContourReference::default();
        assert_relative_eq!(
            forward_velocity_reference(&Vector4::zeros(), &reference),
            0.005
        );
        // Construct errors with unit and triple weighted norms.
        let w00 = reference.weight_w[(0, 0)];
        let unit = Vector4::new((1.0 / w00).sqrt(), 0.0, 0.0, 0.0);
        assert_relative_eq!(
            forward_velocity_reference(&unit, &reference),
            0.0025,
            epsilon = 1e-12
        );
        let triple = Vector4::new((3.0 / w00).sqrt(), 0.0, 0.0, 0.0);
        assert_relative_eq!(
            forward_velocity_reference(&triple, &reference),
            0.00125,
            epsilon = 1e-12
        );
    }

    #[test]
    fn coupled_zero_error_stays_in_null_space() {
        let state = aligned_state();
        let reference = ContourReference::default();
        let gains = ControllerGains::default();
        let u = coupled_servo(&state, &reference, &gains, &intr()).unwrap();
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let rate = j * u.to_vector();
        assert!(rate.amax() < 1e-9, "feature rate {rate:?}");
        // The push survives: forward motion at the scheduled speed.
        assert_relative_eq!(u.linear.x, 0.005, epsilon = 1e-6);
    }

    #[test]
    fn coupled_minimum_norm_without_push() {
        let state = offset_state();
        let reference = ContourReference::default();
        let gains = ControllerGains::default();
        let u = coupled_servo_with_push(&state, &reference, &gains, &intr(), &Vector6::zeros())
            .unwrap();
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let error = contour_error(&reference.desired, &state.contour);
        let achieved = j * u.to_vector();
        let demanded = gains.servo_gain * error;
        assert!(
            (achieved - demanded).amax() < 1e-5 * demanded.amax().max(1.0),
            "achieved {achieved:?} vs demanded {demanded:?}"
        );
    }

    #[test]
    fn null_space_projection_never_moves_features() {
        let state = offset_state();
        let gains = ControllerGains::default();
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let pinv = super::damped_pinv_4x6(&j, gains.damping).unwrap();
        let null_proj = SMatrix::<f64, 6, 6>::identity() - pinv * j;
        // The forward push of the servo law leaks only at the damped
        // tolerance; larger pushes scale linearly with their magnitude.
        let forward = Vector6::new(0.005, 0.0, 0.0, 0.0, 0.0, 0.0);
        let leak = j * (null_proj * forward);
        assert!(leak.amax() < 1e-8, "null-space leak {leak:?}");
        let aggressive = Vector6::new(0.0, 0.01, -0.003, 0.1, -0.2, 0.3);
        let leak = j * (null_proj * aggressive);
        let scale = (j * aggressive).amax();
        assert!(leak.amax() < 1e-5 * scale.max(1e-3), "null-space leak {leak:?}");
    }

    #[test]
    fn decoupled_zero_error_preserves_forward_motion() {
        let state = aligned_state();
        let reference = ContourReference::default();
        let gains = ControllerGains::default();
        let u = decoupled_servo(&state, &reference, &gains, &intr()).unwrap();
        assert!(u.linear.x > 0.8 * reference.v_x_max, "v_x = {}", u.linear.x);
        // No feature motion at the reference.
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let rate = j * u.to_vector();
        assert!(rate.amax() < 1e-6, "feature rate {rate:?}");
    }

    #[test]
    fn decoupled_depth_step_response() {
        // Start shallower than desired; the commanded twist must deepen the
        // contact (negative depth rate toward the deeper reference).
        let state = TactileState::from_points(
            PointFeature::new(10.0, 120.0, 0.0190),
            PointFeature::new(310.0, 120.0, 0.0190),
            &intr(),
        )
        .unwrap();
        let reference = ContourReference::default(); // desired depth 0.020
        let gains = ControllerGains::default();
        let u = decoupled_servo(&state, &reference, &gains, &intr()).unwrap();
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let rate = j * u.to_vector();
        assert!(rate[3] > 1e-4, "depth rate {} must move toward desired", rate[3]);
        // And a closed-loop model step converges monotonically.
        let mut x = state.as_vector();
        let mut depth_err = (reference.desired.depth - x[9]).abs();
        for _ in 0..50 {
            let s = TactileState::from_vector_resync(&x, &intr()).unwrap();
            let cmd = decoupled_servo(&s, &reference, &gains, &intr()).unwrap();
            x = crate::plant::rk4_step(&x, &cmd, 0.02, &intr()).unwrap();
            let e = (reference.desired.depth - x[9]).abs();
            assert!(e <= depth_err + 1e-9, "depth error must not grow: {e} > {depth_err}");
            depth_err = e;
        }
        assert!(depth_err < 2e-4, "final depth error {depth_err}");
    }

    #[test]
    fn decoupled_recombination_matches_full_jacobian() {
        let state = offset_state();
        let j = contour_interaction_matrix(&state.p1, &state.p2, &intr()).unwrap();
        let parts = decouple(&j);
        let u = decoupled_servo(
            &state,
            &ContourReference::default(),
            &ControllerGains::default(),
            &intr(),
        )
        .unwrap()
        .to_vector();
        let (xy, z) = crate::features::split_twist(&u);
        let lhs = parts.j_xy * xy + parts.j_z * z;
        let rhs = j * u;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn controllers_are_pure_functions() {
        let state = offset_state();
        let reference = ContourReference::default();
        let gains = ControllerGains::default();
        let a = coupled_servo(&state, &reference, &gains, &intr()).unwrap();
        let b = coupled_servo(&state, &reference, &gains, &intr()).unwrap();
        assert_eq!(a, b);
        let c = decoupled_servo(&state, &reference, &gains, &intr()).unwrap();
        let d = decoupled_servo(&state, &reference, &gains, &intr()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn mpc_reference_holds_the_schedule() {
        let reference = ContourReference::default();
        let (u_d, xi_d) = mpc_reference(&Vector4::zeros(), &reference);
        assert_relative_eq!(u_d.linear.x, reference.v_x_max);
        assert_eq!(xi_d, reference.desired);
        // Large error drives the schedule toward zero but never negative.
        let big = Vector4::new(1.0, 1.0, 1.0, 1.0);
        let (u_big, _) = mpc_reference(&big, &reference);
        assert!(u_big.linear.x > 0.0 && u_big.linear.x < reference.v_x_max);
        // Shrinking error never reduces the schedule.
        let smaller = Vector4::new(0.5, 0.5, 0.5, 0.5);
        let (u_small, _) = mpc_reference(&smaller, &reference);
        assert!(u_small.linear.x >= u_big.linear.x);
    }

    proptest! {
        #[test]
        fn schedule_is_decreasing_and_bounded(
            r in -5e-3f64..5e-3,
            beta in -1.0f64..1.0,
            alpha in -0.5f64..0.5,
            depth in -2e-3f64..2e-3,
            scale in 1.0f64..4.0,
        ) {
            let reference = ContourReference::default();
            let e = Vector4::new(r, beta, alpha, depth);
            let v1 = forward_velocity_reference(&e, &reference);
            let v2 = forward_velocity_reference(&(e * scale), &reference);
            prop_assert!(v1 > 0.0 && v1 <= reference.v_x_max);
            prop_assert!(v2 <= v1 + 1e-15);
        }
    }
}
