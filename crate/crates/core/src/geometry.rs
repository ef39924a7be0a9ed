//! Camera model, rigid poses, twists, and the point-feature interaction matrix.
//!
//! Conventions used throughout the crate:
//! - The camera looks along its +z axis; a feature depth is the camera-frame
//!   z coordinate of the touched surface point, not a range along the ray.
//! - Pixel coordinates follow image convention (u right, v down), metric
//!   image-plane coordinates are `(u - c_u) * pitch` and `(v - c_v) * pitch`.
//! - Angles are radians, wrapped to `(-pi, pi]`; line orientations live on
//!   the half-open interval `(-pi/2, pi/2]`.

use core::fmt;

use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};
#[allow(unused_imports)]
use num_traits::Float; // inherent f64 methods in std builds, libm in no_std

/// Two-sided wrap to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut w = a - two_pi * (a / two_pi).round();
    if w <= -core::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Wrap a line orientation to `(-pi/2, pi/2]` (lines are undirected).
pub fn wrap_half_angle(a: f64) -> f64 {
    let pi = core::f64::consts::PI;
    let mut w = wrap_angle(a);
    if w > pi / 2.0 {
        w -= pi;
    } else if w <= -pi / 2.0 {
        w += pi;
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    /// A projection or interaction matrix was requested for a point at or
    /// behind the camera plane.
    NonPositiveDepth,
    /// The two point features coincide (pixel distance below one pixel).
    DegenerateSegment,
    /// Intrinsics violate their invariants.
    InvalidIntrinsics(&'static str),
    /// A rotation matrix failed the orthonormality check.
    InvalidRotation,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::NonPositiveDepth => write!(f, "point depth must be positive"),
            GeometryError::DegenerateSegment => write!(f, "point features coincide"),
            GeometryError::InvalidIntrinsics(msg) => write!(f, "invalid intrinsics: {msg}"),
            GeometryError::InvalidRotation => write!(f, "rotation matrix is not orthonormal"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeometryError {}

/// Pinhole model of the tactile sensor's internal camera.
///
/// The pixel pitch is isotropic. The default approximates a 320x240 sensor
/// with a roughly 19 x 14 mm window and unit image magnification at the
/// nominal 20 mm contact depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    /// Focal length in meters.
    pub focal_length_m: f64,
    /// Pixel pitch in meters per pixel (isotropic).
    pub pixel_pitch_m: f64,
    /// Principal point in pixels (u, v).
    pub principal_point_px: (f64, f64),
    /// Image size in pixels (width, height).
    pub image_size_px: (u32, u32),
}

impl CameraIntrinsics {
    pub fn new(
        focal_length_m: f64,
        pixel_pitch_m: f64,
        principal_point_px: (f64, f64),
        image_size_px: (u32, u32),
    ) -> Result<Self, GeometryError> {
        if !(focal_length_m > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("focal length must be positive"));
        }
        if !(pixel_pitch_m > 0.0) {
            return Err(GeometryError::InvalidIntrinsics("pixel pitch must be positive"));
        }
        let (cu, cv) = principal_point_px;
        let (w, h) = image_size_px;
        if !(cu >= 0.0 && cu <= w as f64 && cv >= 0.0 && cv <= h as f64) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point outside image bounds",
            ));
        }
        Ok(Self {
            focal_length_m,
            pixel_pitch_m,
            principal_point_px,
            image_size_px,
        })
    }

    /// Focal length expressed in pixels.
    pub fn focal_px(&self) -> f64 {
        self.focal_length_m / self.pixel_pitch_m
    }

    /// Metric image-plane coordinates of a pixel.
    pub fn metric_from_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u - self.principal_point_px.0) * self.pixel_pitch_m,
            (v - self.principal_point_px.1) * self.pixel_pitch_m,
        )
    }

    /// Normalized (unit focal) image coordinates of a pixel.
    pub fn normalized_from_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let k = self.focal_px();
        (
            (u - self.principal_point_px.0) / k,
            (v - self.principal_point_px.1) / k,
        )
    }

    pub fn width(&self) -> f64 {
        self.image_size_px.0 as f64
    }

    pub fn height(&self) -> f64 {
        self.image_size_px.1 as f64
    }
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            focal_length_m: 0.020,
            pixel_pitch_m: 6.0e-5,
            principal_point_px: (160.0, 120.0),
            image_size_px: (320, 240),
        }
    }
}

/// An image point feature: pixel coordinates plus the camera-frame depth of
/// the touched surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFeature {
    pub u: f64,
    pub v: f64,
    /// Depth along the optical axis in meters; always positive.
    pub depth: f64,
}

impl PointFeature {
    pub fn new(u: f64, v: f64, depth: f64) -> Self {
        Self { u, v, depth }
    }

    /// Whether the pixel lies inside the image inset by `margin_px`.
    pub fn is_within(&self, intrinsics: &CameraIntrinsics, margin_px: f64) -> bool {
        self.u >= margin_px
            && self.u <= intrinsics.width() - margin_px
            && self.v >= margin_px
            && self.v <= intrinsics.height() - margin_px
    }
}

/// End-effector twist expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    /// Linear velocity in m/s.
    pub linear: Vector3<f64>,
    /// Angular velocity in rad/s.
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self {
            linear: Vector3::zeros(),
            angular: Vector3::zeros(),
        }
    }

    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    /// Component-wise clamp to a symmetric-or-not box.
    pub fn clamped(&self, lower: &Vector6<f64>, upper: &Vector6<f64>) -> Twist {
        let v = self.to_vector();
        let mut out = v;
        for i in 0..6 {
            out[i] = v[i].max(lower[i]).min(upper[i]);
        }
        Twist::from_vector(&out)
    }
}

/// Rigid transform: rotation plus translation.
///
/// When used for the sensor, the pose maps camera-frame coordinates to
/// world-frame coordinates (`p_w = R p_c + t`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Build a pose, checking rotation orthonormality to 1e-10.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let eye = rotation.transpose() * rotation;
        let drift = (eye - Matrix3::identity()).abs().max();
        if drift > 1e-10 || (rotation.determinant() - 1.0).abs() > 1e-10 {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Re-orthonormalize the rotation by Gram-Schmidt on its columns.
    pub fn orthonormalized(&self) -> Pose {
        let c0 = self.rotation.column(0).normalize();
        let mut c1: Vector3<f64> = self.rotation.column(1).into();
        c1 -= c0 * c0.dot(&c1);
        let c1 = c1.normalize();
        let c2 = c0.cross(&c1);
        Pose {
            rotation: Matrix3::from_columns(&[c0, c1, c2]),
            translation: self.translation,
        }
    }
}

/// Skew-symmetric matrix of a 3-vector.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// SE(3) exponential of a body twist integrated over `dt`.
pub fn exp_twist(twist: &Twist, dt: f64) -> Pose {
    let w = twist.angular * dt;
    let v = twist.linear * dt;
    let theta = w.norm();
    let wx = hat(&w);
    let wx2 = wx * wx;
    // Taylor fallbacks keep the map smooth through theta = 0.
    let (a, b, c) = if theta < 1e-6 {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0,
            0.5 - t2 / 24.0,
            1.0 / 6.0 - t2 / 120.0,
        )
    } else {
        let t2 = theta * theta;
        (
            theta.sin() / theta,
            (1.0 - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    };
    let rotation = Matrix3::identity() + wx * a + wx2 * b;
    let jac = Matrix3::identity() + wx * b + wx2 * c;
    Pose {
        rotation,
        translation: jac * v,
    }
}

/// Pinhole projection of a camera-frame point.
pub fn project(
    point_camera: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
) -> Result<PointFeature, GeometryError> {
    let z = point_camera.z;
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let scale = intrinsics.focal_length_m / (z * intrinsics.pixel_pitch_m);
    Ok(PointFeature {
        u: intrinsics.principal_point_px.0 + scale * point_camera.x,
        v: intrinsics.principal_point_px.1 + scale * point_camera.y,
        depth: z,
    })
}

/// Inverse of [`project`] given the stored depth.
pub fn unproject(
    feature: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if !(feature.depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let (xn, yn) = intrinsics.normalized_from_pixel(feature.u, feature.v);
    Ok(Vector3::new(
        xn * feature.depth,
        yn * feature.depth,
        feature.depth,
    ))
}

/// Interaction matrix of a point feature `(u, v, Z)` under a camera twist.
///
/// Rows 1-2 are the classical image-point interaction matrix in pixel units;
/// row 3 gives the depth rate of a point rigidly attached to the touched
/// surface.
pub fn point_interaction_matrix(
    feature: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<SMatrix<f64, 3, 6>, GeometryError> {
    let z = feature.depth;
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let k = intrinsics.focal_px();
    let (x, y) = intrinsics.normalized_from_pixel(feature.u, feature.v);
    let mut m = SMatrix::<f64, 3, 6>::zeros();
    m[(0, 0)] = k * (-1.0 / z);
    m[(0, 2)] = k * (x / z);
    m[(0, 3)] = k * (x * y);
    m[(0, 4)] = k * (-(1.0 + x * x));
    m[(0, 5)] = k * y;
    m[(1, 1)] = k * (-1.0 / z);
    m[(1, 2)] = k * (y / z);
    m[(1, 3)] = k * (1.0 + y * y);
    m[(1, 4)] = k * (-x * y);
    m[(1, 5)] = k * (-x);
    m[(2, 2)] = -1.0;
    m[(2, 3)] = -y * z;
    m[(2, 4)] = x * z;
    Ok(m)
}

/// Derivative of `J_P(s) * u` with respect to the feature `s = (u, v, Z)`.
///
/// Used to assemble the state Jacobian of the feature dynamics.
pub fn point_rate_jacobian(
    feature: &PointFeature,
    twist: &Twist,
    intrinsics: &CameraIntrinsics,
) -> Result<Matrix3<f64>, GeometryError> {
    let z = feature.depth;
    if !(z > 0.0) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let k = intrinsics.focal_px();
    let (x, y) = intrinsics.normalized_from_pixel(feature.u, feature.v);
    let (vx, vy, vz) = (twist.linear.x, twist.linear.y, twist.linear.z);
    let (wx, wy, wz) = (twist.angular.x, twist.angular.y, twist.angular.z);
    let mut m = Matrix3::zeros();
    // d(u_dot)/d(u, v, Z)
    m[(0, 0)] = vz / z + y * wx - 2.0 * x * wy;
    m[(0, 1)] = x * wx + wz;
    m[(0, 2)] = (k / (z * z)) * (vx - x * vz);
    // d(v_dot)/d(u, v, Z)
    m[(1, 0)] = -y * wy - wz;
    m[(1, 1)] = vz / z + 2.0 * y * wx - x * wy;
    m[(1, 2)] = (k / (z * z)) * (vy - y * vz);
    // d(Z_dot)/d(u, v, Z)
    m[(2, 0)] = z * wy / k;
    m[(2, 1)] = -z * wx / k;
    m[(2, 2)] = -y * wx + x * wy;
    Ok(m)
}
