//! Synthetic tactile world: parametric contours on a flat surface, sensor
//! pose kinematics, ground-truth feature generation, the RK4-discretized
//! feature system, disturbance injection, and a depth-image renderer.
//!
//! The world is a raised ridge (Gaussian cross-section) running along a
//! parametric centerline on a constant-height surface. Contact is modeled
//! purely as depth-band membership: the sensor is "in contact" while the
//! contact depth at the feature midpoint stays inside
//! [`CONTACT_DEPTH_MIN_M`, `CONTACT_DEPTH_MAX_M`].
//!
//! Ground-truth features are the intersection points of the contour
//! centerline with the image rectangle inset by [`FOV_MARGIN_PX`]. At
//! polyline corners the feature follows the dominant (longer) visible edge,
//! ties broken toward the edge ahead in path order, and the feature line is
//! that edge's line extended to the border band.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{SMatrix, SVector, Vector2, Vector3};
#[allow(unused_imports)]
use num_traits::Float;
use rand_core::{RngCore, SeedableRng};

use crate::features::{dynamics_jacobians, system_dynamics, TactileState};
use crate::geometry::{
    exp_twist, project, CameraIntrinsics, GeometryError, PointFeature, Pose, Twist,
};
use crate::image::DepthImage;

/// Admissible contact-depth band (meters).
pub const CONTACT_DEPTH_MIN_M: f64 = 0.0182;
pub const CONTACT_DEPTH_MAX_M: f64 = 0.022;

/// Feature anchoring margin and field-of-view bound (pixels).
pub const FOV_MARGIN_PX: f64 = 10.0;

/// Minimum visible chord length for a usable feature (pixels).
const MIN_CHORD_PX: f64 = 8.0;

/// Sampling step for curved centerlines (meters).
const CURVE_STEP_M: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantError {
    /// World parameters violate their invariants.
    InvalidWorld(&'static str),
    /// The sensor footprint misses the surface.
    OutOfContact,
    /// Propagated feature-geometry failure.
    Geometry(GeometryError),
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::InvalidWorld(msg) => write!(f, "invalid world: {msg}"),
            PlantError::OutOfContact => write!(f, "sensor footprint misses the surface"),
            PlantError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PlantError {}

impl From<GeometryError> for PlantError {
    fn from(e: GeometryError) -> Self {
        PlantError::Geometry(e)
    }
}

/// Parametric contour centerline in the surface plane.
#[derive(Debug, Clone, PartialEq)]
pub enum ContourPath {
    /// Straight segment from the origin along `angle_rad`.
    Line { angle_rad: f64, length_m: f64 },
    /// Sine wave `y = A sin(2 pi x / wavelength)` for `x` in `[0, length]`.
    SShape {
        amplitude_m: f64,
        wavelength_m: f64,
        length_m: f64,
    },
    /// Regular hexagon, counter-clockwise, starting at `(R, 0)`.
    Hexagon { circumradius_m: f64 },
    /// Circle of the given radius, counter-clockwise from `(R, 0)`.
    Circle { radius_m: f64 },
    Polyline { points: Vec<[f64; 2]>, closed: bool },
}

impl ContourPath {
    /// Default S-shape used by the shipped scenarios.
    pub fn default_s_shape() -> Self {
        ContourPath::SShape {
            amplitude_m: 0.02,
            wavelength_m: 0.12,
            length_m: 0.24,
        }
    }

    /// Default hexagon used by the shipped scenarios.
    pub fn default_hexagon() -> Self {
        ContourPath::Hexagon {
            circumradius_m: 0.04,
        }
    }

    pub fn compile(&self) -> Result<PathGeometry, PlantError> {
        match self {
            ContourPath::Line { angle_rad, length_m } => {
                if !(*length_m > 0.0) {
                    return Err(PlantError::InvalidWorld("line length must be positive"));
                }
                let dir = Vector2::new(angle_rad.cos(), angle_rad.sin());
                PathGeometry::from_vertices(
                    alloc::vec![Vector2::zeros(), dir * *length_m],
                    false,
                    true,
                )
            }
            ContourPath::SShape {
                amplitude_m,
                wavelength_m,
                length_m,
            } => {
                if !(*wavelength_m > 0.0 && *length_m > 0.0) {
                    return Err(PlantError::InvalidWorld("s-shape dimensions must be positive"));
                }
                let n = ((length_m / CURVE_STEP_M).ceil() as usize).max(8);
                let mut pts = Vec::with_capacity(n + 1);
                for i in 0..=n {
                    let x = length_m * i as f64 / n as f64;
                    let y = amplitude_m * (2.0 * core::f64::consts::PI * x / wavelength_m).sin();
                    pts.push(Vector2::new(x, y));
                }
                PathGeometry::from_vertices(pts, false, false)
            }
            ContourPath::Hexagon { circumradius_m } => {
                if !(*circumradius_m > 0.0) {
                    return Err(PlantError::InvalidWorld("hexagon radius must be positive"));
                }
                let mut pts = Vec::with_capacity(6);
                for i in 0..6 {
                    let a = core::f64::consts::PI / 3.0 * i as f64;
                    pts.push(Vector2::new(circumradius_m * a.cos(), circumradius_m * a.sin()));
                }
                PathGeometry::from_vertices(pts, true, true)
            }
            ContourPath::Circle { radius_m } => {
                if !(*radius_m > 0.0) {
                    return Err(PlantError::InvalidWorld("circle radius must be positive"));
                }
                let perimeter = 2.0 * core::f64::consts::PI * radius_m;
                let n = ((perimeter / CURVE_STEP_M).ceil() as usize).max(16);
                let mut pts = Vec::with_capacity(n);
                for i in 0..n {
                    let a = 2.0 * core::f64::consts::PI * i as f64 / n as f64;
                    pts.push(Vector2::new(radius_m * a.cos(), radius_m * a.sin()));
                }
                PathGeometry::from_vertices(pts, true, false)
            }
            ContourPath::Polyline { points, closed } => {
                let pts: Vec<Vector2<f64>> =
                    points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                PathGeometry::from_vertices(pts, *closed, true)
            }
        }
    }
}

/// Compiled centerline: a vertex chain with cumulative arc lengths.
#[derive(Debug, Clone)]
pub struct PathGeometry {
    pts: Vec<Vector2<f64>>,
    /// Cumulative arc length at each vertex; for closed paths one extra
    /// entry closes the loop.
    cum: Vec<f64>,
    closed: bool,
    /// Vertices that are true corners (edge boundaries of straight kinds).
    straight_edges: bool,
}

impl PathGeometry {
    fn from_vertices(
        pts: Vec<Vector2<f64>>,
        closed: bool,
        straight_edges: bool,
    ) -> Result<Self, PlantError> {
        if pts.len() < 2 {
            return Err(PlantError::InvalidWorld("path needs at least two vertices"));
        }
        let n_seg = if closed { pts.len() } else { pts.len() - 1 };
        let mut cum = Vec::with_capacity(n_seg + 1);
        cum.push(0.0);
        for i in 0..n_seg {
            let a = pts[i];
            let b = pts[(i + 1) % pts.len()];
            let len = (b - a).norm();
            if len <= 0.0 {
                return Err(PlantError::InvalidWorld("zero-length path segment"));
            }
            cum.push(cum[i] + len);
        }
        Ok(Self {
            pts,
            cum,
            closed,
            straight_edges,
        })
    }

    pub fn total_length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segment_count(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        let a = self.pts[i % self.pts.len()];
        let b = self.pts[(i + 1) % self.pts.len()];
        (a, b)
    }

    fn wrap_arc(&self, s: f64) -> f64 {
        let total = self.total_length();
        if self.closed {
            let mut w = s % total;
            if w < 0.0 {
                w += total;
            }
            w
        } else {
            s.clamp(0.0, total)
        }
    }

    fn segment_at_arc(&self, s: f64) -> usize {
        let s = self.wrap_arc(s);
        match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => (i - 1).min(self.segment_count() - 1),
        }
    }

    pub fn point_at(&self, s: f64) -> Vector2<f64> {
        let s = self.wrap_arc(s);
        let i = self.segment_at_arc(s);
        let (a, b) = self.segment(i);
        let t = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        a + (b - a) * t
    }

    pub fn tangent_at(&self, s: f64) -> Vector2<f64> {
        let i = self.segment_at_arc(self.wrap_arc(s));
        let (a, b) = self.segment(i);
        (b - a).normalize()
    }

    /// Arc position of the point on the path nearest to `p`. With a hint the
    /// search is restricted to `hint +- window` along the path.
    pub fn nearest_arc(&self, p: &Vector2<f64>, hint: Option<f64>, window: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in self.window_segments(hint, window) {
            let (a, b) = self.segment(i);
            let d = b - a;
            let len2 = d.norm_squared();
            let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
            let q = a + d * t;
            let dist = (p - q).norm_squared();
            if dist < best.0 {
                best = (dist, self.cum[i] + t * (self.cum[i + 1] - self.cum[i]));
            }
        }
        best.1
    }

    /// Signed wrap-aware arc difference `to - from`.
    pub fn arc_delta(&self, from: f64, to: f64) -> f64 {
        if !self.closed {
            return to - from;
        }
        let total = self.total_length();
        let mut d = (to - from) % total;
        if d > total / 2.0 {
            d -= total;
        } else if d < -total / 2.0 {
            d += total;
        }
        d
    }

    /// Segment indices intersecting the arc window, in path order.
    fn window_segments(&self, hint: Option<f64>, window: f64) -> Vec<usize> {
        let n = self.segment_count();
        let Some(h) = hint else {
            return (0..n).collect();
        };
        if !self.closed {
            let lo = self.segment_at_arc((h - window).max(0.0));
            let hi = self.segment_at_arc((h + window).min(self.total_length()));
            return (lo..=hi).collect();
        }
        if 2.0 * window >= self.total_length() {
            return (0..n).collect();
        }
        let lo = self.segment_at_arc(h - window);
        let hi = self.segment_at_arc(h + window);
        let mut out = Vec::new();
        let mut i = lo;
        loop {
            out.push(i);
            if i == hi {
                break;
            }
            i = (i + 1) % n;
            if out.len() > n {
                break;
            }
        }
        out
    }
}

/// Synthetic world: a ridge along a contour on a constant-height surface.
#[derive(Debug, Clone)]
pub struct WorldModel {
    pub contour: ContourPath,
    pub surface_height_m: f64,
    pub ridge_height_m: f64,
    pub ridge_sigma_m: f64,
    geometry: PathGeometry,
}

impl WorldModel {
    pub fn new(
        contour: ContourPath,
        surface_height_m: f64,
        ridge_height_m: f64,
        ridge_sigma_m: f64,
    ) -> Result<Self, PlantError> {
        if !(ridge_height_m > 0.0) {
            return Err(PlantError::InvalidWorld("ridge height must be positive"));
        }
        if !(ridge_sigma_m > 0.0) {
            return Err(PlantError::InvalidWorld("ridge sigma must be positive"));
        }
        let geometry = contour.compile()?;
        Ok(Self {
            contour,
            surface_height_m,
            ridge_height_m,
            ridge_sigma_m,
            geometry,
        })
    }

    /// Standard ridge profile on a flat surface.
    pub fn with_defaults(contour: ContourPath) -> Result<Self, PlantError> {
        Self::new(contour, 0.0, 5.0e-4, 4.0e-4)
    }

    pub fn geometry(&self) -> &PathGeometry {
        &self.geometry
    }

    /// World z of the ridge crest.
    pub fn crest_z(&self) -> f64 {
        self.surface_height_m + self.ridge_height_m
    }
}

/// Sensor pose (camera frame in world coordinates) plus a clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorState {
    pub pose: Pose,
    pub clock: f64,
}

impl SensorState {
    pub fn new(pose: Pose) -> Self {
        Self { pose, clock: 0.0 }
    }
}

/// Scheduled pose perturbation, applied at most once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disturbance {
    pub time_s: f64,
    /// Body-frame pose offset `[dx, dy, dz, rx, ry, rz]`.
    pub offset: [f64; 6],
}

/// Why no usable feature was produced. This is a value, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoContactReason {
    /// The contour does not cross the sensor footprint band.
    NoCrossing,
    /// Midpoint contact depth left the admissible band.
    OutOfBand,
}

/// Ground-truth observation of the contour by the sensor.
#[derive(Debug, Clone)]
pub enum ContactResult {
    Contact(ContactInfo),
    NoContact(NoContactReason),
}

#[derive(Debug, Clone)]
pub struct ContactInfo {
    pub state: TactileState,
    /// Arc position of the observed chord midpoint along the path.
    pub arc_m: f64,
}

/// One projected centerline segment piece visible inside the border band.
struct VisiblePiece {
    seg: usize,
    order: usize,
    t0: f64,
    t1: f64,
    img_a: PointFeature,
    img_b: PointFeature,
    arc_a: f64,
    arc_b: f64,
}

/// Intersect the contour with the sensor footprint and produce the two
/// border-band anchor points of the dominant visible segment.
pub fn ground_truth_features(
    sensor: &SensorState,
    world: &WorldModel,
    intrinsics: &CameraIntrinsics,
    arc_hint: Option<f64>,
) -> ContactResult {
    let geo = world.geometry();
    let crest = world.crest_z();
    let cam_inv = sensor.pose.inverse();
    let window = 0.08;

    // Project the centerline window and clip each piece to the border band.
    let mut pieces: Vec<VisiblePiece> = Vec::new();
    for (order, seg) in geo.window_segments(arc_hint, window).into_iter().enumerate() {
        let (wa, wb) = geo.segment(seg);
        let ca = cam_inv.transform_point(&Vector3::new(wa.x, wa.y, crest));
        let cb = cam_inv.transform_point(&Vector3::new(wb.x, wb.y, crest));
        if ca.z <= 1e-6 || cb.z <= 1e-6 {
            continue;
        }
        let (Ok(img_a), Ok(img_b)) = (project(&ca, intrinsics), project(&cb, intrinsics)) else {
            continue;
        };
        if let Some((t0, t1)) =
            clip_to_band(&img_a, &img_b, intrinsics, FOV_MARGIN_PX, true)
        {
            let arc0 = geo.cum[seg];
            let arc1 = geo.cum[seg + 1];
            pieces.push(VisiblePiece {
                seg,
                order,
                t0,
                t1,
                img_a,
                img_b,
                arc_a: arc0 + t0 * (arc1 - arc0),
                arc_b: arc0 + t1 * (arc1 - arc0),
            });
        }
    }
    if pieces.is_empty() {
        return ContactResult::NoContact(NoContactReason::NoCrossing);
    }

    // Group contiguous pieces into runs; for straight-edge paths each corner
    // bounds a run so the dominant rule selects one edge.
    let mut runs: Vec<(usize, usize)> = Vec::new(); // index range into pieces
    let mut start = 0;
    for i in 1..pieces.len() {
        let prev = &pieces[i - 1];
        let cur = &pieces[i];
        let contiguous = cur.order == prev.order + 1
            && prev.t1 > 1.0 - 1e-9
            && cur.t0 < 1e-9
            && !(geo.straight_edges && cur.seg != prev.seg);
        if !contiguous {
            runs.push((start, i - 1));
            start = i;
        }
    }
    runs.push((start, pieces.len() - 1));

    // Dominant run: longest world arc, ties toward the run ahead in path
    // order.
    let run_len = |r: &(usize, usize)| -> f64 {
        pieces[r.0..=r.1]
            .iter()
            .map(|p| (p.arc_b - p.arc_a).abs())
            .sum()
    };
    let mut best = runs[0];
    let mut best_len = run_len(&best);
    for r in runs.iter().skip(1) {
        let len = run_len(r);
        if len > best_len + 1e-12 || (len > best_len - 1e-12 && pieces[r.0].arc_a > pieces[best.0].arc_a)
        {
            best = *r;
            best_len = len;
        }
    }

    let first = &pieces[best.0];
    let last = &pieces[best.1];

    let (p1, p2) = if geo.straight_edges {
        // Extend the dominant edge's line to the border band.
        match crate::features::anchor_to_band(&first.img_a, &first.img_b, intrinsics, FOV_MARGIN_PX)
        {
            Some(pair) => pair,
            None => return ContactResult::NoContact(NoContactReason::NoCrossing),
        }
    } else {
        // Chord between the entry and exit crossings of the curve.
        let a = match crate::features::point_on_segment_line(&first.img_a, &first.img_b, first.t0) {
            Some(p) => p,
            None => return ContactResult::NoContact(NoContactReason::NoCrossing),
        };
        let b = match crate::features::point_on_segment_line(&last.img_a, &last.img_b, last.t1) {
            Some(p) => p,
            None => return ContactResult::NoContact(NoContactReason::NoCrossing),
        };
        (a, b)
    };

    let chord = ((p2.u - p1.u).powi(2) + (p2.v - p1.v).powi(2)).sqrt();
    if chord < MIN_CHORD_PX {
        return ContactResult::NoContact(NoContactReason::NoCrossing);
    }
    let state = match TactileState::from_points(p1, p2, intrinsics) {
        Ok(s) => s,
        Err(_) => return ContactResult::NoContact(NoContactReason::NoCrossing),
    };
    if state.contour.depth < CONTACT_DEPTH_MIN_M || state.contour.depth > CONTACT_DEPTH_MAX_M {
        return ContactResult::NoContact(NoContactReason::OutOfBand);
    }
    let arc_m = 0.5 * (first.arc_a + last.arc_b);
    ContactResult::Contact(ContactInfo { state, arc_m })
}

/// Liang-Barsky clip of an image segment (or its infinite line) against the
/// image rectangle inset by `margin_px`.
fn clip_to_band(
    a: &PointFeature,
    b: &PointFeature,
    intrinsics: &CameraIntrinsics,
    margin_px: f64,
    segment_only: bool,
) -> Option<(f64, f64)> {
    let du = b.u - a.u;
    let dv = b.v - a.v;
    if du * du + dv * dv < 1e-18 {
        return None;
    }
    let (mut t_min, mut t_max) = if segment_only {
        (0.0, 1.0)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let checks = [
        (-du, a.u - margin_px),
        (du, intrinsics.width() - margin_px - a.u),
        (-dv, a.v - margin_px),
        (dv, intrinsics.height() - margin_px - a.v),
    ];
    for (p, q) in checks {
        if p.abs() < 1e-15 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            t_min = t_min.max(r);
        } else {
            t_max = t_max.min(r);
        }
    }
    if t_min >= t_max {
        return None;
    }
    Some((t_min, t_max))
}

/// One fourth-order Runge-Kutta step of the feature dynamics.
pub fn rk4_step(
    x: &SVector<f64, 10>,
    u: &Twist,
    dt: f64,
    intrinsics: &CameraIntrinsics,
) -> Result<SVector<f64, 10>, GeometryError> {
    let k1 = system_dynamics(x, u, intrinsics)?;
    let k2 = system_dynamics(&(x + k1 * (dt / 2.0)), u, intrinsics)?;
    let k3 = system_dynamics(&(x + k2 * (dt / 2.0)), u, intrinsics)?;
    let k4 = system_dynamics(&(x + k3 * dt), u, intrinsics)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Jacobians of the RK4 step map with respect to state and input, chained
/// through the four stages.
pub fn rk4_step_jacobians(
    x: &SVector<f64, 10>,
    u: &Twist,
    dt: f64,
    intrinsics: &CameraIntrinsics,
) -> Result<(SMatrix<f64, 10, 10>, SMatrix<f64, 10, 6>), GeometryError> {
    let eye = SMatrix::<f64, 10, 10>::identity();
    let k1 = system_dynamics(x, u, intrinsics)?;
    let x2 = x + k1 * (dt / 2.0);
    let k2 = system_dynamics(&x2, u, intrinsics)?;
    let x3 = x + k2 * (dt / 2.0);
    let k3 = system_dynamics(&x3, u, intrinsics)?;
    let x4 = x + k3 * dt;

    let (a1, b1) = dynamics_jacobians(x, u, intrinsics)?;
    let (a2, b2) = dynamics_jacobians(&x2, u, intrinsics)?;
    let (a3, b3) = dynamics_jacobians(&x3, u, intrinsics)?;
    let (a4, b4) = dynamics_jacobians(&x4, u, intrinsics)?;

    let dk1_dx = a1;
    let dk1_du = b1;
    let dk2_dx = a2 * (eye + dk1_dx * (dt / 2.0));
    let dk2_du = a2 * dk1_du * (dt / 2.0) + b2;
    let dk3_dx = a3 * (eye + dk2_dx * (dt / 2.0));
    let dk3_du = a3 * dk2_du * (dt / 2.0) + b3;
    let dk4_dx = a4 * (eye + dk3_dx * dt);
    let dk4_du = a4 * dk3_du * dt + b4;

    let f = eye + (dk1_dx + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * (dt / 6.0);
    let b = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (dt / 6.0);
    Ok((f, b))
}

/// Integrate the commanded body twist over `dt` and re-orthonormalize.
pub fn apply_twist(sensor: &SensorState, u: &Twist, dt: f64) -> SensorState {
    let step = exp_twist(u, dt);
    SensorState {
        pose: sensor.pose.compose(&step).orthonormalized(),
        clock: sensor.clock + dt,
    }
}

/// Apply a scheduled pose offset in the sensor body frame.
pub fn inject_disturbance(sensor: &SensorState, d: &Disturbance) -> SensorState {
    let tw = Twist::new(
        Vector3::new(d.offset[0], d.offset[1], d.offset[2]),
        Vector3::new(d.offset[3], d.offset[4], d.offset[5]),
    );
    SensorState {
        pose: sensor.pose.compose(&exp_twist(&tw, 1.0)).orthonormalized(),
        clock: sensor.clock,
    }
}

/// Standard normal deviate via Box-Muller on the raw RNG stream.
fn gauss(rng: &mut impl RngCore) -> f64 {
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

/// Render the per-pixel contact depth seen by the sensor.
///
/// Depth is the camera-frame z of the flat surface minus the Gaussian ridge
/// bump (the ridge is raised toward the sensor). Additive Gaussian noise is
/// deterministic for a fixed seed.
pub fn render_depth_image(
    sensor: &SensorState,
    world: &WorldModel,
    intrinsics: &CameraIntrinsics,
    noise_sigma: f64,
    seed: u64,
) -> Result<DepthImage, PlantError> {
    let (w, h) = (
        intrinsics.image_size_px.0 as usize,
        intrinsics.image_size_px.1 as usize,
    );
    let rot = sensor.pose.rotation;
    let origin = sensor.pose.translation;
    let zs = world.surface_height_m;

    // The optical axis must point toward the surface.
    let axis = rot.column(2);
    if axis.z >= -0.1 {
        return Err(PlantError::OutOfContact);
    }

    let mut img = DepthImage::new(w, h, intrinsics.pixel_pitch_m, 0.0);
    let mut world_x = alloc::vec![0.0f64; w * h];
    let mut world_y = alloc::vec![0.0f64; w * h];
    let mut center_depth = 0.0;
    for py in 0..h {
        for px in 0..w {
            let (xn, yn) = intrinsics.normalized_from_pixel(px as f64, py as f64);
            let dir = rot * Vector3::new(xn, yn, 1.0);
            if dir.z >= -1e-9 {
                return Err(PlantError::OutOfContact);
            }
            // Camera-frame depth of the hit: origin + t * dir has camera
            // coordinates t * (xn, yn, 1).
            let t = (zs - origin.z) / dir.z;
            if t <= 0.0 {
                return Err(PlantError::OutOfContact);
            }
            let idx = py * w + px;
            world_x[idx] = origin.x + t * dir.x;
            world_y[idx] = origin.y + t * dir.y;
            img.data_mut()[idx] = t;
            if px == w / 2 && py == h / 2 {
                center_depth = t;
            }
        }
    }
    if !(0.001..0.2).contains(&center_depth) {
        return Err(PlantError::OutOfContact);
    }

    // Ridge bump: world-plane distance to the centerline, evaluated only
    // near each projected segment.
    let geo = world.geometry();
    let crest = world.crest_z();
    let world_per_px = intrinsics.pixel_pitch_m * center_depth / intrinsics.focal_length_m;
    let support_px = (4.0 * world.ridge_sigma_m / world_per_px).ceil() as i64 + 2;
    let support_w2 = (4.0 * world.ridge_sigma_m).powi(2);
    let cam_inv = sensor.pose.inverse();
    let mut min_d2 = alloc::vec![f64::INFINITY; w * h];
    for seg in 0..geo.segment_count() {
        let (wa, wb) = geo.segment(seg);
        let ca = cam_inv.transform_point(&Vector3::new(wa.x, wa.y, crest));
        let cb = cam_inv.transform_point(&Vector3::new(wb.x, wb.y, crest));
        if ca.z <= 1e-6 || cb.z <= 1e-6 {
            continue;
        }
        let (Ok(ia), Ok(ib)) = (project(&ca, intrinsics), project(&cb, intrinsics)) else {
            continue;
        };
        let u_lo = (ia.u.min(ib.u).floor() as i64 - support_px).max(0) as usize;
        let u_hi = (ia.u.max(ib.u).ceil() as i64 + support_px).min(w as i64 - 1) as usize;
        let v_lo = (ia.v.min(ib.v).floor() as i64 - support_px).max(0) as usize;
        let v_hi = (ia.v.max(ib.v).ceil() as i64 + support_px).min(h as i64 - 1) as usize;
        if u_lo > u_hi || v_lo > v_hi {
            continue;
        }
        let d = wb - wa;
        let len2 = d.norm_squared();
        for py in v_lo..=v_hi {
            for px in u_lo..=u_hi {
                let idx = py * w + px;
                let p = Vector2::new(world_x[idx], world_y[idx]);
                let t = ((p - wa).dot(&d) / len2).clamp(0.0, 1.0);
                let q = wa + d * t;
                let d2 = (p - q).norm_squared();
                if d2 < min_d2[idx] {
                    min_d2[idx] = d2;
                }
            }
        }
    }
    let inv_two_sigma2 = 1.0 / (2.0 * world.ridge_sigma_m * world.ridge_sigma_m);
    for idx in 0..w * h {
        if min_d2[idx] < support_w2 {
            img.data_mut()[idx] -= world.ridge_height_m * (-min_d2[idx] * inv_two_sigma2).exp();
        }
    }

    if noise_sigma > 0.0 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for v in img.data_mut() {
            *v += noise_sigma * gauss(&mut rng);
        }
    }
    Ok(img)
}

/// Camera pose looking straight down at a path point, with the camera x axis
/// along the path tangent.
pub fn nadir_pose_at(
    geometry: &PathGeometry,
    arc_m: f64,
    crest_z: f64,
    contact_depth_m: f64,
) -> Pose {
    let p = geometry.point_at(arc_m);
    let tangent = geometry.tangent_at(arc_m);
    let yaw = tangent.y.atan2(tangent.x);
    look_down_pose(p.x, p.y, crest_z + contact_depth_m, yaw)
}

/// Camera pose at world position `(x, y, z)` looking along -z with the
/// camera x axis rotated by `yaw` about the world z axis.
pub fn look_down_pose(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    let (s, c) = (yaw.sin(), yaw.cos());
    // Columns: camera x, y, z expressed in world coordinates.
    let rot = nalgebra::Matrix3::new(c, s, 0.0, s, -c, 0.0, 0.0, 0.0, -1.0);
    Pose::from_parts_unchecked(rot, Vector3::new(x, y, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::contour_from_points;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    fn straight_world() -> WorldModel {
        WorldModel::with_defaults(ContourPath::Line {
            angle_rad: 0.0,
            length_m: 0.6,
        })
        .unwrap()
    }

    fn nominal_sensor(world: &WorldModel, arc: f64) -> SensorState {
        SensorState::new(nadir_pose_at(world.geometry(), arc, world.crest_z(), 0.020))
    }

    #[test]
    fn look_down_pose_is_orthonormal() {
        let p = look_down_pose(0.1, -0.2, 0.3, 0.7);
        let drift = (p.rotation.transpose() * p.rotation - Matrix3::identity())
            .abs()
            .max();
        assert!(drift < 1e-12);
        assert_relative_eq!(p.rotation.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn nominal_alignment_gives_zero_feature_error() {
        let world = straight_world();
        let sensor = nominal_sensor(&world, 0.1);
        match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
            ContactResult::Contact(info) => {
                let xi = info.state.contour;
                assert_relative_eq!(xi.angle, 0.0, epsilon = 1e-9);
                assert_relative_eq!(xi.offset, 0.0, epsilon = 1e-9);
                assert_relative_eq!(xi.pitch, 0.0, epsilon = 1e-9);
                assert_relative_eq!(xi.depth, 0.020, epsilon = 1e-9);
                // Anchored to the ten-pixel border band.
                assert_relative_eq!(info.state.p1.u, 10.0, epsilon = 1e-6);
                assert_relative_eq!(info.state.p2.u, 310.0, epsilon = 1e-6);
            }
            other => panic!("expected contact, got {other:?}"),
        }
    }

    #[test]
    fn lateral_shift_appears_in_the_offset_feature() {
        let world = straight_world();
        let geo = world.geometry();
        let p = geo.point_at(0.1);
        let pose = look_down_pose(p.x, p.y + 1e-3, world.crest_z() + 0.020, 0.0);
        let sensor = SensorState::new(pose);
        match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
            ContactResult::Contact(info) => {
                let xi = info.state.contour;
                assert_relative_eq!(xi.angle, 0.0, epsilon = 1e-9);
                assert_relative_eq!(xi.offset.abs(), 1e-3, epsilon = 1e-8);
                // Cross-check against an independent construction through
                // the feature map.
                let independent =
                    contour_from_points(&info.state.p1, &info.state.p2, &intr()).unwrap();
                assert_relative_eq!(independent.offset, xi.offset, epsilon = 1e-12);
            }
            other => panic!("expected contact, got {other:?}"),
        }
    }

    #[test]
    fn lifting_the_sensor_loses_contact() {
        let world = straight_world();
        let geo = world.geometry();
        let p = geo.point_at(0.1);
        let pose = look_down_pose(p.x, p.y, world.crest_z() + 0.0225, 0.0);
        let sensor = SensorState::new(pose);
        match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
            ContactResult::NoContact(NoContactReason::OutOfBand) => {}
            other => panic!("expected out-of-band, got {other:?}"),
        }
    }

    #[test]
    fn far_from_contour_reports_no_crossing() {
        let world = straight_world();
        let pose = look_down_pose(0.1, 0.2, world.crest_z() + 0.020, 0.0);
        match ground_truth_features(&SensorState::new(pose), &world, &intr(), Some(0.1)) {
            ContactResult::NoContact(NoContactReason::NoCrossing) => {}
            other => panic!("expected no-crossing, got {other:?}"),
        }
    }

    #[test]
    fn hexagon_corner_follows_dominant_edge() {
        let world = WorldModel::with_defaults(ContourPath::default_hexagon()).unwrap();
        let geo = world.geometry();
        let side = geo.total_length() / 6.0;
        // Keep the camera orientation fixed (aligned with the first edge)
        // while the position crosses the corner, so the dominant-edge switch
        // shows up as a feature-angle jump.
        let tangent = geo.tangent_at(side - 0.008);
        let yaw = tangent.y.atan2(tangent.x);
        let pose_at = |arc: f64| {
            let p = geo.point_at(arc);
            SensorState::new(look_down_pose(p.x, p.y, world.crest_z() + 0.020, yaw))
        };
        let before = pose_at(side - 0.008);
        let after = pose_at(side + 0.005);
        let angle_at = |s: &SensorState, hint: f64| match ground_truth_features(
            s,
            &world,
            &intr(),
            Some(hint),
        ) {
            ContactResult::Contact(info) => info.state.contour.angle,
            other => panic!("expected contact, got {other:?}"),
        };
        let a_before = angle_at(&before, side - 0.008);
        let a_after = angle_at(&after, side + 0.005);
        // The dominant-edge switch turns the feature line by the hexagon
        // exterior angle (pi/3), modulo the line's half-turn symmetry.
        let diff = crate::geometry::wrap_half_angle(a_after - a_before);
        assert_relative_eq!(diff.abs(), core::f64::consts::PI / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn apply_twist_trivial_cases() {
        let world = straight_world();
        let s0 = nominal_sensor(&world, 0.1);
        let same = apply_twist(&s0, &Twist::zero(), 0.02);
        assert_relative_eq!((same.pose.translation - s0.pose.translation).norm(), 0.0);
        // Forward motion moves along the camera x axis (world x here).
        let fwd = apply_twist(
            &s0,
            &Twist::new(Vector3::new(0.005, 0.0, 0.0), Vector3::zeros()),
            1.0,
        );
        let delta = fwd.pose.translation - s0.pose.translation;
        assert_relative_eq!(delta.x, 0.005, epsilon = 1e-12);
        assert_relative_eq!(delta.y, 0.0, epsilon = 1e-12);
        // Pure optical-axis spin keeps the position.
        let spin = apply_twist(
            &s0,
            &Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, core::f64::consts::PI)),
            1.0,
        );
        assert_relative_eq!((spin.pose.translation - s0.pose.translation).norm(), 0.0);
    }

    #[test]
    fn orthonormality_is_kept_over_many_steps() {
        let world = straight_world();
        let mut s = nominal_sensor(&world, 0.1);
        let tw = Twist::new(Vector3::new(0.004, -0.002, 0.001), Vector3::new(0.2, -0.1, 0.3));
        for _ in 0..10_000 {
            s = apply_twist(&s, &tw, 0.001);
        }
        let drift = (s.pose.rotation.transpose() * s.pose.rotation - Matrix3::identity())
            .abs()
            .max();
        assert!(drift < 1e-9, "drift {drift}");
    }

    #[test]
    fn disturbance_composition() {
        let world = straight_world();
        let s0 = nominal_sensor(&world, 0.1);
        let id = inject_disturbance(
            &s0,
            &Disturbance {
                time_s: 0.0,
                offset: [0.0; 6],
            },
        );
        assert_relative_eq!((id.pose.translation - s0.pose.translation).norm(), 0.0);
        let shifted = inject_disturbance(
            &s0,
            &Disturbance {
                time_s: 0.0,
                offset: [0.0, 0.005, 0.0, 0.0, 0.0, 0.0],
            },
        );
        // Camera y maps to world -y for the nadir pose at yaw zero.
        let delta = shifted.pose.translation - s0.pose.translation;
        assert_relative_eq!(delta.norm(), 0.005, epsilon = 1e-12);
        // The next ground-truth offset jumps by about the same amount.
        match ground_truth_features(&shifted, &world, &intr(), Some(0.1)) {
            ContactResult::Contact(info) => {
                assert_relative_eq!(info.state.contour.offset.abs(), 0.005, epsilon = 1e-7);
            }
            other => panic!("expected contact, got {other:?}"),
        }
    }

    fn nominal_state_vec() -> SVector<f64, 10> {
        let world = straight_world();
        let sensor = nominal_sensor(&world, 0.1);
        match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
            ContactResult::Contact(info) => info.state.as_vector(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rk4_zero_input_is_identity() {
        let x = nominal_state_vec();
        let x1 = rk4_step(&x, &Twist::zero(), 0.02, &intr()).unwrap();
        assert_eq!(x, x1);
    }

    #[test]
    fn rk4_agrees_with_euler_at_tiny_step() {
        let x = nominal_state_vec();
        let tw = Twist::new(Vector3::new(0.004, 0.003, -0.002), Vector3::new(0.1, -0.2, 0.3));
        let dt = 1e-7;
        let rk = rk4_step(&x, &tw, dt, &intr()).unwrap();
        let euler = x + system_dynamics(&x, &tw, &intr()).unwrap() * dt;
        let err = (rk - euler).amax();
        assert!(err < 1e-10, "rk4 vs euler {err}");
    }

    #[test]
    fn rk4_order_check() {
        let x = nominal_state_vec();
        let tw = Twist::new(Vector3::new(0.02, 0.015, -0.01), Vector3::new(0.5, -0.4, 0.5));
        let horizon = 0.2;
        let run = |dt: f64| -> SVector<f64, 10> {
            let n = (horizon / dt).round() as usize;
            let mut s = x;
            for _ in 0..n {
                s = rk4_step(&s, &tw, dt, &intr()).unwrap();
            }
            s
        };
        let reference = run(1e-5);
        let err_coarse = (run(0.02) - reference).norm();
        let err_fine = (run(0.01) - reference).norm();
        assert!(err_fine > 1e-12, "step too small for a meaningful ratio");
        let ratio = err_coarse / err_fine;
        assert!(ratio >= 12.0, "order ratio {ratio} (coarse {err_coarse}, fine {err_fine})");
    }

    #[test]
    fn rk4_jacobians_match_step_map_differences() {
        let x = nominal_state_vec();
        let tw = Twist::new(Vector3::new(0.006, -0.004, 0.002), Vector3::new(0.2, 0.1, -0.3));
        let dt = 0.02;
        let (f, b) = rk4_step_jacobians(&x, &tw, dt, &intr()).unwrap();
        let steps = [1e-4, 1e-4, 1e-8, 1e-4, 1e-4, 1e-8, 1e-6, 1e-6, 1e-6, 1e-8];
        for j in 0..10 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += steps[j];
            xm[j] -= steps[j];
            let fd = (rk4_step(&xp, &tw, dt, &intr()).unwrap()
                - rk4_step(&xm, &tw, dt, &intr()).unwrap())
                / (2.0 * steps[j]);
            for i in 0..10 {
                let scale = fd.amax().max(1.0);
                assert!(
                    (f[(i, j)] - fd[i]).abs() / scale < 1e-6,
                    "F({i},{j}) {} vs {}",
                    f[(i, j)],
                    fd[i]
                );
            }
        }
        for j in 0..6 {
            let h = 1e-5;
            let mut up = tw.to_vector();
            let mut um = tw.to_vector();
            up[j] += h;
            um[j] -= h;
            let fd = (rk4_step(&x, &Twist::from_vector(&up), dt, &intr()).unwrap()
                - rk4_step(&x, &Twist::from_vector(&um), dt, &intr()).unwrap())
                / (2.0 * h);
            for i in 0..10 {
                let scale = fd.amax().max(1e-3);
                assert!((b[(i, j)] - fd[i]).abs() / scale < 1e-6);
            }
        }
    }

    #[test]
    fn model_matches_geometry_along_a_closed_loop_step() {
        // One tick of lateral correction: the RK4-propagated contour block
        // must match the geometric ground truth of the moved sensor.
        let world = straight_world();
        let geo = world.geometry();
        let p = geo.point_at(0.1);
        let pose = look_down_pose(p.x, p.y + 5e-4, world.crest_z() + 0.0202, 0.0);
        let mut sensor = SensorState::new(pose);
        let tw = Twist::new(Vector3::new(0.005, -0.002, 0.001), Vector3::new(0.0, 0.0, 0.05));
        let dt = 0.02;
        for _ in 0..25 {
            let before = match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
                ContactResult::Contact(info) => info.state,
                other => panic!("lost contact: {other:?}"),
            };
            let predicted = rk4_step(&before.as_vector(), &tw, dt, &intr()).unwrap();
            sensor = apply_twist(&sensor, &tw, dt);
            let after = match ground_truth_features(&sensor, &world, &intr(), Some(0.1)) {
                ContactResult::Contact(info) => info.state,
                other => panic!("lost contact: {other:?}"),
            };
            let xi_pred = predicted.fixed_rows::<4>(6).into_owned();
            let xi_true = after.contour.as_vector();
            let err = (xi_pred - xi_true).abs();
            assert!(
                err[0] < 1e-3 * 0.02_f64.max(1.0) && err[1] < 1e-3 && err[2] < 1e-3 && err[3] < 1e-3 * 0.022,
                "model-vs-geometry mismatch {err:?}"
            );
        }
    }

    #[test]
    fn render_is_deterministic_and_shows_the_ridge() {
        let world = straight_world();
        let sensor = nominal_sensor(&world, 0.1);
        let a = render_depth_image(&sensor, &world, &intr(), 2e-5, 7).unwrap();
        let b = render_depth_image(&sensor, &world, &intr(), 2e-5, 7).unwrap();
        assert_eq!(a, b, "same seed must give bit-identical images");
        let c = render_depth_image(&sensor, &world, &intr(), 2e-5, 8).unwrap();
        assert_ne!(a, c, "different seeds must differ");

        // Noise-free: flat background at the ray depth, ridge at the crest.
        let clean = render_depth_image(&sensor, &world, &intr(), 0.0, 0).unwrap();
        let background = clean.get(20, 20);
        assert_relative_eq!(background, 0.020 + world.ridge_height_m, epsilon = 1e-6);
        let on_ridge = clean.get(160, 120);
        assert_relative_eq!(on_ridge, 0.020, epsilon = 1e-6);
    }

    #[test]
    fn render_crest_recovers_the_line_angle() {
        let world = WorldModel::with_defaults(ContourPath::Line {
            angle_rad: 0.0,
            length_m: 0.6,
        })
        .unwrap();
        let geo = world.geometry();
        let p = geo.point_at(0.3);
        // Yaw the camera so the ridge appears at a known image angle.
        let beta = 0.3;
        let pose = look_down_pose(p.x, p.y, world.crest_z() + 0.020, beta);
        let img = render_depth_image(&SensorState::new(pose), &world, &intr(), 0.0, 0).unwrap();
        // Depth minima per column trace the crest.
        let mut pts = alloc::vec::Vec::new();
        for px in (20..300).step_by(4) {
            let mut best = (f64::INFINITY, 0usize);
            for py in 10..230 {
                let d = img.get(px, py);
                if d < best.0 {
                    best = (d, py);
                }
            }
            if best.0 < 0.0202 {
                pts.push((px as f64, best.1 as f64));
            }
        }
        assert!(pts.len() > 40, "crest not visible");
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = (sxy / sxx).atan();
        // The camera yaw appears as the image angle of the world-x ridge.
        assert!(
            (slope.abs() - beta).abs() < 0.01,
            "crest angle {slope} expected magnitude {beta}"
        );
    }

    #[test]
    fn path_geometry_arcs() {
        let geo = ContourPath::default_hexagon().compile().unwrap();
        assert!(geo.is_closed());
        assert_relative_eq!(geo.total_length(), 6.0 * 0.04, epsilon = 1e-12);
        let quarter = geo.point_at(0.02);
        assert!(quarter.norm() <= 0.04 + 1e-12);
        // Wrap-aware deltas.
        let d = geo.arc_delta(geo.total_length() - 0.01, 0.01);
        assert_relative_eq!(d, 0.02, epsilon = 1e-12);
        // Nearest-arc round trip.
        let s = 0.13;
        let p = geo.point_at(s);
        let s2 = geo.nearest_arc(&p, Some(0.12), 0.05);
        assert_relative_eq!(s2, s, epsilon = 1e-9);
    }
}
