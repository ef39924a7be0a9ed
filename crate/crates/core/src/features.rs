//! Contour feature vector, its interaction matrix, and the compact
//! ten-dimensional feature-space system.
//!
//! Two point features on the touched contour define a line feature
//! `(offset, angle, pitch, depth)`:
//! - `offset`: signed orthogonal distance of the image line from the
//!   principal point, in metric image-plane units (meters);
//! - `angle`: line orientation in the image plane, `(-pi/2, pi/2]`;
//! - `pitch`: inclination of the contact segment relative to the image
//!   plane, recovered from the endpoint depth difference;
//! - `depth`: contact depth at the segment midpoint (meters).
//!
//! The feature is an undirected line: the point pair is canonicalized by
//! ordering so that swapping the inputs yields the identical feature vector.
//! The full system state stacks both point features and the contour vector;
//! its dynamics under a camera twist are linear in the twist.

use nalgebra::{SMatrix, SVector, Vector2, Vector4, Vector6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{
    point_interaction_matrix, point_rate_jacobian, unproject, CameraIntrinsics, GeometryError,
    PointFeature, Twist,
};

/// Contour feature vector. Units: meters, radians, radians, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourFeatures {
    /// Signed orthogonal distance of the line from the principal point (m).
    pub offset: f64,
    /// Line orientation in the image plane, wrapped to `(-pi/2, pi/2]`.
    pub angle: f64,
    /// Contact-segment inclination about the image plane (rad).
    pub pitch: f64,
    /// Contact depth at the segment midpoint (m).
    pub depth: f64,
}

impl ContourFeatures {
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.offset, self.angle, self.pitch, self.depth)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            offset: v[0],
            angle: v[1],
            pitch: v[2],
            depth: v[3],
        }
    }
}

/// Full feature-space state: two contour points plus the derived line vector.
///
/// States produced by this crate keep the point pair in canonical order and
/// the contour block consistent with [`contour_from_points`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TactileState {
    pub p1: PointFeature,
    pub p2: PointFeature,
    pub contour: ContourFeatures,
}

impl TactileState {
    /// Build a state from two contour points; stores the canonical order.
    pub fn from_points(
        p1: PointFeature,
        p2: PointFeature,
        intrinsics: &CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        let (a, b, _) = canonical_order(&p1, &p2)?;
        let contour = contour_from_points(&a, &b, intrinsics)?;
        Ok(Self { p1: a, p2: b, contour })
    }

    /// State layout `[u1, v1, Z1, u2, v2, Z2, offset, angle, pitch, depth]`.
    pub fn as_vector(&self) -> SVector<f64, 10> {
        SVector::<f64, 10>::from_column_slice(&[
            self.p1.u,
            self.p1.v,
            self.p1.depth,
            self.p2.u,
            self.p2.v,
            self.p2.depth,
            self.contour.offset,
            self.contour.angle,
            self.contour.pitch,
            self.contour.depth,
        ])
    }

    /// Rebuild from a raw state vector, trusting the embedded contour block.
    pub fn from_vector_raw(x: &SVector<f64, 10>) -> Self {
        Self {
            p1: PointFeature::new(x[0], x[1], x[2]),
            p2: PointFeature::new(x[3], x[4], x[5]),
            contour: ContourFeatures {
                offset: x[6],
                angle: x[7],
                pitch: x[8],
                depth: x[9],
            },
        }
    }

    /// Rebuild from a raw state vector, re-deriving the contour block from
    /// the point pair.
    pub fn from_vector_resync(
        x: &SVector<f64, 10>,
        intrinsics: &CameraIntrinsics,
    ) -> Result<Self, GeometryError> {
        Self::from_points(
            PointFeature::new(x[0], x[1], x[2]),
            PointFeature::new(x[3], x[4], x[5]),
            intrinsics,
        )
    }
}

/// Canonical ordering of a point pair so the segment direction has a
/// non-negative metric x component (vertical segments point +y). Returns
/// the ordered pair and whether the inputs were swapped.
pub fn canonical_order(
    p1: &PointFeature,
    p2: &PointFeature,
) -> Result<(PointFeature, PointFeature, bool), GeometryError> {
    let du = p2.u - p1.u;
    let dv = p2.v - p1.v;
    if du * du + dv * dv < 1.0 {
        return Err(GeometryError::DegenerateSegment);
    }
    let swap = du < 0.0 || (du == 0.0 && dv < 0.0);
    if swap {
        Ok((*p2, *p1, true))
    } else {
        Ok((*p1, *p2, false))
    }
}

/// Map two contour points to the contour feature vector.
pub fn contour_from_points(
    p1: &PointFeature,
    p2: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<ContourFeatures, GeometryError> {
    let (a, b, _) = canonical_order(p1, p2)?;
    let (xa, ya) = intrinsics.metric_from_pixel(a.u, a.v);
    let (xb, yb) = intrinsics.metric_from_pixel(b.u, b.v);
    let angle = (yb - ya).atan2(xb - xa);
    let mx = 0.5 * (xa + xb);
    let my = 0.5 * (ya + yb);
    let offset = -angle.sin() * mx + angle.cos() * my;
    let pa = unproject(&a, intrinsics)?;
    let pb = unproject(&b, intrinsics)?;
    let run = ((pb.x - pa.x).powi(2) + (pb.y - pa.y).powi(2)).sqrt();
    if run < 1e-12 {
        return Err(GeometryError::DegenerateSegment);
    }
    let pitch = (pa.z - pb.z).atan2(run);
    let depth = 0.5 * (pa.z + pb.z);
    Ok(ContourFeatures {
        offset,
        angle,
        pitch,
        depth,
    })
}

/// Sensitivity of the contour vector to the stacked point features
/// `(u1, v1, Z1, u2, v2, Z2)`, in the order the points were given.
pub fn contour_sensitivity(
    p1: &PointFeature,
    p2: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<SMatrix<f64, 4, 6>, GeometryError> {
    let (a, b, swapped) = canonical_order(p1, p2)?;
    let c = contour_sensitivity_canonical(&a, &b, intrinsics)?;
    if !swapped {
        return Ok(c);
    }
    let mut out = SMatrix::<f64, 4, 6>::zeros();
    out.fixed_view_mut::<4, 3>(0, 0)
        .copy_from(&c.fixed_view::<4, 3>(0, 3));
    out.fixed_view_mut::<4, 3>(0, 3)
        .copy_from(&c.fixed_view::<4, 3>(0, 0));
    Ok(out)
}

fn contour_sensitivity_canonical(
    a: &PointFeature,
    b: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<SMatrix<f64, 4, 6>, GeometryError> {
    if !(a.depth > 0.0 && b.depth > 0.0) {
        return Err(GeometryError::NonPositiveDepth);
    }
    let rho = intrinsics.pixel_pitch_m;
    let k = intrinsics.focal_px();
    let (xa, ya) = intrinsics.metric_from_pixel(a.u, a.v);
    let (xb, yb) = intrinsics.metric_from_pixel(b.u, b.v);
    let dx = xb - xa;
    let dy = yb - ya;
    let dsq = dx * dx + dy * dy;
    if dsq < 1e-24 {
        return Err(GeometryError::DegenerateSegment);
    }
    let angle = dy.atan2(dx);
    let (sin_b, cos_b) = (angle.sin(), angle.cos());
    let mx = 0.5 * (xa + xb);
    let my = 0.5 * (ya + yb);

    // Row 2: angle.
    let d_angle = Vector6::new(
        rho * dy / dsq,
        -rho * dx / dsq,
        0.0,
        -rho * dy / dsq,
        rho * dx / dsq,
        0.0,
    );

    // Row 1: offset = -sin(angle) * mx + cos(angle) * my.
    let r_angle = -cos_b * mx - sin_b * my;
    let mut d_offset = d_angle * r_angle;
    d_offset[0] += -sin_b * (rho / 2.0);
    d_offset[1] += cos_b * (rho / 2.0);
    d_offset[3] += -sin_b * (rho / 2.0);
    d_offset[4] += cos_b * (rho / 2.0);

    // Row 3: pitch = atan2(Za - Zb, planar 3D distance).
    let (xna, yna) = intrinsics.normalized_from_pixel(a.u, a.v);
    let (xnb, ynb) = intrinsics.normalized_from_pixel(b.u, b.v);
    let za = a.depth;
    let zb = b.depth;
    let big_dx = xnb * zb - xna * za;
    let big_dy = ynb * zb - yna * za;
    let run_sq = big_dx * big_dx + big_dy * big_dy;
    let run = run_sq.sqrt();
    if run < 1e-12 {
        return Err(GeometryError::DegenerateSegment);
    }
    let dz = za - zb;
    let hyp_sq = dz * dz + run_sq;
    let d_dz = Vector6::new(0.0, 0.0, 1.0, 0.0, 0.0, -1.0);
    let d_big_dx = Vector6::new(-za / k, 0.0, -xna, zb / k, 0.0, xnb);
    let d_big_dy = Vector6::new(0.0, -za / k, -yna, 0.0, zb / k, ynb);
    let d_run = (d_big_dx * big_dx + d_big_dy * big_dy) / run;
    let d_pitch = (d_dz * run - d_run * dz) / hyp_sq;

    // Row 4: depth.
    let d_depth = Vector6::new(0.0, 0.0, 0.5, 0.0, 0.0, 0.5);

    let mut c = SMatrix::<f64, 4, 6>::zeros();
    c.row_mut(0).copy_from(&d_offset.transpose());
    c.row_mut(1).copy_from(&d_angle.transpose());
    c.row_mut(2).copy_from(&d_pitch.transpose());
    c.row_mut(3).copy_from(&d_depth.transpose());
    Ok(c)
}

/// Interaction matrix of the contour feature vector under a camera twist.
pub fn contour_interaction_matrix(
    p1: &PointFeature,
    p2: &PointFeature,
    intrinsics: &CameraIntrinsics,
) -> Result<SMatrix<f64, 4, 6>, GeometryError> {
    let c = contour_sensitivity(p1, p2, intrinsics)?;
    let j1 = point_interaction_matrix(p1, intrinsics)?;
    let j2 = point_interaction_matrix(p2, intrinsics)?;
    Ok(c.fixed_view::<4, 3>(0, 0) * j1 + c.fixed_view::<4, 3>(0, 3) * j2)
}

/// Column split of the contour interaction matrix into the planar twist
/// block `(v_x, v_y, w_x, w_y)` and the axial block `(v_z, w_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledJacobians {
    pub j_xy: SMatrix<f64, 4, 4>,
    pub j_z: SMatrix<f64, 4, 2>,
}

/// Twist component indices feeding the planar block.
pub const XY_COLUMNS: [usize; 4] = [0, 1, 3, 4];
/// Twist component indices feeding the axial block.
pub const Z_COLUMNS: [usize; 2] = [2, 5];

/// Exact column selection; recombination reconstructs the full matrix.
pub fn decouple(j: &SMatrix<f64, 4, 6>) -> DecoupledJacobians {
    let mut j_xy = SMatrix::<f64, 4, 4>::zeros();
    let mut j_z = SMatrix::<f64, 4, 2>::zeros();
    for (dst, src) in XY_COLUMNS.iter().enumerate() {
        j_xy.set_column(dst, &j.column(*src));
    }
    for (dst, src) in Z_COLUMNS.iter().enumerate() {
        j_z.set_column(dst, &j.column(*src));
    }
    DecoupledJacobians { j_xy, j_z }
}

/// Interleave decoupled twist components back into a full twist vector.
pub fn recombine_twist(xy: &Vector4<f64>, z: &Vector2<f64>) -> Vector6<f64> {
    let mut out = Vector6::zeros();
    for (src, dst) in XY_COLUMNS.iter().enumerate() {
        out[*dst] = xy[src];
    }
    for (src, dst) in Z_COLUMNS.iter().enumerate() {
        out[*dst] = z[src];
    }
    out
}

/// Split a full twist vector into its decoupled components.
pub fn split_twist(u: &Vector6<f64>) -> (Vector4<f64>, Vector2<f64>) {
    (
        Vector4::new(u[0], u[1], u[3], u[4]),
        Vector2::new(u[2], u[5]),
    )
}

/// Feature-space dynamics: stacks the two point rates and the contour rate.
/// Linear in the twist; the contour block of `x` does not feed back.
pub fn system_dynamics(
    x: &SVector<f64, 10>,
    u: &Twist,
    intrinsics: &CameraIntrinsics,
) -> Result<SVector<f64, 10>, GeometryError> {
    let p1 = PointFeature::new(x[0], x[1], x[2]);
    let p2 = PointFeature::new(x[3], x[4], x[5]);
    let uv = u.to_vector();
    let r1 = point_interaction_matrix(&p1, intrinsics)? * uv;
    let r2 = point_interaction_matrix(&p2, intrinsics)? * uv;
    let re = contour_interaction_matrix(&p1, &p2, intrinsics)? * uv;
    let mut out = SVector::<f64, 10>::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&r1);
    out.fixed_rows_mut::<3>(3).copy_from(&r2);
    out.fixed_rows_mut::<4>(6).copy_from(&re);
    Ok(out)
}

/// Jacobians of the feature dynamics with respect to state and twist.
///
/// The point blocks are analytic; the contour block combines the analytic
/// point-rate derivatives with a central-difference derivative of the
/// contour sensitivity (its second-derivative tensor has no compact closed
/// form here). Verified against finite differences of the full dynamics.
pub fn dynamics_jacobians(
    x: &SVector<f64, 10>,
    u: &Twist,
    intrinsics: &CameraIntrinsics,
) -> Result<(SMatrix<f64, 10, 10>, SMatrix<f64, 10, 6>), GeometryError> {
    let p1 = PointFeature::new(x[0], x[1], x[2]);
    let p2 = PointFeature::new(x[3], x[4], x[5]);
    let uv = u.to_vector();
    let j1 = point_interaction_matrix(&p1, intrinsics)?;
    let j2 = point_interaction_matrix(&p2, intrinsics)?;
    let c = contour_sensitivity(&p1, &p2, intrinsics)?;

    let mut dfdu = SMatrix::<f64, 10, 6>::zeros();
    dfdu.fixed_view_mut::<3, 6>(0, 0).copy_from(&j1);
    dfdu.fixed_view_mut::<3, 6>(3, 0).copy_from(&j2);
    let je = c.fixed_view::<4, 3>(0, 0) * j1 + c.fixed_view::<4, 3>(0, 3) * j2;
    dfdu.fixed_view_mut::<4, 6>(6, 0).copy_from(&je);

    let g1 = j1 * uv;
    let g2 = j2 * uv;
    let mut g = Vector6::zeros();
    g.fixed_rows_mut::<3>(0).copy_from(&g1);
    g.fixed_rows_mut::<3>(3).copy_from(&g2);

    let dr1 = point_rate_jacobian(&p1, u, intrinsics)?;
    let dr2 = point_rate_jacobian(&p2, u, intrinsics)?;

    let mut dfdx = SMatrix::<f64, 10, 10>::zeros();
    dfdx.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr1);
    dfdx.fixed_view_mut::<3, 3>(3, 3).copy_from(&dr2);

    // Contour block: d(C g)/ds = (dC/ds : g) + C d(g)/ds.
    let steps = [1e-3, 1e-3, 1e-7, 1e-3, 1e-3, 1e-7];
    for j in 0..6 {
        let h = steps[j];
        let (cp, cm) = {
            let mut sp = [p1, p2];
            let mut sm = [p1, p2];
            let (pi, ci) = (j / 3, j % 3);
            match ci {
                0 => {
                    sp[pi].u += h;
                    sm[pi].u -= h;
                }
                1 => {
                    sp[pi].v += h;
                    sm[pi].v -= h;
                }
                _ => {
                    sp[pi].depth += h;
                    sm[pi].depth -= h;
                }
            }
            (
                contour_sensitivity(&sp[0], &sp[1], intrinsics)?,
                contour_sensitivity(&sm[0], &sm[1], intrinsics)?,
            )
        };
        let col = ((cp - cm) / (2.0 * h)) * g;
        for i in 0..4 {
            dfdx[(6 + i, j)] = col[i];
        }
    }
    let mut dg = SMatrix::<f64, 6, 6>::zeros();
    dg.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr1);
    dg.fixed_view_mut::<3, 3>(3, 3).copy_from(&dr2);
    let cg = c * dg;
    for i in 0..4 {
        for j in 0..6 {
            dfdx[(6 + i, j)] += cg[(i, j)];
        }
    }
    Ok((dfdx, dfdu))
}

/// Slide both points along their common image line so they sit on the image
/// rectangle inset by `margin_px`. Inverse depth is interpolated affinely
/// along the line, which is exact for straight contact segments. Returns
/// `None` when the line misses the inset rectangle.
pub fn anchor_to_band(
    p1: &PointFeature,
    p2: &PointFeature,
    intrinsics: &CameraIntrinsics,
    margin_px: f64,
) -> Option<(PointFeature, PointFeature)> {
    let (t0, t1) = clip_line_to_rect(p1, p2, intrinsics, margin_px)?;
    let a = point_on_segment_line(p1, p2, t0)?;
    let b = point_on_segment_line(p1, p2, t1)?;
    Some((a, b))
}

/// Re-parametrize the segment symmetrically about its midpoint with half
/// length at most `half_len_px`. The feature line (and contour vector) is
/// unchanged; only the gauge of the point pair moves.
pub fn regauge_inward(
    p1: &PointFeature,
    p2: &PointFeature,
    half_len_px: f64,
) -> Option<(PointFeature, PointFeature)> {
    let len = ((p2.u - p1.u).powi(2) + (p2.v - p1.v).powi(2)).sqrt();
    if len < 2.0 {
        return None;
    }
    let half = half_len_px.min(0.5 * len) / len;
    let a = point_on_segment_line(p1, p2, 0.5 - half)?;
    let b = point_on_segment_line(p1, p2, 0.5 + half)?;
    Some((a, b))
}

/// Point on the infinite line through `p1`-`p2` at normalized parameter `t`
/// (`t = 0` at `p1`, `t = 1` at `p2`), with projectively-correct depth.
pub(crate) fn point_on_segment_line(
    p1: &PointFeature,
    p2: &PointFeature,
    t: f64,
) -> Option<PointFeature> {
    let w0 = 1.0 / p1.depth;
    let w1 = 1.0 / p2.depth;
    let w = w0 + (w1 - w0) * t;
    if !(w > 1e-9) {
        return None;
    }
    Some(PointFeature::new(
        p1.u + (p2.u - p1.u) * t,
        p1.v + (p2.v - p1.v) * t,
        1.0 / w,
    ))
}

/// Liang-Barsky clip of the infinite line through two pixels against the
/// image rectangle inset by `margin_px`; parameters are in segment units.
fn clip_line_to_rect(
    p1: &PointFeature,
    p2: &PointFeature,
    intrinsics: &CameraIntrinsics,
    margin_px: f64,
) -> Option<(f64, f64)> {
    let du = p2.u - p1.u;
    let dv = p2.v - p1.v;
    if du * du + dv * dv < 1e-12 {
        return None;
    }
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    let bounds = [
        (-du, p1.u - margin_px),
        (du, intrinsics.width() - margin_px - p1.u),
        (-dv, p1.v - margin_px),
        (dv, intrinsics.height() - margin_px - p1.v),
    ];
    for (p, q) in bounds {
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
