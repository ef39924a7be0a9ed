//! Classical contour extractors over tactile depth images, plus the
//! benchmark metric suite.
//!
//! All extractors take a raw depth image, normalize it per-frame to the
//! `[0, 255]` range, and return a single dominant line. Four pipelines are
//! provided:
//! - `tsalf`: threshold segmentation and weighted least-squares line fit;
//! - `ealf`: skeletonization and weighted least-squares line fit;
//! - `eaef`: Canny edges, dilation, and ellipse fit (major axis);
//! - `caef`: binarization, Shi-Tomasi corners, and ellipse fit.
//!
//! Every pipeline is a deterministic pure function of the image.

pub mod canny;
pub mod corners;
pub mod ellipse;
pub mod linefit;
pub mod mask;
pub mod skeleton;

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::wrap_half_angle;
use crate::image::DepthImage;

pub use mask::{binarize, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionError {
    /// No contact signal above threshold (or nothing survives the minimum
    /// component size).
    EmptyMask,
    /// Not enough structure for the requested fit.
    DegenerateFit,
}

impl fmt::Display for ExtractionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractionError::EmptyMask => write!(f, "no contact region found"),
            ExtractionError::DegenerateFit => write!(f, "degenerate fit"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ExtractionError {}

/// A fitted contour line in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedLine {
    pub midpoint_px: (f64, f64),
    /// Orientation in `(-pi/2, pi/2]`.
    pub angle_rad: f64,
    pub endpoints_px: [(f64, f64); 2],
    pub inlier_count: usize,
}

/// Tunables shared by the extractors. Defaults are fixed so benchmark runs
/// are reproducible.
#[derive(Debug, Clone, Copy)]
pub struct ExtractionParams {
    pub binarize_quantile: f64,
    pub min_component_px: usize,
    pub canny_sigma: f64,
    /// Fractions of the normalized intensity range (255).
    pub canny_low_frac: f64,
    pub canny_high_frac: f64,
    pub dilate_iterations: usize,
    pub corner: corners::CornerParams,
    pub min_skeleton_px: usize,
    pub min_ellipse_points: usize,
    /// Below this major/minor ratio the ellipse orientation is unreliable.
    pub min_axis_ratio: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            binarize_quantile: 0.90,
            min_component_px: 50,
            canny_sigma: 1.4,
            canny_low_frac: 0.1,
            canny_high_frac: 0.3,
            dilate_iterations: 2,
            corner: corners::CornerParams::default(),
            min_skeleton_px: 5,
            min_ellipse_points: 6,
            min_axis_ratio: 1.2,
        }
    }
}

/// Extractor selector for configs and benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractorKind {
    Tsalf,
    Ealf,
    Eaef,
    Caef,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 4] = [
        ExtractorKind::Tsalf,
        ExtractorKind::Ealf,
        ExtractorKind::Eaef,
        ExtractorKind::Caef,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExtractorKind::Tsalf => "tsalf",
            ExtractorKind::Ealf => "ealf",
            ExtractorKind::Eaef => "eaef",
            ExtractorKind::Caef => "caef",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tsalf" => Some(ExtractorKind::Tsalf),
            "ealf" => Some(ExtractorKind::Ealf),
            "eaef" => Some(ExtractorKind::Eaef),
            "caef" => Some(ExtractorKind::Caef),
            _ => None,
        }
    }

    pub fn run(
        &self,
        img: &DepthImage,
        params: &ExtractionParams,
    ) -> Result<ExtractedLine, ExtractionError> {
        match self {
            ExtractorKind::Tsalf => extract_tsalf_with(img, params),
            ExtractorKind::Ealf => extract_ealf_with(img, params),
            ExtractorKind::Eaef => extract_eaef_with(img, params),
            ExtractorKind::Caef => extract_caef_with(img, params),
        }
    }
}

/// Per-frame min-max normalization to `[0, 255]`.
fn normalized_image(img: &DepthImage) -> Vec<f64> {
    let (lo, hi) = img.min_max();
    let span = hi - lo;
    if span <= 0.0 {
        return alloc::vec![0.0; img.width() * img.height()];
    }
    img.data().iter().map(|d| (d - lo) / span * 255.0).collect()
}

fn line_from_fit(
    fit: &linefit::LineFit,
    points: impl Iterator<Item = (f64, f64)>,
    inliers: usize,
) -> ExtractedLine {
    let (endpoints, midpoint) = linefit::line_extent(fit, points);
    ExtractedLine {
        midpoint_px: midpoint,
        angle_rad: fit.angle,
        endpoints_px: endpoints,
        inlier_count: inliers,
    }
}

fn line_from_ellipse(e: &ellipse::Ellipse, inliers: usize) -> ExtractedLine {
    let (dx, dy) = (e.angle.cos(), e.angle.sin());
    let a = e.semi_major;
    ExtractedLine {
        midpoint_px: e.center,
        angle_rad: e.angle,
        endpoints_px: [
            (e.center.0 - a * dx, e.center.1 - a * dy),
            (e.center.0 + a * dx, e.center.1 + a * dy),
        ],
        inlier_count: inliers,
    }
}

/// Threshold segmentation plus weighted least-squares line fit. The retained
/// component is the one with the largest deviation mass, which picks the
/// deeper contact under multi-contact.
pub fn extract_tsalf(img: &DepthImage) -> Result<ExtractedLine, ExtractionError> {
    extract_tsalf_with(img, &ExtractionParams::default())
}

pub fn extract_tsalf_with(
    img: &DepthImage,
    params: &ExtractionParams,
) -> Result<ExtractedLine, ExtractionError> {
    let (mask, dev) = mask::segment_component(
        img,
        params.binarize_quantile,
        params.min_component_px,
        mask::ComponentSelect::LargestWeight,
    )?;
    let pts = linefit::weighted_pixels(&mask, &dev);
    let fit = linefit::weighted_line(&pts).ok_or(ExtractionError::DegenerateFit)?;
    Ok(line_from_fit(
        &fit,
        pts.iter().map(|p| (p.0, p.1)),
        pts.len(),
    ))
}

/// Skeletonize the contact mask and fit the skeleton with a weighted
/// least-squares line.
pub fn extract_ealf(img: &DepthImage) -> Result<ExtractedLine, ExtractionError> {
    extract_ealf_with(img, &ExtractionParams::default())
}

pub fn extract_ealf_with(
    img: &DepthImage,
    params: &ExtractionParams,
) -> Result<ExtractedLine, ExtractionError> {
    let (m, dev) = mask::segment_component(
        img,
        params.binarize_quantile,
        params.min_component_px,
        mask::ComponentSelect::LargestArea,
    )?;
    let skel = skeleton::skeletonize(&m);
    if skel.count() < params.min_skeleton_px {
        return Err(ExtractionError::DegenerateFit);
    }
    let pts = linefit::weighted_pixels(&skel, &dev);
    let fit = linefit::weighted_line(&pts).ok_or(ExtractionError::DegenerateFit)?;
    Ok(line_from_fit(
        &fit,
        pts.iter().map(|p| (p.0, p.1)),
        pts.len(),
    ))
}

/// Canny edges, morphological dilation, then a direct ellipse fit; the line
/// is the ellipse's major axis.
pub fn extract_eaef(img: &DepthImage) -> Result<ExtractedLine, ExtractionError> {
    extract_eaef_with(img, &ExtractionParams::default())
}

pub fn extract_eaef_with(
    img: &DepthImage,
    params: &ExtractionParams,
) -> Result<ExtractedLine, ExtractionError> {
    let norm = normalized_image(img);
    let (w, h) = (img.width(), img.height());
    let edges = canny::canny(
        &norm,
        w,
        h,
        params.canny_sigma,
        params.canny_low_frac * 255.0,
        params.canny_high_frac * 255.0,
    );
    if edges.count() == 0 {
        return Err(ExtractionError::EmptyMask);
    }
    let fat = edges.dilated(params.dilate_iterations);
    let pts: Vec<(f64, f64)> = fat.iter_set().map(|(x, y)| (x as f64, y as f64)).collect();
    if pts.len() < params.min_ellipse_points {
        return Err(ExtractionError::DegenerateFit);
    }
    let e = ellipse::fit_ellipse(&pts).ok_or(ExtractionError::DegenerateFit)?;
    if e.semi_major / e.semi_minor < params.min_axis_ratio {
        return Err(ExtractionError::DegenerateFit);
    }
    Ok(line_from_ellipse(&e, pts.len()))
}

/// Binarize, pick Shi-Tomasi corners of the contact region, and fit them
/// with an ellipse; the line is the major axis.
pub fn extract_caef(img: &DepthImage) -> Result<ExtractedLine, ExtractionError> {
    extract_caef_with(img, &ExtractionParams::default())
}

pub fn extract_caef_with(
    img: &DepthImage,
    params: &ExtractionParams,
) -> Result<ExtractedLine, ExtractionError> {
    let m = mask::binarize(img, params.binarize_quantile)?;
    let (w, h) = (img.width(), img.height());
    let mut float_mask = alloc::vec![0.0f64; w * h];
    for (x, y) in m.iter_set() {
        float_mask[y * w + x] = 255.0;
    }
    let found = corners::shi_tomasi(&float_mask, w, h, &params.corner);
    if found.len() < params.min_ellipse_points {
        return Err(ExtractionError::DegenerateFit);
    }
    let e = ellipse::fit_ellipse(&found).ok_or(ExtractionError::DegenerateFit)?;
    if e.semi_major / e.semi_minor < params.min_axis_ratio {
        return Err(ExtractionError::DegenerateFit);
    }
    Ok(line_from_ellipse(&e, found.len()))
}

/// A ground-truth contour line for benchmarking, given by two pixel points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthLine {
    pub a_px: (f64, f64),
    pub b_px: (f64, f64),
}

impl GroundTruthLine {
    pub fn angle(&self) -> f64 {
        wrap_half_angle((self.b_px.1 - self.a_px.1).atan2(self.b_px.0 - self.a_px.0))
    }

    /// Distance from a point to the infinite ground-truth line.
    pub fn distance_to(&self, p: (f64, f64)) -> f64 {
        let dx = self.b_px.0 - self.a_px.0;
        let dy = self.b_px.1 - self.a_px.1;
        let len = (dx * dx + dy * dy).sqrt();
        ((p.0 - self.a_px.0) * dy - (p.1 - self.a_px.1) * dx).abs() / len
    }
}

/// Benchmark metrics over a labeled dataset (position in pixels,
/// orientation in radians, runtimes in milliseconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionMetrics {
    pub position_rmse_px: f64,
    pub position_std_px: f64,
    pub orientation_rmse_rad: f64,
    pub orientation_std_rad: f64,
    /// Percent of sampled extracted-line pixels farther than 5 px from the
    /// ground-truth line; failed extractions count as 100.
    pub discrepancy_rate_pct: f64,
    pub runtime_mean_ms: f64,
    pub runtime_std_ms: f64,
    /// Percent of frames where extraction returned an error; those frames
    /// are excluded from the RMSE columns.
    pub failure_rate_pct: f64,
    pub frames: usize,
}

/// Pixel distance beyond which an extracted-contour sample counts as a
/// discrepancy.
pub const DISCREPANCY_THRESHOLD_PX: f64 = 5.0;

/// Order-independent sum (sorted accumulation) so the metric suite is
/// exactly permutation-invariant over the dataset.
fn stable_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.iter().sum()
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = stable_sum(values.iter().copied()) / n;
    let var = stable_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

fn rmse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (stable_sum(values.iter().map(|v| v * v)) / values.len() as f64).sqrt()
}

/// Run an extractor over a labeled dataset and accumulate the metric suite.
pub fn evaluate<F>(extractor: F, dataset: &[(DepthImage, GroundTruthLine)]) -> ExtractionMetrics
where
    F: Fn(&DepthImage) -> Result<ExtractedLine, ExtractionError>,
{
    assert!(!dataset.is_empty(), "dataset must be non-empty");
    let mut pos_errors = Vec::new();
    let mut ang_errors = Vec::new();
    let mut discrepancies = Vec::new();
    let mut runtimes = Vec::new();
    let mut failures = 0usize;
    for (img, truth) in dataset {
        #[cfg(feature = "std")]
        let t0 = std::time::Instant::now();
        let result = extractor(img);
        #[cfg(feature = "std")]
        runtimes.push(t0.elapsed().as_secs_f64() * 1e3);
        #[cfg(not(feature = "std"))]
        runtimes.push(0.0);
        match result {
            Ok(line) => {
                pos_errors.push(truth.distance_to(line.midpoint_px));
                ang_errors.push(wrap_half_angle(line.angle_rad - truth.angle()).abs());
                // Sample the extracted segment at one-pixel steps.
                let (a, b) = (line.endpoints_px[0], line.endpoints_px[1]);
                let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
                let steps = (len.ceil() as usize).max(1);
                let mut far = 0usize;
                for i in 0..=steps {
                    let t = i as f64 / steps as f64;
                    let p = (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
                    if truth.distance_to(p) > DISCREPANCY_THRESHOLD_PX {
                        far += 1;
                    }
                }
                discrepancies.push(100.0 * far as f64 / (steps + 1) as f64);
            }
            Err(_) => {
                failures += 1;
                discrepancies.push(100.0);
            }
        }
    }
    let (_, pos_std) = mean_std(&pos_errors);
    let (_, ang_std) = mean_std(&ang_errors);
    let (rt_mean, rt_std) = mean_std(&runtimes);
    let (disc_mean, _) = mean_std(&discrepancies);
    ExtractionMetrics {
        position_rmse_px: rmse(&pos_errors),
        position_std_px: pos_std,
        orientation_rmse_rad: rmse(&ang_errors),
        orientation_std_rad: ang_std,
        discrepancy_rate_pct: disc_mean,
        runtime_mean_ms: rt_mean,
        runtime_std_ms: rt_std,
        failure_rate_pct: 100.0 * failures as f64 / dataset.len() as f64,
        frames: dataset.len(),
    }
}
