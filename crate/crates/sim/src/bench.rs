//! Synthetic extraction benchmark: ridge images with known centerlines,
//! evaluated against every extractor.

use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use tacservo_core::extraction::{
    evaluate, ExtractionMetrics, ExtractionParams, ExtractorKind, GroundTruthLine,
};
use tacservo_core::geometry::CameraIntrinsics;
use tacservo_core::image::DepthImage;
use tacservo_core::plant::{
    ground_truth_features, look_down_pose, render_depth_image, ContactResult, ContourPath,
    SensorState, WorldModel,
};

pub struct BenchFrame {
    pub image: DepthImage,
    pub truth: GroundTruthLine,
}

/// Generate straight-ridge frames with uniformly random image angle and
/// lateral offset, deterministic in the seed.
pub fn generate_dataset(count: usize, noise_sigma_m: f64, seed: u64) -> Vec<BenchFrame> {
    let intrinsics = CameraIntrinsics::default();
    let world = WorldModel::with_defaults(ContourPath::Line {
        angle_rad: 0.0,
        length_m: 0.6,
    })
    .expect("valid world");
    let geo = world.geometry().clone();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |lo: f64, hi: f64| {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    };
    let mut frames = Vec::with_capacity(count);
    let mut produced = 0usize;
    let mut attempt = 0u64;
    while produced < count {
        attempt += 1;
        let angle = uniform(-1.3, 1.3);
        let lateral = uniform(-2.5e-3, 2.5e-3);
        let p = geo.point_at(0.3);
        let pose = look_down_pose(
            p.x,
            p.y + lateral,
            world.crest_z() + 0.020,
            angle,
        );
        let sensor = SensorState::new(pose);
        let truth = match ground_truth_features(&sensor, &world, &intrinsics, Some(0.3)) {
            ContactResult::Contact(info) => GroundTruthLine {
                a_px: (info.state.p1.u, info.state.p1.v),
                b_px: (info.state.p2.u, info.state.p2.v),
            },
            ContactResult::NoContact(_) => continue,
        };
        let image = render_depth_image(
            &sensor,
            &world,
            &intrinsics,
            noise_sigma_m,
            seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        )
        .expect("render");
        frames.push(BenchFrame { image, truth });
        produced += 1;
    }
    frames
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub extractor: String,
    pub position_rmse_px: f64,
    pub position_std_px: f64,
    pub orientation_rmse_rad: f64,
    pub orientation_std_rad: f64,
    pub discrepancy_rate_pct: f64,
    pub runtime_mean_ms: f64,
    pub runtime_std_ms: f64,
    pub failure_rate_pct: f64,
    pub frames: usize,
}

impl BenchRow {
    fn from_metrics(kind: ExtractorKind, m: &ExtractionMetrics) -> Self {
        Self {
            extractor: kind.name().to_string(),
            position_rmse_px: m.position_rmse_px,
            position_std_px: m.position_std_px,
            orientation_rmse_rad: m.orientation_rmse_rad,
            orientation_std_rad: m.orientation_std_rad,
            discrepancy_rate_pct: m.discrepancy_rate_pct,
            runtime_mean_ms: m.runtime_mean_ms,
            runtime_std_ms: m.runtime_std_ms,
            failure_rate_pct: m.failure_rate_pct,
            frames: m.frames,
        }
    }
}

/// Run every extractor over the dataset. Runtime measurement is serialized
/// per extractor by construction (one extractor at a time).
pub fn run_benchmark(frames: &[BenchFrame]) -> Vec<BenchRow> {
    let dataset: Vec<(DepthImage, GroundTruthLine)> = frames
        .iter()
        .map(|f| (f.image.clone(), f.truth))
        .collect();
    let params = ExtractionParams::default();
    ExtractorKind::ALL
        .iter()
        .map(|kind| {
            let metrics = evaluate(|img| kind.run(img, &params), &dataset);
            BenchRow::from_metrics(*kind, &metrics)
        })
        .collect()
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "extractor,position_rmse_px,position_std_px,orientation_rmse_rad,orientation_std_rad,discrepancy_rate_pct,runtime_mean_ms,runtime_std_ms,failure_rate_pct,frames\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.extractor,
            r.position_rmse_px,
            r.position_std_px,
            r.orientation_rmse_rad,
            r.orientation_std_rad,
            r.discrepancy_rate_pct,
            r.runtime_mean_ms,
            r.runtime_std_ms,
            r.failure_rate_pct,
            r.frames
        ));
    }
    out
}

pub fn rows_to_text(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:<8} {:>14} {:>16} {:>12} {:>12} {:>9}\n",
        "method", "pos rmse [px]", "orient rmse [rad]", "discrep [%]", "time [ms]", "fail [%]"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:>6.2} ± {:>5.2} {:>8.4} ± {:>6.4} {:>12.2} {:>6.2} ± {:>3.2} {:>8.2}\n",
            r.extractor,
            r.position_rmse_px,
            r.position_std_px,
            r.orientation_rmse_rad,
            r.orientation_std_rad,
            r.discrepancy_rate_pct,
            r.runtime_mean_ms,
            r.runtime_std_ms,
            r.failure_rate_pct
        ));
    }
    out
}

/// Write the dataset (PGM plus sidecars), the benchmark CSV, and a JSON
/// summary into `out_dir`.
pub fn write_benchmark(
    frames: &[BenchFrame],
    rows: &[BenchRow],
    out_dir: &Path,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir.join("frames"))?;
    for (i, f) in frames.iter().enumerate() {
        crate::pgm::write_pgm(&f.image, &out_dir.join(format!("frames/{i:04}.pgm")))?;
        crate::pgm::write_ground_truth(&f.truth, &out_dir.join(format!("frames/{i:04}.txt")))?;
    }
    std::fs::write(out_dir.join("bench.csv"), rows_to_csv(rows))?;
    std::fs::write(
        out_dir.join("bench.json"),
        serde_json::to_string_pretty(rows).expect("rows serialize"),
    )?;
    Ok(())
}
