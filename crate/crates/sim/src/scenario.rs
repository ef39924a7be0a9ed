//! Scenario configuration: a single versioned JSON document describes one
//! reproducible closed-loop experiment.

use nalgebra::{SMatrix, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use tacservo_core::control::{ContourReference, ControllerGains};
use tacservo_core::estimator::{EkfConfig, MeasurementAnchoring};
use tacservo_core::extraction::ExtractorKind;
use tacservo_core::features::ContourFeatures;
use tacservo_core::plant::{ContourPath, WorldModel};

pub const SCHEMA_VERSION: u32 = 1;

/// Control rate (Hz); one simulation tick per control period.
pub const CONTROL_RATE_HZ: f64 = 50.0;
/// Sensor measurement rate (Hz).
pub const MEASURE_RATE_HZ: f64 = 15.0;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid {
        field: &'static str,
        reason: String,
    },
    #[error("unknown demo `{0}`")]
    UnknownDemo(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Coupled,
    Decoupled,
    Mpc,
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Coupled => "coupled",
            ControllerKind::Decoupled => "decoupled",
            ControllerKind::Mpc => "mpc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// Geometric ground-truth features plus optional additive noise.
    Oracle,
    /// Rendered depth images fed through a contour extractor.
    ImageLoop,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub mode: FeedbackMode,
    /// Extractor used in image-loop mode.
    pub extractor: String,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            mode: FeedbackMode::Oracle,
            extractor: "tsalf".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Feature pixel noise (standard deviation, px) in oracle mode.
    pub feature_px: f64,
    /// Feature depth noise (m) in oracle mode.
    pub depth_m: f64,
    /// Per-pixel depth-image noise (m) in image-loop mode.
    pub image_m: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            feature_px: 0.0,
            depth_m: 0.0,
            image_m: 2e-5,
        }
    }
}

impl NoiseConfig {
    pub fn any_feature_noise(&self) -> bool {
        self.feature_px > 0.0 || self.depth_m > 0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EkfScenarioConfig {
    pub enabled: bool,
    /// Re-anchor predicted means to the border band before updates.
    pub anchor_to_band: bool,
    /// Diagonal overrides; `None` keeps the estimator defaults.
    pub process_diag: Option<[f64; 10]>,
    pub measurement_diag: Option<[f64; 6]>,
}

impl Default for EkfScenarioConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            anchor_to_band: true,
            process_diag: None,
            measurement_diag: None,
        }
    }
}

impl EkfScenarioConfig {
    pub fn build(&self) -> EkfConfig {
        let mut cfg = EkfConfig::default();
        if let Some(d) = self.process_diag {
            cfg.process_noise =
                SMatrix::<f64, 10, 10>::from_diagonal(&SMatrix::<f64, 10, 1>::from_column_slice(&d));
        }
        if let Some(d) = self.measurement_diag {
            cfg.measurement_noise =
                SMatrix::<f64, 6, 6>::from_diagonal(&Vector6::from_column_slice(&d));
        }
        cfg.anchoring = if self.anchor_to_band {
            MeasurementAnchoring::BorderBand
        } else {
            MeasurementAnchoring::RawPoints
        };
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContourConfig {
    Line { angle_rad: f64, length_m: f64 },
    SShape {
        amplitude_m: f64,
        wavelength_m: f64,
        length_m: f64,
    },
    Hexagon { circumradius_m: f64 },
    Circle { radius_m: f64 },
    Polyline { points: Vec<[f64; 2]>, closed: bool },
}

impl ContourConfig {
    pub fn to_path(&self) -> ContourPath {
        match self.clone() {
            ContourConfig::Line { angle_rad, length_m } => ContourPath::Line { angle_rad, length_m },
            ContourConfig::SShape {
                amplitude_m,
                wavelength_m,
                length_m,
            } => ContourPath::SShape {
                amplitude_m,
                wavelength_m,
                length_m,
            },
            ContourConfig::Hexagon { circumradius_m } => ContourPath::Hexagon { circumradius_m },
            ContourConfig::Circle { radius_m } => ContourPath::Circle { radius_m },
            ContourConfig::Polyline { points, closed } => ContourPath::Polyline { points, closed },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub contour: ContourConfig,
    pub surface_height_m: f64,
    pub ridge_height_m: f64,
    pub ridge_sigma_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            contour: ContourConfig::Line {
                angle_rad: 0.0,
                length_m: 0.6,
            },
            surface_height_m: 0.0,
            ridge_height_m: 5e-4,
            ridge_sigma_m: 4e-4,
        }
    }
}

impl WorldConfig {
    pub fn build(&self) -> Result<WorldModel, ScenarioError> {
        WorldModel::new(
            self.contour.to_path(),
            self.surface_height_m,
            self.ridge_height_m,
            self.ridge_sigma_m,
        )
        .map_err(|e| invalid("world", e.to_string()))
    }
}

/// Initial sensor pose relative to the path: nadir view at `arc_m` with
/// offsets that create the starting feature error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InitialPose {
    pub arc_m: f64,
    /// Offset along the path's left normal (m).
    pub lateral_m: f64,
    pub yaw_rad: f64,
    /// Rotation about the camera y axis after placement.
    pub pitch_rad: f64,
    /// Initial contact depth at the crest (m).
    pub depth_m: f64,
}

impl Default for InitialPose {
    fn default() -> Self {
        Self {
            arc_m: 0.05,
            lateral_m: 0.0,
            yaw_rad: 0.0,
            pitch_rad: 0.0,
            depth_m: 0.020,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub offset_m: f64,
    pub angle_rad: f64,
    pub pitch_rad: f64,
    pub depth_m: f64,
    pub v_x_max: f64,
    /// Diagonal of the velocity-schedule weight; `None` derives it from the
    /// normalized state weight.
    pub w_diag: Option<[f64; 4]>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            offset_m: 0.0,
            angle_rad: 0.0,
            pitch_rad: 0.0,
            depth_m: 0.020,
            v_x_max: 0.005,
            w_diag: None,
        }
    }
}

impl ReferenceConfig {
    pub fn build(&self, q: &SMatrix<f64, 4, 4>) -> ContourReference {
        let weight_w = match self.w_diag {
            Some(d) => SMatrix::<f64, 4, 4>::from_diagonal(&Vector4::from_column_slice(&d)),
            None => q / q.trace(),
        };
        ContourReference {
            desired: ContourFeatures {
                offset: self.offset_m,
                angle: self.angle_rad,
                pitch: self.pitch_rad,
                depth: self.depth_m,
            },
            v_x_max: self.v_x_max,
            weight_w,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub servo_gain: [f64; 4],
    pub damping: f64,
    pub k_depth: f64,
    pub k_pitch: f64,
    pub q_diag: [f64; 4],
    pub r_diag: [f64; 6],
    /// Symmetric input box: linear (m/s) and angular (rad/s) limits.
    pub v_limit: f64,
    pub w_limit: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            servo_gain: [2.0, 2.0, 2.0, 2.0],
            damping: 1e-6,
            k_depth: 2.0,
            k_pitch: 2.0,
            q_diag: [1e6, 10.0, 10.0, 1e6],
            r_diag: [10.0, 10.0, 10.0, 1.0, 1.0, 1.0],
            v_limit: 0.02,
            w_limit: 0.5,
        }
    }
}

impl GainsConfig {
    pub fn build(&self) -> ControllerGains {
        let mut gains = ControllerGains::default();
        gains.servo_gain =
            SMatrix::<f64, 4, 4>::from_diagonal(&Vector4::from_column_slice(&self.servo_gain));
        gains.damping = self.damping;
        gains.k_depth = self.k_depth;
        gains.k_pitch = self.k_pitch;
        gains.q = SMatrix::<f64, 4, 4>::from_diagonal(&Vector4::from_column_slice(&self.q_diag));
        gains.r = SMatrix::<f64, 6, 6>::from_diagonal(&Vector6::from_column_slice(&self.r_diag));
        let hi = Vector6::new(
            self.v_limit,
            self.v_limit,
            self.v_limit,
            self.w_limit,
            self.w_limit,
            self.w_limit,
        );
        gains.input_bounds = (-hi, hi);
        gains
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    pub horizon_steps: usize,
    pub slack_penalty: f64,
    pub max_sqp_iterations: usize,
    pub kkt_tolerance: f64,
    /// Half length of the inward point gauge handed to the solver (px).
    pub regauge_half_len_px: f64,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon_steps: 25,
            slack_penalty: 1e8,
            max_sqp_iterations: 3,
            kkt_tolerance: 1e-6,
            regauge_half_len_px: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub time_s: f64,
    /// Body-frame pose offset `[dx, dy, dz, rx, ry, rz]`.
    pub offset: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub controller: ControllerKind,
    pub feedback: FeedbackConfig,
    pub noise: NoiseConfig,
    pub ekf: EkfScenarioConfig,
    pub world: WorldConfig,
    pub initial: InitialPose,
    pub reference: ReferenceConfig,
    pub gains: GainsConfig,
    pub mpc: MpcSettings,
    pub disturbances: Vec<DisturbanceConfig>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: "unnamed".into(),
            seed: 0,
            duration_s: 30.0,
            controller: ControllerKind::Mpc,
            feedback: FeedbackConfig::default(),
            noise: NoiseConfig::default(),
            ekf: EkfScenarioConfig::default(),
            world: WorldConfig::default(),
            initial: InitialPose::default(),
            reference: ReferenceConfig::default(),
            gains: GainsConfig::default(),
            mpc: MpcSettings::default(),
            disturbances: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if !(self.duration_s > 0.0) {
            return Err(invalid("duration_s", "must be positive"));
        }
        if ExtractorKind::from_name(&self.feedback.extractor).is_none() {
            return Err(invalid(
                "feedback.extractor",
                format!("unknown extractor `{}`", self.feedback.extractor),
            ));
        }
        if self.noise.feature_px < 0.0 || self.noise.depth_m < 0.0 || self.noise.image_m < 0.0 {
            return Err(invalid("noise", "standard deviations must be non-negative"));
        }
        if self.mpc.horizon_steps < 2 {
            return Err(invalid("mpc.horizon_steps", "need at least two stages"));
        }
        if !(self.reference.v_x_max > 0.0) {
            return Err(invalid("reference.v_x_max", "must be positive"));
        }
        self.world.build()?;
        Ok(())
    }

    pub fn extractor_kind(&self) -> ExtractorKind {
        ExtractorKind::from_name(&self.feedback.extractor).expect("validated extractor")
    }

    /// Stable identifier of the full configuration.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("scenario serializes"));
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Identifier of the experiment family: everything except the
    /// controller, estimator wiring, seed, and name. Runs compared against
    /// each other must share this.
    pub fn family_hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        #[derive(Serialize)]
        struct Family<'a> {
            world: &'a WorldConfig,
            initial: &'a InitialPose,
            reference: &'a ReferenceConfig,
            duration_s: f64,
            noise: &'a NoiseConfig,
        }
        let f = Family {
            world: &self.world,
            initial: &self.initial,
            reference: &self.reference,
            duration_s: self.duration_s,
            noise: &self.noise,
        };
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&f).expect("family serializes"));
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Process noise for contours with appreciable curvature: the point pair
/// drifts at tens of pixels per second as the chord sweeps, which the
/// rigid-point process model does not capture.
pub const CURVE_PROCESS_DIAG: [f64; 10] = [
    50.0, 50.0, 1e-6, 50.0, 50.0, 1e-6, 1e-8, 1e-8, 1e-8, 1e-8,
];

/// Names of the shipped demo scenarios.
pub const DEMO_NAMES: [&str; 8] = [
    "straight-mpc",
    "straight-decoupled",
    "straight-coupled",
    "s-shape-mpc",
    "s-shape-decoupled",
    "s-shape-disturbance",
    "hexagon-mpc",
    "hexagon-decoupled",
];

/// Build one of the shipped demo scenarios.
pub fn demo(name: &str) -> Result<Scenario, ScenarioError> {
    let mut s = Scenario::default();
    s.name = name.to_string();
    s.seed = 42;
    match name {
        "straight-mpc" | "straight-decoupled" | "straight-coupled" => {
            s.controller = match name {
                "straight-mpc" => ControllerKind::Mpc,
                "straight-decoupled" => ControllerKind::Decoupled,
                _ => ControllerKind::Coupled,
            };
            s.world.contour = ContourConfig::Line {
                angle_rad: 0.0,
                length_m: 0.6,
            };
            s.duration_s = 30.0;
            // Pitch starts level: a depth gradient along the segment gives
            // the axial servo pair a strong lever on the contact depth.
            s.initial = InitialPose {
                arc_m: 0.05,
                lateral_m: 0.002,
                yaw_rad: 0.35,
                pitch_rad: 0.0,
                depth_m: 0.0205,
            };
        }
        "s-shape-mpc" | "s-shape-decoupled" | "s-shape-disturbance" => {
            s.controller = if name == "s-shape-decoupled" {
                ControllerKind::Decoupled
            } else {
                ControllerKind::Mpc
            };
            s.world.contour = ContourConfig::SShape {
                amplitude_m: 0.02,
                wavelength_m: 0.12,
                length_m: 0.24,
            };
            s.duration_s = 90.0;
            s.initial = InitialPose {
                arc_m: 0.01,
                lateral_m: 0.0,
                yaw_rad: 0.0,
                pitch_rad: 0.0,
                depth_m: 0.020,
            };
            s.noise.feature_px = 1.0;
            s.noise.depth_m = 1e-4;
            s.ekf.enabled = true;
            // Curved contours sweep the chord through the image; the filter
            // needs tracking-grade process noise for that unmodeled drift.
            s.ekf.process_diag = Some(CURVE_PROCESS_DIAG);
            if name == "s-shape-disturbance" {
                s.disturbances.push(DisturbanceConfig {
                    time_s: 15.0,
                    offset: [0.0, 0.005, 0.0, 0.0, 0.0, 0.0],
                });
            }
        }
        "hexagon-mpc" | "hexagon-decoupled" => {
            s.controller = if name == "hexagon-mpc" {
                ControllerKind::Mpc
            } else {
                ControllerKind::Decoupled
            };
            s.world.contour = ContourConfig::Hexagon {
                circumradius_m: 0.04,
            };
            s.duration_s = 120.0;
            s.initial = InitialPose {
                arc_m: 0.01,
                lateral_m: 0.0,
                yaw_rad: 0.0,
                pitch_rad: 0.0,
                depth_m: 0.020,
            };
            s.noise.feature_px = 1.0;
            s.noise.depth_m = 1e-4;
            s.ekf.enabled = true;
            s.ekf.process_diag = Some(CURVE_PROCESS_DIAG);
        }
        other => return Err(ScenarioError::UnknownDemo(other.to_string())),
    }
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demos_validate_and_round_trip() {
        for name in DEMO_NAMES {
            let s = demo(name).unwrap();
            let json = s.to_json();
            let back = Scenario::from_json(&json).unwrap();
            assert_eq!(back.name, s.name);
            assert_eq!(back.hash_hex(), s.hash_hex());
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = Scenario::from_json(r#"{"schema_version":1,"bogus_field":3}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let err = Scenario::from_json(r#"{"schema_version":99}"#).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { .. }));
    }

    #[test]
    fn family_hash_ignores_the_controller() {
        let a = demo("straight-mpc").unwrap();
        let b = demo("straight-decoupled").unwrap();
        assert_eq!(a.family_hash_hex(), b.family_hash_hex());
        assert_ne!(a.hash_hex(), b.hash_hex());
        let c = demo("hexagon-mpc").unwrap();
        assert_ne!(a.family_hash_hex(), c.family_hash_hex());
    }
}
