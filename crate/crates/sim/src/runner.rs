//! Deterministic closed-loop scenario runner.
//!
//! One tick per control period: advance the plant with the previous
//! command, observe (oracle features plus noise, or render-and-extract),
//! estimate, control, clip, inject scheduled disturbances, and log. A run
//! ends at the configured duration, on contact loss, or when the path has
//! been fully traversed.

use nalgebra::{SVector, Vector2, Vector4, Vector6};
use rand_core::{RngCore, SeedableRng};
use tacservo_core::control::{
    contour_error, coupled_servo, decoupled_servo, mpc_reference, ContourReference,
    ControllerGains,
};
use tacservo_core::estimator::{
    anchor_mean_to_band, align_measurement_order, predict, update, EkfConfig, EkfState,
    MeasurementAnchoring,
};
use tacservo_core::extraction::ExtractionParams;
use tacservo_core::features::{regauge_inward, TactileState};
use tacservo_core::geometry::{CameraIntrinsics, PointFeature, Twist};
use tacservo_core::nmpc::{MpcProblem, MpcSolution, MpcSolver, TactileDynamics};
use tacservo_core::plant::{
    apply_twist, ground_truth_features, inject_disturbance, render_depth_image, ContactResult,
    SensorState, WorldModel, CONTACT_DEPTH_MAX_M, CONTACT_DEPTH_MIN_M, FOV_MARGIN_PX,
};

use crate::scenario::{ControllerKind, FeedbackMode, Scenario, CONTROL_RATE_HZ, MEASURE_RATE_HZ};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("scenario invalid: {0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("no contact at the initial pose")]
    NoInitialContact,
    #[error("controller failure at tick {tick}: {message}")]
    Controller { tick: usize, message: String },
}

/// Why the run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Duration,
    Completed,
    NoContact,
    SolverFailure,
}

/// Per-tick record.
#[derive(Debug, Clone)]
pub struct TickRow {
    pub time_s: f64,
    pub truth: SVector<f64, 10>,
    pub estimate: SVector<f64, 10>,
    /// Contour error of the true state against the reference.
    pub error: Vector4<f64>,
    pub command: Vector6<f64>,
    pub kkt_residual: f64,
    pub sqp_iterations: usize,
    pub slack_max: f64,
    pub active_bounds: usize,
    pub in_contact: bool,
    pub depth_band_violated: bool,
    pub fov_violated: bool,
    pub input_clipped: bool,
    /// Sensor world position (for trajectory plots).
    pub sensor_x: f64,
    pub sensor_y: f64,
}

#[derive(Debug, Clone)]
pub struct RunLog {
    pub rows: Vec<TickRow>,
    pub end_reason: EndReason,
    /// Wall-clock solver time per MPC tick (non-deterministic; kept out of
    /// the run CSV so logs stay byte-reproducible).
    pub solve_times_ms: Vec<f64>,
}

impl RunLog {
    /// Deterministic CSV: header plus one row per tick.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 256);
        out.push_str("time_s");
        for name in [
            "t_u1", "t_v1", "t_z1", "t_u2", "t_v2", "t_z2", "t_offset", "t_angle", "t_pitch",
            "t_depth", "e_u1", "e_v1", "e_z1", "e_u2", "e_v2", "e_z2", "e_offset", "e_angle",
            "e_pitch", "e_depth",
        ] {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",err_offset,err_angle,err_pitch,err_depth");
        out.push_str(",cmd_vx,cmd_vy,cmd_vz,cmd_wx,cmd_wy,cmd_wz");
        out.push_str(",kkt_residual,sqp_iterations,slack_max,active_bounds");
        out.push_str(",in_contact,depth_band_violated,fov_violated,input_clipped");
        out.push_str(",sensor_x,sensor_y\n");
        for row in &self.rows {
            out.push_str(&format!("{}", row.time_s));
            for v in row.truth.iter().chain(row.estimate.iter()) {
                out.push_str(&format!(",{v}"));
            }
            for v in row.error.iter() {
                out.push_str(&format!(",{v}"));
            }
            for v in row.command.iter() {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(
                ",{},{},{},{}",
                row.kkt_residual, row.sqp_iterations, row.slack_max, row.active_bounds
            ));
            out.push_str(&format!(
                ",{},{},{},{}",
                row.in_contact as u8,
                row.depth_band_violated as u8,
                row.fov_violated as u8,
                row.input_clipped as u8
            ));
            out.push_str(&format!(",{},{}\n", row.sensor_x, row.sensor_y));
        }
        out
    }

    /// Sidecar CSV with the wall-clock solve times (not byte-reproducible).
    pub fn solver_csv(&self) -> String {
        let mut out = String::from("tick,solve_time_ms\n");
        for (k, t) in self.solve_times_ms.iter().enumerate() {
            out.push_str(&format!("{k},{t}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunMetrics {
    pub scenario_name: String,
    pub scenario_hash: String,
    pub family_hash: String,
    pub controller: String,
    pub seed: u64,
    pub ticks: usize,
    pub end_reason: EndReason,
    pub rmse_offset_m: f64,
    pub rmse_angle_rad: f64,
    pub rmse_pitch_rad: f64,
    pub rmse_depth_m: f64,
    /// First time the weighted error norm stays below 2% of its initial
    /// value for the rest of the run.
    pub settling_time_s: Option<f64>,
    /// Mean commanded forward velocity over the final ten seconds.
    pub vx_final10_mean: f64,
    pub contact_maintained: bool,
    /// Fraction of the path arc length traversed.
    pub completion: f64,
    pub solve_time_mean_ms: f64,
    pub solve_time_std_ms: f64,
    pub max_slack: f64,
}

/// Internal estimator wiring for one run.
enum Estimator {
    /// Use the current ground truth directly (clean oracle feedback).
    Truth,
    /// Hold the most recent measurement.
    ZeroOrderHold(Option<TactileState>),
    Ekf {
        config: EkfConfig,
        state: Option<EkfState>,
    },
}

struct NoiseStream(rand_chacha::ChaCha8Rng);

impl NoiseStream {
    fn new(seed: u64) -> Self {
        Self(rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    fn gauss(&mut self) -> f64 {
        let u1 = ((self.0.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Measurement ticks: multiples of the sensor period mapped to the nearest
/// control tick.
pub fn measurement_ticks(total_ticks: usize) -> Vec<bool> {
    let mut flags = vec![false; total_ticks];
    let ratio = CONTROL_RATE_HZ / MEASURE_RATE_HZ;
    let mut m = 0usize;
    loop {
        let tick = (m as f64 * ratio).round() as usize;
        if tick >= total_ticks {
            break;
        }
        flags[tick] = true;
        m += 1;
    }
    flags
}

pub fn run_scenario(scenario: &Scenario) -> Result<(RunLog, RunMetrics), RunError> {
    scenario.validate()?;
    let intrinsics = CameraIntrinsics::default();
    let world: WorldModel = scenario.world.build()?;
    let geometry = world.geometry().clone();
    let gains: ControllerGains = scenario.gains.build();
    let reference: ContourReference = scenario.reference.build(&gains.q);
    let dt = 1.0 / CONTROL_RATE_HZ;
    let total_ticks = (scenario.duration_s * CONTROL_RATE_HZ).round() as usize;
    let meas_ticks = measurement_ticks(total_ticks);
    let extraction_params = ExtractionParams::default();

    // Initial pose: nadir over the path with the configured offsets.
    let mut sensor = {
        let p = geometry.point_at(scenario.initial.arc_m);
        let tangent = geometry.tangent_at(scenario.initial.arc_m);
        let yaw = tangent.y.atan2(tangent.x) + scenario.initial.yaw_rad;
        let normal = Vector2::new(-tangent.y, tangent.x);
        let pos = p + normal * scenario.initial.lateral_m;
        let pose = tacservo_core::plant::look_down_pose(
            pos.x,
            pos.y,
            world.crest_z() + scenario.initial.depth_m,
            yaw,
        );
        let pitched = if scenario.initial.pitch_rad != 0.0 {
            let spin = tacservo_core::geometry::exp_twist(
                &Twist::new(
                    nalgebra::Vector3::zeros(),
                    nalgebra::Vector3::new(0.0, scenario.initial.pitch_rad, 0.0),
                ),
                1.0,
            );
            pose.compose(&spin)
        } else {
            pose
        };
        SensorState::new(pitched)
    };

    let mut noise = NoiseStream::new(scenario.seed);
    let mut estimator = if scenario.ekf.enabled {
        Estimator::Ekf {
            config: scenario.ekf.build(),
            state: None,
        }
    } else if scenario.noise.any_feature_noise()
        || scenario.feedback.mode == FeedbackMode::ImageLoop
    {
        Estimator::ZeroOrderHold(None)
    } else {
        Estimator::Truth
    };

    let mut solver = MpcSolver::new();
    let dynamics = TactileDynamics {
        intrinsics,
        dt,
    };
    let mut warm: Option<MpcSolution> = None;
    let mut command = Twist::zero();
    let mut arc_hint = scenario.initial.arc_m;
    let mut progress_m = 0.0f64;
    // An open ridge stops producing features once the footprint reaches its
    // physical end; the reachable arc ends half a footprint early.
    let end_margin = if geometry.is_closed() { 0.0 } else { 0.012 };
    let reachable_m = (geometry.total_length() - scenario.initial.arc_m - end_margin).max(1e-9);
    let mut disturbance_done = vec![false; scenario.disturbances.len()];
    let mut end_reason = EndReason::Duration;

    let mut log = RunLog {
        rows: Vec::with_capacity(total_ticks),
        end_reason: EndReason::Duration,
        solve_times_ms: Vec::new(),
    };

    for tick in 0..total_ticks {
        let time_s = tick as f64 * dt;
        // 1. Plant truth advances under the previous command.
        if tick > 0 {
            sensor = apply_twist(&sensor, &command, dt);
        }

        // 2. Ground truth and path progress.
        let truth = match ground_truth_features(&sensor, &world, &intrinsics, Some(arc_hint)) {
            ContactResult::Contact(info) => {
                let delta = geometry.arc_delta(arc_hint, info.arc_m);
                progress_m = (progress_m + delta).max(progress_m);
                arc_hint = info.arc_m;
                info.state
            }
            ContactResult::NoContact(_) => {
                end_reason = if progress_m >= reachable_m - 1e-6 {
                    EndReason::Completed
                } else {
                    EndReason::NoContact
                };
                log.rows.push(TickRow {
                    time_s,
                    truth: SVector::zeros(),
                    estimate: SVector::zeros(),
                    error: Vector4::zeros(),
                    command: command.to_vector(),
                    kkt_residual: 0.0,
                    sqp_iterations: 0,
                    slack_max: 0.0,
                    active_bounds: 0,
                    in_contact: false,
                    depth_band_violated: true,
                    fov_violated: false,
                    input_clipped: false,
                    sensor_x: sensor.pose.translation.x,
                    sensor_y: sensor.pose.translation.y,
                });
                break;
            }
        };

        // 3. Measurement event.
        let measurement: Option<(PointFeature, PointFeature)> = if meas_ticks[tick] {
            match scenario.feedback.mode {
                FeedbackMode::Oracle => {
                    let mut p1 = truth.p1;
                    let mut p2 = truth.p2;
                    if scenario.noise.feature_px > 0.0 || scenario.noise.depth_m > 0.0 {
                        p1.u += scenario.noise.feature_px * noise.gauss();
                        p1.v += scenario.noise.feature_px * noise.gauss();
                        p1.depth += scenario.noise.depth_m * noise.gauss();
                        p2.u += scenario.noise.feature_px * noise.gauss();
                        p2.v += scenario.noise.feature_px * noise.gauss();
                        p2.depth += scenario.noise.depth_m * noise.gauss();
                    }
                    Some((p1, p2))
                }
                FeedbackMode::ImageLoop => {
                    let frame_seed = scenario
                        .seed
                        .wrapping_add((tick as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    match render_depth_image(
                        &sensor,
                        &world,
                        &intrinsics,
                        scenario.noise.image_m,
                        frame_seed,
                    ) {
                        Ok(img) => scenario
                            .extractor_kind()
                            .run(&img, &extraction_params)
                            .ok()
                            .and_then(|line| {
                                let a = line.endpoints_px[0];
                                let b = line.endpoints_px[1];
                                let pa =
                                    PointFeature::new(a.0, a.1, img.sample(a.0, a.1));
                                let pb =
                                    PointFeature::new(b.0, b.1, img.sample(b.0, b.1));
                                tacservo_core::features::anchor_to_band(
                                    &pa,
                                    &pb,
                                    &intrinsics,
                                    FOV_MARGIN_PX,
                                )
                            }),
                        Err(_) => None,
                    }
                }
            }
        } else {
            None
        };

        // 4. Estimate.
        let estimate: TactileState = match &mut estimator {
            Estimator::Truth => truth,
            Estimator::ZeroOrderHold(held) => {
                if let Some((p1, p2)) = measurement {
                    if let Ok(s) = TactileState::from_points(p1, p2, &intrinsics) {
                        *held = Some(s);
                    }
                }
                held.unwrap_or(truth)
            }
            Estimator::Ekf { config, state } => {
                if let Some(s) = state.as_mut() {
                    match predict(s, &command, dt, &intrinsics, &config.process_noise) {
                        Ok(next) => *s = next,
                        Err(_) => *state = None,
                    }
                }
                if let Some((p1, p2)) = measurement {
                    match state {
                        Some(s) => {
                            if config.anchoring == MeasurementAnchoring::BorderBand {
                                *s = anchor_mean_to_band(s, &intrinsics);
                            }
                            let aligned = align_measurement_order(s.points(), (p1, p2));
                            *s = update(s, aligned, &intrinsics, &config.measurement_noise).state;
                        }
                        None => {
                            if let Ok(init) = EkfState::from_measurement(
                                p1,
                                p2,
                                config.initial_covariance,
                                &intrinsics,
                            ) {
                                *state = Some(init);
                            }
                        }
                    }
                }
                match state {
                    Some(s) => TactileState::from_vector_raw(&s.mean),
                    None => truth,
                }
            }
        };

        // 5. Control.
        let mut kkt_residual = 0.0;
        let mut sqp_iterations = 0;
        let mut slack_max = 0.0;
        let mut active_bounds = 0;
        let raw_command = match scenario.controller {
            ControllerKind::Coupled => coupled_servo(&estimate, &reference, &gains, &intrinsics)
                .map_err(|e| RunError::Controller {
                    tick,
                    message: e.to_string(),
                })?,
            ControllerKind::Decoupled => {
                decoupled_servo(&estimate, &reference, &gains, &intrinsics).map_err(|e| {
                    RunError::Controller {
                        tick,
                        message: e.to_string(),
                    }
                })?
            }
            ControllerKind::Mpc => {
                // Hand the solver an inward point gauge so horizon
                // predictions cannot brush the field-of-view band through
                // tangential slide alone.
                let gauged = regauge_inward(
                    &estimate.p1,
                    &estimate.p2,
                    scenario.mpc.regauge_half_len_px,
                )
                .and_then(|(a, b)| TactileState::from_points(a, b, &intrinsics).ok())
                .unwrap_or(estimate);
                let error = contour_error(&reference.desired, &gauged.contour);
                let (u_d, xi_d) = mpc_reference(&error, &reference);
                let mut problem = MpcProblem::with_defaults(gauged.as_vector(), xi_d, u_d);
                problem.horizon_steps = scenario.mpc.horizon_steps;
                problem.dt = dt;
                problem.q = gains.q;
                problem.r = gains.r;
                problem.state_lower = gains.state_bounds.0;
                problem.state_upper = gains.state_bounds.1;
                problem.input_lower = gains.input_bounds.0;
                problem.input_upper = gains.input_bounds.1;
                problem.slack_penalty = scenario.mpc.slack_penalty;
                problem.max_sqp_iterations = scenario.mpc.max_sqp_iterations;
                problem.kkt_tolerance = scenario.mpc.kkt_tolerance;
                match solver.solve(&problem, &dynamics, warm.as_ref()) {
                    Ok(solution) => {
                        kkt_residual = solution.kkt_residual;
                        sqp_iterations = solution.sqp_iterations;
                        slack_max = solution.slack_max;
                        active_bounds = solution.active_bounds;
                        log.solve_times_ms.push(solution.solve_time_ms);
                        let cmd = solution.command();
                        warm = Some(solution);
                        cmd
                    }
                    Err(_) => {
                        end_reason = EndReason::SolverFailure;
                        break;
                    }
                }
            }
        };

        // 6. Clip to the input box.
        let clipped = raw_command.clamped(&gains.input_bounds.0, &gains.input_bounds.1);
        let input_clipped = (clipped.to_vector() - raw_command.to_vector()).amax() > 1e-12;
        command = clipped;

        // 7. Scheduled disturbances.
        for (d, done) in scenario.disturbances.iter().zip(disturbance_done.iter_mut()) {
            if !*done && (d.time_s * CONTROL_RATE_HZ).round() as usize == tick {
                sensor = inject_disturbance(
                    &sensor,
                    &tacservo_core::plant::Disturbance {
                        time_s: d.time_s,
                        offset: d.offset,
                    },
                );
                *done = true;
            }
        }

        // 8. Log.
        let error = contour_error(&reference.desired, &truth.contour);
        let depth_ok = (CONTACT_DEPTH_MIN_M..=CONTACT_DEPTH_MAX_M).contains(&truth.contour.depth);
        let fov_ok = truth.p1.is_within(&intrinsics, FOV_MARGIN_PX - 1e-9)
            && truth.p2.is_within(&intrinsics, FOV_MARGIN_PX - 1e-9);
        log.rows.push(TickRow {
            time_s,
            truth: truth.as_vector(),
            estimate: estimate.as_vector(),
            error,
            command: command.to_vector(),
            kkt_residual,
            sqp_iterations,
            slack_max,
            active_bounds,
            in_contact: true,
            depth_band_violated: !depth_ok,
            fov_violated: !fov_ok,
            input_clipped,
            sensor_x: sensor.pose.translation.x,
            sensor_y: sensor.pose.translation.y,
        });

        // 9. Termination on completion.
        if progress_m >= reachable_m - 1e-6 {
            end_reason = EndReason::Completed;
            break;
        }
    }

    log.end_reason = end_reason;
    let metrics = compute_metrics(scenario, &log, &reference, progress_m, reachable_m);
    Ok((log, metrics))
}

fn compute_metrics(
    scenario: &Scenario,
    log: &RunLog,
    reference: &ContourReference,
    progress_m: f64,
    reachable_m: f64,
) -> RunMetrics {
    let contact_rows: Vec<&TickRow> = log.rows.iter().filter(|r| r.in_contact).collect();
    let n = contact_rows.len().max(1) as f64;
    let rmse = |idx: usize| -> f64 {
        (contact_rows.iter().map(|r| r.error[idx] * r.error[idx]).sum::<f64>() / n).sqrt()
    };
    // Settling: weighted error norm stays below 2% of its initial value.
    let weighted = |r: &TickRow| -> f64 {
        (r.error.transpose() * reference.weight_w * r.error)[(0, 0)].sqrt()
    };
    let settling_time_s = contact_rows.first().and_then(|first| {
        let threshold = 0.02 * weighted(first);
        let mut settle: Option<f64> = None;
        for row in &contact_rows {
            if weighted(row) <= threshold {
                settle.get_or_insert(row.time_s);
            } else {
                settle = None;
            }
        }
        settle
    });
    let final_window_start = log
        .rows
        .last()
        .map(|r| r.time_s - 10.0)
        .unwrap_or(0.0);
    let final_vx: Vec<f64> = contact_rows
        .iter()
        .filter(|r| r.time_s >= final_window_start)
        .map(|r| r.command[0])
        .collect();
    let vx_final10_mean = if final_vx.is_empty() {
        0.0
    } else {
        final_vx.iter().sum::<f64>() / final_vx.len() as f64
    };
    let (st_mean, st_std) = {
        let t = &log.solve_times_ms;
        if t.is_empty() {
            (0.0, 0.0)
        } else {
            let mean = t.iter().sum::<f64>() / t.len() as f64;
            let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.len() as f64;
            (mean, var.sqrt())
        }
    };
    RunMetrics {
        scenario_name: scenario.name.clone(),
        scenario_hash: scenario.hash_hex(),
        family_hash: scenario.family_hash_hex(),
        controller: scenario.controller.name().to_string(),
        seed: scenario.seed,
        ticks: log.rows.len(),
        end_reason: log.end_reason,
        rmse_offset_m: rmse(0),
        rmse_angle_rad: rmse(1),
        rmse_pitch_rad: rmse(2),
        rmse_depth_m: rmse(3),
        settling_time_s,
        vx_final10_mean,
        contact_maintained: log.end_reason != EndReason::NoContact,
        completion: (progress_m / reachable_m).clamp(0.0, 1.0),
        solve_time_mean_ms: st_mean,
        solve_time_std_ms: st_std,
        max_slack: log.rows.iter().map(|r| r.slack_max).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunDelta {
    pub name_a: String,
    pub name_b: String,
    pub settling_delta_s: Option<f64>,
    pub rmse_offset_ratio: f64,
    pub rmse_angle_ratio: f64,
    pub completion_delta: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub runs: Vec<RunMetrics>,
    /// Pairwise deltas (b relative to a) for consecutive pairs.
    pub deltas: Vec<RunDelta>,
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("need at least two runs to compare")]
    TooFew,
    #[error("runs `{0}` and `{1}` are from different scenario families")]
    MismatchedScenarios(String, String),
}

/// Tabulate metrics of runs from one scenario family plus pairwise deltas.
pub fn compare_runs(runs: &[RunMetrics]) -> Result<ComparisonReport, CompareError> {
    if runs.len() < 2 {
        return Err(CompareError::TooFew);
    }
    for pair in runs.windows(2) {
        if pair[0].family_hash != pair[1].family_hash {
            return Err(CompareError::MismatchedScenarios(
                pair[0].scenario_name.clone(),
                pair[1].scenario_name.clone(),
            ));
        }
    }
    let ratio = |a: f64, b: f64| if b.abs() < 1e-300 { f64::NAN } else { a / b };
    let mut deltas = Vec::new();
    for pair in runs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        deltas.push(RunDelta {
            name_a: a.scenario_name.clone(),
            name_b: b.scenario_name.clone(),
            settling_delta_s: match (a.settling_time_s, b.settling_time_s) {
                (Some(x), Some(y)) => Some(x - y),
                _ => None,
            },
            rmse_offset_ratio: ratio(a.rmse_offset_m, b.rmse_offset_m),
            rmse_angle_ratio: ratio(a.rmse_angle_rad, b.rmse_angle_rad),
            completion_delta: a.completion - b.completion,
        });
    }
    Ok(ComparisonReport {
        runs: runs.to_vec(),
        deltas,
    })
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>10} {:>12} {:>12} {:>10} {:>10} {:>9}\n",
            "run", "settle[s]", "rmse_off[m]", "rmse_ang[rad]", "complete", "contact", "end"
        ));
        for m in &self.runs {
            out.push_str(&format!(
                "{:<24} {:>10} {:>12.3e} {:>12.3e} {:>10.2} {:>10} {:>9?}\n",
                m.scenario_name,
                m.settling_time_s
                    .map(|t| format!("{t:.2}"))
                    .unwrap_or_else(|| "-".into()),
                m.rmse_offset_m,
                m.rmse_angle_rad,
                m.completion,
                m.contact_maintained,
                m.end_reason,
            ));
        }
        for d in &self.deltas {
            out.push_str(&format!(
                "delta {} vs {}: settling {} s, rmse ratios offset {:.2} angle {:.2}, completion {:+.2}\n",
                d.name_a,
                d.name_b,
                d.settling_delta_s
                    .map(|t| format!("{t:+.2}"))
                    .unwrap_or_else(|| "-".into()),
                d.rmse_offset_ratio,
                d.rmse_angle_ratio,
                d.completion_delta,
            ));
        }
        out
    }
}
