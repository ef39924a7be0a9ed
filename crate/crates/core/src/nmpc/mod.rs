//! Real-time-iteration nonlinear MPC over the feature dynamics.
//!
//! The horizon problem is transcribed by multiple shooting: one state per
//! stage, RK4 dynamics as defect constraints, quadratic costs on the contour
//! error and the twist error, hard box bounds on the inputs, and state box
//! bounds (field of view, contact band) as L2-penalized soft constraints.
//!
//! Each solve runs a fixed small number of Gauss-Newton SQP iterations. The
//! states are eliminated through the linearized dynamics (condensing) and
//! the resulting dense box-QP over the inputs goes to a projected-Newton
//! solver. Warm starts shift the previous solution by one stage. The
//! returned trajectory is re-rolled through the exact dynamics, so its
//! states always satisfy the discrete model to machine precision.

pub mod qp;

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector4, Vector6};
#[allow(unused_imports)]
use num_traits::Float;

use crate::features::ContourFeatures;
use crate::geometry::{CameraIntrinsics, GeometryError, Twist};
use crate::plant::{rk4_step, rk4_step_jacobians};

pub use qp::{kkt_residual, solve_box_qp, QpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmpcError {
    InvalidBounds(&'static str),
    InfeasibleBox,
    LinearAlgebraFailure,
    /// The QP stayed infeasible after slack relaxation.
    SolverFailure,
    Degenerate(GeometryError),
}

impl fmt::Display for NmpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NmpcError::InvalidBounds(msg) => write!(f, "invalid bounds: {msg}"),
            NmpcError::InfeasibleBox => write!(f, "infeasible input box"),
            NmpcError::LinearAlgebraFailure => write!(f, "linear algebra failure"),
            NmpcError::SolverFailure => write!(f, "solver failure"),
            NmpcError::Degenerate(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NmpcError {}

impl From<GeometryError> for NmpcError {
    fn from(e: GeometryError) -> Self {
        NmpcError::Degenerate(e)
    }
}

impl From<QpError> for NmpcError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::InfeasibleBox => NmpcError::InfeasibleBox,
            QpError::NotPositiveDefinite => NmpcError::LinearAlgebraFailure,
            QpError::DimensionMismatch => NmpcError::LinearAlgebraFailure,
        }
    }
}

/// Discrete-time shooting model.
pub trait ShootingDynamics {
    fn step(
        &self,
        x: &SVector<f64, 10>,
        u: &Vector6<f64>,
    ) -> Result<SVector<f64, 10>, GeometryError>;
    fn jacobians(
        &self,
        x: &SVector<f64, 10>,
        u: &Vector6<f64>,
    ) -> Result<(SMatrix<f64, 10, 10>, SMatrix<f64, 10, 6>), GeometryError>;
}

/// RK4-discretized tactile feature dynamics.
#[derive(Debug, Clone, Copy)]
pub struct TactileDynamics {
    pub intrinsics: CameraIntrinsics,
    pub dt: f64,
}

impl ShootingDynamics for TactileDynamics {
    fn step(
        &self,
        x: &SVector<f64, 10>,
        u: &Vector6<f64>,
    ) -> Result<SVector<f64, 10>, GeometryError> {
        rk4_step(x, &Twist::from_vector(u), self.dt, &self.intrinsics)
    }

    fn jacobians(
        &self,
        x: &SVector<f64, 10>,
        u: &Vector6<f64>,
    ) -> Result<(SMatrix<f64, 10, 10>, SMatrix<f64, 10, 6>), GeometryError> {
        rk4_step_jacobians(x, &Twist::from_vector(u), self.dt, &self.intrinsics)
    }
}

/// Horizon problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    /// Number of horizon states (`N`); there are `N - 1` inputs.
    pub horizon_steps: usize,
    pub dt: f64,
    pub initial_state: SVector<f64, 10>,
    pub desired_contour: Vector4<f64>,
    pub desired_input: Vector6<f64>,
    pub q: SMatrix<f64, 4, 4>,
    pub r: SMatrix<f64, 6, 6>,
    pub state_lower: SVector<f64, 10>,
    pub state_upper: SVector<f64, 10>,
    pub input_lower: Vector6<f64>,
    pub input_upper: Vector6<f64>,
    pub slack_penalty: f64,
    pub max_sqp_iterations: usize,
    pub kkt_tolerance: f64,
}

impl MpcProblem {
    /// Problem with the shipped defaults around an initial state.
    pub fn with_defaults(
        initial_state: SVector<f64, 10>,
        desired_contour: ContourFeatures,
        desired_input: Twist,
    ) -> Self {
        let (state_lower, state_upper) = crate::control::default_state_bounds();
        let (input_lower, input_upper) = crate::control::default_input_bounds();
        Self {
            horizon_steps: 25,
            dt: 0.02,
            initial_state,
            desired_contour: desired_contour.as_vector(),
            desired_input: desired_input.to_vector(),
            q: crate::control::default_q(),
            r: crate::control::default_r(),
            state_lower,
            state_upper,
            input_lower,
            input_upper,
            slack_penalty: 1e8,
            max_sqp_iterations: 3,
            kkt_tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<(), NmpcError> {
        if self.horizon_steps < 2 {
            return Err(NmpcError::InvalidBounds("horizon needs at least two stages"));
        }
        if !(self.dt > 0.0) {
            return Err(NmpcError::InvalidBounds("dt must be positive"));
        }
        for i in 0..10 {
            if self.state_lower[i] > self.state_upper[i] {
                return Err(NmpcError::InvalidBounds("state bounds out of order"));
            }
        }
        for i in 0..6 {
            if self.input_lower[i] > self.input_upper[i] {
                return Err(NmpcError::InvalidBounds("input bounds out of order"));
            }
        }
        if self.slack_penalty < 0.0 {
            return Err(NmpcError::InvalidBounds("slack penalty must be non-negative"));
        }
        Ok(())
    }

    fn clamp_input(&self, u: &Vector6<f64>) -> Vector6<f64> {
        let mut out = *u;
        for i in 0..6 {
            out[i] = out[i].max(self.input_lower[i]).min(self.input_upper[i]);
        }
        out
    }
}

/// Solver output: the optimal plan plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `N - 1` input twists; the first one is the command.
    pub inputs: Vec<Vector6<f64>>,
    /// `N` predicted states, re-rolled through the exact dynamics.
    pub states: Vec<SVector<f64, 10>>,
    pub kkt_residual: f64,
    pub sqp_iterations: usize,
    pub solve_time_ms: f64,
    /// Largest state-bound violation along the returned trajectory.
    pub slack_max: f64,
    /// Input coordinates pressed against their box.
    pub active_bounds: usize,
    /// Transcribed cost of the returned trajectory.
    pub cost: f64,
}

impl MpcSolution {
    pub fn command(&self) -> Twist {
        Twist::from_vector(&self.inputs[0])
    }
}

struct StageLin {
    a: SMatrix<f64, 10, 10>,
    b: SMatrix<f64, 10, 6>,
    defect: SVector<f64, 10>,
}

/// Signed state-bound violations: positive above the upper bound, negative
/// below the lower one.
fn bound_violation(
    x: &SVector<f64, 10>,
    lower: &SVector<f64, 10>,
    upper: &SVector<f64, 10>,
) -> SVector<f64, 10> {
    let mut v = SVector::<f64, 10>::zeros();
    for i in 0..10 {
        if x[i] > upper[i] {
            v[i] = x[i] - upper[i];
        } else if x[i] < lower[i] {
            v[i] = x[i] - lower[i];
        }
    }
    v
}

/// Gauss-Newton SQP solver. One instance per control loop; instances are
/// independent.
#[derive(Debug, Default)]
pub struct MpcSolver;

impl MpcSolver {
    pub fn new() -> Self {
        Self
    }

    /// Transcribed cost of a trajectory.
    pub fn cost(problem: &MpcProblem, states: &[SVector<f64, 10>], inputs: &[Vector6<f64>]) -> f64 {
        let mut total = 0.0;
        for x in states {
            let xi = x.fixed_rows::<4>(6).into_owned();
            let e = problem.desired_contour - xi;
            total += (e.transpose() * problem.q * e)[(0, 0)];
            let viol = bound_violation(x, &problem.state_lower, &problem.state_upper);
            total += problem.slack_penalty * viol.norm_squared();
        }
        for u in inputs {
            let e = problem.desired_input - u;
            total += (e.transpose() * problem.r * e)[(0, 0)];
        }
        total
    }

    fn rollout<D: ShootingDynamics>(
        problem: &MpcProblem,
        dynamics: &D,
        inputs: &[Vector6<f64>],
    ) -> Result<Vec<SVector<f64, 10>>, NmpcError> {
        let mut states = Vec::with_capacity(problem.horizon_steps);
        states.push(problem.initial_state);
        for u in inputs {
            let next = dynamics.step(states.last().unwrap(), u)?;
            states.push(next);
        }
        Ok(states)
    }

    fn linearize<D: ShootingDynamics>(
        dynamics: &D,
        states: &[SVector<f64, 10>],
        inputs: &[Vector6<f64>],
    ) -> Result<Vec<StageLin>, NmpcError> {
        let mut out = Vec::with_capacity(inputs.len());
        for (k, u) in inputs.iter().enumerate() {
            let (a, b) = dynamics.jacobians(&states[k], u)?;
            let defect = dynamics.step(&states[k], u)? - states[k + 1];
            out.push(StageLin { a, b, defect });
        }
        Ok(out)
    }

    /// Dense condensing of the linearized horizon: returns the QP Hessian,
    /// gradient, and the state sensitivities used to expand the step.
    #[allow(clippy::type_complexity)]
    fn condense(
        problem: &MpcProblem,
        stages: &[StageLin],
        states: &[SVector<f64, 10>],
        inputs: &[Vector6<f64>],
    ) -> (DMatrix<f64>, DVector<f64>, Vec<Vec<SMatrix<f64, 10, 6>>>, Vec<SVector<f64, 10>>) {
        let n_u = inputs.len();
        let dim = 6 * n_u;
        let sigma = problem.slack_penalty;

        // Sensitivities: x_k (k >= 1) responds to inputs j < k plus the
        // accumulated defects.
        let mut gamma: Vec<Vec<SMatrix<f64, 10, 6>>> = Vec::with_capacity(n_u + 1);
        let mut phi: Vec<SVector<f64, 10>> = Vec::with_capacity(n_u + 1);
        gamma.push(Vec::new()); // state 0 is fixed
        phi.push(SVector::zeros());
        for k in 0..n_u {
            let mut row: Vec<SMatrix<f64, 10, 6>> = Vec::with_capacity(k + 1);
            for j in 0..k {
                row.push(stages[k].a * gamma[k][j]);
            }
            row.push(stages[k].b);
            gamma.push(row);
            phi.push(stages[k].a * phi[k] + stages[k].defect);
        }

        // Per-state Gauss-Newton weight and gradient.
        let hu = problem.r * 2.0;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut g = DVector::<f64>::zeros(dim);
        for (j, u) in inputs.iter().enumerate() {
            let gu = (u - problem.desired_input).transpose() * problem.r * 2.0;
            for a in 0..6 {
                g[6 * j + a] += gu[(0, a)];
                for b in 0..6 {
                    h[(6 * j + a, 6 * j + b)] += hu[(a, b)];
                }
            }
        }
        // Weighted sensitivities per stage to avoid recomputing products.
        for k in 1..=n_u {
            let x = &states[k];
            let xi = x.fixed_rows::<4>(6).into_owned();
            let e = problem.desired_contour - xi;
            let viol = bound_violation(x, &problem.state_lower, &problem.state_upper);

            let mut hx = SMatrix::<f64, 10, 10>::zeros();
            let qx = problem.q * 2.0;
            for a in 0..4 {
                for b in 0..4 {
                    hx[(6 + a, 6 + b)] = qx[(a, b)];
                }
            }
            let mut gx = SVector::<f64, 10>::zeros();
            let gq = problem.q * e * 2.0;
            for a in 0..4 {
                gx[6 + a] = -gq[a];
            }
            for i in 0..10 {
                if viol[i] != 0.0 {
                    hx[(i, i)] += 2.0 * sigma;
                    gx[i] += 2.0 * sigma * viol[i];
                }
            }

            // Gradient gains the defect shift: grad at delta-u = 0 accounts
            // for where the linearized state already sits.
            let shifted = gx + hx * phi[k];
            let weighted: Vec<SMatrix<f64, 10, 6>> =
                gamma[k].iter().map(|gm| hx * gm).collect();
            for j in 0..k {
                let gj = gamma[k][j].transpose() * shifted;
                for a in 0..6 {
                    g[6 * j + a] += gj[a];
                }
                for i in j..k {
                    let block = gamma[k][i].transpose() * weighted[j];
                    for a in 0..6 {
                        for b in 0..6 {
                            h[(6 * i + a, 6 * j + b)] += block[(a, b)];
                        }
                    }
                }
            }
        }
        // Mirror the lower triangle built above.
        for i in 0..dim {
            for j in (i + 1)..dim {
                h[(i, j)] = h[(j, i)];
            }
        }
        (h, g, gamma, phi)
    }

    fn input_box_deltas(
        problem: &MpcProblem,
        inputs: &[Vector6<f64>],
    ) -> (DVector<f64>, DVector<f64>) {
        let dim = 6 * inputs.len();
        let mut lo = DVector::zeros(dim);
        let mut hi = DVector::zeros(dim);
        for (j, u) in inputs.iter().enumerate() {
            for a in 0..6 {
                lo[6 * j + a] = problem.input_lower[a] - u[a];
                hi[6 * j + a] = problem.input_upper[a] - u[a];
            }
        }
        (lo, hi)
    }

    /// Projected-gradient optimality measure at the current iterate.
    fn projected_gradient(g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let step = (-g[i]).max(lo[i]).min(hi[i]);
            worst = worst.max(step.abs());
        }
        worst
    }

    /// Solve the horizon problem, optionally warm-started from the previous
    /// solution (shifted by one stage, last stage duplicated).
    pub fn solve<D: ShootingDynamics>(
        &mut self,
        problem: &MpcProblem,
        dynamics: &D,
        warm: Option<&MpcSolution>,
    ) -> Result<MpcSolution, NmpcError> {
        problem.validate()?;
        #[cfg(feature = "std")]
        let t0 = std::time::Instant::now();

        let n_u = problem.horizon_steps - 1;
        let mut inputs: Vec<Vector6<f64>> = match warm {
            Some(prev) if prev.inputs.len() == n_u => {
                let mut shifted: Vec<Vector6<f64>> = prev.inputs[1..].to_vec();
                shifted.push(*prev.inputs.last().unwrap());
                shifted.iter().map(|u| problem.clamp_input(u)).collect()
            }
            _ => alloc::vec![problem.clamp_input(&problem.desired_input); n_u],
        };
        // Shifted state guess keeps the multiple-shooting structure: defects
        // stay explicit until the final re-rollout.
        let mut states: Vec<SVector<f64, 10>> = match warm {
            Some(prev) if prev.states.len() == problem.horizon_steps => {
                let mut shifted = Vec::with_capacity(problem.horizon_steps);
                shifted.push(problem.initial_state);
                shifted.extend_from_slice(&prev.states[2..]);
                shifted.push(*prev.states.last().unwrap());
                shifted
            }
            _ => Self::rollout(problem, dynamics, &inputs)?,
        };

        let mut best_cost = Self::cost(problem, &Self::rollout(problem, dynamics, &inputs)?, &inputs);
        let mut iterations = 0usize;

        for _iter in 0..problem.max_sqp_iterations {
            let stages = Self::linearize(dynamics, &states, &inputs)?;
            let (h, g, gamma, phi) = Self::condense(problem, &stages, &states, &inputs);
            let (lo, hi) = Self::input_box_deltas(problem, &inputs);
            if Self::projected_gradient(&g, &lo, &hi) <= problem.kkt_tolerance {
                break;
            }
            iterations += 1;

            // Levenberg-safeguarded step: retry with a shifted Hessian when
            // the QP factorization fails or the true cost increases.
            let mut shift = 0.0f64;
            let mut accepted = false;
            for _attempt in 0..4 {
                let h_try = if shift > 0.0 {
                    let mut hs = h.clone();
                    for i in 0..hs.nrows() {
                        hs[(i, i)] += shift;
                    }
                    hs
                } else {
                    h.clone()
                };
                let delta = match solve_box_qp(&h_try, &g, &lo, &hi) {
                    Ok(d) => d,
                    Err(QpError::NotPositiveDefinite) => {
                        shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                // Candidate iterate.
                let mut new_inputs = inputs.clone();
                for (j, u) in new_inputs.iter_mut().enumerate() {
                    for a in 0..6 {
                        u[a] += delta[6 * j + a];
                    }
                    *u = problem.clamp_input(u);
                }
                let mut new_states = states.clone();
                for k in 1..problem.horizon_steps {
                    let mut dx = phi[k];
                    for (j, gm) in gamma[k].iter().enumerate() {
                        let du = Vector6::from_fn(|a, _| delta[6 * j + a]);
                        dx += gm * du;
                    }
                    new_states[k] = states[k] + dx;
                }
                let candidate_cost = Self::cost(
                    problem,
                    &Self::rollout(problem, dynamics, &new_inputs)?,
                    &new_inputs,
                );
                if candidate_cost <= best_cost + 1e-9 * (1.0 + best_cost.abs()) {
                    inputs = new_inputs;
                    states = new_states;
                    best_cost = candidate_cost;
                    accepted = true;
                    break;
                }
                shift = if shift == 0.0 { 1e-8 } else { shift * 10.0 };
            }
            if !accepted {
                break;
            }
        }

        // The returned trajectory satisfies the exact discrete dynamics.
        let states = Self::rollout(problem, dynamics, &inputs)?;
        let stages = Self::linearize(dynamics, &states, &inputs)?;
        let (_, g, _, _) = Self::condense(problem, &stages, &states, &inputs);
        let (lo, hi) = Self::input_box_deltas(problem, &inputs);
        let kkt = Self::projected_gradient(&g, &lo, &hi);

        let mut slack_max = 0.0f64;
        for x in &states {
            let viol = bound_violation(x, &problem.state_lower, &problem.state_upper);
            slack_max = slack_max.max(viol.abs().max());
        }
        let mut active_bounds = 0usize;
        for u in &inputs {
            for a in 0..6 {
                if (u[a] - problem.input_lower[a]).abs() <= 1e-12
                    || (u[a] - problem.input_upper[a]).abs() <= 1e-12
                {
                    active_bounds += 1;
                }
            }
        }
        let cost = Self::cost(problem, &states, &inputs);

        #[cfg(feature = "std")]
        let solve_time_ms = t0.elapsed().as_secs_f64() * 1e3;
        #[cfg(not(feature = "std"))]
        let solve_time_ms = 0.0;

        Ok(MpcSolution {
            inputs,
            states,
            kkt_residual: kkt,
            sqp_iterations: iterations,
            solve_time_ms,
            slack_max,
            active_bounds,
            cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::TactileState;
    use crate::geometry::PointFeature;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    fn dynamics() -> TactileDynamics {
        TactileDynamics {
            intrinsics: intr(),
            dt: 0.02,
        }
    }

    /// Inward-gauged state at the reference (the harness convention).
    fn reference_state() -> SVector<f64, 10> {
        TactileState::from_points(
            PointFeature::new(110.0, 120.0, 0.020),
            PointFeature::new(210.0, 120.0, 0.020),
            &intr(),
        )
        .unwrap()
        .as_vector()
    }

    fn offset_state() -> SVector<f64, 10> {
        TactileState::from_points(
            PointFeature::new(112.0, 101.0, 0.0197),
            PointFeature::new(213.0, 135.0, 0.0201),
            &intr(),
        )
        .unwrap()
        .as_vector()
    }

    fn reference_contour() -> ContourFeatures {
        ContourFeatures {
            offset: 0.0,
            angle: 0.0,
            pitch: 0.0,
            depth: 0.020,
        }
    }

    fn forward_input() -> Twist {
        Twist::from_vector(&Vector6::new(0.005, 0.0, 0.0, 0.0, 0.0, 0.0))
    }

    /// Linear test model: exact Gauss-Newton territory.
    struct LinearDynamics {
        a: SMatrix<f64, 10, 10>,
        b: SMatrix<f64, 10, 6>,
    }

    impl ShootingDynamics for LinearDynamics {
        fn step(
            &self,
            x: &SVector<f64, 10>,
            u: &Vector6<f64>,
        ) -> Result<SVector<f64, 10>, GeometryError> {
            Ok(self.a * x + self.b * u)
        }
        fn jacobians(
            &self,
            x: &SVector<f64, 10>,
            u: &Vector6<f64>,
        ) -> Result<(SMatrix<f64, 10, 10>, SMatrix<f64, 10, 6>), GeometryError> {
            let _ = (x, u);
            Ok((self.a, self.b))
        }
    }

    fn random_linear(rng: &mut StdRng) -> LinearDynamics {
        // Mildly contractive A keeps the horizon well conditioned.
        let a = SMatrix::<f64, 10, 10>::identity()
            + SMatrix::<f64, 10, 10>::from_fn(|_, _| rng.random_range(-0.02..0.02));
        let b = SMatrix::<f64, 10, 6>::from_fn(|_, _| rng.random_range(-0.5..0.5));
        LinearDynamics { a, b }
    }

    fn unconstrained_problem(n: usize, x0: SVector<f64, 10>) -> MpcProblem {
        let inf = f64::INFINITY;
        MpcProblem {
            horizon_steps: n,
            dt: 0.02,
            initial_state: x0,
            desired_contour: Vector4::new(0.0, 0.0, 0.0, 0.020),
            desired_input: Vector6::zeros(),
            // Unit-scale weights keep the condensed Hessian well
            // conditioned for the exactness assertions below.
            q: SMatrix::identity(),
            r: SMatrix::<f64, 6, 6>::identity() * 0.1,
            state_lower: SVector::from_element(-inf),
            state_upper: SVector::from_element(inf),
            input_lower: Vector6::from_element(-inf),
            input_upper: Vector6::from_element(inf),
            slack_penalty: 0.0,
            max_sqp_iterations: 10,
            kkt_tolerance: 1e-10,
        }
    }

    #[test]
    fn stationary_reference_returns_the_desired_input() {
        let problem =
            MpcProblem::with_defaults(reference_state(), reference_contour(), forward_input());
        let mut solver = MpcSolver::new();
        let sol = solver.solve(&problem, &dynamics(), None).unwrap();
        let u1 = sol.command().to_vector();
        assert!(
            (u1 - forward_input().to_vector()).amax() < 1e-9,
            "command {u1:?}"
        );
        assert!(sol.cost < 1e-10, "cost {}", sol.cost);
        assert_eq!(sol.slack_max, 0.0);
    }

    #[test]
    fn zero_weights_accept_the_desired_input() {
        let mut problem =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        problem.q = SMatrix::zeros();
        problem.r = SMatrix::zeros();
        problem.slack_penalty = 0.0;
        let mut solver = MpcSolver::new();
        let sol = solver.solve(&problem, &dynamics(), None).unwrap();
        for u in &sol.inputs {
            assert!((u - forward_input().to_vector()).amax() < 1e-15);
        }
        assert_eq!(sol.sqp_iterations, 0);
    }

    #[test]
    fn two_stage_gradient_matches_hand_derivation() {
        // For N = 2 the condensed gradient at u = 0 must reduce to
        // -2 B' S' Q (xi_d - S x_2) + 2 R (u - u_d).
        let problem = {
            let mut p =
                MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
            p.horizon_steps = 2;
            p.slack_penalty = 0.0;
            p
        };
        let dynamics = dynamics();
        let inputs = alloc::vec![Vector6::zeros()];
        let states = MpcSolver::rollout(&problem, &dynamics, &inputs).unwrap();
        let stages = MpcSolver::linearize(&dynamics, &states, &inputs).unwrap();
        let (_, g, _, _) = MpcSolver::condense(&problem, &stages, &states, &inputs);

        // Independent input sensitivity via central differences of the step.
        let mut b_fd = SMatrix::<f64, 10, 6>::zeros();
        let h = 1e-6;
        for j in 0..6 {
            let mut up = Vector6::zeros();
            let mut um = Vector6::zeros();
            up[j] += h;
            um[j] -= h;
            let fp = dynamics.step(&problem.initial_state, &up).unwrap();
            let fm = dynamics.step(&problem.initial_state, &um).unwrap();
            let col = (fp - fm) / (2.0 * h);
            for i in 0..10 {
                b_fd[(i, j)] = col[i];
            }
        }
        let xi = states[1].fixed_rows::<4>(6).into_owned();
        let e = problem.desired_contour - xi;
        let mut s_sel = SMatrix::<f64, 4, 10>::zeros();
        for i in 0..4 {
            s_sel[(i, 6 + i)] = 1.0;
        }
        let hand = -2.0 * b_fd.transpose() * s_sel.transpose() * problem.q * e
            + 2.0 * problem.r * (Vector6::zeros() - problem.desired_input);
        for j in 0..6 {
            let scale = hand.amax().max(1e-6);
            assert!(
                (g[j] - hand[j]).abs() / scale < 1e-5,
                "gradient component {j}: condensed {} hand {}",
                g[j],
                hand[j]
            );
        }
    }

    #[test]
    fn linear_quadratic_problems_converge_in_one_step() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..5 {
            let model = random_linear(&mut rng);
            let mut x0 = reference_state();
            for i in 0..10 {
                x0[i] += rng.random_range(-0.5..0.5);
            }
            let problem = unconstrained_problem(6, x0);
            let mut solver = MpcSolver::new();
            let sol = solver.solve(&problem, &model, None).unwrap();
            assert_eq!(sol.sqp_iterations, 1, "Gauss-Newton is exact here");
            assert!(sol.kkt_residual <= problem.kkt_tolerance * 10.0);
        }
    }

    #[test]
    fn warm_start_from_the_optimum_takes_no_step() {
        let problem =
            MpcProblem::with_defaults(reference_state(), reference_contour(), forward_input());
        let mut solver = MpcSolver::new();
        let first = solver.solve(&problem, &dynamics(), None).unwrap();
        // Shift-invariant problem: the shifted optimum is still optimal.
        let again = solver.solve(&problem, &dynamics(), Some(&first)).unwrap();
        assert_eq!(again.sqp_iterations, 0);
        for (a, b) in first.inputs.iter().zip(again.inputs.iter()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn condensed_solution_matches_sparse_kkt_oracle() {
        // Brute-force equivalence on small linear-quadratic instances: the
        // condensed box-QP against the full sparse equality-KKT system.
        let mut rng = StdRng::seed_from_u64(99);
        for trial in 0..10 {
            let n = rng.random_range(3..=5usize);
            let model = random_linear(&mut rng);
            let mut x0 = reference_state();
            for i in 0..10 {
                x0[i] += rng.random_range(-0.2..0.2);
            }
            let mut problem = unconstrained_problem(n, x0);
            problem.desired_input = Vector6::from_fn(|i, _| 0.01 * (i as f64 - 2.5));
            let mut solver = MpcSolver::new();
            let sol = solver.solve(&problem, &model, None).unwrap();

            // Sparse oracle: variables [x_2..x_N, u_1..u_{N-1}].
            let n_x = (n - 1) * 10;
            let n_uv = (n - 1) * 6;
            let dim = n_x + n_uv;
            let n_eq = (n - 1) * 10;
            let mut big_h = DMatrix::<f64>::zeros(dim, dim);
            let mut big_g = DVector::<f64>::zeros(dim);
            for k in 0..n - 1 {
                // State cost on x_{k+2}... indexing: block k holds x_{k+2}?
                // Variables x_2..x_N are blocks 0..n-2; each carries a Q
                // cost on its contour rows.
                for a in 0..4 {
                    for b in 0..4 {
                        big_h[(10 * k + 6 + a, 10 * k + 6 + b)] += 2.0 * problem.q[(a, b)];
                    }
                    big_g[10 * k + 6 + a] += -2.0
                        * (problem.q
                            * problem.desired_contour)[a];
                }
                for a in 0..6 {
                    for b in 0..6 {
                        big_h[(n_x + 6 * k + a, n_x + 6 * k + b)] += 2.0 * problem.r[(a, b)];
                    }
                    big_g[n_x + 6 * k + a] += -2.0 * (problem.r * problem.desired_input)[a];
                }
            }
            // Equality constraints: x_{k+1} = A x_k + B u_k.
            let mut big_a = DMatrix::<f64>::zeros(n_eq, dim);
            let mut big_b = DVector::<f64>::zeros(n_eq);
            for k in 0..n - 1 {
                for i in 0..10 {
                    big_a[(10 * k + i, 10 * k + i)] = 1.0;
                }
                if k == 0 {
                    let ax0 = model.a * x0;
                    for i in 0..10 {
                        big_b[i] = ax0[i];
                    }
                } else {
                    for i in 0..10 {
                        for j in 0..10 {
                            big_a[(10 * k + i, 10 * (k - 1) + j)] = -model.a[(i, j)];
                        }
                    }
                }
                for i in 0..10 {
                    for j in 0..6 {
                        big_a[(10 * k + i, n_x + 6 * k + j)] = -model.b[(i, j)];
                    }
                }
            }
            // KKT system [H A'; A 0] [z; lambda] = [-g; b].
            let kdim = dim + n_eq;
            let mut kkt = DMatrix::<f64>::zeros(kdim, kdim);
            kkt.view_mut((0, 0), (dim, dim)).copy_from(&big_h);
            kkt.view_mut((0, dim), (dim, n_eq))
                .copy_from(&big_a.transpose());
            kkt.view_mut((dim, 0), (n_eq, dim)).copy_from(&big_a);
            let mut rhs = DVector::<f64>::zeros(kdim);
            rhs.rows_mut(0, dim).copy_from(&(-&big_g));
            rhs.rows_mut(dim, n_eq).copy_from(&big_b);
            let zsol = kkt.lu().solve(&rhs).expect("sparse KKT solvable");

            for k in 0..n - 1 {
                for a in 0..6 {
                    let sparse = zsol[n_x + 6 * k + a];
                    let dense = sol.inputs[k][a];
                    assert!(
                        (sparse - dense).abs() < 1e-8 * (1.0 + sparse.abs()),
                        "trial {trial} stage {k} comp {a}: {dense} vs {sparse}"
                    );
                }
            }
        }
    }

    #[test]
    fn condensed_gradient_matches_cost_differences() {
        let mut problem =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        problem.horizon_steps = 8;
        let dynamics = dynamics();
        // A non-optimal, bound-free iterate away from slack kinks.
        let inputs: Vec<Vector6<f64>> = (0..7)
            .map(|k| Vector6::from_fn(|i, _| 0.002 * ((i + k) % 3) as f64))
            .collect();
        let states = MpcSolver::rollout(&problem, &dynamics, &inputs).unwrap();
        let stages = MpcSolver::linearize(&dynamics, &states, &inputs).unwrap();
        let (_, g, _, _) = MpcSolver::condense(&problem, &stages, &states, &inputs);
        let h = 1e-7;
        for j in 0..g.len() {
            let (stage, comp) = (j / 6, j % 6);
            let mut up = inputs.clone();
            let mut um = inputs.clone();
            up[stage][comp] += h;
            um[stage][comp] -= h;
            let cp = MpcSolver::cost(
                &problem,
                &MpcSolver::rollout(&problem, &dynamics, &up).unwrap(),
                &up,
            );
            let cm = MpcSolver::cost(
                &problem,
                &MpcSolver::rollout(&problem, &dynamics, &um).unwrap(),
                &um,
            );
            let fd = (cp - cm) / (2.0 * h);
            let scale = fd.abs().max(g.amax()).max(1e-3);
            assert!(
                (g[j] - fd).abs() / scale < 1e-5,
                "component {j}: condensed {} fd {}",
                g[j],
                fd
            );
        }
    }

    #[test]
    fn depth_bound_activity_brakes_the_descent() {
        // Contact depth exactly at the lower band edge with a reference
        // input that keeps pressing in: the returned command must not let
        // the predicted depth keep falling.
        let x0 = TactileState::from_points(
            PointFeature::new(110.0, 120.0, 0.0182),
            PointFeature::new(210.0, 120.0, 0.0182),
            &intr(),
        )
        .unwrap()
        .as_vector();
        let press = Twist::from_vector(&Vector6::new(0.005, 0.0, 0.002, 0.0, 0.0, 0.0));
        let problem = MpcProblem::with_defaults(x0, reference_contour(), press);
        let mut solver = MpcSolver::new();
        let sol = solver.solve(&problem, &dynamics(), None).unwrap();
        // Predicted depth along the horizon stays at the band edge.
        for (k, x) in sol.states.iter().enumerate() {
            assert!(
                x[9] >= 0.0182 - 1e-5,
                "stage {k}: depth {} fell out of band",
                x[9]
            );
        }
        // And the immediate depth rate is non-negative (within solver
        // tolerance of the soft constraint).
        let rate = crate::features::contour_interaction_matrix(
            &PointFeature::new(x0[0], x0[1], x0[2]),
            &PointFeature::new(x0[3], x0[4], x0[5]),
            &intr(),
        )
        .unwrap()
            * sol.inputs[0];
        assert!(rate[3] >= -1e-5, "depth rate {}", rate[3]);
        assert!(sol.slack_max < 1e-4, "slack {}", sol.slack_max);
    }

    #[test]
    fn input_bounds_are_exact() {
        // An aggressive reference beyond the box must come back clipped.
        let mut problem =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        problem.desired_input = Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 2.0);
        problem.q = SMatrix::zeros();
        problem.slack_penalty = 0.0;
        let mut solver = MpcSolver::new();
        let sol = solver.solve(&problem, &dynamics(), None).unwrap();
        for u in &sol.inputs {
            for a in 0..6 {
                assert!(u[a] >= problem.input_lower[a] - 0.0);
                assert!(u[a] <= problem.input_upper[a] + 0.0);
            }
        }
        assert!(sol.active_bounds >= 2 * sol.inputs.len());
    }

    #[test]
    fn returned_states_satisfy_the_discrete_dynamics() {
        let problem =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        let mut solver = MpcSolver::new();
        let dyn_ = dynamics();
        let sol = solver.solve(&problem, &dyn_, None).unwrap();
        for k in 0..sol.inputs.len() {
            let step = dyn_.step(&sol.states[k], &sol.inputs[k]).unwrap();
            let defect = (step - sol.states[k + 1]).amax();
            assert!(defect < 1e-8, "stage {k}: defect {defect}");
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let problem =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        let mut solver = MpcSolver::new();
        let a = solver.solve(&problem, &dynamics(), None).unwrap();
        let b = solver.solve(&problem, &dynamics(), None).unwrap();
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.states, b.states);
        assert_eq!(a.kkt_residual, b.kkt_residual);
        // And warm-started re-solves of the same problem are stable too.
        let c = solver.solve(&problem, &dynamics(), Some(&a)).unwrap();
        let d = solver.solve(&problem, &dynamics(), Some(&a)).unwrap();
        assert_eq!(c.inputs, d.inputs);
    }

    #[test]
    fn warm_start_does_not_hurt_the_initial_cost_while_tracking() {
        // Model-propagated receding-horizon run: the shifted warm start's
        // rollout cost never exceeds the cold start's.
        let problem0 =
            MpcProblem::with_defaults(offset_state(), reference_contour(), forward_input());
        let dyn_ = dynamics();
        let mut solver = MpcSolver::new();
        let mut x = offset_state();
        let mut prev: Option<MpcSolution> = None;
        for _ in 0..10 {
            let mut problem = problem0.clone();
            problem.initial_state = x;
            if let Some(p) = &prev {
                let mut shifted: Vec<Vector6<f64>> = p.inputs[1..].to_vec();
                shifted.push(*p.inputs.last().unwrap());
                let warm_cost = MpcSolver::cost(
                    &problem,
                    &MpcSolver::rollout(&problem, &dyn_, &shifted).unwrap(),
                    &shifted,
                );
                let cold_inputs =
                    alloc::vec![problem.clamp_input(&problem.desired_input); shifted.len()];
                let cold_cost = MpcSolver::cost(
                    &problem,
                    &MpcSolver::rollout(&problem, &dyn_, &cold_inputs).unwrap(),
                    &cold_inputs,
                );
                assert!(
                    warm_cost <= cold_cost * (1.0 + 1e-9) + 1e-12,
                    "warm {warm_cost} vs cold {cold_cost}"
                );
            }
            let sol = solver.solve(&problem, &dyn_, prev.as_ref()).unwrap();
            x = dyn_.step(&x, &sol.inputs[0]).unwrap();
            prev = Some(sol);
        }
    }
}
