//! Safe steering: a chain of per-step QPs that produces one tree edge.
//!
//! Step `i` (1-based) takes the state at `t_v + (i-1) T_s` to `t_v + i T_s`.
//! Its rows use the obstacle snapshot at the time the step lands, so every
//! produced state is checked against the prediction for its own timestamp.

use crate::cbf::{active_constraints, ObstacleSet};
use crate::geometry::{integrate_unicycle, to_transformed, ControlInput, RobotState};
use crate::params::PlannerParams;
use crate::qp::{solve_qp, QpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SteerResult {
    pub controls: Vec<ControlInput>,
    /// `states[0]` is the start; `states[i + 1]` follows from `controls[i]`.
    pub states: Vec<RobotState>,
    pub end_state: RobotState,
    pub end_time: f64,
    pub feasible: bool,
    /// Smallest barrier value among the produced states.
    pub min_h: f64,
}

impl SteerResult {
    fn rejected(start: RobotState, start_time: f64) -> Self {
        Self {
            controls: Vec::new(),
            states: vec![start],
            end_state: start,
            end_time: start_time,
            feasible: false,
            min_h: f64::NEG_INFINITY,
        }
    }
}

/// Smallest barrier value at `state` among obstacles within the cutoff at
/// `plan_time`; `None` when nothing is in range.
pub fn state_barrier(state: RobotState, plan_time: f64, obstacles: &ObstacleSet, params: &PlannerParams) -> Option<f64> {
    let t = to_transformed(state, params.ell).expect("ell validated positive");
    obstacles.min_barrier(&t, plan_time, params.cutoff, params.robot_radius)
}

fn state_is_safe(state: RobotState, plan_time: f64, obstacles: &ObstacleSet, params: &PlannerParams) -> bool {
    state_barrier(state, plan_time, obstacles, params).is_none_or(|h| h >= 0.0)
}

pub fn steer(
    start: RobotState,
    start_time: f64,
    u_ref: ControlInput,
    n_steps: usize,
    obstacles: &ObstacleSet,
    params: &PlannerParams,
) -> SteerResult {
    if n_steps == 0 || !state_is_safe(start, start_time, obstacles, params) {
        return SteerResult::rejected(start, start_time);
    }
    let beta = params.effective_beta();
    let bounds = params.control_box();
    let mut controls = Vec::with_capacity(n_steps);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(start);
    let mut state = start;
    let mut min_h = f64::INFINITY;

    for i in 1..=n_steps {
        let t_land = start_time + i as f64 * params.ts;
        let tstate = to_transformed(state, params.ell).expect("ell validated positive");
        let rows = active_constraints(&tstate, obstacles, t_land, params.cutoff, beta, params.robot_radius);
        let problem = QpProblem {
            u_ref,
            weights: params.qp_weights,
            rows,
            bounds,
        };
        let Ok(solution) = solve_qp(&problem) else {
            return SteerResult::rejected(start, start_time);
        };
        let next = integrate_unicycle(state, solution.control, params.ts);
        match state_barrier(next, t_land, obstacles, params) {
            Some(h) if h < 0.0 => return SteerResult::rejected(start, start_time),
            Some(h) => min_h = min_h.min(h),
            None => {}
        }
        controls.push(solution.control);
        states.push(next);
        state = next;
    }

    SteerResult {
        controls,
        states,
        end_state: state,
        end_time: start_time + n_steps as f64 * params.ts,
        feasible: true,
        min_h,
    }
}

/// Re-checks a stored segment against a fresh snapshot: every control must
/// satisfy its step's rows and every landed state must have `h >= 0`.
pub fn segment_still_safe(
    start_time: f64,
    controls: &[ControlInput],
    states: &[RobotState],
    obstacles: &ObstacleSet,
    params: &PlannerParams,
) -> bool {
    debug_assert_eq!(states.len(), controls.len() + 1);
    let beta = params.effective_beta();
    for (i, (u, pair)) in controls.iter().zip(states.windows(2)).enumerate() {
        let t_land = start_time + (i + 1) as f64 * params.ts;
        let tstate = to_transformed(pair[0], params.ell).expect("ell validated positive");
        let rows_ok = active_constraints(&tstate, obstacles, t_land, params.cutoff, beta, params.robot_radius)
            .iter()
            .all(|r| r.slack(u.v, u.omega) >= -1e-9 * (1.0 + r.b.abs()));
        if !rows_ok || !state_is_safe(pair[1], t_land, obstacles, params) {
            return false;
        }
    }
    true
}
