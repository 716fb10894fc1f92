use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::tree::{PlanTree, VertexId};
use crate::cbf::ObstacleSet;
use crate::geometry::{wrap_angle, ControlInput, GoalRegion, RobotState};
use crate::params::PlannerParams;
use crate::steer::state_barrier;

/// Uniform draw over all vertices. Panics on an empty tree.
pub fn vertex_sample<R: Rng + ?Sized>(tree: &PlanTree, rng: &mut R) -> VertexId {
    assert!(!tree.is_empty(), "vertex_sample on an empty tree");
    VertexId(rng.random_range(0..tree.len()))
}

/// Bearing from `state` to the goal centre.
pub fn goal_bearing(state: &RobotState, goal: &GoalRegion) -> f64 {
    let d = goal.center() - state.position();
    d.y.atan2(d.x)
}

/// Keeps the position of `state` and draws the heading around the goal
/// bearing with standard deviation `sigma_theta`.
pub fn state_sample<R: Rng + ?Sized>(state: &RobotState, goal: &GoalRegion, sigma_theta: f64, rng: &mut R) -> RobotState {
    let theta_g = goal_bearing(state, goal);
    if sigma_theta <= 0.0 {
        return state.with_heading(theta_g);
    }
    let normal = Normal::new(0.0, sigma_theta).expect("finite sigma");
    state.with_heading(wrap_angle(theta_g + normal.sample(rng)))
}

/// `v_ref ~ U[v_sample_min, v_max]`, `omega_ref = a_omega * wrap(theta - theta_g)`
/// clamped to the turn-rate limit.
pub fn ref_sample<R: Rng + ?Sized>(x_rand: &RobotState, goal: &GoalRegion, params: &PlannerParams, rng: &mut R) -> ControlInput {
    let v = if params.v_sample_min < params.v_max {
        Uniform::new_inclusive(params.v_sample_min, params.v_max)
            .expect("valid range")
            .sample(rng)
    } else {
        params.v_max
    };
    let theta_g = goal_bearing(x_rand, goal);
    let omega = (params.a_omega * wrap_angle(x_rand.theta - theta_g)).clamp(-params.omega_max, params.omega_max);
    ControlInput::new(v, omega)
}

/// `z = a1 * dist(x, X_g) / (a2 * h)`, with `h` the smallest barrier value at
/// `t` floored at `h_floor`. With nothing in range `h` is `cutoff^2`.
pub fn vertex_cost(state: &RobotState, t: f64, goal: &GoalRegion, obstacles: &ObstacleSet, params: &PlannerParams) -> f64 {
    let h = state_barrier(*state, t, obstacles, params).unwrap_or(params.cutoff * params.cutoff);
    cost_from_barrier(state, goal, h, params)
}

pub(crate) fn cost_from_barrier(state: &RobotState, goal: &GoalRegion, h: f64, params: &PlannerParams) -> f64 {
    let dist = goal.distance(state.position());
    if dist == 0.0 {
        return 0.0;
    }
    params.a1 * dist / (params.a2 * h.max(params.h_floor))
}
