//! One Euler step from just outside a wall, driving straight at it.

use cbfrrt::cbf::{barrier_value_halfplane, constraint_row_halfplane, HalfPlaneObstacle, ObstacleSource};
use cbfrrt::geometry::{integrate_unicycle, to_transformed, ControlInput, RobotState, Vec2};
use cbfrrt::params::PlannerParams;
use cbfrrt::qp::{solve_qp, QpProblem};

fn step_toward_wall(params: &PlannerParams) -> (f64, f64) {
    let wall = HalfPlaneObstacle::new(Vec2::new(1.0, 0.0), 0.0).unwrap();
    let clearance = params.ell + params.robot_radius;
    // facing -x, the offset point sits ell closer to the wall than the body
    let state = RobotState::new(clearance + 0.01 + params.ell, 0.0, std::f64::consts::PI);
    let t = to_transformed(state, params.ell).unwrap();
    let h = barrier_value_halfplane(&t, &wall, params.robot_radius);
    let row = constraint_row_halfplane(&t, &wall, params.effective_beta(), params.robot_radius, ObstacleSource::HalfPlane(0));
    let sol = solve_qp(&QpProblem {
        u_ref: ControlInput::new(params.v_max, 0.0),
        weights: params.qp_weights,
        rows: vec![row],
        bounds: params.control_box(),
    })
    .unwrap();
    let next = integrate_unicycle(state, sol.control, params.ts);
    let h_next = barrier_value_halfplane(&to_transformed(next, params.ell).unwrap(), &wall, params.robot_radius);
    (h, h_next)
}

#[test]
fn raw_rate_overshoots_the_wall() {
    let params = PlannerParams {
        sampled_data_guard: false,
        ..PlannerParams::default()
    };
    assert_eq!(params.effective_beta(), 100.0);
    let (h, h_next) = step_toward_wall(&params);
    assert!((h - 0.01).abs() < 1e-12);
    assert!(h_next < -1e-3, "h' = {h_next}");
}

#[test]
fn guarded_rate_keeps_half_the_margin() {
    let params = PlannerParams::default();
    let (h, h_next) = step_toward_wall(&params);
    assert!((h - 0.01).abs() < 1e-12);
    assert!(h_next >= 0.5 * h - 1e-12, "h' = {h_next}");
}
