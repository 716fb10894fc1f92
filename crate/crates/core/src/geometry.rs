//! Unicycle state and control types, Euler integration and the near-identity
//! transform that moves the controlled point ahead of the wheel axle.

use std::f64::consts::PI;

use nalgebra::{Matrix3x2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs
    if wrapped >= PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// Shortest signed angular distance `a - b`, in `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Planar pose of the unicycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn with_heading(&self, theta: f64) -> Self {
        Self::new(self.x, self.y, theta)
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub v: f64,
    pub omega: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn as_vector(&self) -> Vec2 {
        Vec2::new(self.v, self.omega)
    }

    pub fn within(&self, v_max: f64, omega_max: f64) -> bool {
        self.v.abs() <= v_max && self.omega.abs() <= omega_max
    }
}

/// Pose of the point `ell` ahead of the axle along the heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedState {
    pub x_t: f64,
    pub y_t: f64,
    pub theta: f64,
    pub ell: f64,
}

impl TransformedState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x_t, self.y_t)
    }
}

/// Disc-shaped goal set in the plane; heading is free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub center: [f64; 2],
    pub radius: f64,
}

impl GoalRegion {
    pub fn new(center: Vec2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::NonPositiveGoalRadius(radius));
        }
        Ok(Self {
            center: [center.x, center.y],
            radius,
        })
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    /// Planar distance from `p` to the goal disc (zero inside it).
    pub fn distance(&self, p: Vec2) -> f64 {
        ((p - self.center()).norm() - self.radius).max(0.0)
    }
}

/// One explicit Euler step of the unicycle kinematics.
pub fn integrate_unicycle(state: RobotState, u: ControlInput, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let (s, c) = state.theta.sin_cos();
    RobotState::new(
        state.x + dt * u.v * c,
        state.y + dt * u.v * s,
        state.theta + dt * u.omega,
    )
}

pub fn to_transformed(state: RobotState, ell: f64) -> Result<TransformedState, GeometryError> {
    if !(ell > 0.0) {
        return Err(GeometryError::NonPositiveOffset(ell));
    }
    let (s, c) = state.theta.sin_cos();
    Ok(TransformedState {
        x_t: state.x + ell * c,
        y_t: state.y + ell * s,
        theta: state.theta,
        ell,
    })
}

/// Input matrix of the transformed system; the upper 2x2 block has
/// determinant `ell` and is therefore always invertible.
pub fn transformed_input_matrix(state: &TransformedState) -> Matrix3x2<f64> {
    let (s, c) = state.theta.sin_cos();
    let ell = state.ell;
    Matrix3x2::new(c, -ell * s, s, ell * c, 0.0, 1.0)
}

pub fn in_goal(state: &RobotState, goal: &GoalRegion) -> bool {
    (state.position() - goal.center()).norm_squared() <= goal.radius * goal.radius
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn assert_state(s: RobotState, x: f64, y: f64, theta: f64) {
        assert!(close(s.x, x, 1e-12), "x {} vs {}", s.x, x);
        assert!(close(s.y, y, 1e-12), "y {} vs {}", s.y, y);
        assert!(close(angle_diff(s.theta, theta), 0.0, 1e-12), "theta {} vs {}", s.theta, theta);
    }

    #[test]
    fn euler_steps() {
        let s = integrate_unicycle(RobotState::new(0.0, 0.0, 0.0), ControlInput::new(0.33, 0.0), 0.1);
        assert_state(s, 0.033, 0.0, 0.0);
        let s = integrate_unicycle(RobotState::new(0.0, 0.0, 0.0), ControlInput::new(0.0, 0.3), 0.1);
        assert_state(s, 0.0, 0.0, 0.03);
        let s = integrate_unicycle(RobotState::new(1.0, 2.0, PI / 2.0), ControlInput::new(1.0, 0.0), 0.5);
        assert_state(s, 1.0, 2.5, PI / 2.0);
    }

    #[test]
    fn transform_examples() {
        let t = to_transformed(RobotState::new(0.0, 0.0, 0.0), 0.1).unwrap();
        assert!(close(t.x_t, 0.1, 1e-12) && close(t.y_t, 0.0, 1e-12));
        let t = to_transformed(RobotState::new(0.0, 0.0, PI / 2.0), 0.1).unwrap();
        assert!(close(t.x_t, 0.0, 1e-12) && close(t.y_t, 0.1, 1e-12));
        assert!(close(t.theta, PI / 2.0, 1e-15));
        // pi wraps to -pi; cos is unchanged
        let t = to_transformed(RobotState::new(3.0, -1.0, PI), 0.1).unwrap();
        assert!(close(t.x_t, 2.9, 1e-12) && close(t.y_t, -1.0, 1e-12));
        assert!(to_transformed(RobotState::new(0.0, 0.0, 0.0), 0.0).is_err());
        assert!(to_transformed(RobotState::new(0.0, 0.0, 0.0), -0.1).is_err());
    }

    #[test]
    fn input_matrix_examples() {
        let t = |theta: f64| TransformedState { x_t: 0.0, y_t: 0.0, theta, ell: 0.1 };
        let g = transformed_input_matrix(&t(0.0));
        let expected = Matrix3x2::new(1.0, 0.0, 0.0, 0.1, 0.0, 1.0);
        assert!((g - expected).abs().max() < 1e-15);
        let g = transformed_input_matrix(&t(PI / 2.0));
        let expected = Matrix3x2::new(0.0, -0.1, 1.0, 0.0, 0.0, 1.0);
        assert!((g - expected).abs().max() < 1e-15);
        let g = transformed_input_matrix(&t(0.7));
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        assert!(close(det, 0.1, 1e-15));
    }

    #[test]
    fn goal_membership() {
        let goal = GoalRegion::new(Vec2::new(0.0, 5.0), 0.3).unwrap();
        assert!(in_goal(&RobotState::new(0.0, 5.0, 1.3), &goal));
        assert!(!in_goal(&RobotState::new(0.0, 4.69, 0.0), &goal));
        assert!(in_goal(&RobotState::new(0.3, 5.0, 0.0), &goal));
        assert!(GoalRegion::new(Vec2::zeros(), 0.0).is_err());
    }

    #[test]
    fn wrap_edges() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!(wrap_angle(-1e-300) < PI);
        assert!(close(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, 1e-12));
        assert!(close(angle_diff(-3.0, 3.0), 2.0 * PI - 6.0, 1e-12));
    }

    proptest! {
        #[test]
        fn heading_stays_normalized(
            theta in -10.0f64..10.0,
            steps in proptest::collection::vec((-1.0f64..1.0, -5.0f64..5.0), 1..40),
        ) {
            let mut s = RobotState::new(0.0, 0.0, theta);
            for (v, w) in steps {
                let next = integrate_unicycle(s, ControlInput::new(v, w), 0.1);
                let moved = (next.position() - s.position()).norm();
                prop_assert!(moved <= 0.1 * v.abs() + 1e-12);
                prop_assert!((angle_diff(next.theta, s.theta).abs() - (0.1 * w).abs()).abs() < 1e-9
                    || (0.1 * w).abs() >= PI);
                prop_assert!(next.theta >= -PI && next.theta < PI);
                s = next;
            }
        }

        #[test]
        fn transform_offset_is_exact(x in -50.0f64..50.0, y in -50.0f64..50.0, th in -4.0f64..4.0, ell in 0.01f64..1.0) {
            let s = RobotState::new(x, y, th);
            let t = to_transformed(s, ell).unwrap();
            prop_assert!(((t.position() - s.position()).norm() - ell).abs() < 1e-12);
        }

        #[test]
        fn goal_ignores_heading(x in -1.0f64..1.0, y in 4.0f64..6.0, a in -4.0f64..4.0, b in -4.0f64..4.0) {
            let goal = GoalRegion::new(Vec2::new(0.0, 5.0), 0.3).unwrap();
            prop_assert_eq!(in_goal(&RobotState::new(x, y, a), &goal), in_goal(&RobotState::new(x, y, b), &goal));
        }
    }
}
