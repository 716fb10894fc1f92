//! Obstacles, barrier values and the linear CBF rows fed to the steering QP.
//!
//! Every barrier is evaluated on the transformed state, so both inputs of the
//! unicycle show up in `L_g h`. The system has no drift, so `L_f h = 0` and a
//! row reads `a . u + beta * h >= 0`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{TransformedState, Vec2};
use crate::prediction::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObstacleKind {
    Static,
    PredictedDynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscObstacle {
    pub center: Vec2,
    pub radius: f64,
    pub kind: ObstacleKind,
    pub agent_id: Option<AgentId>,
    pub timestamp: Option<f64>,
}

impl DiscObstacle {
    pub fn fixed(center: Vec2, radius: f64) -> Self {
        Self {
            center,
            radius: radius.max(0.0),
            kind: ObstacleKind::Static,
            agent_id: None,
            timestamp: None,
        }
    }

    pub fn predicted(center: Vec2, radius: f64, agent_id: AgentId, timestamp: f64) -> Self {
        Self {
            center,
            radius: radius.max(0.0),
            kind: ObstacleKind::PredictedDynamic,
            agent_id: Some(agent_id),
            timestamp: Some(timestamp),
        }
    }
}

/// Wall whose free side satisfies `normal . p - offset >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlaneObstacle {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfPlaneObstacle {
    /// Normalizes `normal`; returns `None` for a zero vector.
    pub fn new(normal: Vec2, offset: f64) -> Option<Self> {
        let n = normal.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        Some(Self {
            normal: normal / n,
            offset: offset / n,
        })
    }

    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.normal.dot(&p) - self.offset
    }
}

/// Thin wall between two points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentObstacle {
    pub start: Vec2,
    pub end: Vec2,
}

impl SegmentObstacle {
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let d = self.end - self.start;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return self.start;
        }
        let s = ((p - self.start).dot(&d) / len2).clamp(0.0, 1.0);
        self.start + d * s
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        (p - self.closest_point(p)).norm()
    }
}

/// Where a constraint row came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleSource {
    StaticDisc(usize),
    HalfPlane(usize),
    Segment(usize),
    Agent { agent_id: AgentId, timestamp: f64 },
}

/// One row `a . u + b >= 0` over `u = [v, omega]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyConstraint {
    pub a: Vector2<f64>,
    pub b: f64,
    pub h_value: f64,
    pub source: ObstacleSource,
}

impl SafetyConstraint {
    pub fn slack(&self, v: f64, omega: f64) -> f64 {
        self.a.x * v + self.a.y * omega + self.b
    }
}

/// `grad^T * g` for a gradient that only depends on the transformed position.
fn input_gain(grad: Vec2, state: &TransformedState) -> Vector2<f64> {
    let (s, c) = state.theta.sin_cos();
    let ell = state.ell;
    Vector2::new(
        grad.x * c + grad.y * s,
        ell * (-grad.x * s + grad.y * c),
    )
}

pub fn barrier_value_disc(state: &TransformedState, obs: &DiscObstacle, robot_radius: f64) -> f64 {
    let delta = state.position() - obs.center;
    let inflated = obs.radius + state.ell + robot_radius;
    delta.norm_squared() - inflated * inflated
}

pub fn barrier_value_halfplane(state: &TransformedState, wall: &HalfPlaneObstacle, robot_radius: f64) -> f64 {
    wall.signed_distance(state.position()) - (state.ell + robot_radius)
}

pub fn barrier_value_segment(state: &TransformedState, wall: &SegmentObstacle, robot_radius: f64) -> f64 {
    let inflated = state.ell + robot_radius;
    let delta = state.position() - wall.closest_point(state.position());
    delta.norm_squared() - inflated * inflated
}

pub fn constraint_row_disc(
    state: &TransformedState,
    obs: &DiscObstacle,
    beta: f64,
    robot_radius: f64,
    source: ObstacleSource,
) -> SafetyConstraint {
    debug_assert!(beta > 0.0);
    let h = barrier_value_disc(state, obs, robot_radius);
    let grad = 2.0 * (state.position() - obs.center);
    SafetyConstraint {
        a: input_gain(grad, state),
        b: beta * h,
        h_value: h,
        source,
    }
}

pub fn constraint_row_halfplane(
    state: &TransformedState,
    wall: &HalfPlaneObstacle,
    beta: f64,
    robot_radius: f64,
    source: ObstacleSource,
) -> SafetyConstraint {
    debug_assert!(beta > 0.0);
    let h = barrier_value_halfplane(state, wall, robot_radius);
    SafetyConstraint {
        a: input_gain(wall.normal, state),
        b: beta * h,
        h_value: h,
        source,
    }
}

/// Squared distance to a segment is convex and C1, so its gradient is
/// `2 (p - closest)` everywhere.
pub fn constraint_row_segment(
    state: &TransformedState,
    wall: &SegmentObstacle,
    beta: f64,
    robot_radius: f64,
    source: ObstacleSource,
) -> SafetyConstraint {
    debug_assert!(beta > 0.0);
    let h = barrier_value_segment(state, wall, robot_radius);
    let grad = 2.0 * (state.position() - wall.closest_point(state.position()));
    SafetyConstraint {
        a: input_gain(grad, state),
        b: beta * h,
        h_value: h,
        source,
    }
}

/// Prediction of one agent at a single horizon step. `disc` is `None` when
/// the occupancy map at that step had no cell above the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSlot {
    pub timestamp: f64,
    pub disc: Option<DiscObstacle>,
}

/// Time-indexed discs for one agent, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPrediction {
    pub agent_id: AgentId,
    pub slots: Vec<PredictionSlot>,
}

impl AgentPrediction {
    /// Slot whose timestamp is nearest to `plan_time`; times past the
    /// horizon map to the last slot, times before it to the first.
    pub fn slot_at(&self, plan_time: f64) -> Option<&PredictionSlot> {
        let first = self.slots.first()?;
        let last = self.slots.last()?;
        if plan_time <= first.timestamp {
            return Some(first);
        }
        if plan_time >= last.timestamp {
            return Some(last);
        }
        let idx = self.slots.partition_point(|s| s.timestamp < plan_time);
        let after = &self.slots[idx];
        let before = &self.slots[idx - 1];
        if (after.timestamp - plan_time) < (plan_time - before.timestamp) {
            Some(after)
        } else {
            Some(before)
        }
    }

    pub fn disc_at(&self, plan_time: f64) -> Option<&DiscObstacle> {
        self.slot_at(plan_time).and_then(|s| s.disc.as_ref())
    }
}

/// Everything the safety layer knows about the world during one planning cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleSet {
    pub discs: Vec<DiscObstacle>,
    pub half_planes: Vec<HalfPlaneObstacle>,
    pub segments: Vec<SegmentObstacle>,
    pub agents: Vec<AgentPrediction>,
}

/// An obstacle selected for a particular query point and plan time.
#[derive(Debug, Clone, Copy)]
pub enum ActiveObstacle<'a> {
    Disc(&'a DiscObstacle, ObstacleSource),
    HalfPlane(&'a HalfPlaneObstacle, ObstacleSource),
    Segment(&'a SegmentObstacle, ObstacleSource),
}

impl ActiveObstacle<'_> {
    pub fn barrier(&self, state: &TransformedState, robot_radius: f64) -> f64 {
        match self {
            ActiveObstacle::Disc(d, _) => barrier_value_disc(state, d, robot_radius),
            ActiveObstacle::HalfPlane(w, _) => barrier_value_halfplane(state, w, robot_radius),
            ActiveObstacle::Segment(w, _) => barrier_value_segment(state, w, robot_radius),
        }
    }

    pub fn row(&self, state: &TransformedState, beta: f64, robot_radius: f64) -> SafetyConstraint {
        match *self {
            ActiveObstacle::Disc(d, src) => constraint_row_disc(state, d, beta, robot_radius, src),
            ActiveObstacle::HalfPlane(w, src) => constraint_row_halfplane(state, w, beta, robot_radius, src),
            ActiveObstacle::Segment(w, src) => constraint_row_segment(state, w, beta, robot_radius, src),
        }
    }

    pub fn source(&self) -> ObstacleSource {
        match *self {
            ActiveObstacle::Disc(_, s) | ActiveObstacle::HalfPlane(_, s) | ActiveObstacle::Segment(_, s) => s,
        }
    }
}

impl ObstacleSet {
    pub fn is_empty(&self) -> bool {
        self.discs.is_empty() && self.half_planes.is_empty() && self.segments.is_empty() && self.agents.is_empty()
    }

    /// Obstacles within `cutoff` of `point`. Discs are measured center to
    /// point, walls by their distance to the point.
    pub fn active_at(&self, point: Vec2, plan_time: f64, cutoff: f64) -> impl Iterator<Item = ActiveObstacle<'_>> {
        let statics = self
            .discs
            .iter()
            .enumerate()
            .filter(move |(_, d)| (d.center - point).norm() <= cutoff)
            .map(|(i, d)| ActiveObstacle::Disc(d, ObstacleSource::StaticDisc(i)));
        let planes = self
            .half_planes
            .iter()
            .enumerate()
            .filter(move |(_, w)| w.signed_distance(point) <= cutoff)
            .map(|(i, w)| ActiveObstacle::HalfPlane(w, ObstacleSource::HalfPlane(i)));
        let segments = self
            .segments
            .iter()
            .enumerate()
            .filter(move |(_, w)| w.distance(point) <= cutoff)
            .map(|(i, w)| ActiveObstacle::Segment(w, ObstacleSource::Segment(i)));
        let agents = self.agents.iter().filter_map(move |a| {
            let disc = a.disc_at(plan_time)?;
            if (disc.center - point).norm() > cutoff {
                return None;
            }
            let timestamp = disc.timestamp.unwrap_or(plan_time);
            Some(ActiveObstacle::Disc(
                disc,
                ObstacleSource::Agent { agent_id: a.agent_id, timestamp },
            ))
        });
        statics.chain(planes).chain(segments).chain(agents)
    }

    /// Smallest barrier value among active obstacles, `None` if none is active.
    pub fn min_barrier(&self, state: &TransformedState, plan_time: f64, cutoff: f64, robot_radius: f64) -> Option<f64> {
        self.active_at(state.position(), plan_time, cutoff)
            .map(|o| o.barrier(state, robot_radius))
            .reduce(f64::min)
    }
}

/// Constraint rows for every obstacle within `cutoff` of the transformed
/// position at `plan_time`.
pub fn active_constraints(
    state: &TransformedState,
    obstacles: &ObstacleSet,
    plan_time: f64,
    cutoff: f64,
    beta: f64,
    robot_radius: f64,
) -> Vec<SafetyConstraint> {
    obstacles
        .active_at(state.position(), plan_time, cutoff)
        .map(|o| o.row(state, beta, robot_radius))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{integrate_unicycle, to_transformed, ControlInput, RobotState};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const ELL: f64 = 0.1;
    const RR: f64 = 0.25;

    fn tstate(x: f64, y: f64, theta: f64) -> TransformedState {
        TransformedState { x_t: x, y_t: y, theta, ell: ELL }
    }

    fn src() -> ObstacleSource {
        ObstacleSource::StaticDisc(0)
    }

    #[test]
    fn disc_barrier_examples() {
        let obs = DiscObstacle::fixed(Vec2::new(1.0, 0.0), 0.3);
        let h = barrier_value_disc(&tstate(0.0, 0.0, 0.0), &obs, RR);
        assert!((h - 0.5775).abs() < 1e-12);
        let on_circle = tstate(1.0 - 0.65, 0.0, 1.0);
        assert!(barrier_value_disc(&on_circle, &obs, RR).abs() < 1e-12);
        let at_center = tstate(1.0, 0.0, -2.0);
        assert!((barrier_value_disc(&at_center, &obs, RR) + 0.65 * 0.65).abs() < 1e-12);
    }

    #[test]
    fn disc_row_examples() {
        let obs = DiscObstacle::fixed(Vec2::new(1.0, 0.0), 0.3);
        let row = constraint_row_disc(&tstate(0.0, 0.0, 0.0), &obs, 100.0, RR, src());
        assert!((row.a.x + 2.0).abs() < 1e-12 && row.a.y.abs() < 1e-12);
        assert!((row.b - 57.75).abs() < 1e-9);
        let row = constraint_row_disc(&tstate(0.0, 0.0, PI / 2.0), &obs, 100.0, RR, src());
        assert!(row.a.x.abs() < 1e-12 && (row.a.y - 0.2).abs() < 1e-12);
        assert!((row.b - 57.75).abs() < 1e-9);
    }

    #[test]
    fn far_disc_row_is_slack_over_the_box() {
        let obs = DiscObstacle::fixed(Vec2::new(1e4, -3e3), 0.5);
        let row = constraint_row_disc(&tstate(0.0, 0.0, 0.3), &obs, 100.0, RR, src());
        for &(v, w) in &[(0.33, 0.3), (0.33, -0.3), (-0.33, 0.3), (-0.33, -0.3)] {
            assert!(row.slack(v, w) > 0.0);
        }
    }

    #[test]
    fn halfplane_row_examples() {
        let wall = HalfPlaneObstacle::new(Vec2::new(0.0, 1.0), 0.0).unwrap();
        let row = constraint_row_halfplane(&tstate(0.0, 1.0, 0.0), &wall, 100.0, RR, src());
        assert!((row.h_value - 0.65).abs() < 1e-12);
        assert!(row.a.x.abs() < 1e-12 && (row.a.y - 0.1).abs() < 1e-12);
        assert!((row.b - 65.0).abs() < 1e-9);
        // heading straight away from the wall
        let away = constraint_row_halfplane(&tstate(0.0, 1.0, PI / 2.0), &wall, 100.0, RR, src());
        assert!(away.a.x * 0.1 > 0.0);
        let boundary = constraint_row_halfplane(&tstate(2.0, 0.35, 0.4), &wall, 100.0, RR, src());
        assert!(boundary.h_value.abs() < 1e-12 && boundary.b.abs() < 1e-9);
    }

    #[test]
    fn halfplane_normal_is_normalized() {
        let w = HalfPlaneObstacle::new(Vec2::new(3.0, 4.0), 5.0).unwrap();
        assert!((w.normal.norm() - 1.0).abs() < 1e-12);
        assert!((w.offset - 1.0).abs() < 1e-12);
        assert!(HalfPlaneObstacle::new(Vec2::zeros(), 1.0).is_none());
    }

    #[test]
    fn segment_barrier_matches_disc_at_endpoint() {
        let seg = SegmentObstacle { start: Vec2::new(1.0, 0.0), end: Vec2::new(3.0, 0.0) };
        let disc = DiscObstacle::fixed(Vec2::new(1.0, 0.0), 0.0);
        let s = tstate(-0.5, 0.2, 0.7);
        let a = constraint_row_segment(&s, &seg, 100.0, RR, src());
        let b = constraint_row_disc(&s, &disc, 100.0, RR, src());
        assert!((a.h_value - b.h_value).abs() < 1e-12);
        assert!((a.a - b.a).norm() < 1e-12);
    }

    fn three_step_prediction() -> AgentPrediction {
        let id = AgentId(7);
        AgentPrediction {
            agent_id: id,
            slots: (1..=3)
                .map(|k| PredictionSlot {
                    timestamp: 0.1 * k as f64,
                    disc: Some(DiscObstacle::predicted(Vec2::new(k as f64, 0.0), 0.1, id, 0.1 * k as f64)),
                })
                .collect(),
        }
    }

    #[test]
    fn cutoff_filters_by_distance() {
        let mut set = ObstacleSet::default();
        set.discs.push(DiscObstacle::fixed(Vec2::new(6.0, 0.0), 0.2));
        set.discs.push(DiscObstacle::fixed(Vec2::new(0.0, 4.99), 0.2));
        let rows = active_constraints(&tstate(0.0, 0.0, 0.0), &set, 0.0, 5.0, 100.0, RR);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].source, ObstacleSource::StaticDisc(1));
        assert!(active_constraints(&tstate(0.0, 0.0, 0.0), &ObstacleSet::default(), 0.0, 5.0, 100.0, RR).is_empty());
    }

    #[test]
    fn plan_time_past_horizon_uses_last_disc() {
        let pred = three_step_prediction();
        let last = pred.slots[2].disc.unwrap();
        assert_eq!(pred.disc_at(0.5), Some(&last));
        assert_eq!(pred.disc_at(0.2).unwrap().center.x, 2.0);
        assert_eq!(pred.disc_at(0.0).unwrap().center.x, 1.0);
        let set = ObstacleSet { agents: vec![pred], ..Default::default() };
        let rows = active_constraints(&tstate(0.0, 1.0, 0.0), &set, 0.5, 5.0, 100.0, RR);
        assert_eq!(rows.len(), 1);
        let expected = constraint_row_disc(&tstate(0.0, 1.0, 0.0), &last, 100.0, RR, rows[0].source);
        assert_eq!(rows[0], expected);
        match rows[0].source {
            ObstacleSource::Agent { agent_id, timestamp } => {
                assert_eq!(agent_id, AgentId(7));
                assert!((timestamp - 0.3).abs() < 1e-12);
            }
            other => panic!("unexpected source {other:?}"),
        }
    }

    #[test]
    fn vacuous_slot_produces_no_row() {
        let mut pred = three_step_prediction();
        pred.slots[2].disc = None;
        let set = ObstacleSet { agents: vec![pred], ..Default::default() };
        assert!(active_constraints(&tstate(0.0, 0.0, 0.0), &set, 0.3, 5.0, 100.0, RR).is_empty());
        assert_eq!(active_constraints(&tstate(0.0, 0.0, 0.0), &set, 0.2, 5.0, 100.0, RR).len(), 1);
    }

    fn flow_fd(state: RobotState, obs: &ActiveObstacle, channel: usize) -> f64 {
        // central difference of h along the unicycle flow of one input
        let step = 1e-6;
        let u = if channel == 0 { ControlInput::new(1.0, 0.0) } else { ControlInput::new(0.0, 1.0) };
        let fwd = integrate_unicycle(state, u, step);
        let back = integrate_unicycle(state, ControlInput::new(-u.v, -u.omega), step);
        let hf = obs.barrier(&to_transformed(fwd, ELL).unwrap(), RR);
        let hb = obs.barrier(&to_transformed(back, ELL).unwrap(), RR);
        (hf - hb) / (2.0 * step)
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(
            x in -3.0f64..3.0, y in -3.0f64..3.0, th in -3.1f64..3.1,
            cx in -3.0f64..3.0, cy in -3.0f64..3.0, r in 0.0f64..1.0,
        ) {
            let state = RobotState::new(x, y, th);
            let disc = DiscObstacle::fixed(Vec2::new(cx, cy), r);
            let obs = ActiveObstacle::Disc(&disc, src());
            let row = obs.row(&to_transformed(state, ELL).unwrap(), 100.0, RR);
            for ch in 0..2 {
                let fd = flow_fd(state, &obs, ch);
                let an = row.a[ch];
                prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "ch {} fd {} an {}", ch, fd, an);
            }
        }

        #[test]
        fn b_is_beta_times_h(x in -3.0f64..3.0, y in -3.0f64..3.0, th in -3.1f64..3.1, beta in 0.1f64..200.0) {
            let s = tstate(x, y, th);
            let disc = DiscObstacle::fixed(Vec2::new(0.5, -0.2), 0.4);
            let wall = HalfPlaneObstacle::new(Vec2::new(0.3, 1.0), -2.0).unwrap();
            let seg = SegmentObstacle { start: Vec2::new(-1.0, 2.0), end: Vec2::new(1.0, 2.5) };
            for row in [
                constraint_row_disc(&s, &disc, beta, RR, src()),
                constraint_row_halfplane(&s, &wall, beta, RR, src()),
                constraint_row_segment(&s, &seg, beta, RR, src()),
            ] {
                prop_assert_eq!(row.b, beta * row.h_value);
            }
        }

        #[test]
        fn rows_invariant_under_translation(
            x in -3.0f64..3.0, y in -3.0f64..3.0, th in -3.1f64..3.1,
            dx in -100.0f64..100.0, dy in -100.0f64..100.0,
        ) {
            let shift = Vec2::new(dx, dy);
            let disc = DiscObstacle::fixed(Vec2::new(0.5, -0.2), 0.4);
            let moved = DiscObstacle::fixed(disc.center + shift, 0.4);
            let a = constraint_row_disc(&tstate(x, y, th), &disc, 100.0, RR, src());
            let b = constraint_row_disc(&tstate(x + dx, y + dy, th), &moved, 100.0, RR, src());
            prop_assert!((a.a - b.a).norm() <= 1e-9 * (1.0 + a.a.norm()));
            prop_assert!((a.b - b.b).abs() <= 1e-9 * (1.0 + a.b.abs()));
        }
    }
}
