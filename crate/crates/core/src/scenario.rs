//! Scenario files: TOML documents describing walls, static discs, scripted
//! pedestrians, the robot start, the goal and optional parameter overrides.
//! See `docs/scenario-format.md` for the grammar.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cbf::{barrier_value_disc, barrier_value_halfplane, barrier_value_segment, DiscObstacle, HalfPlaneObstacle, ObstacleSet, SegmentObstacle};
use crate::error::ScenarioError;
use crate::geometry::{to_transformed, GoalRegion, RobotState, Vec2};
use crate::params::{ParamOverrides, PlannerParams};
use crate::prediction::{AgentId, GridSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WallSpec {
    /// Free side is `normal . p - offset >= 0`.
    HalfPlane { id: String, normal: [f64; 2], offset: f64 },
    Segment { id: String, start: [f64; 2], end: [f64; 2] },
}

impl WallSpec {
    pub fn id(&self) -> &str {
        match self {
            WallSpec::HalfPlane { id, .. } | WallSpec::Segment { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

fn default_speed() -> f64 {
    1.0
}

fn default_body_radius() -> f64 {
    0.25
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_body_radius")]
    pub body_radius: f64,
    /// Seconds spent standing at the first waypoint before walking.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// `[x, y, theta]`.
    pub start: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub robot: RobotSpec,
    pub goal: GoalSpec,
    /// Destinations the pedestrian predictor may assume.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agent_goals: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub walls: Vec<WallSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discs: Vec<DiscSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentSpec>,
    #[serde(default, skip_serializing_if = "ParamOverrides::is_empty")]
    pub params: ParamOverrides,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec: ScenarioSpec = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

impl ScenarioSpec {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn start_state(&self) -> RobotState {
        let [x, y, th] = self.robot.start;
        RobotState::new(x, y, th)
    }

    pub fn goal_region(&self) -> Result<GoalRegion, ScenarioError> {
        GoalRegion::new(Vec2::new(self.goal.center[0], self.goal.center[1]), self.goal.radius)
            .map_err(|e| invalid(format!("goal: {e}")))
    }

    /// Defaults with this scenario's overrides applied.
    pub fn planner_params(&self) -> PlannerParams {
        let mut p = PlannerParams::default();
        self.params.apply(&mut p);
        p
    }

    /// Walls and static discs as obstacles, in file order.
    pub fn static_obstacles(&self) -> ObstacleSet {
        let mut set = ObstacleSet::default();
        for w in &self.walls {
            match w {
                WallSpec::HalfPlane { normal, offset, .. } => {
                    if let Some(hp) = HalfPlaneObstacle::new(Vec2::new(normal[0], normal[1]), *offset) {
                        set.half_planes.push(hp);
                    }
                }
                WallSpec::Segment { start, end, .. } => set.segments.push(SegmentObstacle {
                    start: Vec2::new(start[0], start[1]),
                    end: Vec2::new(end[0], end[1]),
                }),
            }
        }
        for d in &self.discs {
            set.discs.push(DiscObstacle::fixed(Vec2::new(d.center[0], d.center[1]), d.radius));
        }
        set
    }

    /// Prediction grid covering every finite feature of the scenario plus a margin.
    pub fn grid(&self, cell_size: f64) -> GridSpec {
        let mut pts: Vec<Vec2> = vec![
            Vec2::new(self.robot.start[0], self.robot.start[1]),
            Vec2::new(self.goal.center[0], self.goal.center[1]),
        ];
        for w in &self.walls {
            if let WallSpec::Segment { start, end, .. } = w {
                pts.push(Vec2::new(start[0], start[1]));
                pts.push(Vec2::new(end[0], end[1]));
            }
        }
        pts.extend(self.discs.iter().map(|d| Vec2::new(d.center[0], d.center[1])));
        pts.extend(self.agents.iter().flat_map(|a| a.waypoints.iter().map(|w| Vec2::new(w[0], w[1]))));
        pts.extend(self.agent_goals.iter().map(|g| Vec2::new(g[0], g[1])));
        let mut lo = pts[0];
        let mut hi = pts[0];
        for p in &pts {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let margin = Vec2::new(2.0, 2.0);
        GridSpec::covering(lo - margin, hi + margin, cell_size)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !finite(&self.robot.start) {
            return Err(invalid("robot start must be finite"));
        }
        if !finite(&self.goal.center) || !(self.goal.radius > 0.0) || !self.goal.radius.is_finite() {
            return Err(invalid("goal needs a finite center and a positive radius"));
        }
        if self.agent_goals.iter().any(|g| !finite(g)) {
            return Err(invalid("agent goals must be finite"));
        }

        let mut wall_ids = BTreeSet::new();
        for w in &self.walls {
            if !wall_ids.insert(w.id()) {
                return Err(invalid(format!("duplicate wall id `{}`", w.id())));
            }
            match w {
                WallSpec::HalfPlane { id, normal, offset } => {
                    if !finite(normal) || !offset.is_finite() || HalfPlaneObstacle::new(Vec2::new(normal[0], normal[1]), *offset).is_none() {
                        return Err(invalid(format!("wall `{id}`: normal must be finite and non-zero")));
                    }
                }
                WallSpec::Segment { id, start, end } => {
                    if !finite(start) || !finite(end) || start == end {
                        return Err(invalid(format!("wall `{id}`: segment needs two distinct finite endpoints")));
                    }
                }
            }
        }
        for (i, d) in self.discs.iter().enumerate() {
            if !finite(&d.center) || !(d.radius >= 0.0) || !d.radius.is_finite() {
                return Err(invalid(format!("disc #{i}: center must be finite and radius non-negative")));
            }
        }
        let mut agent_ids = BTreeSet::new();
        for a in &self.agents {
            if !agent_ids.insert(a.id) {
                return Err(invalid(format!("duplicate agent id {}", a.id)));
            }
            if a.waypoints.is_empty() {
                return Err(invalid(format!("agent {}: at least one waypoint is required", a.id)));
            }
            if a.waypoints.iter().any(|w| !finite(w)) {
                return Err(invalid(format!("agent {}: waypoints must be finite", a.id)));
            }
            if !(a.speed >= 0.0) || !a.speed.is_finite() || !(a.body_radius >= 0.0) || !(a.delay >= 0.0) || !a.delay.is_finite() {
                return Err(invalid(format!("agent {}: speed, body_radius and delay must be non-negative", a.id)));
            }
        }

        let params = self.planner_params();
        params.validate().map_err(|e| invalid(format!("params: {e}")))?;

        // goal clear of every wall
        let goal_c = Vec2::new(self.goal.center[0], self.goal.center[1]);
        let set = self.static_obstacles();
        for (w, id) in self.walls.iter().zip(self.walls.iter().map(WallSpec::id)) {
            let clearance = match w {
                WallSpec::HalfPlane { normal, offset, .. } => HalfPlaneObstacle::new(Vec2::new(normal[0], normal[1]), *offset)
                    .expect("checked")
                    .signed_distance(goal_c),
                WallSpec::Segment { start, end, .. } => SegmentObstacle {
                    start: Vec2::new(start[0], start[1]),
                    end: Vec2::new(end[0], end[1]),
                }
                .distance(goal_c),
            };
            if clearance < self.goal.radius {
                return Err(invalid(format!("goal region intersects wall `{id}`")));
            }
        }

        // robot start outside every inflated obstacle
        let start = to_transformed(self.start_state(), params.ell).expect("ell validated");
        for (hp, w) in set.half_planes.iter().zip(self.walls.iter().filter(|w| matches!(w, WallSpec::HalfPlane { .. }))) {
            if barrier_value_halfplane(&start, hp, params.robot_radius) < 0.0 {
                return Err(invalid(format!("robot start is inside inflated wall `{}`", w.id())));
            }
        }
        for (seg, w) in set.segments.iter().zip(self.walls.iter().filter(|w| matches!(w, WallSpec::Segment { .. }))) {
            if barrier_value_segment(&start, seg, params.robot_radius) < 0.0 {
                return Err(invalid(format!("robot start is inside inflated wall `{}`", w.id())));
            }
        }
        for (i, d) in set.discs.iter().enumerate() {
            if barrier_value_disc(&start, d, params.robot_radius) < 0.0 {
                return Err(invalid(format!("robot start is inside inflated disc #{i}")));
            }
        }
        Ok(())
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().map(|a| AgentId(a.id))
    }
}

const BUILTIN: &[(&str, &str)] = &[
    ("scenario1", include_str!("../scenarios/scenario1.toml")),
    ("scenario2", include_str!("../scenarios/scenario2.toml")),
    ("scenario3", include_str!("../scenarios/scenario3.toml")),
    ("scenario1-closed", include_str!("../scenarios/scenario1-closed.toml")),
    ("open-corridor", include_str!("../scenarios/open-corridor.toml")),
    ("sealed-goal", include_str!("../scenarios/sealed-goal.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

/// Raw text of a shipped scenario.
pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn builtin(name: &str) -> Option<ScenarioSpec> {
    builtin_text(name).map(|t| parse_scenario(t).unwrap_or_else(|e| panic!("built-in scenario {name}: {e}")))
}
