//! Discrete-time world: scripted pedestrians, walls, the robot executor and
//! the loop that drives the planner one cycle at a time.

use std::collections::BTreeMap;

use crate::cbf::ObstacleSet;
use crate::error::ScenarioError;
use crate::geometry::{in_goal, integrate_unicycle, ControlInput, RobotState, Vec2};
use crate::params::PlannerParams;
use crate::planner::{Budget, Planner};
use crate::prediction::{AgentId, Observation};
use crate::scenario::{AgentSpec, ScenarioSpec};
use crate::steer::state_barrier;
use crate::trace::{Trace, TraceHeader, TraceRecord};

/// Pedestrian walking a polyline at constant speed, ignoring the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedAgent {
    pub agent_id: AgentId,
    pub waypoints: Vec<Vec2>,
    pub speed: f64,
    pub body_radius: f64,
    /// Time spent at the first waypoint before walking.
    pub delay: f64,
}

impl ScriptedAgent {
    pub fn from_spec(spec: &AgentSpec) -> Self {
        Self {
            agent_id: AgentId(spec.id),
            waypoints: spec.waypoints.iter().map(|w| Vec2::new(w[0], w[1])).collect(),
            speed: spec.speed,
            body_radius: spec.body_radius,
            delay: spec.delay,
        }
    }

    /// Position at time `t`; stays at the last waypoint once the path ends.
    pub fn position_at(&self, t: f64) -> Vec2 {
        let mut remaining = self.speed * (t - self.delay).max(0.0);
        for pair in self.waypoints.windows(2) {
            let leg = pair[1] - pair[0];
            let len = leg.norm();
            if remaining <= len {
                return if len > 0.0 { pair[0] + leg * (remaining / len) } else { pair[0] };
            }
            remaining -= len;
        }
        *self.waypoints.last().expect("at least one waypoint")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub sim_time: f64,
    pub steps: usize,
    pub robot: RobotState,
    pub agents: BTreeMap<AgentId, Vec2>,
    pub collision: bool,
}

/// Static geometry and scripts of a run.
#[derive(Debug, Clone)]
pub struct World {
    pub agents: Vec<ScriptedAgent>,
    pub statics: ObstacleSet,
    pub robot_radius: f64,
    pub ts: f64,
}

impl World {
    pub fn from_spec(spec: &ScenarioSpec, params: &PlannerParams) -> Self {
        Self {
            agents: spec.agents.iter().map(ScriptedAgent::from_spec).collect(),
            statics: spec.static_obstacles(),
            robot_radius: params.robot_radius,
            ts: params.ts,
        }
    }

    pub fn initial(&self, robot: RobotState) -> WorldState {
        let mut w = WorldState {
            sim_time: 0.0,
            steps: 0,
            robot,
            agents: self.agents.iter().map(|a| (a.agent_id, a.position_at(0.0))).collect(),
            collision: false,
        };
        w.collision = self.in_collision(&w);
        w
    }

    /// Smallest gap between the robot body and any pedestrian body;
    /// `+inf` without pedestrians.
    pub fn agent_clearance(&self, world: &WorldState) -> f64 {
        let p = world.robot.position();
        self.agents
            .iter()
            .map(|a| (world.agents[&a.agent_id] - p).norm() - self.robot_radius - a.body_radius)
            .fold(f64::INFINITY, f64::min)
    }

    /// Ground truth: robot disc overlaps a pedestrian, a static disc or a wall.
    pub fn in_collision(&self, world: &WorldState) -> bool {
        let p = world.robot.position();
        let r = self.robot_radius;
        self.agent_clearance(world) < 0.0
            || self.statics.discs.iter().any(|d| (d.center - p).norm() < r + d.radius)
            || self.statics.half_planes.iter().any(|w| w.signed_distance(p) < r)
            || self.statics.segments.iter().any(|s| s.distance(p) < r)
    }
}

/// Advances the robot by one Euler step and every agent along its script.
pub fn step_world(world: &WorldState, control: ControlInput, env: &World) -> WorldState {
    let steps = world.steps + 1;
    let t = steps as f64 * env.ts;
    let mut next = WorldState {
        sim_time: t,
        steps,
        robot: integrate_unicycle(world.robot, control, env.ts),
        agents: env.agents.iter().map(|a| (a.agent_id, a.position_at(t))).collect(),
        collision: world.collision,
    };
    next.collision |= env.in_collision(&next);
    next
}

/// Exact agent positions stamped with the current time.
pub fn observe(world: &WorldState) -> Vec<Observation> {
    world
        .agents
        .iter()
        .map(|(&agent_id, &position)| Observation {
            agent_id,
            time: world.sim_time,
            position,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Goal,
    Collision,
    Timeout,
}

/// Selected-vertex displacement below which a cycle counts as waiting [m].
pub const WAIT_DISPLACEMENT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub success: bool,
    /// Sim time when the run ended; the time to goal when `success`.
    pub time_to_goal: f64,
    /// Smallest robot-to-pedestrian body gap over the run.
    pub min_clearance: f64,
    /// Smallest barrier value of an executed state against its cycle's
    /// obstacle snapshot; `+inf` if nothing was ever in range.
    pub min_h: f64,
    pub steps: usize,
    pub collision: bool,
    pub termination: Termination,
    /// Cycles that fell back or selected a vertex within [`WAIT_DISPLACEMENT`] of the root.
    pub wait_cycles: usize,
    pub fallback_cycles: usize,
}

pub fn run_scenario(spec: &ScenarioSpec, params: &PlannerParams, max_time: f64) -> Result<(SimOutcome, Trace), ScenarioError> {
    run_scenario_with(spec, params, max_time, Budget::Nodes(params.node_budget))
}

/// [`run_scenario`] with an explicit per-cycle budget. `params` is used as
/// given; resolve scenario overrides with [`ScenarioSpec::planner_params`].
pub fn run_scenario_with(
    spec: &ScenarioSpec,
    params: &PlannerParams,
    max_time: f64,
    budget: Budget,
) -> Result<(SimOutcome, Trace), ScenarioError> {
    spec.validate()?;
    params.validate().map_err(ScenarioError::Invalid)?;
    let goal = spec.goal_region()?;
    let env = World::from_spec(spec, params);
    let mut planner = Planner::new(
        params.clone(),
        goal,
        env.statics.clone(),
        spec.agent_goals.clone(),
        spec.grid(0.1),
        spec.start_state(),
        0.0,
    )
    .map_err(ScenarioError::Invalid)?;

    let mut world = env.initial(spec.start_state());
    let mut trace = Trace {
        header: TraceHeader {
            scenario: spec.name.clone(),
            seed: params.seed,
            ts: params.ts,
            commit_horizon: params.commit_horizon.to_string(),
            node_budget: match budget {
                Budget::Nodes(n) => Some(n),
                Budget::Deadline(_) => None,
            },
        },
        records: Vec::new(),
    };
    let mut min_clearance = env.agent_clearance(&world);
    let mut min_h = f64::INFINITY;
    let mut wait_cycles = 0;
    let mut fallback_cycles = 0;
    let max_steps = (max_time / params.ts).round() as usize;

    let termination = 'run: loop {
        if world.collision {
            break Termination::Collision;
        }
        if in_goal(&world.robot, &goal) {
            break Termination::Goal;
        }
        if world.steps >= max_steps {
            break Termination::Timeout;
        }
        let report = planner
            .plan_cycle(&observe(&world), budget)
            .expect("observations are time-ordered");
        wait_cycles += (report.fallback || report.displacement < WAIT_DISPLACEMENT) as usize;
        fallback_cycles += report.fallback as usize;
        for (j, &u) in report.controls.iter().enumerate() {
            let before = world.clone();
            world = step_world(&world, u, &env);
            let h = state_barrier(world.robot, world.sim_time, &report.obstacles, params);
            if let Some(h) = h {
                min_h = min_h.min(h);
            }
            min_clearance = min_clearance.min(env.agent_clearance(&world));
            trace.records.push(TraceRecord::new(&before, u, &report, j == 0, h));
            if world.collision || in_goal(&world.robot, &goal) || world.steps >= max_steps {
                continue 'run;
            }
        }
        planner.reroot(world.robot, world.sim_time);
    };

    let outcome = SimOutcome {
        success: termination == Termination::Goal,
        time_to_goal: world.sim_time,
        min_clearance,
        min_h,
        steps: world.steps,
        collision: termination == Termination::Collision,
        termination,
        wait_cycles,
        fallback_cycles,
    };
    Ok((outcome, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walker(waypoints: &[[f64; 2]], speed: f64) -> ScriptedAgent {
        ScriptedAgent {
            agent_id: AgentId(1),
            waypoints: waypoints.iter().map(|w| Vec2::new(w[0], w[1])).collect(),
            speed,
            body_radius: 0.25,
            delay: 0.0,
        }
    }

    fn env(agents: Vec<ScriptedAgent>) -> World {
        World {
            agents,
            statics: ObstacleSet::default(),
            robot_radius: 0.25,
            ts: 0.1,
        }
    }

    #[test]
    fn standing_agent_never_moves() {
        let e = env(vec![walker(&[[1.0, 2.0], [5.0, 2.0]], 0.0)]);
        let mut w = e.initial(RobotState::new(-5.0, 0.0, 0.0));
        for _ in 0..50 {
            w = step_world(&w, ControlInput::ZERO, &e);
        }
        assert_eq!(w.agents[&AgentId(1)], Vec2::new(1.0, 2.0));
    }

    #[test]
    fn agent_saturates_at_path_end() {
        let a = walker(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], 1.0);
        assert!((a.position_at(0.5) - Vec2::new(0.5, 0.0)).norm() < 1e-12);
        assert!((a.position_at(1.5) - Vec2::new(1.0, 0.5)).norm() < 1e-12);
        assert_eq!(a.position_at(10.0), Vec2::new(1.0, 1.0));
    }

    #[test]
    fn delay_holds_first_waypoint() {
        let mut a = walker(&[[0.0, 0.0], [4.0, 0.0]], 1.0);
        a.delay = 2.0;
        assert_eq!(a.position_at(1.5), Vec2::new(0.0, 0.0));
        assert!((a.position_at(3.0) - Vec2::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn collision_threshold() {
        let e = env(vec![walker(&[[0.49, 0.0]], 0.0)]);
        assert!(e.initial(RobotState::new(0.0, 0.0, 0.0)).collision);
        let e = env(vec![walker(&[[0.51, 0.0]], 0.0)]);
        assert!(!e.initial(RobotState::new(0.0, 0.0, 0.0)).collision);
    }

    #[test]
    fn observations_pass_positions_through() {
        let e = env(vec![walker(&[[0.0, 3.0], [4.0, 3.0]], 1.0)]);
        let mut w = e.initial(RobotState::new(0.0, 0.0, 0.0));
        let o = observe(&w);
        assert_eq!(o.len(), 1);
        assert_eq!((o[0].agent_id, o[0].time, o[0].position), (AgentId(1), 0.0, Vec2::new(0.0, 3.0)));
        for _ in 0..5 {
            w = step_world(&w, ControlInput::ZERO, &e);
        }
        let o = observe(&w);
        assert_eq!(o[0].time, w.sim_time);
        assert_eq!(o[0].position, w.agents[&AgentId(1)]);
        assert!((o[0].position - Vec2::new(0.5, 3.0)).norm() < 1e-12);
        assert!(observe(&env(vec![]).initial(RobotState::new(0.0, 0.0, 0.0))).is_empty());
    }
}
