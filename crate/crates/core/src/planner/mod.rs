//! Time-budgeted RRT whose edges come from CBF-constrained steering.
//!
//! One call to [`Planner::plan_cycle`] ingests observations, predicts the
//! pedestrians, grows the tree until the budget runs out and returns the
//! control(s) to execute. [`Planner::reroot`] then moves the root to the
//! executed state, keeping the selected branch when it still matches.

mod sampling;
mod tree;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use sampling::{goal_bearing, ref_sample, state_sample, vertex_cost, vertex_sample};
pub use tree::{PlanTree, TreeEdge, TreeVertex, VertexId};

use crate::cbf::{AgentPrediction, DiscObstacle, ObstacleSet, PredictionSlot};
use crate::error::PredictionError;
use crate::geometry::{ControlInput, GoalRegion, RobotState};
use crate::params::PlannerParams;
use crate::prediction::{extract_disc, predict_filtered, AgentOccupancy, GridSpec, Observation, PredictorConfig, TrackletStore};
use crate::steer::{segment_still_safe, steer};

/// How long a cycle may grow the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Fixed number of grow attempts; reproducible.
    Nodes(usize),
    /// No grow starts once this much wall time has passed since the cycle began.
    Deadline(Duration),
}

/// One attempt of the grow step: sample a vertex, a heading and a reference
/// input, steer for `N_s` steps and insert the result if it is feasible.
pub fn grow_once<R: Rng + ?Sized>(
    tree: &mut PlanTree,
    obstacles: &ObstacleSet,
    goal: &GoalRegion,
    params: &PlannerParams,
    rng: &mut R,
) -> Option<VertexId> {
    let parent = vertex_sample(tree, rng);
    let v = tree.vertex(parent).clone();
    let x_rand = state_sample(&v.state, goal, params.sigma_theta, rng);
    let u_ref = ref_sample(&x_rand, goal, params, rng);
    let seg = steer(v.state, v.timestamp, u_ref, params.segment_steps, obstacles, params);
    if !seg.feasible {
        return None;
    }
    debug_assert!(seg.min_h >= 0.0);
    let cost = vertex_cost(&seg.end_state, seg.end_time, goal, obstacles, params);
    Some(tree.add_child(parent, seg.controls, seg.states, seg.end_time, cost))
}

/// Converts occupancy maps into time-indexed discs. Each disc is widened by
/// the pedestrian body and half a cell diagonal.
pub fn occupancy_to_predictions(occupancy: &[AgentOccupancy], params: &PlannerParams) -> Vec<AgentPrediction> {
    occupancy
        .iter()
        .map(|agent| AgentPrediction {
            agent_id: agent.agent_id,
            slots: agent
                .maps
                .iter()
                .map(|map| {
                    let disc = extract_disc(map, params.p_o).expect("p_o validated");
                    let pad = params.agent_radius + map.cell_size * std::f64::consts::FRAC_1_SQRT_2;
                    PredictionSlot {
                        timestamp: map.timestamp,
                        disc: (!disc.vacuous)
                            .then(|| DiscObstacle::predicted(disc.center, disc.radius + pad, agent.agent_id, map.timestamp)),
                    }
                })
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    /// Controls to execute before the next cycle.
    pub controls: Vec<ControlInput>,
    pub selected: VertexId,
    pub selected_cost: f64,
    /// Distance from the root to the selected vertex.
    pub displacement: f64,
    /// The tree had no children; zero control as a last resort.
    pub fallback: bool,
    pub grows: usize,
    pub added: usize,
    /// Retained vertices dropped by re-validation.
    pub pruned: usize,
    pub tree_size: usize,
    /// Static obstacles plus this cycle's predictions.
    pub obstacles: ObstacleSet,
    pub elapsed: Duration,
    pub max_grow: Duration,
}

pub struct Planner {
    params: PlannerParams,
    goal: GoalRegion,
    statics: ObstacleSet,
    predictor: PredictorConfig,
    store: TrackletStore,
    tree: PlanTree,
    rng: ChaCha8Rng,
    /// Root child chosen in the last cycle and how many of its steps were handed out.
    pending: Option<(VertexId, usize)>,
    retained: bool,
}

impl Planner {
    /// `statics` must not contain agent predictions; `agent_goals` feed the
    /// pedestrian predictor.
    pub fn new(
        params: PlannerParams,
        goal: GoalRegion,
        statics: ObstacleSet,
        agent_goals: Vec<[f64; 2]>,
        grid: GridSpec,
        start: RobotState,
        start_time: f64,
    ) -> Result<Self, String> {
        params.validate()?;
        let mut predictor = PredictorConfig::new(params.horizon, params.ts, agent_goals, grid);
        predictor.samples = params.prediction_samples;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(Self {
            goal,
            statics: ObstacleSet { agents: Vec::new(), ..statics },
            predictor,
            store: TrackletStore::with_history(8),
            tree: PlanTree::new(start, start_time, f64::INFINITY),
            rng,
            pending: None,
            retained: false,
            params,
        })
    }

    pub fn params(&self) -> &PlannerParams {
        &self.params
    }

    pub fn tree(&self) -> &PlanTree {
        &self.tree
    }

    pub fn goal(&self) -> &GoalRegion {
        &self.goal
    }

    pub fn predictor(&self) -> &PredictorConfig {
        &self.predictor
    }

    pub fn plan_cycle(&mut self, observations: &[Observation], budget: Budget) -> Result<CycleReport, PredictionError> {
        let started = Instant::now();
        for o in observations {
            self.store.ingest_observation(o.agent_id, o.time, o.position)?;
        }
        let root = self.tree.root().clone();
        let here = root.state.position();
        let range = self.params.prediction_range;
        let occupancy = predict_filtered(&self.store, &self.predictor, &mut self.rng, |t| {
            t.last().is_some_and(|(_, p)| (p - here).norm() <= range)
        })?;
        let mut obstacles = self.statics.clone();
        obstacles.agents = occupancy_to_predictions(&occupancy, &self.params);

        let pruned = if self.retained { self.revalidate(&obstacles) } else { 0 };

        let mut grows = 0;
        let mut added = 0;
        let mut max_grow = Duration::ZERO;
        loop {
            match budget {
                Budget::Nodes(n) if grows >= n => break,
                Budget::Deadline(d) if started.elapsed() >= d => break,
                _ => {}
            }
            if self.tree.len() >= self.params.max_tree_size {
                break;
            }
            let t = Instant::now();
            if grow_once(&mut self.tree, &obstacles, &self.goal, &self.params, &mut self.rng).is_some() {
                added += 1;
            }
            grows += 1;
            max_grow = max_grow.max(t.elapsed());
        }

        let report = self.select(obstacles, grows, added, pruned);
        Ok(CycleReport {
            elapsed: started.elapsed(),
            max_grow,
            ..report
        })
    }

    /// Drops retained vertices whose edge is no longer safe under the new
    /// predictions and refreshes the costs of the rest.
    fn revalidate(&mut self, obstacles: &ObstacleSet) -> usize {
        let before = self.tree.len();
        let params = &self.params;
        self.tree.retain(|tree, id| {
            let e = tree.edge_into(id).expect("non-root has an edge");
            segment_still_safe(tree.vertex(e.from).timestamp, &e.controls, &e.states, obstacles, params)
        });
        for i in 1..self.tree.len() {
            let v = self.tree.vertex(VertexId(i));
            let cost = vertex_cost(&v.state, v.timestamp, &self.goal, obstacles, params);
            self.tree.set_cost(VertexId(i), cost);
        }
        before - self.tree.len()
    }

    fn select(&mut self, obstacles: ObstacleSet, grows: usize, added: usize, pruned: usize) -> CycleReport {
        let mut best: Option<(VertexId, f64)> = None;
        for (i, v) in self.tree.vertices().iter().enumerate().skip(1) {
            if best.is_none_or(|(_, c)| v.cost < c) {
                best = Some((VertexId(i), v.cost));
            }
        }
        let commit = self.params.commit_steps();
        let root_pos = self.tree.root().state.position();
        let base = CycleReport {
            controls: vec![ControlInput::ZERO; commit],
            selected: PlanTree::ROOT,
            selected_cost: f64::INFINITY,
            displacement: 0.0,
            fallback: false,
            grows,
            added,
            pruned,
            tree_size: self.tree.len(),
            obstacles,
            elapsed: Duration::ZERO,
            max_grow: Duration::ZERO,
        };
        self.pending = None;
        match best {
            None => CycleReport {
                fallback: true,
                ..base
            },
            Some((id, cost)) => {
                let first = self.tree.first_step_toward(id).expect("non-root selection");
                let edge = self.tree.edge_into(first).expect("child edge");
                let k = commit.min(edge.controls.len());
                self.pending = Some((first, k));
                CycleReport {
                    controls: edge.controls[..k].to_vec(),
                    selected: id,
                    selected_cost: cost,
                    displacement: (self.tree.vertex(id).state.position() - root_pos).norm(),
                    ..base
                }
            }
        }
    }

    /// Moves the root to the state reached after executing the last cycle's
    /// controls. The selected branch is kept only when its stored state at
    /// the executed step matches `executed` within `1e-6`.
    pub fn reroot(&mut self, executed: RobotState, executed_time: f64) {
        let keep = self.pending.take().filter(|&(child, k)| {
            let expected = self.tree.edge_into(child).expect("child edge").states[k];
            (expected.x - executed.x).abs() <= 1e-6
                && (expected.y - executed.y).abs() <= 1e-6
                && crate::geometry::angle_diff(expected.theta, executed.theta).abs() <= 1e-6
        });
        match keep {
            Some((child, k)) => {
                self.tree.advance_root(child, k, executed_time);
                self.retained = true;
            }
            None => {
                self.tree = PlanTree::new(executed, executed_time, f64::INFINITY);
                self.retained = false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbf::HalfPlaneObstacle;
    use crate::geometry::Vec2;

    fn goal() -> GoalRegion {
        GoalRegion::new(Vec2::new(0.0, 5.0), 0.3).unwrap()
    }

    fn grid() -> GridSpec {
        GridSpec::covering(Vec2::new(-8.0, -3.0), Vec2::new(8.0, 8.0), 0.1)
    }

    fn planner(statics: ObstacleSet, start: RobotState) -> Planner {
        Planner::new(PlannerParams::default(), goal(), statics, vec![], grid(), start, 0.0).unwrap()
    }

    #[test]
    fn open_space_makes_progress() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PlannerParams::default();
        let start = RobotState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let mut tree = PlanTree::new(start, 0.0, f64::INFINITY);
        let obs = ObstacleSet::default();
        for _ in 0..50 {
            grow_once(&mut tree, &obs, &goal(), &p, &mut rng);
        }
        let d0 = goal().distance(start.position());
        assert!(tree.vertices().iter().any(|v| goal().distance(v.state.position()) < d0));
    }

    #[test]
    fn enclosed_root_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PlannerParams::default();
        // walls 0.3 m from the transformed point, inside the 0.35 m inflation
        let mut obs = ObstacleSet::default();
        for (n, off) in [((1.0, 0.0), -0.2), ((-1.0, 0.0), -0.4), ((0.0, 1.0), -0.3), ((0.0, -1.0), -0.3)] {
            obs.half_planes.push(HalfPlaneObstacle::new(Vec2::new(n.0, n.1), off).unwrap());
        }
        let mut tree = PlanTree::new(RobotState::new(0.0, 0.0, 0.0), 0.0, f64::INFINITY);
        for _ in 0..100 {
            assert!(grow_once(&mut tree, &obs, &goal(), &p, &mut rng).is_none());
        }
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn zero_budget_leaves_tree_unchanged() {
        let mut pl = planner(ObstacleSet::default(), RobotState::new(0.0, 0.0, 0.0));
        let r = pl.plan_cycle(&[], Budget::Nodes(0)).unwrap();
        assert_eq!((r.grows, r.added, r.tree_size), (0, 0, 1));
        assert!(r.fallback);
        assert_eq!(r.controls, vec![ControlInput::ZERO]);
    }

    #[test]
    fn childless_unsafe_root_falls_back_to_zero() {
        let mut statics = ObstacleSet::default();
        statics.discs.push(DiscObstacle::fixed(Vec2::new(0.1, 0.0), 0.5));
        let mut pl = planner(statics, RobotState::new(0.0, 0.0, 0.0));
        let r = pl.plan_cycle(&[], Budget::Nodes(20)).unwrap();
        assert!(r.fallback);
        assert_eq!(r.added, 0);
        assert_eq!(r.controls, vec![ControlInput::ZERO]);
    }

    #[test]
    fn first_control_of_selected_path_is_returned() {
        let mut pl = planner(ObstacleSet::default(), RobotState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let r = pl.plan_cycle(&[], Budget::Nodes(40)).unwrap();
        assert!(!r.fallback);
        let first = pl.tree().first_step_toward(r.selected).unwrap();
        assert_eq!(r.controls[0], pl.tree().edge_into(first).unwrap().controls[0]);
        // minimum cost, earliest index among ties
        let costs: Vec<f64> = pl.tree().vertices().iter().skip(1).map(|v| v.cost).collect();
        let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r.selected.0, 1 + costs.iter().position(|&c| c == min).unwrap());
    }

    #[test]
    fn reroot_keeps_matching_branch_and_drops_mismatch() {
        let p = PlannerParams::default();
        let start = RobotState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let mut pl = planner(ObstacleSet::default(), start);
        let r = pl.plan_cycle(&[], Budget::Nodes(40)).unwrap();
        let executed = crate::geometry::integrate_unicycle(start, r.controls[0], p.ts);
        pl.reroot(executed, p.ts);
        assert!(pl.tree().len() >= 2);
        assert_eq!(pl.tree().root().state, executed);
        for e in pl.tree().edges() {
            let parent_t = pl.tree().vertex(e.from).timestamp;
            let child_t = pl.tree().vertex(e.to).timestamp;
            assert!((child_t - parent_t - e.controls.len() as f64 * p.ts).abs() < 1e-9);
        }

        let r = pl.plan_cycle(&[], Budget::Nodes(40)).unwrap();
        assert!(!r.fallback);
        let disturbed = RobotState::new(executed.x + 0.01, executed.y, executed.theta);
        pl.reroot(disturbed, 2.0 * p.ts);
        assert_eq!(pl.tree().len(), 1);
        assert_eq!(pl.tree().root().state, disturbed);
    }

    #[test]
    fn same_seed_same_tree() {
        let run = || {
            let mut pl = planner(ObstacleSet::default(), RobotState::new(-5.0, 0.0, 0.0));
            let mut s = RobotState::new(-5.0, 0.0, 0.0);
            for k in 1..=5 {
                let r = pl.plan_cycle(&[], Budget::Nodes(30)).unwrap();
                s = crate::geometry::integrate_unicycle(s, r.controls[0], 0.1);
                pl.reroot(s, k as f64 * 0.1);
            }
            pl.tree().clone()
        };
        assert_eq!(run(), run());
    }
}
