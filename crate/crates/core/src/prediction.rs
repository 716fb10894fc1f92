//! Goal-directed sampling predictor for pedestrians.
//!
//! Each agent's recent velocity picks a goal (weighted by how well the goal
//! lines up with the current heading), then `K` trajectories are rolled out
//! under a softmax policy over a discrete set of (turn, speed) actions. The
//! visited cells are histogrammed per horizon step, giving one occupancy map
//! per step. Cost per agent is `O(K * (|goals| + N_o * |actions|))`.

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PredictionError;
use crate::geometry::{angle_diff, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub agent_id: AgentId,
    pub time: f64,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub agent_id: AgentId,
    pub samples: Vec<(f64, Vec2)>,
}

impl Tracklet {
    pub fn last(&self) -> Option<(f64, Vec2)> {
        self.samples.last().copied()
    }

    /// Finite-difference velocity from the two most recent samples.
    pub fn velocity(&self) -> Option<Vec2> {
        let n = self.samples.len();
        if n < 2 {
            return None;
        }
        let (t1, p1) = self.samples[n - 1];
        let (t0, p0) = self.samples[n - 2];
        Some((p1 - p0) / (t1 - t0))
    }
}

/// Observed tracklets keyed by agent. Single writer: the simulation loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackletStore {
    tracklets: BTreeMap<AgentId, Tracklet>,
    max_len: Option<usize>,
}

impl TrackletStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps at most `max_len` samples per agent.
    pub fn with_history(max_len: usize) -> Self {
        Self {
            tracklets: BTreeMap::new(),
            max_len: Some(max_len.max(2)),
        }
    }

    pub fn ingest_observation(&mut self, agent_id: AgentId, time: f64, position: Vec2) -> Result<(), PredictionError> {
        let tracklet = self.tracklets.entry(agent_id).or_insert_with(|| Tracklet {
            agent_id,
            samples: Vec::new(),
        });
        if let Some((last, _)) = tracklet.last() {
            if time <= last {
                return Err(PredictionError::OutOfOrder { agent: agent_id, time, last });
            }
        }
        tracklet.samples.push((time, position));
        if let Some(max) = self.max_len {
            if tracklet.samples.len() > max {
                let excess = tracklet.samples.len() - max;
                tracklet.samples.drain(..excess);
            }
        }
        Ok(())
    }

    pub fn get(&self, agent_id: AgentId) -> Option<&Tracklet> {
        self.tracklets.get(&agent_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values()
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }
}

/// Global raster that all occupancy maps are aligned to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    /// Grid with square cells covering `[min, max]`.
    pub fn covering(min: Vec2, max: Vec2, cell_size: f64) -> Self {
        let width = (((max.x - min.x) / cell_size).ceil() as usize).max(1);
        let height = (((max.y - min.y) / cell_size).ceil() as usize).max(1);
        Self {
            origin: [min.x, min.y],
            cell_size,
            width,
            height,
        }
    }

    /// `(col, row)` of the cell containing `p`, if inside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let cx = ((p.x - self.origin[0]) / self.cell_size).floor();
        let cy = ((p.y - self.origin[1]) / self.cell_size).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some((cx as usize, cy as usize))
    }
}

/// One heading change and a speed multiplier on the observed speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub turn: f64,
    pub speed_factor: f64,
}

pub fn default_actions() -> Vec<Action> {
    use std::f64::consts::PI;
    let turns = [-PI / 4.0, -PI / 8.0, 0.0, PI / 8.0, PI / 4.0];
    let speeds = [0.75, 1.0, 1.25];
    turns
        .iter()
        .flat_map(|&turn| speeds.iter().map(move |&speed_factor| Action { turn, speed_factor }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Horizon `N_o` in steps.
    pub horizon: usize,
    /// Sampled trajectories `K` per agent.
    pub samples: usize,
    pub step: f64,
    pub actions: Vec<Action>,
    pub goals: Vec<[f64; 2]>,
    pub grid: GridSpec,
    /// Sharpness of the heading-alignment goal prior.
    pub goal_concentration: f64,
    /// Softmax temperature of the rollout policy.
    pub temperature: f64,
    /// Score penalty per unit deviation of the speed factor from 1.
    pub speed_penalty: f64,
    /// Agents slower than this are treated as standing.
    pub standing_speed: f64,
}

impl PredictorConfig {
    pub fn new(horizon: usize, step: f64, goals: Vec<[f64; 2]>, grid: GridSpec) -> Self {
        Self {
            horizon,
            samples: 128,
            step,
            actions: default_actions(),
            goals,
            grid,
            goal_concentration: 4.0,
            temperature: 0.1,
            speed_penalty: 0.5,
            standing_speed: 0.05,
        }
    }

    fn validate(&self) -> Result<(), PredictionError> {
        if self.horizon == 0 {
            return Err(PredictionError::InvalidConfig("horizon must be at least one step"));
        }
        if self.samples == 0 {
            return Err(PredictionError::InvalidConfig("at least one sample is required"));
        }
        if self.actions.is_empty() {
            return Err(PredictionError::InvalidConfig("action set is empty"));
        }
        if !(self.step > 0.0) || !(self.grid.cell_size > 0.0) || !(self.temperature > 0.0) {
            return Err(PredictionError::InvalidConfig("step, cell size and temperature must be positive"));
        }
        Ok(())
    }
}

/// Probability of the agent's position over a window of the global grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMap {
    pub agent_id: AgentId,
    pub timestamp: f64,
    pub origin: Vec2,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// Row-major, `cells[row * width + col]`.
    pub cells: Vec<f64>,
}

impl OccupancyMap {
    pub fn empty(agent_id: AgentId, timestamp: f64, origin: Vec2, cell_size: f64) -> Self {
        Self {
            agent_id,
            timestamp,
            origin,
            cell_size,
            width: 0,
            height: 0,
            cells: Vec::new(),
        }
    }

    pub fn cell_center(&self, index: usize) -> Vec2 {
        let col = index % self.width;
        let row = index / self.width;
        self.origin + Vec2::new((col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size)
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.width + col]
    }
}

/// Per-step maps for one agent; `maps[0]` is the current observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentOccupancy {
    pub agent_id: AgentId,
    pub maps: Vec<OccupancyMap>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedDisc {
    pub center: Vec2,
    pub radius: f64,
    pub timestamp: f64,
    pub agent_id: AgentId,
    pub p_o: f64,
    /// No cell reached `p_o`; the disc carries no information.
    pub vacuous: bool,
}

/// Histograms global cell indices into a tight map window.
fn rasterize(
    agent_id: AgentId,
    timestamp: f64,
    grid: &GridSpec,
    cells: &[(usize, usize)],
    mass_per_hit: f64,
) -> OccupancyMap {
    let origin = Vec2::new(grid.origin[0], grid.origin[1]);
    if cells.is_empty() {
        return OccupancyMap::empty(agent_id, timestamp, origin, grid.cell_size);
    }
    let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0, 0);
    for &(c, r) in cells {
        c0 = c0.min(c);
        r0 = r0.min(r);
        c1 = c1.max(c);
        r1 = r1.max(r);
    }
    let width = c1 - c0 + 1;
    let height = r1 - r0 + 1;
    let mut data = vec![0.0; width * height];
    for &(c, r) in cells {
        data[(r - r0) * width + (c - c0)] += mass_per_hit;
    }
    OccupancyMap {
        agent_id,
        timestamp,
        origin: origin + Vec2::new(c0 as f64 * grid.cell_size, r0 as f64 * grid.cell_size),
        cell_size: grid.cell_size,
        width,
        height,
        cells: data,
    }
}

fn stationary_maps(agent_id: AgentId, t0: f64, position: Vec2, config: &PredictorConfig) -> Vec<OccupancyMap> {
    let hit: Vec<(usize, usize)> = config.grid.cell_of(position).into_iter().collect();
    (0..=config.horizon)
        .map(|k| rasterize(agent_id, t0 + k as f64 * config.step, &config.grid, &hit, 1.0))
        .collect()
}

fn rollout_maps<R: Rng + ?Sized>(
    tracklet: &Tracklet,
    position: Vec2,
    velocity: Vec2,
    t0: f64,
    config: &PredictorConfig,
    rng: &mut R,
) -> Vec<OccupancyMap> {
    let speed = velocity.norm();
    let heading0 = velocity.y.atan2(velocity.x);

    let goals: Vec<Vec2> = if config.goals.is_empty() {
        // keep walking: a far point straight ahead
        vec![position + velocity / speed * (speed * config.step * config.horizon as f64 * 10.0 + 1.0)]
    } else {
        config.goals.iter().map(|g| Vec2::new(g[0], g[1])).collect()
    };
    let goal_weights: Vec<f64> = goals
        .iter()
        .map(|g| {
            let to_goal = g - position;
            let align = if to_goal.norm() < 1e-9 {
                -1.0
            } else {
                angle_diff(to_goal.y.atan2(to_goal.x), heading0).cos()
            };
            (config.goal_concentration * align).exp()
        })
        .collect();
    let goal_dist = WeightedIndex::new(&goal_weights).expect("goal weights are positive");

    let horizon = config.horizon;
    let mut hits: Vec<Vec<(usize, usize)>> = vec![Vec::with_capacity(config.samples); horizon];
    let mut scores = vec![0.0; config.actions.len()];
    for _ in 0..config.samples {
        let goal = goals[goal_dist.sample(rng)];
        let mut pos = position;
        let mut heading = heading0;
        for step_hits in hits.iter_mut() {
            let to_goal = goal - pos;
            let dist = to_goal.norm();
            if dist <= speed * config.step {
                pos = goal;
            } else {
                let bearing = to_goal.y.atan2(to_goal.x);
                let mut best = f64::NEG_INFINITY;
                for (s, a) in scores.iter_mut().zip(&config.actions) {
                    *s = angle_diff(heading + a.turn, bearing).cos() - config.speed_penalty * (a.speed_factor - 1.0).abs();
                    best = best.max(*s);
                }
                let mut total = 0.0;
                for s in scores.iter_mut() {
                    *s = ((*s - best) / config.temperature).exp();
                    total += *s;
                }
                let mut pick = rng.random::<f64>() * total;
                let mut chosen = config.actions.len() - 1;
                for (i, s) in scores.iter().enumerate() {
                    if pick < *s {
                        chosen = i;
                        break;
                    }
                    pick -= s;
                }
                let action = config.actions[chosen];
                heading += action.turn;
                let d = action.speed_factor * speed * config.step;
                pos += Vec2::new(heading.cos(), heading.sin()) * d;
            }
            if let Some(cell) = config.grid.cell_of(pos) {
                step_hits.push(cell);
            }
        }
    }

    let mass = 1.0 / config.samples as f64;
    let mut maps = Vec::with_capacity(horizon + 1);
    let here: Vec<(usize, usize)> = config.grid.cell_of(position).into_iter().collect();
    maps.push(rasterize(tracklet.agent_id, t0, &config.grid, &here, 1.0));
    for (k, step_hits) in hits.iter().enumerate() {
        let t = t0 + (k + 1) as f64 * config.step;
        maps.push(rasterize(tracklet.agent_id, t, &config.grid, step_hits, mass));
    }
    maps
}

/// Occupancy maps for every tracked agent, steps `0..=N_o` after each
/// agent's latest observation. Agents with a single sample, or moving slower
/// than `standing_speed`, get a zero-velocity prior.
pub fn predict<R: Rng + ?Sized>(
    store: &TrackletStore,
    config: &PredictorConfig,
    rng: &mut R,
) -> Result<Vec<AgentOccupancy>, PredictionError> {
    predict_filtered(store, config, rng, |_| true)
}

/// [`predict`] restricted to tracklets accepted by `keep`.
pub fn predict_filtered<R: Rng + ?Sized>(
    store: &TrackletStore,
    config: &PredictorConfig,
    rng: &mut R,
    keep: impl Fn(&Tracklet) -> bool,
) -> Result<Vec<AgentOccupancy>, PredictionError> {
    config.validate()?;
    let mut out = Vec::with_capacity(store.len());
    for tracklet in store.iter().filter(|t| keep(t)) {
        let Some((t0, position)) = tracklet.last() else {
            continue;
        };
        let maps = match tracklet.velocity() {
            Some(v) if v.norm() >= config.standing_speed => rollout_maps(tracklet, position, v, t0, config, rng),
            _ => stationary_maps(tracklet.agent_id, t0, position, config),
        };
        out.push(AgentOccupancy {
            agent_id: tracklet.agent_id,
            maps,
        });
    }
    Ok(out)
}

/// Disc centred on the most likely cell that covers every cell with
/// probability at least `p_o`. Ties for the maximum go to the lowest
/// row-major index.
pub fn extract_disc(map: &OccupancyMap, p_o: f64) -> Result<PredictedDisc, PredictionError> {
    if !(p_o > 0.0 && p_o <= 1.0) {
        return Err(PredictionError::InvalidThreshold(p_o));
    }
    let vacuous = PredictedDisc {
        center: map.origin,
        radius: 0.0,
        timestamp: map.timestamp,
        agent_id: map.agent_id,
        p_o,
        vacuous: true,
    };
    let mut arg = None;
    let mut best = 0.0;
    for (i, &p) in map.cells.iter().enumerate() {
        if p > best {
            best = p;
            arg = Some(i);
        }
    }
    let Some(arg) = arg else {
        return Ok(vacuous);
    };
    if best < p_o {
        return Ok(vacuous);
    }
    let center = map.cell_center(arg);
    let radius = map
        .cells
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= p_o)
        .map(|(i, _)| (map.cell_center(i) - center).norm())
        .fold(0.0, f64::max);
    Ok(PredictedDisc {
        center,
        radius,
        timestamp: map.timestamp,
        agent_id: map.agent_id,
        p_o,
        vacuous: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn map_from(width: usize, height: usize, cells: Vec<f64>) -> OccupancyMap {
        OccupancyMap {
            agent_id: AgentId(1),
            timestamp: 0.0,
            origin: Vec2::zeros(),
            cell_size: 0.1,
            width,
            height,
            cells,
        }
    }

    #[test]
    fn ingest_builds_tracklets() {
        let mut store = TrackletStore::new();
        store.ingest_observation(AgentId(3), 0.0, Vec2::new(1.0, 1.0)).unwrap();
        assert_eq!(store.get(AgentId(3)).unwrap().samples.len(), 1);
        let err = store.ingest_observation(AgentId(3), 0.0, Vec2::new(1.0, 1.1)).unwrap_err();
        assert!(matches!(err, PredictionError::OutOfOrder { .. }));
        store.ingest_observation(AgentId(4), 0.0, Vec2::new(0.0, 0.0)).unwrap();
        store.ingest_observation(AgentId(3), 0.1, Vec2::new(1.0, 1.1)).unwrap();
        store.ingest_observation(AgentId(4), 0.1, Vec2::new(0.1, 0.0)).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get(AgentId(3)).unwrap().samples.len(), 2);
        assert_eq!(store.get(AgentId(4)).unwrap().samples[1].1, Vec2::new(0.1, 0.0));
    }

    #[test]
    fn history_is_bounded() {
        let mut store = TrackletStore::with_history(4);
        for k in 0..10 {
            store.ingest_observation(AgentId(0), k as f64 * 0.1, Vec2::new(k as f64, 0.0)).unwrap();
        }
        let t = store.get(AgentId(0)).unwrap();
        assert_eq!(t.samples.len(), 4);
        assert_eq!(t.samples[3].1.x, 9.0);
    }

    #[test]
    fn single_cell_disc() {
        let mut cells = vec![0.0; 9];
        cells[4] = 1.0;
        let d = extract_disc(&map_from(3, 3, cells), 0.2).unwrap();
        assert!(!d.vacuous);
        assert_eq!(d.radius, 0.0);
        assert!((d.center - Vec2::new(0.15, 0.15)).norm() < 1e-12);
    }

    #[test]
    fn tied_block_uses_first_cell() {
        // 3x3 block of 0.25 inside a 5x5 map; brute force over the block
        let mut cells = vec![0.0; 25];
        let mut block = Vec::new();
        for r in 1..4 {
            for c in 1..4 {
                cells[r * 5 + c] = 0.25;
                block.push((c, r));
            }
        }
        let map = map_from(5, 5, cells);
        let d = extract_disc(&map, 0.2).unwrap();
        let first = Vec2::new(0.15, 0.15);
        assert!((d.center - first).norm() < 1e-12);
        let brute = block
            .iter()
            .map(|&(c, r)| (Vec2::new((c as f64 + 0.5) * 0.1, (r as f64 + 0.5) * 0.1) - first).norm())
            .fold(0.0, f64::max);
        assert!((d.radius - brute).abs() < 1e-12);
        assert!((d.radius - (0.08f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sub_threshold_neighbours_give_zero_radius() {
        let cells = vec![0.1, 0.15, 0.1, 0.05, 0.4, 0.05, 0.1, 0.05, 0.0];
        let d = extract_disc(&map_from(3, 3, cells), 0.2).unwrap();
        assert_eq!(d.radius, 0.0);
        assert!(!d.vacuous);
    }

    #[test]
    fn vacuous_maps() {
        let d = extract_disc(&map_from(2, 2, vec![0.0; 4]), 0.2).unwrap();
        assert!(d.vacuous && d.radius == 0.0 && d.center == Vec2::zeros());
        let d = extract_disc(&map_from(2, 2, vec![0.1; 4]), 0.2).unwrap();
        assert!(d.vacuous);
        let d = extract_disc(&OccupancyMap::empty(AgentId(0), 0.0, Vec2::new(1.0, 2.0), 0.1), 0.2).unwrap();
        assert!(d.vacuous && d.center == Vec2::new(1.0, 2.0));
        assert!(extract_disc(&map_from(1, 1, vec![1.0]), 0.0).is_err());
        assert!(extract_disc(&map_from(1, 1, vec![1.0]), 1.5).is_err());
    }

    fn open_grid() -> GridSpec {
        GridSpec::covering(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0), 0.1)
    }

    #[test]
    fn empty_store_predicts_nothing() {
        let cfg = PredictorConfig::new(5, 0.1, vec![], open_grid());
        let out = predict(&TrackletStore::new(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn single_observation_gets_zero_velocity_prior() {
        let mut store = TrackletStore::new();
        store.ingest_observation(AgentId(1), 2.0, Vec2::new(1.05, -0.95)).unwrap();
        let cfg = PredictorConfig::new(4, 0.1, vec![[5.0, 5.0]], open_grid());
        let out = predict(&store, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out[0].maps.len(), 5);
        for (k, m) in out[0].maps.iter().enumerate() {
            assert_eq!(m.cells, vec![1.0]);
            assert!((m.timestamp - (2.0 + 0.1 * k as f64)).abs() < 1e-12);
            let d = extract_disc(m, 0.2).unwrap();
            assert!((d.center - Vec2::new(1.05, -0.95)).norm() < 0.071);
        }
    }

    #[test]
    fn maps_are_probabilities() {
        let mut store = TrackletStore::new();
        store.ingest_observation(AgentId(1), 0.0, Vec2::new(9.5, 0.0)).unwrap();
        store.ingest_observation(AgentId(1), 0.1, Vec2::new(9.6, 0.0)).unwrap();
        let cfg = PredictorConfig::new(10, 0.1, vec![[20.0, 0.0], [9.6, 5.0]], open_grid());
        let out = predict(&store, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for m in &out[0].maps {
            assert!(m.cells.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!(m.total_mass() <= 1.0 + 1e-6);
        }
        // mass leaves the grid past x = 10
        assert!(out[0].maps[10].total_mass() < 1.0);
    }

    #[test]
    fn identical_seed_identical_maps() {
        let mut store = TrackletStore::new();
        store.ingest_observation(AgentId(1), 0.0, Vec2::new(0.0, 0.0)).unwrap();
        store.ingest_observation(AgentId(1), 0.1, Vec2::new(0.07, 0.07)).unwrap();
        let cfg = PredictorConfig::new(8, 0.1, vec![[5.0, 5.0], [5.0, -5.0]], open_grid());
        let a = predict(&store, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = predict(&store, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }
}
