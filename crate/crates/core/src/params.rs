use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::qp::ControlBox;

/// How much of the selected edge is executed before replanning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CommitHorizon {
    /// One control per cycle.
    #[default]
    Single,
    /// The whole first edge of the selected path.
    Segment,
}

impl FromStr for CommitHorizon {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(CommitHorizon::Single),
            "Ns" | "ns" | "NS" => Ok(CommitHorizon::Segment),
            other => Err(format!("commit horizon must be `1` or `Ns`, got `{other}`")),
        }
    }
}

impl fmt::Display for CommitHorizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommitHorizon::Single => "1",
            CommitHorizon::Segment => "Ns",
        })
    }
}

impl TryFrom<String> for CommitHorizon {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CommitHorizon> for String {
    fn from(c: CommitHorizon) -> String {
        c.to_string()
    }
}

/// Planner, controller and predictor settings. Defaults: `T_s = 0.1`,
/// `N_s = 7`, `beta = 100`, `ell = 0.1`, `H = diag(1e5, 1e5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    /// Sampling time `T_s` [s].
    pub ts: f64,
    /// Euler steps per tree edge, `N_s`.
    pub segment_steps: usize,
    /// Prediction horizon `N_o` in steps.
    pub horizon: usize,
    pub a1: f64,
    pub a2: f64,
    pub sigma_theta: f64,
    pub a_omega: f64,
    /// Lower end of the uniform `v_ref` draw [m/s].
    pub v_sample_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub p_o: f64,
    /// Only obstacles this close to the queried state produce rows [m].
    pub cutoff: f64,
    /// Grow attempts per cycle in simulation mode.
    pub node_budget: usize,
    /// Growth stops for the cycle once the tree holds this many vertices.
    pub max_tree_size: usize,
    pub seed: u64,
    pub beta: f64,
    pub ell: f64,
    pub robot_radius: f64,
    pub qp_weights: [f64; 2],
    pub h_floor: f64,
    pub commit_horizon: CommitHorizon,
    /// Caps the effective CBF rate at `0.5 / T_s`, so one Euler step keeps
    /// at least half of `h` and never reaches zero from a positive value.
    pub sampled_data_guard: bool,
    /// Trajectories sampled per agent by the predictor.
    pub prediction_samples: usize,
    /// Agents farther than this from the robot are not predicted [m].
    pub prediction_range: f64,
    /// Body radius assumed for every pedestrian when inflating predicted discs [m].
    pub agent_radius: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            ts: 0.1,
            segment_steps: 7,
            horizon: 5,
            a1: 1.0,
            a2: 1.5,
            sigma_theta: 1.0,
            a_omega: 0.2,
            v_sample_min: 0.2,
            v_max: 0.33,
            omega_max: 0.3,
            p_o: 0.2,
            cutoff: 5.0,
            node_budget: 40,
            max_tree_size: 2000,
            seed: 0,
            beta: 100.0,
            ell: 0.1,
            robot_radius: 0.25,
            qp_weights: [1e5, 1e5],
            h_floor: 1e-3,
            commit_horizon: CommitHorizon::Single,
            sampled_data_guard: true,
            prediction_samples: 128,
            prediction_range: 12.0,
            agent_radius: 0.25,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("ts", self.ts),
            ("a1", self.a1),
            ("a2", self.a2),
            ("sigma_theta", self.sigma_theta),
            ("a_omega", self.a_omega),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("p_o", self.p_o),
            ("cutoff", self.cutoff),
            ("beta", self.beta),
            ("ell", self.ell),
            ("robot_radius", self.robot_radius),
            ("h_floor", self.h_floor),
            ("prediction_range", self.prediction_range),
        ];
        if !(self.agent_radius >= 0.0) || !self.agent_radius.is_finite() {
            return Err(format!("parameter `agent_radius` must be non-negative, got {}", self.agent_radius));
        }
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(format!("parameter `{name}` must be positive and finite, got {value}"));
            }
        }
        if self.segment_steps == 0 || self.horizon == 0 || self.prediction_samples == 0 || self.max_tree_size == 0 {
            return Err("segment_steps, horizon, prediction_samples and max_tree_size must be at least 1".into());
        }
        if self.p_o > 1.0 {
            return Err(format!("p_o must not exceed 1, got {}", self.p_o));
        }
        if !(self.v_sample_min >= 0.0 && self.v_sample_min <= self.v_max) {
            return Err(format!("v_sample_min must lie in [0, v_max], got {}", self.v_sample_min));
        }
        if self.qp_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err("qp_weights must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Rate used in the steering rows.
    pub fn effective_beta(&self) -> f64 {
        if self.sampled_data_guard {
            self.beta.min(0.5 / self.ts)
        } else {
            self.beta
        }
    }

    /// QP box: the controller may brake to a stop but never reverses.
    pub fn control_box(&self) -> ControlBox {
        ControlBox {
            v_min: 0.0,
            v_max: self.v_max,
            omega_min: -self.omega_max,
            omega_max: self.omega_max,
        }
    }

    pub fn commit_steps(&self) -> usize {
        match self.commit_horizon {
            CommitHorizon::Single => 1,
            CommitHorizon::Segment => self.segment_steps,
        }
    }
}

/// Partial override of [`PlannerParams`]; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_sample_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_o: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tree_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qp_weights: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commit_horizon: Option<CommitHorizon>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampled_data_guard: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent_radius: Option<f64>,
}

macro_rules! apply_fields {
    ($src:expr, $dst:expr, $($field:ident),* $(,)?) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )*
    };
}

impl ParamOverrides {
    pub fn apply(&self, params: &mut PlannerParams) {
        apply_fields!(
            self, params, ts, segment_steps, horizon, a1, a2, sigma_theta, a_omega, v_sample_min, v_max,
            omega_max, p_o, cutoff, node_budget, max_tree_size, seed, beta, ell, robot_radius, qp_weights, h_floor,
            commit_horizon, sampled_data_guard, prediction_samples, prediction_range, agent_radius,
        );
    }

    pub fn is_empty(&self) -> bool {
        *self == ParamOverrides::default()
    }
}
