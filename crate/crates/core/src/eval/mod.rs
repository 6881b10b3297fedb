//! Benchmark harness: seeded episode specs shared across methods, a closed
//! loop episode runner, baseline policies, a map-privileged reference
//! planner for normalization, the blend-weight sweep, and sensor-channel
//! ablations.

mod bc;
mod episode;
mod metrics;
mod oracle;

pub use bc::{read_bc, train_bc, BcConfig, BcModel, BC_MAGIC};
pub use bc::write_bc;
pub use episode::{run_episode, Policy, SensorRig};
pub use episode::{BcPolicy, OraclePolicy, PlannerPolicy, RandomPolicy, StraightPolicy};
pub use metrics::{
    ablate_channels, binomial_half_width, evaluate_methods, evaluate_methods_against,
    make_episode_specs, report_csv, run_oracle, sweep_csv, sweep_phi, AblationReport,
    MethodRunner, OracleRun, SweepPoint,
};
pub use oracle::{astar_path, path_length};

use crate::world::CollisionKind;
use crate::geometry::{Pose, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Density(#[from] crate::density::DensityError),
    #[error(transparent)]
    Plan(#[from] crate::planner::PlanError),
    #[error("missing artifact: {0}")]
    MissingArtifact(&'static str),
    #[error("eval file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The policies under comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Full blended planner at the given phi.
    Hybrid { phi: f64 },
    /// Blended planner at phi = 0 (learned cost only).
    LearnerOnly,
    /// Blended planner at phi = 1 (costmap cost only).
    CostmapOnly,
    /// Goal-conditioned behavior cloning.
    Bc,
    /// Tracks the straight segment to the goal; blind to perception.
    Straight,
    /// Uniform random actions from the discrete grid.
    Random,
    /// Map-privileged grid search plus the shared tracking controller.
    Oracle,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Hybrid { .. } => "hybrid",
            Method::LearnerOnly => "learner_only",
            Method::CostmapOnly => "costmap_only",
            Method::Bc => "bc",
            Method::Straight => "straight",
            Method::Random => "random",
            Method::Oracle => "oracle",
        }
    }

    /// Blend weight the planner runs at, when the method is planner-based.
    pub fn phi(&self, default_phi: f64) -> Option<f64> {
        match self {
            Method::Hybrid { phi } => Some(*phi),
            Method::LearnerOnly => Some(0.0),
            Method::CostmapOnly => Some(1.0),
            _ => {
                let _ = default_phi;
                None
            }
        }
    }

    pub fn parse(s: &str, phi: f64) -> Option<Method> {
        Some(match s {
            "hybrid" => Method::Hybrid { phi },
            "learner_only" => Method::LearnerOnly,
            "costmap_only" => Method::CostmapOnly,
            "bc" => Method::Bc,
            "straight" => Method::Straight,
            "random" => Method::Random,
            "oracle" => Method::Oracle,
            _ => return None,
        })
    }
}

/// One benchmark episode: where the robot starts, where it must go, and the
/// seeds that make the run reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub world_index: usize,
    pub world_seed: u64,
    pub start: Pose,
    pub goal: Vec2,
    pub timeout: f64,
    pub goal_radius: f64,
    /// Seed for per-episode randomness (sensor noise, random policy).
    pub episode_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EpisodeOutcome {
    Success,
    Collision(CollisionKind),
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub outcome: EpisodeOutcome,
    pub path_length: f64,
    pub elapsed: f64,
    /// Where the episode ended; useful for failure diagnostics.
    pub final_position: Vec2,
}

/// Aggregate over one method on one spec list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// Blend weight for planner-based methods.
    pub phi: Option<f64>,
    pub environment: String,
    pub episodes: usize,
    pub successes: usize,
    pub stuck: usize,
    pub trapped: usize,
    pub timeouts: usize,
    pub raw_rate: f64,
    /// Success rate of the map-privileged reference on identical specs.
    pub oracle_rate: f64,
    /// raw_rate / oracle_rate.
    pub normalized_rate: f64,
    /// 95% binomial half-width on the raw rate.
    pub ci_half_width: f64,
}

/// Episode-generation and termination constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub episodes: usize,
    pub timeout: f64,
    pub goal_radius: f64,
    /// Goals are sampled at least this far from the start.
    pub min_goal_dist: f64,
    pub spawn_clearance: f64,
    pub fence_margin: f64,
    /// Grid resolution of the map-privileged reference planner.
    pub oracle_resolution: f64,
    /// Clearance the reference planner keeps to rigid obstacles.
    pub oracle_clearance: f64,
    pub seed: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            episodes: 100,
            timeout: 120.0,
            goal_radius: 2.0,
            min_goal_dist: 10.0,
            spawn_clearance: 0.5,
            fence_margin: 1.0,
            oracle_resolution: 0.5,
            oracle_clearance: 0.3,
            seed: 0,
        }
    }
}
