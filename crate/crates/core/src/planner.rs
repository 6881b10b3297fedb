//! Receding-horizon planning over the trajectory library with a blended
//! criterion: a directive-region term steering plan endpoints toward the
//! goal, the learned trajectory cost, and the summed costmap cost,
//! interpolated by `phi`:
//!
//! `L = C_directive + (1 - phi) * C_learned + phi * sum_i C_costmap(tau_i)`
//!
//! plus the position-tracking controller that turns the chosen trajectory
//! into velocity commands.

use crate::costmap::{traj_cost, Costmap};
use crate::data::TrajectoryLibrary;
use crate::density::{Conditioning, ImitativeModel};
use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::world::{Action, Observation, RobotState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("goal coincides with the robot position; direction undefined")]
    GoalCoincident,
    #[error("trajectory library is empty")]
    EmptyLibrary,
    #[error(transparent)]
    Density(#[from] crate::density::DensityError),
}

/// Goal-ward rectangle: trajectories must end inside it or pay `delta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionParams {
    /// Full width of the rectangle, centered on the goal axis.
    pub width: f64,
    /// Distance from the robot to the near edge.
    pub offset: f64,
    /// Extent of the rectangle along the goal axis.
    pub length: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        // Center of the rectangle sits 3 m toward the goal; the near edge
        // at 1 m keeps the region reachable by the 2 m library horizon.
        RegionParams {
            width: 2.0,
            offset: 1.0,
            length: 4.0,
        }
    }
}

impl RegionParams {
    /// Closed-region membership test for a world point, with the rectangle
    /// axis running from `pose` toward `goal`.
    pub fn contains(&self, point: Vec2, position: Vec2, goal: Vec2) -> Result<bool, PlanError> {
        let axis = (goal - position).unit().ok_or(PlanError::GoalCoincident)?;
        let rel = point - position;
        let along = rel.dot(axis);
        let lateral = rel.cross(axis).abs();
        Ok(along >= self.offset && along <= self.offset + self.length && lateral <= self.width / 2.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingGains {
    pub kp: f64,
    pub kd: f64,
    /// Track the first waypoint at least this far ahead.
    pub lookahead: f64,
    /// Linear command per meter of waypoint distance.
    pub v_gain: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        TrackingGains {
            kp: 2.2,
            kd: 0.3,
            lookahead: 0.5,
            v_gain: 1.5,
            v_max: 1.0,
            omega_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Blend between the learned cost (0) and the costmap cost (1).
    pub phi: f64,
    /// Directive penalty; anything above twice the cost bound makes region
    /// membership dominate.
    pub delta: f64,
    /// Bound on the learned cost magnitude (log-density ceiling).
    pub eta: f64,
    /// Replanning frequency in Hz.
    pub replan_hz: f64,
    pub region: RegionParams,
    pub gains: TrackingGains,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            phi: 0.75,
            delta: 129.0,
            eta: 64.0,
            replan_hz: 1.0,
            region: RegionParams::default(),
            gains: TrackingGains::default(),
        }
    }
}

/// Per-candidate cost terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub directive: f64,
    pub learned: f64,
    pub costmap_sum: f64,
    pub total: f64,
    /// Set when log_prob was non-finite and the learned term fell back to
    /// its floor value.
    pub non_finite_floored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub chosen_index: usize,
    pub chosen_local: Vec<Vec2>,
    pub chosen_world: Vec<Vec2>,
    pub breakdown: Vec<CostBreakdown>,
}

/// 0 when the final point of the trajectory lies inside the (closed)
/// directive rectangle, `delta` otherwise.
pub fn directive_cost(
    traj_world: &[Vec2],
    pose: &Pose,
    goal: Vec2,
    region: &RegionParams,
    delta: f64,
) -> Result<f64, PlanError> {
    let last = *traj_world.last().expect("trajectory must be nonempty");
    Ok(if region.contains(last, pose.position, goal)? {
        0.0
    } else {
        delta
    })
}

/// The blend itself, kept separate so the arithmetic is testable in
/// isolation.
pub fn combine_terms(directive: f64, learned: f64, costmap_sum: f64, phi: f64) -> f64 {
    directive + (1.0 - phi) * learned + phi * costmap_sum
}

/// Score one local-frame candidate. The learned term is
/// `min(-log_prob, eta)` (the log-density is floored at `-eta` so both cost
/// terms share the range `[-eta, eta]`); a non-finite log-density falls back
/// to the floor and is flagged.
pub fn combined_cost(
    traj_local: &[Vec2],
    pose: &Pose,
    cond: &Conditioning,
    model: &ImitativeModel,
    costmap: &Costmap,
    goal: Vec2,
    config: &PlannerConfig,
) -> Result<CostBreakdown, PlanError> {
    let traj_world: Vec<Vec2> = traj_local.iter().map(|p| pose.to_world(*p)).collect();
    let directive = directive_cost(&traj_world, pose, goal, &config.region, config.delta)?;
    let (learned, non_finite_floored) = match model.log_prob(cond, traj_local) {
        Ok(lp) if lp.is_finite() => ((-lp).min(config.eta), false),
        _ => (config.eta, true),
    };
    let costmap_sum = traj_cost(costmap, &traj_world);
    let total = combine_terms(directive, learned, costmap_sum, config.phi);
    Ok(CostBreakdown {
        directive,
        learned,
        costmap_sum,
        total,
        non_finite_floored,
    })
}

/// Evaluate every library candidate and return the argmin (ties break to
/// the lowest candidate index). The observation is encoded once and shared
/// across candidates.
pub fn plan(
    library: &TrajectoryLibrary,
    model: &ImitativeModel,
    costmap: &Costmap,
    observation: &Observation,
    goal: Vec2,
    config: &PlannerConfig,
) -> Result<Plan, PlanError> {
    if library.is_empty() {
        return Err(PlanError::EmptyLibrary);
    }
    let pose = Pose {
        position: observation.position,
        heading: observation.heading,
    };
    let cond = model.encode(&observation.patch, &observation.past_positions)?;
    let mut breakdown = Vec::with_capacity(library.len());
    for candidate in &library.centroids {
        breakdown.push(combined_cost(
            candidate, &pose, &cond, model, costmap, goal, config,
        )?);
    }
    // Strict less keeps the lowest index on ties.
    let mut best = 0usize;
    for (i, b) in breakdown.iter().enumerate() {
        if b.total < breakdown[best].total {
            best = i;
        }
    }
    let chosen_local = library.centroids[best].clone();
    let chosen_world = chosen_local.iter().map(|p| pose.to_world(*p)).collect();
    Ok(Plan {
        chosen_index: best,
        chosen_local,
        chosen_world,
        breakdown,
    })
}

/// Controller memory for the derivative term.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrackingMemory {
    prev: Option<(f64, f64)>,
}

/// Position-tracking controller: steer toward the first waypoint at least
/// `lookahead` ahead (or the final one), angular command from a PD law on
/// the heading error, linear command proportional to waypoint distance and
/// gated by the heading error so the robot slows through turns its bounded
/// turn rate could not otherwise make.
pub fn track(
    waypoints: &[Vec2],
    state: &RobotState,
    gains: &TrackingGains,
    memory: &mut TrackingMemory,
) -> Action {
    let pos = state.pose.position;
    let target = waypoints
        .iter()
        .find(|p| p.distance(pos) >= gains.lookahead)
        .or_else(|| waypoints.last())
        .copied()
        .unwrap_or(pos);
    let dist = target.distance(pos);
    if dist < 1e-9 {
        memory.prev = Some((state.time, 0.0));
        return Action::STOP;
    }
    let bearing = (target - pos).angle();
    let error = wrap_angle(bearing - state.pose.heading);
    let rate = match memory.prev {
        Some((t, e)) if state.time > t => (error - e) / (state.time - t),
        _ => 0.0,
    };
    memory.prev = Some((state.time, error));
    let omega = (gains.kp * error + gains.kd * rate).clamp(-gains.omega_max, gains.omega_max);
    let v = (gains.v_gain * dist).clamp(0.0, gains.v_max) * error.cos().max(0.0);
    Action::new(v, omega)
}
