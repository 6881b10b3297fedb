//! Sticky-action random driving with collision-triggered respawns.

use super::DataError;
use crate::geometry::{Pose, Vec2};
use crate::rng::{seeded_rng, split_seed};
use crate::world::{
    detect_collision, step, Action, CollisionEvent, MotionSample, RobotState, SimParams, WorldSpec,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectParams {
    /// Sticky action hold duration is uniform in [min, max] seconds.
    pub sticky_min: f64,
    pub sticky_max: f64,
    /// Required clearance to rigid obstacles when spawning.
    pub spawn_clearance: f64,
    /// Keep spawns this far inside the geofence.
    pub spawn_fence_margin: f64,
    pub max_spawn_tries: usize,
}

impl Default for CollectParams {
    fn default() -> Self {
        CollectParams {
            sticky_min: 1.0,
            sticky_max: 3.0,
            spawn_clearance: 0.5,
            spawn_fence_margin: 1.0,
            max_spawn_tries: 1000,
        }
    }
}

/// One simulator tick of the raw log: the pose at `time` and the action
/// commanded from it. Observations are not stored; they are reproducible
/// from (world, pose, step index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogStep {
    pub time: f64,
    pub pose: Pose,
    pub commanded: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RespawnMark {
    /// Index of the first log step taken from the new pose.
    pub step_index: usize,
    pub time: f64,
}

/// Raw collection log for one world.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectLog {
    pub world: WorldSpec,
    pub seed: u64,
    pub f_sim: f64,
    pub steps: Vec<LogStep>,
    pub collisions: Vec<(usize, CollisionEvent)>,
    pub respawns: Vec<RespawnMark>,
}

/// Sample a collision-free pose: clearance to rigid obstacles plus a margin
/// to the fence; heading uniform.
pub fn sample_free_pose(
    world: &WorldSpec,
    rng: &mut impl Rng,
    clearance: f64,
    fence_margin: f64,
    max_tries: usize,
) -> Result<Pose, DataError> {
    let hx = world.extent.x / 2.0 - fence_margin;
    let hy = world.extent.y / 2.0 - fence_margin;
    for _ in 0..max_tries {
        let p = Vec2::new(rng.gen_range(-hx..=hx), rng.gen_range(-hy..=hy));
        if world.rigid_clearance(p) >= clearance {
            let heading = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
            return Ok(Pose {
                position: p,
                heading: crate::geometry::wrap_angle(heading),
            });
        }
    }
    Err(DataError::NoFreePose(max_tries))
}

/// Drive `steps` simulator ticks of sticky random actions. Actions come from
/// the discrete grid and are held for a seeded duration; any collision event
/// respawns the robot at a fresh free pose and restarts the action. The
/// global clock keeps running across respawns so the log stays time-ordered.
pub fn collect(
    world: &WorldSpec,
    steps: usize,
    seed: u64,
    sim: &SimParams,
    params: &CollectParams,
) -> Result<CollectLog, DataError> {
    assert!(steps > 0, "steps must be positive");
    let mut policy_rng = seeded_rng(split_seed(seed, "collect-policy"));
    let mut spawn_rng = seeded_rng(split_seed(seed, "collect-spawn"));
    let grid = Action::discrete_grid();
    let dt = sim.dt();

    let pose = sample_free_pose(
        world,
        &mut spawn_rng,
        params.spawn_clearance,
        params.spawn_fence_margin,
        params.max_spawn_tries,
    )?;
    let mut state = RobotState { pose, time: 0.0 };
    let mut action = Action::STOP;
    let mut hold_until = 0.0;
    let mut segment_history: Vec<MotionSample> = Vec::new();

    let mut log = CollectLog {
        world: world.clone(),
        seed,
        f_sim: sim.f_sim,
        steps: Vec::with_capacity(steps),
        collisions: Vec::new(),
        respawns: Vec::new(),
    };

    for i in 0..steps {
        if state.time >= hold_until {
            action = grid[policy_rng.gen_range(0..grid.len())];
            hold_until =
                state.time + policy_rng.gen_range(params.sticky_min..=params.sticky_max);
        }
        log.steps.push(LogStep {
            time: state.time,
            pose: state.pose,
            commanded: action,
        });
        state = step(world, &state, action, dt);
        segment_history.push(MotionSample {
            time: state.time,
            position: state.pose.position,
            commanded_speed: action.linear,
        });
        if let Some(event) = detect_collision(&segment_history, sim) {
            log.collisions.push((i, event));
            let pose = sample_free_pose(
                world,
                &mut spawn_rng,
                params.spawn_clearance,
                params.spawn_fence_margin,
                params.max_spawn_tries,
            )?;
            state = RobotState {
                pose,
                time: state.time,
            };
            log.respawns.push(RespawnMark {
                step_index: i + 1,
                time: state.time,
            });
            segment_history.clear();
            hold_until = state.time;
        }
    }
    Ok(log)
}
