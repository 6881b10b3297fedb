//! Closed-loop episode execution and the policies under test.

use super::bc::BcModel;
use super::oracle::astar_path;
use super::{EpisodeOutcome, EpisodeResult, EpisodeSpec};
use crate::costmap::{build_raw, normalize, GridSpec, NormalizeMode};
use crate::data::TrajectoryLibrary;
use crate::density::ImitativeModel;
use crate::geometry::{wrap_angle, Vec2};
use crate::planner::{plan, track, Plan, PlannerConfig, TrackingGains, TrackingMemory};
use crate::rng::{seeded_rng, split_seed_indexed};
use crate::world::{
    detect_collision, raycast_lidar, render_patch, step, Action, MotionSample, Observation,
    RobotState, SimParams, WorldSpec,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Builds observations on demand and maintains the 5 Hz pose history the
/// encoder conditions on. Patch noise is seeded per (episode, step) so a
/// rerun reproduces every observation bit-exactly.
pub struct SensorRig<'a> {
    world: &'a WorldSpec,
    sim: &'a SimParams,
    episode_seed: u64,
    h_past: usize,
    step_index: u64,
    pose_ring: Vec<Vec2>,
}

impl<'a> SensorRig<'a> {
    pub fn new(
        world: &'a WorldSpec,
        sim: &'a SimParams,
        episode_seed: u64,
        h_past: usize,
        start: Vec2,
    ) -> Self {
        SensorRig {
            world,
            sim,
            episode_seed,
            h_past,
            step_index: 0,
            pose_ring: vec![start],
        }
    }

    fn record_frame(&mut self, position: Vec2) {
        self.pose_ring.push(position);
        let max = self.h_past + 1;
        if self.pose_ring.len() > max {
            let excess = self.pose_ring.len() - max;
            self.pose_ring.drain(0..excess);
        }
    }

    /// Full observation at the current pose. Past positions are the last
    /// `h_past` trajectory-framerate positions in the robot frame (padded
    /// with the oldest known position at episode start), ending at the
    /// origin.
    pub fn observe(&self, state: &RobotState) -> Observation {
        let pointcloud = raycast_lidar(self.world, state, self.sim);
        let noise_seed = split_seed_indexed(self.episode_seed, "obs-noise", self.step_index);
        let patch = render_patch(self.world, state, noise_seed, self.sim);
        let mut past_world: Vec<Vec2> = Vec::with_capacity(self.h_past);
        let n = self.pose_ring.len();
        for i in 0..self.h_past {
            // Ring holds the most recent frames; pad the front.
            let idx = (n + i).saturating_sub(self.h_past);
            let idx = idx.min(n - 1);
            past_world.push(self.pose_ring[idx]);
        }
        // The current position is the final frame by construction.
        *past_world.last_mut().unwrap() = state.pose.position;
        let past_positions = past_world
            .iter()
            .map(|p| state.pose.to_local(*p))
            .collect();
        Observation {
            position: state.pose.position,
            heading: state.pose.heading,
            pointcloud,
            patch,
            past_positions,
        }
    }
}

/// A navigation policy driven at the simulator rate; policies replan on
/// their own cadence using the rig.
pub trait Policy {
    fn act(&mut self, state: &RobotState, goal: Vec2, rig: &SensorRig) -> Action;
}

/// Run one episode: success when the robot enters the goal radius before
/// the timeout with no collision event.
pub fn run_episode(
    world: &WorldSpec,
    policy: &mut dyn Policy,
    spec: &EpisodeSpec,
    sim: &SimParams,
    f_tau: f64,
    h_past: usize,
) -> EpisodeResult {
    let dt = sim.dt();
    let stride = (sim.f_sim / f_tau).round() as u64;
    let mut rig = SensorRig::new(world, sim, spec.episode_seed, h_past, spec.start.position);
    let mut state = RobotState {
        pose: spec.start,
        time: 0.0,
    };
    let mut history: Vec<MotionSample> = Vec::new();
    let mut path_length = 0.0;
    let max_steps = (spec.timeout * sim.f_sim).ceil() as u64;

    for i in 0..=max_steps {
        if state.pose.position.distance(spec.goal) <= spec.goal_radius {
            return EpisodeResult {
                outcome: EpisodeOutcome::Success,
                path_length,
                elapsed: state.time,
                final_position: state.pose.position,
            };
        }
        if state.time >= spec.timeout || i == max_steps {
            return EpisodeResult {
                outcome: EpisodeOutcome::Timeout,
                path_length,
                elapsed: state.time,
                final_position: state.pose.position,
            };
        }
        rig.step_index = i;
        if i > 0 && i % stride == 0 {
            rig.record_frame(state.pose.position);
        }
        let action = policy.act(&state, spec.goal, &rig);
        let next = step(world, &state, action, dt);
        path_length += next.pose.position.distance(state.pose.position);
        history.push(MotionSample {
            time: next.time,
            position: next.pose.position,
            commanded_speed: action.linear,
        });
        if let Some(event) = detect_collision(&history, sim) {
            return EpisodeResult {
                outcome: EpisodeOutcome::Collision(event.kind),
                path_length,
                elapsed: next.time,
                final_position: next.pose.position,
            };
        }
        state = next;
    }
    EpisodeResult {
        outcome: EpisodeOutcome::Timeout,
        path_length,
        elapsed: state.time,
        final_position: state.pose.position,
    }
}

/// The blended planner (and its phi = 0 / phi = 1 component ablations).
pub struct PlannerPolicy<'a> {
    model: &'a ImitativeModel,
    library: &'a TrajectoryLibrary,
    config: PlannerConfig,
    grid: GridSpec,
    mode: NormalizeMode,
    alpha: f64,
    next_replan: f64,
    current: Option<Plan>,
    memory: TrackingMemory,
}

impl<'a> PlannerPolicy<'a> {
    pub fn new(
        model: &'a ImitativeModel,
        library: &'a TrajectoryLibrary,
        config: PlannerConfig,
        grid: GridSpec,
        mode: NormalizeMode,
        alpha: f64,
    ) -> Self {
        PlannerPolicy {
            model,
            library,
            config,
            grid,
            mode,
            alpha,
            next_replan: 0.0,
            current: None,
            memory: TrackingMemory::default(),
        }
    }
}

impl Policy for PlannerPolicy<'_> {
    fn act(&mut self, state: &RobotState, goal: Vec2, rig: &SensorRig) -> Action {
        if state.time >= self.next_replan - 1e-9 {
            let obs = rig.observe(state);
            let raw = build_raw(&obs.pointcloud, &state.pose, &self.grid);
            let costmap = normalize(&raw, self.alpha, self.mode);
            self.current = plan(
                self.library,
                self.model,
                &costmap,
                &obs,
                goal,
                &self.config,
            )
            .ok();
            self.next_replan = state.time + 1.0 / self.config.replan_hz;
        }
        match &self.current {
            Some(p) => track(&p.chosen_world, state, &self.config.gains, &mut self.memory),
            None => Action::STOP,
        }
    }
}

/// Tracks the straight segment to the goal; no perception.
pub struct StraightPolicy {
    gains: TrackingGains,
    memory: TrackingMemory,
}

impl StraightPolicy {
    pub fn new(gains: TrackingGains) -> Self {
        StraightPolicy {
            gains,
            memory: TrackingMemory::default(),
        }
    }
}

impl Policy for StraightPolicy {
    fn act(&mut self, state: &RobotState, goal: Vec2, _rig: &SensorRig) -> Action {
        track(&[goal], state, &self.gains, &mut self.memory)
    }
}

/// Uniform random action from the discrete grid, redrawn at the replanning
/// cadence.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    grid: Vec<Action>,
    resample_period: f64,
    current: Action,
    next_resample: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, resample_hz: f64) -> Self {
        RandomPolicy {
            rng: seeded_rng(seed),
            grid: Action::discrete_grid(),
            resample_period: 1.0 / resample_hz,
            current: Action::STOP,
            next_resample: 0.0,
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, state: &RobotState, _goal: Vec2, _rig: &SensorRig) -> Action {
        if state.time >= self.next_resample - 1e-9 {
            self.current = self.grid[self.rng.gen_range(0..self.grid.len())];
            self.next_resample = state.time + self.resample_period;
        }
        self.current
    }
}

/// Behavior cloning: predicts the next trajectory-frame displacement from
/// (patch, past, goal direction) and converts it to velocities.
pub struct BcPolicy<'a> {
    model: &'a BcModel,
    f_tau: f64,
    /// Goal input magnitude: the horizon reach in meters.
    reach: f64,
    v_max: f64,
    omega_max: f64,
    current: Action,
    next_replan: f64,
}

impl<'a> BcPolicy<'a> {
    pub fn new(model: &'a BcModel, f_tau: f64, reach: f64, v_max: f64, omega_max: f64) -> Self {
        BcPolicy {
            model,
            f_tau,
            reach,
            v_max,
            omega_max,
            current: Action::STOP,
            next_replan: 0.0,
        }
    }
}

impl Policy for BcPolicy<'_> {
    fn act(&mut self, state: &RobotState, goal: Vec2, rig: &SensorRig) -> Action {
        if state.time >= self.next_replan - 1e-9 {
            let obs = rig.observe(state);
            let goal_local = state.pose.to_local(goal);
            let goal_input = goal_local
                .unit()
                .map(|u| u * self.reach)
                .unwrap_or(Vec2::ZERO);
            self.current = match self.model.predict(&obs.patch, &obs.past_positions, goal_input)
            {
                Ok(disp) => {
                    let v = (disp.norm() * self.f_tau).clamp(0.0, self.v_max);
                    let bearing = if disp.norm() > 1e-9 { disp.angle() } else { 0.0 };
                    let omega = (2.2 * wrap_angle(bearing)).clamp(-self.omega_max, self.omega_max);
                    Action::new(v, omega)
                }
                Err(_) => Action::STOP,
            };
            self.next_replan = state.time + 1.0 / self.f_tau;
        }
        self.current
    }
}

/// Map-privileged reference: grid search over the true traversability grid,
/// tracked by the same controller as the planners. Used only to normalize
/// success rates.
pub struct OraclePolicy {
    resolution: f64,
    clearance: f64,
    gains: TrackingGains,
    path: Option<Vec<Vec2>>,
    planned: bool,
    progress: usize,
    memory: TrackingMemory,
}

impl OraclePolicy {
    pub fn new(resolution: f64, clearance: f64, gains: TrackingGains) -> Self {
        OraclePolicy {
            resolution,
            clearance,
            gains,
            path: None,
            planned: false,
            progress: 0,
        memory: TrackingMemory::default(),
        }
    }
}

impl Policy for OraclePolicy {
    fn act(&mut self, state: &RobotState, goal: Vec2, rig: &SensorRig) -> Action {
        if !self.planned {
            self.path = astar_path(
                rig.world,
                state.pose.position,
                goal,
                self.resolution,
                self.clearance,
            );
            self.planned = true;
        }
        match &self.path {
            Some(path) => {
                // Snap progress to the nearest waypoint in a forward window
                // so an off-path excursion cannot leave the target behind
                // the robot.
                let pos = state.pose.position;
                let window_end = (self.progress + 40).min(path.len());
                let mut best = self.progress;
                let mut best_d = f64::INFINITY;
                for (i, p) in path[self.progress..window_end].iter().enumerate() {
                    let d = p.distance(pos);
                    if d < best_d {
                        best_d = d;
                        best = self.progress + i;
                    }
                }
                self.progress = best;
                track(&path[self.progress..], state, &self.gains, &mut self.memory)
            }
            // No path: stand still and let the episode time out, recording
            // the oracle failure.
            None => Action::STOP,
        }
    }
}
