//! Deterministic 2D obstacle world: procedural generation, differential-drive
//! kinematics, planar range sensing, an egocentric appearance+height patch,
//! and the stuck/trapped collision heuristics.

mod gen;
mod io;
mod sim;

pub use gen::{generate_world, WorldGenParams};
pub use io::{read_world, write_world};
pub use sim::{detect_collision, raycast_lidar, render_patch, step};

use crate::geometry::{wrap_angle, Pose, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("obstacle placement failed for kind {kind:?} after {tries} tries; lower the `{density_param}` density or raise the extent")]
    PlacementFailed {
        kind: ObstacleKind,
        tries: usize,
        density_param: &'static str,
    },
    #[error("extent {0}x{1} m is below the 20x20 m minimum")]
    ExtentTooSmall(f64, f64),
    #[error("no free pose found after {0} tries")]
    NoFreePose(usize),
    #[error("world file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which obstacle classes a world draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionProfile {
    InDistribution,
    OutOfDistribution,
}

impl DistributionProfile {
    pub fn label(self) -> &'static str {
        match self {
            DistributionProfile::InDistribution => "in_distribution",
            DistributionProfile::OutOfDistribution => "out_of_distribution",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in_distribution" | "id" => Some(DistributionProfile::InDistribution),
            "out_of_distribution" | "ood" => Some(DistributionProfile::OutOfDistribution),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Tree,
    Rock,
    Grass,
    Bush,
    Wall,
    Novel,
}

impl ObstacleKind {
    pub fn label(self) -> &'static str {
        match self {
            ObstacleKind::Tree => "tree",
            ObstacleKind::Rock => "rock",
            ObstacleKind::Grass => "grass",
            ObstacleKind::Bush => "bush",
            ObstacleKind::Wall => "wall",
            ObstacleKind::Novel => "novel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tree" => ObstacleKind::Tree,
            "rock" => ObstacleKind::Rock,
            "grass" => ObstacleKind::Grass,
            "bush" => ObstacleKind::Bush,
            "wall" => ObstacleKind::Wall,
            "novel" => ObstacleKind::Novel,
            _ => return None,
        })
    }

    /// Only grass can be driven over.
    pub fn traversable(self) -> bool {
        matches!(self, ObstacleKind::Grass)
    }
}

/// Ground footprint of an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Footprint {
    Circle { radius: f64 },
    Rect { half_extents: Vec2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub center: Vec2,
    pub footprint: Footprint,
    pub height: f64,
    pub appearance: [f64; 3],
    pub traversable: bool,
}

impl Obstacle {
    /// True when the point lies strictly inside the footprint.
    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        match self.footprint {
            Footprint::Circle { radius } => d.norm_sq() < radius * radius,
            Footprint::Rect { half_extents } => {
                d.x.abs() < half_extents.x && d.y.abs() < half_extents.y
            }
        }
    }

    /// Signed distance from the point to the footprint boundary (negative inside).
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let d = p - self.center;
        match self.footprint {
            Footprint::Circle { radius } => d.norm() - radius,
            Footprint::Rect { half_extents } => {
                let qx = d.x.abs() - half_extents.x;
                let qy = d.y.abs() - half_extents.y;
                let outside = Vec2::new(qx.max(0.0), qy.max(0.0)).norm();
                outside + qx.max(qy).min(0.0)
            }
        }
    }

    /// Smallest t >= 0 with origin + t*dir on the footprint boundary.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self.footprint {
            Footprint::Circle { radius } => {
                let oc = origin - self.center;
                let b = oc.dot(dir);
                let c = oc.norm_sq() - radius * radius;
                if c <= 0.0 {
                    // Origin inside the circle: the exit point is the hit.
                    let disc = b * b - c;
                    return Some(-b + disc.sqrt());
                }
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                if t >= 0.0 {
                    Some(t)
                } else {
                    None
                }
            }
            Footprint::Rect { half_extents } => {
                slab_hit(origin - self.center, dir, half_extents)
            }
        }
    }

    /// Loose world-frame bounding radius, used by the spatial index.
    pub fn bound_radius(&self) -> f64 {
        match self.footprint {
            Footprint::Circle { radius } => radius,
            Footprint::Rect { half_extents } => half_extents.norm(),
        }
    }
}

/// Slab test against an axis-aligned box centered at the origin.
fn slab_hit(origin: Vec2, dir: Vec2, half: Vec2) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for (o, d, h) in [(origin.x, dir.x, half.x), (origin.y, dir.y, half.y)] {
        if d.abs() < 1e-15 {
            if o.abs() > h {
                return None;
            }
        } else {
            let mut t0 = (-h - o) / d;
            let mut t1 = (h - o) / d;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
        }
    }
    if t_near > t_far || t_far < 0.0 {
        return None;
    }
    if t_near >= 0.0 {
        Some(t_near)
    } else {
        Some(t_far)
    }
}

/// Procedurally generated obstacle field inside an enclosed rectangular
/// geofence centered at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    /// Geofence width and height in meters; the fence is centered at (0, 0).
    pub extent: Vec2,
    pub obstacles: Vec<Obstacle>,
    /// Linear-velocity multiplier while the robot center is inside grass.
    pub grass_slowdown: f64,
    pub profile: DistributionProfile,
}

impl WorldSpec {
    /// Empty world, mainly for tests.
    pub fn empty(extent: Vec2) -> Self {
        WorldSpec {
            seed: 0,
            extent,
            obstacles: Vec::new(),
            grass_slowdown: 1.0,
            profile: DistributionProfile::InDistribution,
        }
    }

    pub fn inside_geofence(&self, p: Vec2) -> bool {
        p.x.abs() <= self.extent.x / 2.0 && p.y.abs() <= self.extent.y / 2.0
    }

    /// Distance from an interior point to the geofence along `dir`.
    pub fn fence_exit_distance(&self, origin: Vec2, dir: Vec2) -> f64 {
        let half = self.extent / 2.0;
        let mut t = f64::INFINITY;
        if dir.x.abs() > 1e-15 {
            t = t.min(((half.x - origin.x) / dir.x).max((-half.x - origin.x) / dir.x));
        }
        if dir.y.abs() > 1e-15 {
            t = t.min(((half.y - origin.y) / dir.y).max((-half.y - origin.y) / dir.y));
        }
        t
    }

    /// True when the point is strictly inside some non-traversable obstacle.
    pub fn blocked(&self, p: Vec2) -> bool {
        self.obstacles
            .iter()
            .any(|o| !o.traversable && o.contains(p))
    }

    /// True when the point is inside a grass patch.
    pub fn in_grass(&self, p: Vec2) -> bool {
        self.obstacles
            .iter()
            .any(|o| o.kind == ObstacleKind::Grass && o.contains(p))
    }

    /// Clearance from `p` to the nearest non-traversable obstacle boundary.
    pub fn rigid_clearance(&self, p: Vec2) -> f64 {
        self.obstacles
            .iter()
            .filter(|o| !o.traversable)
            .map(|o| o.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Robot pose plus simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub time: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        RobotState {
            pose: Pose::new(x, y, heading),
            time: 0.0,
        }
    }
}

/// Commanded linear (m/s) and angular (rad/s) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub linear: f64,
    pub angular: f64,
}

impl Action {
    pub const STOP: Action = Action {
        linear: 0.0,
        angular: 0.0,
    };

    pub fn new(linear: f64, angular: f64) -> Self {
        Action { linear, angular }
    }

    /// The discrete grid random policies draw from.
    pub fn discrete_grid() -> Vec<Action> {
        let mut grid = Vec::new();
        for &v in &[0.0, 0.5, 1.0] {
            for &w in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
                grid.push(Action::new(v, w));
            }
        }
        grid
    }
}

/// Egocentric appearance+height image: `cells` x `cells` x 4 channels,
/// channels 0-2 appearance, channel 3 height normalized by the tallest
/// obstacle class. Values live in [0, 1]. Row-major over (row, col),
/// channel-last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub cells: usize,
    pub data: Vec<f32>,
}

impl Patch {
    pub fn zeros(cells: usize) -> Self {
        Patch {
            cells,
            data: vec![0.0; cells * cells * 4],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.cells + col) * 4 + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        self.data[(row * self.cells + col) * 4 + ch] = v;
    }

    /// Pool to `target` x `target` cells; `cells` must be a multiple of
    /// `target`. Appearance channels average; the height channel takes the
    /// block maximum so small tall-enough objects survive downsampling.
    /// Returns channel-last row-major f64 values.
    pub fn pooled(&self, target: usize) -> Option<Vec<f64>> {
        self.window_pooled(0, 0, self.cells, target)
    }

    /// Crop the near forward window (the first `crop` fraction of columns,
    /// centered rows) and pool it to `target` x `target`. This is the
    /// encoder's input reduction: candidate trajectories live in the near
    /// field, so resolution is spent there. A patch already at `target`
    /// cells passes through unchanged (it was stored preprocessed).
    pub fn forward_window_pooled(&self, crop: f64, target: usize) -> Option<Vec<f64>> {
        if self.cells == target {
            return Some(self.data.iter().map(|&v| v as f64).collect());
        }
        let side = ((self.cells as f64) * crop).round() as usize;
        if side == 0 || side > self.cells {
            return None;
        }
        let row0 = (self.cells - side) / 2;
        self.window_pooled(row0, 0, side, target)
    }

    fn window_pooled(
        &self,
        row0: usize,
        col0: usize,
        side: usize,
        target: usize,
    ) -> Option<Vec<f64>> {
        if target == 0 || side % target != 0 || row0 + side > self.cells || col0 + side > self.cells
        {
            return None;
        }
        let k = side / target;
        let mut out = vec![0.0f64; target * target * 4];
        let inv = 1.0 / (k * k) as f64;
        for tr in 0..target {
            for tc in 0..target {
                for ch in 0..3 {
                    let mut acc = 0.0f64;
                    for dr in 0..k {
                        for dc in 0..k {
                            acc += self.get(row0 + tr * k + dr, col0 + tc * k + dc, ch) as f64;
                        }
                    }
                    out[(tr * target + tc) * 4 + ch] = acc * inv;
                }
                let mut max_h = 0.0f64;
                for dr in 0..k {
                    for dc in 0..k {
                        max_h =
                            max_h.max(self.get(row0 + tr * k + dr, col0 + tc * k + dc, 3) as f64);
                    }
                }
                out[(tr * target + tc) * 4 + 3] = max_h;
            }
        }
        Some(out)
    }
}

/// Everything the robot can sense at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub position: Vec2,
    pub heading: f64,
    /// Range returns in the robot frame; variable length.
    pub pointcloud: Vec<Vec2>,
    pub patch: Patch,
    /// Last `h_past` positions at the trajectory framerate, robot frame,
    /// oldest first; the final entry is the current position (0, 0).
    pub past_positions: Vec<Vec2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    Stuck,
    Trapped,
}

impl CollisionKind {
    pub fn label(self) -> &'static str {
        match self {
            CollisionKind::Stuck => "stuck",
            CollisionKind::Trapped => "trapped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub kind: CollisionKind,
    pub time: f64,
}

/// One row of the motion history the collision heuristics scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub time: f64,
    pub position: Vec2,
    /// Commanded linear speed magnitude at this step.
    pub commanded_speed: f64,
}

/// Fixed sensing and kinematics constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    /// Simulator framerate in Hz.
    pub f_sim: f64,
    pub lidar_rays: usize,
    pub lidar_max_range: f64,
    /// Obstacles shorter than this are invisible to the range sensor.
    pub lidar_plane_height: f64,
    /// Side of the square egocentric patch window in meters.
    pub patch_extent: f64,
    /// Patch resolution per side.
    pub patch_cells: usize,
    /// Amplitude of the additive uniform patch noise.
    pub patch_noise: f64,
    /// Height that maps to 1.0 in the patch height channel.
    pub max_height: f64,
    pub ground_appearance: [f64; 3],
    /// Displacement below which the robot counts as stationary.
    pub stuck_eps: f64,
    pub stuck_window: f64,
    pub trapped_window: f64,
    pub trapped_min_dist: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            f_sim: 30.0,
            lidar_rays: 360,
            lidar_max_range: 10.0,
            lidar_plane_height: 0.3,
            patch_extent: 10.0,
            patch_cells: 100,
            patch_noise: 0.02,
            max_height: 2.0,
            ground_appearance: [0.40, 0.32, 0.18],
            stuck_eps: 0.05,
            stuck_window: 4.0,
            trapped_window: 10.0,
            trapped_min_dist: 3.0,
            v_max: 1.0,
            omega_max: 1.0,
        }
    }
}

impl SimParams {
    pub fn dt(&self) -> f64 {
        1.0 / self.f_sim
    }
}

/// Normalize a heading the same way `Pose` does; exposed for log replay.
pub fn normalize_heading(h: f64) -> f64 {
    wrap_angle(h)
}
