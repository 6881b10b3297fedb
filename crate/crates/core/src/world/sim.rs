//! Kinematics, range sensing, patch rendering, and collision heuristics.

use super::{
    Action, CollisionEvent, CollisionKind, MotionSample, Obstacle, Patch, RobotState, SimParams,
    WorldSpec,
};
use crate::geometry::{wrap_angle, Pose, Vec2};
use crate::rng::seeded_rng;
use rand::Rng;

/// Unicycle step. Motion into a non-traversable obstacle or outside the
/// geofence freezes the position; heading integrates regardless. Inside
/// grass the linear velocity is scaled by the world's slowdown factor.
pub fn step(world: &WorldSpec, state: &RobotState, action: Action, dt: f64) -> RobotState {
    assert!(dt > 0.0, "dt must be positive");
    let pose = state.pose;
    let v = if world.in_grass(pose.position) {
        action.linear * world.grass_slowdown
    } else {
        action.linear
    };
    let (s, c) = pose.heading.sin_cos();
    let candidate = pose.position + Vec2::new(c, s) * (v * dt);
    let blocked = !world.inside_geofence(candidate) || world.blocked(candidate);
    let position = if blocked { pose.position } else { candidate };
    RobotState {
        pose: Pose {
            position,
            heading: wrap_angle(pose.heading + action.angular * dt),
        },
        time: state.time + dt,
    }
}

/// Planar range scan: `lidar_rays` rays evenly spaced over 2*pi starting at
/// the robot's forward axis. Each ray reports the nearest intersection with
/// an obstacle tall enough to cross the sensing plane, or with the geofence,
/// within `lidar_max_range`. Points come back in the robot frame; rays
/// without a hit produce no point.
pub fn raycast_lidar(world: &WorldSpec, state: &RobotState, params: &SimParams) -> Vec<Vec2> {
    let pose = state.pose;
    let mut points = Vec::new();
    let visible: Vec<&Obstacle> = world
        .obstacles
        .iter()
        .filter(|o| o.height >= params.lidar_plane_height)
        .collect();
    for k in 0..params.lidar_rays {
        let local_angle = 2.0 * std::f64::consts::PI * k as f64 / params.lidar_rays as f64;
        let world_angle = pose.heading + local_angle;
        let (s, c) = world_angle.sin_cos();
        let dir = Vec2::new(c, s);
        let mut t_hit = world.fence_exit_distance(pose.position, dir);
        for o in &visible {
            if let Some(t) = o.ray_hit(pose.position, dir) {
                if t < t_hit {
                    t_hit = t;
                }
            }
        }
        if t_hit <= params.lidar_max_range {
            let (ls, lc) = local_angle.sin_cos();
            points.push(Vec2::new(lc, ls) * t_hit);
        }
    }
    points
}

/// Coarse spatial hash so patch rendering does not scan every obstacle per
/// cell.
struct BucketIndex<'a> {
    bucket: f64,
    nx: usize,
    ny: usize,
    origin: Vec2,
    cells: Vec<Vec<usize>>,
    obstacles: &'a [Obstacle],
}

impl<'a> BucketIndex<'a> {
    fn new(world: &'a WorldSpec, bucket: f64) -> Self {
        let nx = ((world.extent.x / bucket).ceil() as usize).max(1) + 2;
        let ny = ((world.extent.y / bucket).ceil() as usize).max(1) + 2;
        let origin = Vec2::new(
            -world.extent.x / 2.0 - bucket,
            -world.extent.y / 2.0 - bucket,
        );
        let mut cells = vec![Vec::new(); nx * ny];
        for (i, o) in world.obstacles.iter().enumerate() {
            let r = o.bound_radius();
            let lo = o.center - Vec2::new(r, r) - origin;
            let hi = o.center + Vec2::new(r, r) - origin;
            let x0 = ((lo.x / bucket).floor().max(0.0)) as usize;
            let y0 = ((lo.y / bucket).floor().max(0.0)) as usize;
            let x1 = ((hi.x / bucket).floor()).min((nx - 1) as f64) as usize;
            let y1 = ((hi.y / bucket).floor()).min((ny - 1) as f64) as usize;
            for y in y0..=y1 {
                for x in x0..=x1 {
                    cells[y * nx + x].push(i);
                }
            }
        }
        BucketIndex {
            bucket,
            nx,
            ny,
            origin,
            cells,
            obstacles: &world.obstacles,
        }
    }

    /// Tallest obstacle containing the point, favoring the earliest in list
    /// order on height ties.
    fn topmost_at(&self, p: Vec2) -> Option<&Obstacle> {
        let bx = ((p.x - self.origin.x) / self.bucket).floor();
        let by = ((p.y - self.origin.y) / self.bucket).floor();
        if bx < 0.0 || by < 0.0 || bx >= self.nx as f64 || by >= self.ny as f64 {
            return None;
        }
        let mut best: Option<&Obstacle> = None;
        for &i in &self.cells[by as usize * self.nx + bx as usize] {
            let o = &self.obstacles[i];
            if o.contains(p) && best.map_or(true, |b| o.height > b.height) {
                best = Some(o);
            }
        }
        best
    }
}

/// Rasterize the forward appearance+height window. The window is a square of
/// side `patch_extent` meters whose center sits `patch_extent / 2` ahead of
/// the robot. Rows run from the robot's left (+y) to right, columns from the
/// robot outward. Additive uniform noise of amplitude `patch_noise` is drawn
/// from `noise_seed`; cells outside the geofence render as free ground.
pub fn render_patch(
    world: &WorldSpec,
    state: &RobotState,
    noise_seed: u64,
    params: &SimParams,
) -> Patch {
    let cells = params.patch_cells;
    let res = params.patch_extent / cells as f64;
    let mut patch = Patch::zeros(cells);
    let index = BucketIndex::new(world, 2.0);
    let pose = state.pose;
    let mut rng = seeded_rng(noise_seed);
    let noise = params.patch_noise;
    for row in 0..cells {
        // row 0 is the leftmost strip (+y side).
        let ly = params.patch_extent / 2.0 - (row as f64 + 0.5) * res;
        for col in 0..cells {
            let lx = (col as f64 + 0.5) * res;
            let wp = pose.to_world(Vec2::new(lx, ly));
            let (appearance, height) = if !world.inside_geofence(wp) {
                (params.ground_appearance, 0.0)
            } else {
                match index.topmost_at(wp) {
                    Some(o) => (o.appearance, o.height),
                    None => (params.ground_appearance, 0.0),
                }
            };
            let h_norm = (height / params.max_height).clamp(0.0, 1.0);
            let values = [appearance[0], appearance[1], appearance[2], h_norm];
            for (ch, v) in values.iter().enumerate() {
                let n = if noise > 0.0 {
                    rng.gen_range(-noise..=noise)
                } else {
                    0.0
                };
                patch.set(row, col, ch, (v + n).clamp(0.0, 1.0) as f32);
            }
        }
    }
    patch
}

/// Scan a time-ordered motion history for the stuck/trapped heuristics.
///
/// Stuck: over the trailing `stuck_window`, every sample stayed within
/// `stuck_eps` of the current position while a nonzero linear velocity was
/// commanded. Trapped: the net displacement over the trailing
/// `trapped_window` is below `trapped_min_dist`. Stuck wins when both fire.
pub fn detect_collision(history: &[MotionSample], params: &SimParams) -> Option<CollisionEvent> {
    let last = history.last()?;
    let now = last.time;

    // Stuck needs full coverage of the window.
    if history
        .first()
        .map(|f| now - f.time >= params.stuck_window)
        .unwrap_or(false)
    {
        let mut stuck = true;
        for s in history.iter().rev() {
            if now - s.time > params.stuck_window {
                break;
            }
            if s.position.distance(last.position) >= params.stuck_eps
                || s.commanded_speed.abs() <= 0.0
            {
                stuck = false;
                break;
            }
        }
        if stuck {
            return Some(CollisionEvent {
                kind: CollisionKind::Stuck,
                time: now,
            });
        }
    }

    // Trapped compares against the newest sample at least a full window old.
    let anchor = history
        .iter()
        .rev()
        .find(|s| now - s.time >= params.trapped_window);
    if let Some(a) = anchor {
        if a.position.distance(last.position) < params.trapped_min_dist {
            return Some(CollisionEvent {
                kind: CollisionKind::Trapped,
                time: now,
            });
        }
    }
    None
}
