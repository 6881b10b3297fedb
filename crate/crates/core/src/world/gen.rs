//! Seeded procedural obstacle placement with a free-space connectivity
//! guarantee.
//!
//! Obstacles are rejection-sampled in a fixed kind order. A candidate is
//! accepted only if it keeps a clearance gap to already placed obstacles and
//! keeps the coarse free-space grid connected, so any two free cells always
//! admit a traversable path.

use super::{
    DistributionProfile, Footprint, Obstacle, ObstacleKind, WorldError, WorldSpec,
};
use crate::geometry::Vec2;
use crate::rng::{seeded_rng, split_seed};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Densities are counts per 100 m^2 of geofence area.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldGenParams {
    pub tree_per_100m2: f64,
    pub bush_per_100m2: f64,
    pub grass_per_100m2: f64,
    pub rock_per_100m2: f64,
    /// Only placed in out-of-distribution worlds.
    pub wall_per_100m2: f64,
    /// Only placed in out-of-distribution worlds.
    pub novel_per_100m2: f64,
    pub tree_radius: [f64; 2],
    pub bush_radius: [f64; 2],
    pub grass_radius: [f64; 2],
    pub rock_radius: [f64; 2],
    pub novel_radius: [f64; 2],
    /// Wall half-length range; walls are thin axis-aligned rectangles.
    pub wall_half_length: [f64; 2],
    pub wall_half_thickness: f64,
    pub tree_height: f64,
    pub bush_height: f64,
    pub grass_height: f64,
    pub rock_height: f64,
    pub wall_height: f64,
    pub novel_height: f64,
    /// Minimum boundary-to-boundary gap between non-traversable obstacles.
    pub rigid_gap: f64,
    /// Minimum gap between grass and any other obstacle.
    pub grass_gap: f64,
    /// Keep obstacle boundaries this far inside the geofence.
    pub fence_margin: f64,
    /// Resolution of the connectivity grid.
    pub coarse_resolution: f64,
    /// Robot clearance used when rasterizing the connectivity grid.
    pub robot_clearance: f64,
    /// Placement attempts per obstacle before giving up.
    pub max_tries: usize,
    pub grass_slowdown: f64,
    pub appearance_jitter: f64,
}

impl Default for WorldGenParams {
    fn default() -> Self {
        WorldGenParams {
            tree_per_100m2: 2.9,
            bush_per_100m2: 2.4,
            grass_per_100m2: 2.6,
            rock_per_100m2: 2.6,
            wall_per_100m2: 0.4,
            novel_per_100m2: 0.8,
            tree_radius: [0.25, 0.45],
            bush_radius: [0.50, 0.95],
            grass_radius: [0.60, 1.20],
            rock_radius: [0.22, 0.38],
            novel_radius: [0.30, 0.70],
            wall_half_length: [1.5, 3.0],
            wall_half_thickness: 0.15,
            tree_height: 2.0,
            bush_height: 0.5,
            grass_height: 0.5,
            rock_height: 0.2,
            wall_height: 2.0,
            novel_height: 2.0,
            rigid_gap: 1.0,
            grass_gap: 0.2,
            fence_margin: 0.5,
            coarse_resolution: 0.5,
            robot_clearance: 0.3,
            max_tries: 400,
            grass_slowdown: 0.7,
            appearance_jitter: 0.04,
        }
    }
}

impl WorldGenParams {
    fn base_appearance(&self, kind: ObstacleKind) -> [f64; 3] {
        match kind {
            ObstacleKind::Tree => [0.30, 0.22, 0.12],
            // Rocks stay close to the ground color so they read mainly
            // through the height channel.
            ObstacleKind::Rock => [0.46, 0.40, 0.28],
            ObstacleKind::Grass => [0.35, 0.72, 0.22],
            ObstacleKind::Bush => [0.13, 0.38, 0.12],
            // Out-of-distribution appearances sit in a red-channel band
            // (>= 0.84) no in-distribution class can reach even with jitter.
            ObstacleKind::Wall => [0.88, 0.10, 0.80],
            ObstacleKind::Novel => [0.92, 0.86, 0.08],
        }
    }

    fn height(&self, kind: ObstacleKind) -> f64 {
        match kind {
            ObstacleKind::Tree => self.tree_height,
            ObstacleKind::Rock => self.rock_height,
            ObstacleKind::Grass => self.grass_height,
            ObstacleKind::Bush => self.bush_height,
            ObstacleKind::Wall => self.wall_height,
            ObstacleKind::Novel => self.novel_height,
        }
    }

    fn density_param(&self, kind: ObstacleKind) -> (&'static str, f64) {
        match kind {
            ObstacleKind::Tree => ("tree_per_100m2", self.tree_per_100m2),
            ObstacleKind::Rock => ("rock_per_100m2", self.rock_per_100m2),
            ObstacleKind::Grass => ("grass_per_100m2", self.grass_per_100m2),
            ObstacleKind::Bush => ("bush_per_100m2", self.bush_per_100m2),
            ObstacleKind::Wall => ("wall_per_100m2", self.wall_per_100m2),
            ObstacleKind::Novel => ("novel_per_100m2", self.novel_per_100m2),
        }
    }
}

/// Connectivity raster over the free space between rigid obstacles.
struct CoarseGrid {
    res: f64,
    nx: usize,
    ny: usize,
    origin: Vec2,
}

impl CoarseGrid {
    fn new(extent: Vec2, res: f64) -> Self {
        let nx = (extent.x / res).round() as usize;
        let ny = (extent.y / res).round() as usize;
        CoarseGrid {
            res,
            nx,
            ny,
            origin: Vec2::new(-extent.x / 2.0, -extent.y / 2.0),
        }
    }

    fn center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin + Vec2::new((ix as f64 + 0.5) * self.res, (iy as f64 + 0.5) * self.res)
    }
}

/// A cell is blocked when its center is within `clearance` of a rigid
/// obstacle footprint.
fn blocked_cells(grid: &CoarseGrid, obstacles: &[Obstacle], clearance: f64) -> Vec<bool> {
    let mut blocked = vec![false; grid.nx * grid.ny];
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let c = grid.center(ix, iy);
            let hit = obstacles
                .iter()
                .filter(|o| !o.traversable)
                .any(|o| o.signed_distance(c) < clearance);
            blocked[iy * grid.nx + ix] = hit;
        }
    }
    blocked
}

/// True when all unblocked cells form one 4-connected component.
fn free_space_connected(grid: &CoarseGrid, blocked: &[bool]) -> bool {
    let total_free = blocked.iter().filter(|b| !**b).count();
    if total_free == 0 {
        return false;
    }
    let start = blocked.iter().position(|b| !*b).unwrap();
    let mut seen = vec![false; blocked.len()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut visited = 0usize;
    while let Some(idx) = stack.pop() {
        visited += 1;
        let ix = idx % grid.nx;
        let iy = idx / grid.nx;
        let push = |jx: usize, jy: usize, stack: &mut Vec<usize>, seen: &mut Vec<bool>| {
            let j = jy * grid.nx + jx;
            if !blocked[j] && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        };
        if ix > 0 {
            push(ix - 1, iy, &mut stack, &mut seen);
        }
        if ix + 1 < grid.nx {
            push(ix + 1, iy, &mut stack, &mut seen);
        }
        if iy > 0 {
            push(ix, iy - 1, &mut stack, &mut seen);
        }
        if iy + 1 < grid.ny {
            push(ix, iy + 1, &mut stack, &mut seen);
        }
    }
    visited == total_free
}

/// Boundary-to-boundary gap between two footprints (approximate for
/// rect-rect pairs, exact for circles which dominate).
fn footprint_gap(a: &Obstacle, b: &Obstacle) -> f64 {
    match (a.footprint, b.footprint) {
        (Footprint::Circle { radius }, _) => b.signed_distance(a.center) - radius,
        (_, Footprint::Circle { radius }) => a.signed_distance(b.center) - radius,
        (Footprint::Rect { half_extents: ha }, Footprint::Rect { half_extents: hb }) => {
            let d = b.center - a.center;
            let gx = d.x.abs() - (ha.x + hb.x);
            let gy = d.y.abs() - (ha.y + hb.y);
            gx.max(gy)
        }
    }
}

/// Generate a world. Deterministic in (seed, extent, profile, params).
pub fn generate_world(
    seed: u64,
    extent: Vec2,
    profile: DistributionProfile,
    params: &WorldGenParams,
) -> Result<WorldSpec, WorldError> {
    if extent.x < 20.0 || extent.y < 20.0 {
        return Err(WorldError::ExtentTooSmall(extent.x, extent.y));
    }
    let mut rng = seeded_rng(split_seed(seed, profile.label()));
    let area_units = extent.x * extent.y / 100.0;
    let count = |per: f64| (per * area_units).round() as usize;

    // Fixed placement order keeps the obstacle list a pure function of
    // (seed, profile). Large rigid structures go first so corridors form
    // around them.
    let mut plan: Vec<(ObstacleKind, usize)> = Vec::new();
    if profile == DistributionProfile::OutOfDistribution {
        plan.push((ObstacleKind::Wall, count(params.wall_per_100m2)));
    }
    plan.push((ObstacleKind::Tree, count(params.tree_per_100m2)));
    plan.push((ObstacleKind::Bush, count(params.bush_per_100m2)));
    if profile == DistributionProfile::OutOfDistribution {
        plan.push((ObstacleKind::Novel, count(params.novel_per_100m2)));
    }
    plan.push((ObstacleKind::Rock, count(params.rock_per_100m2)));
    plan.push((ObstacleKind::Grass, count(params.grass_per_100m2)));

    let grid = CoarseGrid::new(extent, params.coarse_resolution);
    let mut obstacles: Vec<Obstacle> = Vec::new();

    for (kind, n) in plan {
        for _ in 0..n {
            let mut placed = false;
            for _try in 0..params.max_tries {
                let candidate = sample_obstacle(kind, extent, params, &mut rng);
                if !candidate_fits(&candidate, &obstacles, params) {
                    continue;
                }
                if !candidate.traversable {
                    let mut trial = obstacles.clone();
                    trial.push(candidate.clone());
                    let blocked = blocked_cells(&grid, &trial, params.robot_clearance);
                    if !free_space_connected(&grid, &blocked) {
                        continue;
                    }
                }
                obstacles.push(candidate);
                placed = true;
                break;
            }
            if !placed {
                let (density_param, _) = params.density_param(kind);
                return Err(WorldError::PlacementFailed {
                    kind,
                    tries: params.max_tries,
                    density_param,
                });
            }
        }
    }

    Ok(WorldSpec {
        seed,
        extent,
        obstacles,
        grass_slowdown: params.grass_slowdown,
        profile,
    })
}

fn sample_obstacle(
    kind: ObstacleKind,
    extent: Vec2,
    params: &WorldGenParams,
    rng: &mut impl Rng,
) -> Obstacle {
    let footprint = match kind {
        ObstacleKind::Wall => {
            let half_len = rng.gen_range(params.wall_half_length[0]..=params.wall_half_length[1]);
            // Walls alternate orientation via the rng stream.
            if rng.gen_bool(0.5) {
                Footprint::Rect {
                    half_extents: Vec2::new(half_len, params.wall_half_thickness),
                }
            } else {
                Footprint::Rect {
                    half_extents: Vec2::new(params.wall_half_thickness, half_len),
                }
            }
        }
        _ => {
            let range = match kind {
                ObstacleKind::Tree => params.tree_radius,
                ObstacleKind::Rock => params.rock_radius,
                ObstacleKind::Grass => params.grass_radius,
                ObstacleKind::Bush => params.bush_radius,
                ObstacleKind::Novel => params.novel_radius,
                ObstacleKind::Wall => unreachable!(),
            };
            Footprint::Circle {
                radius: rng.gen_range(range[0]..=range[1]),
            }
        }
    };
    let bound = match footprint {
        Footprint::Circle { radius } => radius,
        Footprint::Rect { half_extents } => half_extents.x.max(half_extents.y),
    };
    let margin = bound + params.fence_margin;
    let hx = (extent.x / 2.0 - margin).max(0.1);
    let hy = (extent.y / 2.0 - margin).max(0.1);
    let center = Vec2::new(rng.gen_range(-hx..=hx), rng.gen_range(-hy..=hy));
    let base = params.base_appearance(kind);
    let j = params.appearance_jitter;
    let mut appearance = [0.0; 3];
    for (i, v) in base.iter().enumerate() {
        appearance[i] = (v + rng.gen_range(-j..=j)).clamp(0.0, 1.0);
    }
    Obstacle {
        kind,
        center,
        footprint,
        height: params.height(kind),
        appearance,
        traversable: kind.traversable(),
    }
}

fn candidate_fits(candidate: &Obstacle, placed: &[Obstacle], params: &WorldGenParams) -> bool {
    // Keep the spawn-friendly center of the field usable: nothing rigid
    // directly on the origin.
    if !candidate.traversable && candidate.signed_distance(Vec2::ZERO) < 0.5 {
        return false;
    }
    for other in placed {
        let gap = footprint_gap(candidate, other);
        let required = if candidate.traversable || other.traversable {
            params.grass_gap
        } else {
            params.rigid_gap
        };
        if gap < required {
            return false;
        }
    }
    true
}
