//! Grid search over the ground-truth traversability raster. This planner
//! sees the whole map, which deliberately violates the unmapped-deployment
//! assumption; it exists only to normalize success rates.

use crate::geometry::Vec2;
use crate::world::WorldSpec;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

/// 8-connected A* at the given resolution. Cells whose centers are within
/// `clearance` of a rigid obstacle are blocked; grass is free. Returns cell
/// center waypoints ending at the exact goal, or None when no path exists.
pub fn astar_path(
    world: &WorldSpec,
    start: Vec2,
    goal: Vec2,
    resolution: f64,
    clearance: f64,
) -> Option<Vec<Vec2>> {
    let nx = (world.extent.x / resolution).round() as usize;
    let ny = (world.extent.y / resolution).round() as usize;
    let origin = Vec2::new(-world.extent.x / 2.0, -world.extent.y / 2.0);
    let center = |ix: usize, iy: usize| {
        origin + Vec2::new((ix as f64 + 0.5) * resolution, (iy as f64 + 0.5) * resolution)
    };
    let cell_of = |p: Vec2| -> Option<(usize, usize)> {
        let gx = ((p.x - origin.x) / resolution).floor();
        let gy = ((p.y - origin.y) / resolution).floor();
        if gx < 0.0 || gy < 0.0 || gx >= nx as f64 || gy >= ny as f64 {
            None
        } else {
            Some((gx as usize, gy as usize))
        }
    };

    let mut blocked = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            blocked[iy * nx + ix] = world.rigid_clearance(center(ix, iy)) < clearance;
        }
    }

    let (sx, sy) = cell_of(start)?;
    let (gx, gy) = cell_of(goal)?;
    let s_idx = sy * nx + sx;
    let g_idx = gy * nx + gx;
    if blocked[s_idx] || blocked[g_idx] {
        return None;
    }

    let octile = |ix: usize, iy: usize| -> f64 {
        let dx = (ix as f64 - gx as f64).abs();
        let dy = (iy as f64 - gy as f64).abs();
        let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
        (hi - lo + std::f64::consts::SQRT_2 * lo) * resolution
    };

    #[derive(PartialEq)]
    struct Node {
        f: f64,
        idx: usize,
    }
    impl Eq for Node {}
    impl Ord for Node {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.f
                .total_cmp(&other.f)
                .then_with(|| self.idx.cmp(&other.idx))
        }
    }
    impl PartialOrd for Node {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let mut g_cost = vec![f64::INFINITY; nx * ny];
    let mut parent = vec![usize::MAX; nx * ny];
    let mut closed = vec![false; nx * ny];
    let mut heap = BinaryHeap::new();
    g_cost[s_idx] = 0.0;
    heap.push(Reverse(Node {
        f: octile(sx, sy),
        idx: s_idx,
    }));

    const MOVES: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];

    while let Some(Reverse(node)) = heap.pop() {
        let idx = node.idx;
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == g_idx {
            let mut cells = vec![idx];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(cur);
            }
            cells.reverse();
            let mut path: Vec<Vec2> = cells
                .iter()
                .map(|&c| center(c % nx, c / nx))
                .collect();
            path.push(goal);
            return Some(path);
        }
        let (ix, iy) = (idx % nx, idx / nx);
        for (dx, dy) in MOVES {
            let jx = ix as i64 + dx;
            let jy = iy as i64 + dy;
            if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                continue;
            }
            let (jx, jy) = (jx as usize, jy as usize);
            let jdx = jy * nx + jx;
            if blocked[jdx] || closed[jdx] {
                continue;
            }
            // No corner cutting: a diagonal needs both orthogonal
            // neighbors free.
            if dx != 0 && dy != 0 {
                let a = iy * nx + jx;
                let b = jy * nx + ix;
                if blocked[a] || blocked[b] {
                    continue;
                }
            }
            let move_cost = if dx != 0 && dy != 0 {
                std::f64::consts::SQRT_2 * resolution
            } else {
                resolution
            };
            let candidate = g_cost[idx] + move_cost;
            if candidate < g_cost[jdx] {
                g_cost[jdx] = candidate;
                parent[jdx] = idx;
                heap.push(Reverse(Node {
                    f: candidate + octile(jx, jy),
                    idx: jdx,
                }));
            }
        }
    }
    None
}

/// Total arc length of a waypoint list; shared by tests.
pub fn path_length(path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| w[0].distance(w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Footprint, Obstacle, ObstacleKind};

    fn wall_world() -> WorldSpec {
        let mut w = WorldSpec::empty(Vec2::new(40.0, 40.0));
        w.obstacles.push(Obstacle {
            kind: ObstacleKind::Wall,
            center: Vec2::new(0.0, 0.0),
            footprint: Footprint::Rect {
                half_extents: Vec2::new(0.2, 6.0),
            },
            height: 2.0,
            appearance: [0.88, 0.1, 0.8],
            traversable: false,
        });
        w
    }

    #[test]
    fn empty_world_path_is_straight() {
        let w = WorldSpec::empty(Vec2::new(40.0, 40.0));
        let path = astar_path(&w, Vec2::new(-10.0, 0.25), Vec2::new(10.0, 0.25), 0.5, 0.3)
            .expect("path");
        let len = path_length(&path);
        assert!((len - 20.0).abs() < 1.0, "length {len}");
    }

    #[test]
    fn wall_forces_detour() {
        let w = wall_world();
        let start = Vec2::new(-5.0, 0.25);
        let goal = Vec2::new(5.0, 0.25);
        let path = astar_path(&w, start, goal, 0.5, 0.3).expect("path around the wall");
        let len = path_length(&path);
        let direct = start.distance(goal);
        assert!(len > direct + 3.0, "detour length {len} vs direct {direct}");
        // No waypoint may sit inside the wall's clearance zone.
        for p in &path[..path.len() - 1] {
            assert!(w.rigid_clearance(*p) >= 0.3 - 1e-9);
        }
    }

    /// Resolution oracle: a finer grid never yields a longer path between
    /// the same endpoints (chosen on shared cell centers).
    #[test]
    fn finer_grid_is_no_longer_than_coarse() {
        let w = wall_world();
        // Points at coarse (0.5 m) cell centers, which are also fine (0.1 m)
        // cell centers.
        let start = Vec2::new(-5.25, 0.25);
        let goal = Vec2::new(5.25, 0.25);
        let coarse = astar_path(&w, start, goal, 0.5, 0.3).expect("coarse path");
        let fine = astar_path(&w, start, goal, 0.1, 0.3).expect("fine path");
        let lc = path_length(&coarse);
        let lf = path_length(&fine);
        assert!(
            lf <= lc + 1e-9,
            "fine path {lf} longer than coarse path {lc}"
        );
    }

    #[test]
    fn no_path_returns_none() {
        // Box the start in completely.
        let mut w = WorldSpec::empty(Vec2::new(40.0, 40.0));
        for (cx, cy, hx, hy) in [
            (0.0f64, 3.0f64, 3.0f64, 0.2f64),
            (0.0, -3.0, 3.0, 0.2),
            (3.0, 0.0, 0.2, 3.0),
            (-3.0, 0.0, 0.2, 3.0),
        ] {
            w.obstacles.push(Obstacle {
                kind: ObstacleKind::Wall,
                center: Vec2::new(cx, cy),
                footprint: Footprint::Rect {
                    half_extents: Vec2::new(hx, hy),
                },
                height: 2.0,
                appearance: [0.88, 0.1, 0.8],
                traversable: false,
            });
        }
        assert!(astar_path(&w, Vec2::new(0.25, 0.25), Vec2::new(15.0, 0.0), 0.5, 0.3).is_none());
    }
}
