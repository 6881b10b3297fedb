//! Point cloud -> occupancy/inflation grid -> bounded normalized costmap.
//!
//! A range scan marks lethal cells in an egocentric grid; an exponential
//! inflation kernel spreads cost outward for the robot footprint. The raw
//! integer grid is then normalized so one trajectory point can contribute at
//! most `alpha` and a full trajectory at most `alpha * H`, which keeps the
//! geometric term commensurate with the learned log-density term.

use crate::geometry::{Pose, Vec2};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Cell value for a cell containing a range return.
pub const COST_LETHAL: u8 = 254;
/// Cell value inside the inscribed radius of a lethal cell.
pub const COST_INSCRIBED: u8 = 253;

/// Geometry of the egocentric grid and its inflation kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Meters per cell.
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    /// Cost decays out to this distance from a lethal cell.
    pub inflation_radius: f64,
    /// Exponential decay rate (1/m).
    pub cost_scaling: f64,
    /// Within this distance of a lethal cell the cost saturates at 253.
    pub inscribed_radius: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            resolution: 0.1,
            width: 100,
            height: 100,
            inflation_radius: 1.0,
            cost_scaling: 3.0,
            inscribed_radius: 0.3,
        }
    }
}

/// Integer obstacle-cost grid in [0, 254], axis-aligned in the world frame
/// and centered on the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCostGrid {
    pub cells: Vec<u8>,
    pub resolution: f64,
    /// World position of the grid's lower-left corner.
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
}

impl RawCostGrid {
    pub fn get(&self, ix: usize, iy: usize) -> u8 {
        self.cells[iy * self.width + ix]
    }

    fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let gx = ((p.x - self.origin.x) / self.resolution).floor();
        let gy = ((p.y - self.origin.y) / self.resolution).floor();
        if gx < 0.0 || gy < 0.0 || gx >= self.width as f64 || gy >= self.height as f64 {
            None
        } else {
            Some((gx as usize, gy as usize))
        }
    }
}

/// How the raw grid maps to bounded real costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// `alpha * exp(c - 254)` per cell: a lethal cell costs exactly `alpha`
    /// regardless of how many cells are occupied.
    Cellwise,
    /// `alpha * exp(c) / sum exp(c')`: a softmax over the whole grid whose
    /// cell sum is exactly `alpha`.
    GlobalSoftmax,
}

impl NormalizeMode {
    pub fn label(self) -> &'static str {
        match self {
            NormalizeMode::Cellwise => "cellwise",
            NormalizeMode::GlobalSoftmax => "global_softmax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cellwise" => Some(NormalizeMode::Cellwise),
            "global_softmax" => Some(NormalizeMode::GlobalSoftmax),
            _ => None,
        }
    }
}

/// Bounded position-cost grid; every cell lies in [0, alpha].
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub cells: Vec<f64>,
    pub alpha: f64,
    pub mode: NormalizeMode,
    pub resolution: f64,
    pub origin: Vec2,
    pub width: usize,
    pub height: usize,
}

/// Mark each local-frame point's cell lethal and inflate. The grid is
/// egocentric: the robot pose sits at the grid center and the axes stay
/// world-aligned.
pub fn build_raw(pointcloud: &[Vec2], pose: &Pose, spec: &GridSpec) -> RawCostGrid {
    assert!(spec.resolution > 0.0, "resolution must be positive");
    let origin = pose.position
        - Vec2::new(
            spec.width as f64 * spec.resolution / 2.0,
            spec.height as f64 * spec.resolution / 2.0,
        );
    let mut grid = RawCostGrid {
        cells: vec![0; spec.width * spec.height],
        resolution: spec.resolution,
        origin,
        width: spec.width,
        height: spec.height,
    };
    let mut lethal = Vec::new();
    for local in pointcloud {
        let world = pose.to_world(*local);
        if let Some((ix, iy)) = grid.cell_of(world) {
            if grid.get(ix, iy) != COST_LETHAL {
                grid.cells[iy * spec.width + ix] = COST_LETHAL;
                lethal.push((ix, iy));
            }
        }
    }

    // Shared inflation kernel: cost by integer cell offset.
    let reach = (spec.inflation_radius / spec.resolution).ceil() as i64;
    let side = (2 * reach + 1) as usize;
    let mut kernel = vec![0u8; side * side];
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let d = spec.resolution * ((dx * dx + dy * dy) as f64).sqrt();
            if d <= spec.inflation_radius && !(dx == 0 && dy == 0) {
                let c = inflation_cost(d, spec);
                kernel[((dy + reach) * side as i64 + (dx + reach)) as usize] = c;
            }
        }
    }

    for &(ix, iy) in &lethal {
        for dy in -reach..=reach {
            let jy = iy as i64 + dy;
            if jy < 0 || jy >= spec.height as i64 {
                continue;
            }
            for dx in -reach..=reach {
                let jx = ix as i64 + dx;
                if jx < 0 || jx >= spec.width as i64 {
                    continue;
                }
                let k = kernel[((dy + reach) * side as i64 + (dx + reach)) as usize];
                let cell = &mut grid.cells[jy as usize * spec.width + jx as usize];
                if *cell < k {
                    *cell = k;
                }
            }
        }
    }
    grid
}

/// Closed-form inflation value at metric distance `d` from a lethal cell.
pub fn inflation_cost(d: f64, spec: &GridSpec) -> u8 {
    let decay = (-spec.cost_scaling * (d - spec.inscribed_radius).max(0.0)).exp();
    (COST_INSCRIBED as f64 * decay).round() as u8
}

/// Normalize a raw grid into a bounded costmap.
pub fn normalize(raw: &RawCostGrid, alpha: f64, mode: NormalizeMode) -> Costmap {
    assert!(alpha > 0.0, "alpha must be positive");
    let cells = match mode {
        NormalizeMode::Cellwise => raw
            .cells
            .iter()
            .map(|&c| alpha * ((c as f64) - COST_LETHAL as f64).exp())
            .collect(),
        NormalizeMode::GlobalSoftmax => {
            let max = raw.cells.iter().copied().max().unwrap_or(0) as f64;
            let denom: f64 = raw.cells.iter().map(|&c| (c as f64 - max).exp()).sum();
            raw.cells
                .iter()
                .map(|&c| alpha * (c as f64 - max).exp() / denom)
                .collect()
        }
    };
    Costmap {
        cells,
        alpha,
        mode,
        resolution: raw.resolution,
        origin: raw.origin,
        width: raw.width,
        height: raw.height,
    }
}

/// Nearest-cell lookup; positions outside the grid cost `alpha` (unknown
/// space is treated as lethal).
pub fn query(map: &Costmap, world_position: Vec2) -> f64 {
    let gx = ((world_position.x - map.origin.x) / map.resolution).floor();
    let gy = ((world_position.y - map.origin.y) / map.resolution).floor();
    if gx < 0.0 || gy < 0.0 || gx >= map.width as f64 || gy >= map.height as f64 {
        return map.alpha;
    }
    map.cells[gy as usize * map.width + gx as usize]
}

/// Sum of per-point costs along a world-frame trajectory; clamped to the
/// analytic bound `alpha * len`.
pub fn traj_cost(map: &Costmap, traj_world: &[Vec2]) -> f64 {
    let sum: f64 = traj_world.iter().map(|p| query(map, *p)).sum();
    sum.clamp(0.0, map.alpha * traj_world.len() as f64)
}

/// Dump a raw grid as an ASCII portable greymap (`P2`), rows top to bottom.
pub fn write_raw_pgm(
    w: &mut impl Write,
    grid: &RawCostGrid,
    comments: &[String],
) -> std::io::Result<()> {
    writeln!(w, "P2")?;
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(
        w,
        "# origin {} {} resolution {}",
        grid.origin.x, grid.origin.y, grid.resolution
    )?;
    writeln!(w, "{} {}", grid.width, grid.height)?;
    writeln!(w, "{}", COST_LETHAL)?;
    for iy in (0..grid.height).rev() {
        let row: Vec<String> = (0..grid.width)
            .map(|ix| grid.get(ix, iy).to_string())
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_pose() -> Pose {
        Pose::new(0.0, 0.0, 0.0)
    }

    #[test]
    fn empty_pointcloud_is_all_zero() {
        let grid = build_raw(&[], &identity_pose(), &GridSpec::default());
        assert!(grid.cells.iter().all(|&c| c == 0));
    }

    #[test]
    fn single_point_marks_lethal_and_decays_monotonically() {
        let spec = GridSpec::default();
        let grid = build_raw(&[Vec2::new(1.0, 0.0)], &identity_pose(), &spec);
        let (ix, iy) = grid.cell_of(Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(grid.get(ix, iy), COST_LETHAL);
        // Walking away along +x the cost must never increase.
        let mut prev = u8::MAX;
        for step in 0..15 {
            let c = grid.get(ix + step, iy);
            assert!(c <= prev, "cost rose along the ray");
            prev = c;
        }
        assert!(prev < COST_INSCRIBED);
    }

    #[test]
    fn inflation_matches_closed_form() {
        // d = 0.8, w = 3.0, r_inscribed = 0.3 -> round(253 * exp(-1.5)) = 56.
        let spec = GridSpec::default();
        assert_eq!(inflation_cost(0.8, &spec), 56);
        // Inside the inscribed radius the cost saturates.
        assert_eq!(inflation_cost(0.25, &spec), COST_INSCRIBED);
        // And the grid agrees: a point marks a cell, another cell 0.8 m away.
        let grid = build_raw(&[Vec2::new(0.05, 0.05)], &identity_pose(), &spec);
        let (ix, iy) = grid.cell_of(Vec2::new(0.05, 0.05)).unwrap();
        let c = grid.get(ix + 8, iy);
        assert_eq!(c, 56);
    }

    #[test]
    fn softmax_of_uniform_grid_is_alpha_over_n() {
        let raw = RawCostGrid {
            cells: vec![37; 16],
            resolution: 0.1,
            origin: Vec2::ZERO,
            width: 4,
            height: 4,
        };
        let map = normalize(&raw, 6.4, NormalizeMode::GlobalSoftmax);
        for c in &map.cells {
            assert!((c - 6.4 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cellwise_endpoints() {
        let raw = RawCostGrid {
            cells: vec![COST_LETHAL, 0],
            resolution: 0.1,
            origin: Vec2::ZERO,
            width: 2,
            height: 1,
        };
        let map = normalize(&raw, 6.4, NormalizeMode::Cellwise);
        assert_eq!(map.cells[0], 6.4);
        assert!(map.cells[1] < 1e-100);
    }

    #[test]
    fn softmax_four_cell_oracle() {
        // Grid (254, 0, 0, 0): direct high-precision evaluation with max
        // subtraction.
        let raw = RawCostGrid {
            cells: vec![COST_LETHAL, 0, 0, 0],
            resolution: 0.1,
            origin: Vec2::ZERO,
            width: 2,
            height: 2,
        };
        let alpha = 6.4;
        let map = normalize(&raw, alpha, NormalizeMode::GlobalSoftmax);
        let denom = 1.0 + 3.0 * (-254.0f64).exp();
        assert!((map.cells[0] - alpha / denom).abs() < 1e-12);
        for i in 1..4 {
            assert!((map.cells[i] - alpha * (-254.0f64).exp() / denom).abs() < 1e-12);
        }
        let sum: f64 = map.cells.iter().sum();
        assert!((sum - alpha).abs() < 1e-9, "softmax conserves alpha");
    }

    #[test]
    fn query_contract() {
        let spec = GridSpec::default();
        let empty = normalize(
            &build_raw(&[], &identity_pose(), &spec),
            6.4,
            NormalizeMode::Cellwise,
        );
        // Robot's own cell in an empty map.
        assert!(query(&empty, Vec2::ZERO) < 1e-100);
        // 1 m beyond the grid edge (grid spans +-5 m).
        assert_eq!(query(&empty, Vec2::new(6.0, 0.0)), 6.4);

        let lethal = normalize(
            &build_raw(&[Vec2::new(2.0, 2.0)], &identity_pose(), &spec),
            6.4,
            NormalizeMode::Cellwise,
        );
        assert_eq!(query(&lethal, Vec2::new(2.0, 2.0)), 6.4);
    }

    #[test]
    fn traj_cost_contract() {
        let spec = GridSpec::default();
        let map = normalize(
            &build_raw(&[Vec2::new(2.0, 0.0)], &identity_pose(), &spec),
            6.4,
            NormalizeMode::Cellwise,
        );
        let free: Vec<Vec2> = (0..10)
            .map(|i| Vec2::new(-1.0 - 0.2 * i as f64, -3.0))
            .collect();
        assert!(traj_cost(&map, &free) < 1e-9);

        // All ten points on the lethal cell -> eta = 64 after clamping.
        let lethal: Vec<Vec2> = (0..10).map(|_| Vec2::new(2.0, 0.0)).collect();
        let tc = traj_cost(&map, &lethal);
        assert!(tc <= 64.0 + 1e-12);
        assert!((tc - 64.0).abs() < 1e-9);

        // Additivity against independent per-point summation.
        let mixed: Vec<Vec2> = (0..10)
            .map(|i| Vec2::new(1.7 + 0.1 * i as f64, 0.0))
            .collect();
        let direct: f64 = mixed.iter().map(|p| query(&map, *p)).sum();
        assert!((traj_cost(&map, &mixed) - direct).abs() < 1e-12);
    }

    #[test]
    fn adding_points_never_decreases_cells() {
        let spec = GridSpec::default();
        let pose = identity_pose();
        let base_points = vec![Vec2::new(1.0, 1.0), Vec2::new(-2.0, 0.5)];
        let mut more = base_points.clone();
        more.push(Vec2::new(1.3, 0.9));
        let a = build_raw(&base_points, &pose, &spec);
        let b = build_raw(&more, &pose, &spec);
        for (ca, cb) in a.cells.iter().zip(b.cells.iter()) {
            assert!(cb >= ca, "raw grid must be monotone in the point set");
        }
        let na = normalize(&a, 6.4, NormalizeMode::Cellwise);
        let nb = normalize(&b, 6.4, NormalizeMode::Cellwise);
        for (ca, cb) in na.cells.iter().zip(nb.cells.iter()) {
            assert!(cb >= ca, "cellwise costmap must be monotone");
        }
    }

    #[test]
    fn pgm_dump_has_expected_shape() {
        let spec = GridSpec {
            width: 8,
            height: 6,
            ..GridSpec::default()
        };
        let grid = build_raw(&[Vec2::new(0.1, 0.1)], &identity_pose(), &spec);
        let mut buf = Vec::new();
        write_raw_pgm(&mut buf, &grid, &["test".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("8 6"));
        assert_eq!(lines.next(), Some("254"));
        let total: usize = lines.map(|l| l.split_whitespace().count()).sum();
        assert_eq!(total, 48);
    }
}
