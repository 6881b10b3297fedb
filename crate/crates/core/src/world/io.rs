//! Versioned text serialization for [`WorldSpec`].
//!
//! Format (one record per line, `#` lines are comments):
//!
//! ```text
//! offnav-world v1
//! seed 7
//! profile in_distribution
//! extent 40 40
//! grass_slowdown 0.7
//! obstacles 2
//! tree circle 1.5 -2 0.4 0.4 2 0.3 0.22 0.12 0
//! wall rect 0 5 2.5 0.15 2 0.88 0.1 0.8 0
//! end
//! ```
//!
//! Obstacle fields: kind shape cx cy p1 p2 height r g b traversable, where
//! circles carry the radius twice and rects carry half extents.

use super::{DistributionProfile, Footprint, Obstacle, ObstacleKind, WorldError, WorldSpec};
use crate::geometry::Vec2;
use std::io::{BufRead, Write};

pub const WORLD_MAGIC: &str = "offnav-world v1";

/// Write a world spec; `header_comments` land as leading `#` lines so
/// callers can echo their effective configuration.
pub fn write_world(
    w: &mut impl Write,
    world: &WorldSpec,
    header_comments: &[String],
) -> Result<(), WorldError> {
    writeln!(w, "{WORLD_MAGIC}")?;
    for line in header_comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "seed {}", world.seed)?;
    writeln!(w, "profile {}", world.profile.label())?;
    writeln!(w, "extent {} {}", world.extent.x, world.extent.y)?;
    writeln!(w, "grass_slowdown {}", world.grass_slowdown)?;
    writeln!(w, "obstacles {}", world.obstacles.len())?;
    for o in &world.obstacles {
        let (shape, p1, p2) = match o.footprint {
            Footprint::Circle { radius } => ("circle", radius, radius),
            Footprint::Rect { half_extents } => ("rect", half_extents.x, half_extents.y),
        };
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {} {} {}",
            o.kind.label(),
            shape,
            o.center.x,
            o.center.y,
            p1,
            p2,
            o.height,
            o.appearance[0],
            o.appearance[1],
            o.appearance[2],
            u8::from(o.traversable),
        )?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn read_world(r: &mut impl BufRead) -> Result<WorldSpec, WorldError> {
    let mut lines = r.lines();
    let magic = next_content_line(&mut lines)?;
    if magic != WORLD_MAGIC {
        return Err(WorldError::Parse(format!(
            "unsupported world header `{magic}`"
        )));
    }
    let seed = parse_kv(&next_content_line(&mut lines)?, "seed")?
        .parse::<u64>()
        .map_err(|e| WorldError::Parse(format!("seed: {e}")))?;
    let profile_s = parse_kv(&next_content_line(&mut lines)?, "profile")?;
    let profile = DistributionProfile::parse(&profile_s)
        .ok_or_else(|| WorldError::Parse(format!("unknown profile `{profile_s}`")))?;
    let extent_s = parse_kv(&next_content_line(&mut lines)?, "extent")?;
    let extent = parse_vec2(&extent_s)?;
    let grass_slowdown = parse_kv(&next_content_line(&mut lines)?, "grass_slowdown")?
        .parse::<f64>()
        .map_err(|e| WorldError::Parse(format!("grass_slowdown: {e}")))?;
    let count = parse_kv(&next_content_line(&mut lines)?, "obstacles")?
        .parse::<usize>()
        .map_err(|e| WorldError::Parse(format!("obstacles: {e}")))?;
    let mut obstacles = Vec::with_capacity(count);
    for _ in 0..count {
        let line = next_content_line(&mut lines)?;
        obstacles.push(parse_obstacle(&line)?);
    }
    let end = next_content_line(&mut lines)?;
    if end != "end" {
        return Err(WorldError::Parse(format!("expected `end`, got `{end}`")));
    }
    Ok(WorldSpec {
        seed,
        extent,
        obstacles,
        grass_slowdown,
        profile,
    })
}

fn next_content_line(
    lines: &mut std::io::Lines<impl BufRead>,
) -> Result<String, WorldError> {
    for line in lines.by_ref() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        return Ok(trimmed.to_string());
    }
    Err(WorldError::Parse("unexpected end of file".into()))
}

fn parse_kv(line: &str, key: &str) -> Result<String, WorldError> {
    let rest = line
        .strip_prefix(key)
        .ok_or_else(|| WorldError::Parse(format!("expected `{key} ...`, got `{line}`")))?;
    Ok(rest.trim().to_string())
}

fn parse_vec2(s: &str) -> Result<Vec2, WorldError> {
    let mut parts = s.split_whitespace();
    let x = parts
        .next()
        .and_then(|p| p.parse::<f64>().ok())
        .ok_or_else(|| WorldError::Parse(format!("bad vec2 `{s}`")))?;
    let y = parts
        .next()
        .and_then(|p| p.parse::<f64>().ok())
        .ok_or_else(|| WorldError::Parse(format!("bad vec2 `{s}`")))?;
    Ok(Vec2::new(x, y))
}

fn parse_obstacle(line: &str) -> Result<Obstacle, WorldError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 11 {
        return Err(WorldError::Parse(format!(
            "obstacle record needs 11 fields, got {}: `{line}`",
            fields.len()
        )));
    }
    let kind = ObstacleKind::parse(fields[0])
        .ok_or_else(|| WorldError::Parse(format!("unknown obstacle kind `{}`", fields[0])))?;
    let num = |i: usize| -> Result<f64, WorldError> {
        fields[i]
            .parse::<f64>()
            .map_err(|e| WorldError::Parse(format!("field {i} of `{line}`: {e}")))
    };
    let center = Vec2::new(num(2)?, num(3)?);
    let p1 = num(4)?;
    let p2 = num(5)?;
    let footprint = match fields[1] {
        "circle" => Footprint::Circle { radius: p1 },
        "rect" => Footprint::Rect {
            half_extents: Vec2::new(p1, p2),
        },
        other => return Err(WorldError::Parse(format!("unknown shape `{other}`"))),
    };
    Ok(Obstacle {
        kind,
        center,
        footprint,
        height: num(6)?,
        appearance: [num(7)?, num(8)?, num(9)?],
        traversable: fields[10] == "1",
    })
}
