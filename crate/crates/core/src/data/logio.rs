//! Raw collection log file: text header with the embedded world, then a
//! little-endian binary section of steps, collision events, and respawns.

use super::collect::{CollectLog, LogStep, RespawnMark};
use super::DataError;
use crate::geometry::Pose;
use crate::world::{read_world, write_world, Action, CollisionEvent, CollisionKind};
use std::io::{BufRead, Read, Write};

pub const LOG_MAGIC: &str = "offnav-log v1";

pub fn write_log(
    w: &mut impl Write,
    log: &CollectLog,
    header_comments: &[String],
) -> Result<(), DataError> {
    writeln!(w, "{LOG_MAGIC}")?;
    for c in header_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "seed {}", log.seed)?;
    writeln!(w, "f_sim {}", log.f_sim)?;
    writeln!(w, "steps {}", log.steps.len())?;
    writeln!(w, "collisions {}", log.collisions.len())?;
    writeln!(w, "respawns {}", log.respawns.len())?;
    writeln!(w, "world")?;
    write_world(w, &log.world, &[])?;
    writeln!(w, "data")?;
    for s in &log.steps {
        for v in [
            s.time,
            s.pose.position.x,
            s.pose.position.y,
            s.pose.heading,
            s.commanded.linear,
            s.commanded.angular,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for (idx, event) in &log.collisions {
        w.write_all(&(*idx as u64).to_le_bytes())?;
        w.write_all(&[match event.kind {
            CollisionKind::Stuck => 0u8,
            CollisionKind::Trapped => 1u8,
        }])?;
        w.write_all(&event.time.to_le_bytes())?;
    }
    for mark in &log.respawns {
        w.write_all(&(mark.step_index as u64).to_le_bytes())?;
        w.write_all(&mark.time.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_log(r: &mut impl BufRead) -> Result<CollectLog, DataError> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<String, DataError> {
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(DataError::Parse("unexpected end of log header".into()));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.to_string());
        }
    };
    if read_line(r)? != LOG_MAGIC {
        return Err(DataError::Parse("unsupported log header".into()));
    }
    let mut seed = 0u64;
    let mut f_sim = 0.0f64;
    let mut n_steps = 0usize;
    let mut n_collisions = 0usize;
    let mut n_respawns = 0usize;
    loop {
        let l = read_line(r)?;
        if l == "world" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| DataError::Parse(format!("bad log header line `{l}`")))?;
        match key {
            "seed" => seed = value.parse().map_err(|e| bad("seed", e))?,
            "f_sim" => f_sim = value.parse().map_err(|e| bad("f_sim", e))?,
            "steps" => n_steps = value.parse().map_err(|e| bad("steps", e))?,
            "collisions" => n_collisions = value.parse().map_err(|e| bad("collisions", e))?,
            "respawns" => n_respawns = value.parse().map_err(|e| bad("respawns", e))?,
            other => return Err(DataError::Parse(format!("unknown log key `{other}`"))),
        }
    }
    let world = read_world(r)?;
    if read_line(r)? != "data" {
        return Err(DataError::Parse("missing log data marker".into()));
    }

    let mut f = [0u8; 8];
    let mut read_f64 = |r: &mut dyn Read| -> Result<f64, DataError> {
        r.read_exact(&mut f)?;
        Ok(f64::from_le_bytes(f))
    };
    let mut steps = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let time = read_f64(r)?;
        let x = read_f64(r)?;
        let y = read_f64(r)?;
        let heading = read_f64(r)?;
        let linear = read_f64(r)?;
        let angular = read_f64(r)?;
        steps.push(LogStep {
            time,
            pose: Pose::new(x, y, heading),
            commanded: Action::new(linear, angular),
        });
    }
    let mut collisions = Vec::with_capacity(n_collisions);
    for _ in 0..n_collisions {
        let mut u = [0u8; 8];
        r.read_exact(&mut u)?;
        let idx = u64::from_le_bytes(u) as usize;
        let mut k = [0u8; 1];
        r.read_exact(&mut k)?;
        let kind = match k[0] {
            0 => CollisionKind::Stuck,
            1 => CollisionKind::Trapped,
            other => return Err(DataError::Parse(format!("bad collision kind {other}"))),
        };
        r.read_exact(&mut u)?;
        let time = f64::from_le_bytes(u);
        collisions.push((idx, CollisionEvent { kind, time }));
    }
    let mut respawns = Vec::with_capacity(n_respawns);
    for _ in 0..n_respawns {
        let mut u = [0u8; 8];
        r.read_exact(&mut u)?;
        let step_index = u64::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let time = f64::from_le_bytes(u);
        respawns.push(RespawnMark { step_index, time });
    }
    Ok(CollectLog {
        world,
        seed,
        f_sim,
        steps,
        collisions,
        respawns,
    })
}

fn bad(key: &'static str, e: impl std::fmt::Display) -> DataError {
    DataError::Parse(format!("{key}: {e}"))
}
