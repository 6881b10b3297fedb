//! Windowing raw logs into training examples and the dataset file format.

use super::collect::CollectLog;
use super::DataError;
use crate::geometry::Vec2;
use crate::rng::split_seed_indexed;
use crate::world::{render_patch, Patch, RobotState, SimParams};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetParams {
    /// Trajectory framerate (Hz) the log is subsampled to.
    pub f_tau: f64,
    /// Number of past frames per example, including the reference frame.
    pub h_past: usize,
    /// Number of future frames per example.
    pub horizon: usize,
    /// Windows ending within this margin before a collision are dropped too.
    pub collision_margin: f64,
    /// Stored patch resolution; the raw render is cropped to the near
    /// forward window and pooled before storage since the learner consumes
    /// exactly that view.
    pub patch_cells: usize,
    /// Fraction of the raw window kept, matching the encoder's crop.
    pub patch_crop: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        DatasetParams {
            f_tau: 5.0,
            h_past: 10,
            horizon: 10,
            collision_margin: 2.0,
            patch_cells: 25,
            patch_crop: 0.5,
        }
    }
}

/// One training example in the reference frame: robot at the origin heading
/// +x at the last past frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Oldest first; the final entry is the origin.
    pub past_positions: Vec<Vec2>,
    pub patch: Patch,
    pub future_positions: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetMeta {
    pub collect_seeds: Vec<u64>,
    pub world_seeds: Vec<u64>,
    pub f_tau: f64,
    pub h_past: usize,
    pub horizon: usize,
    pub patch_cells: usize,
    /// Sliding windows considered before collision filtering.
    pub windows_considered: usize,
    /// Windows dropped because they touched a collision span.
    pub windows_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Merge datasets collected from different worlds.
    pub fn merge(mut parts: Vec<Dataset>) -> Dataset {
        let mut out = Dataset::default();
        for part in parts.drain(..) {
            if out.examples.is_empty() {
                out.meta = part.meta.clone();
                out.meta.collect_seeds.clear();
                out.meta.world_seeds.clear();
                out.meta.windows_considered = 0;
                out.meta.windows_dropped = 0;
            }
            out.meta.collect_seeds.extend(part.meta.collect_seeds);
            out.meta.world_seeds.extend(part.meta.world_seeds);
            out.meta.windows_considered += part.meta.windows_considered;
            out.meta.windows_dropped += part.meta.windows_dropped;
            out.examples.extend(part.examples);
        }
        out
    }
}

/// Subsample a raw log to the trajectory framerate, slide a window of
/// `h_past + horizon` frames, drop every window that intersects
/// `[collision - margin, respawn]`, and emit examples in the reference
/// frame of each window's last past step. Patches are rendered at the
/// reference pose and pooled to the dataset resolution.
pub fn make_dataset(log: &CollectLog, params: &DatasetParams, sim: &SimParams) -> Dataset {
    let stride = (log.f_sim / params.f_tau).round() as usize;
    assert!(
        stride >= 1 && (log.f_sim / params.f_tau - stride as f64).abs() < 1e-9,
        "simulator framerate must be an integer multiple of f_tau"
    );
    let frames: Vec<usize> = (0..log.steps.len()).step_by(stride).collect();
    let window = params.h_past + params.horizon;

    // Exclusion spans: from margin seconds before each collision through the
    // matching respawn (which teleports the robot).
    let spans: Vec<(f64, f64)> = log
        .collisions
        .iter()
        .zip(log.respawns.iter())
        .map(|((_, event), mark)| (event.time - params.collision_margin, mark.time))
        .collect();

    let mut dataset = Dataset {
        examples: Vec::new(),
        meta: DatasetMeta {
            collect_seeds: vec![log.seed],
            world_seeds: vec![log.world.seed],
            f_tau: params.f_tau,
            h_past: params.h_past,
            horizon: params.horizon,
            patch_cells: params.patch_cells,
            windows_considered: 0,
            windows_dropped: 0,
        },
    };
    if frames.len() < window {
        return dataset;
    }

    for start in 0..=(frames.len() - window) {
        dataset.meta.windows_considered += 1;
        let first = &log.steps[frames[start]];
        let last = &log.steps[frames[start + window - 1]];
        let (t0, t1) = (first.time, last.time);
        if spans.iter().any(|&(s0, s1)| t0 <= s1 && s0 <= t1) {
            dataset.meta.windows_dropped += 1;
            continue;
        }
        let ref_idx = frames[start + params.h_past - 1];
        let ref_step = &log.steps[ref_idx];
        let past_positions: Vec<Vec2> = (0..params.h_past)
            .map(|j| ref_step.pose.to_local(log.steps[frames[start + j]].pose.position))
            .collect();
        let future_positions: Vec<Vec2> = (0..params.horizon)
            .map(|j| {
                ref_step
                    .pose
                    .to_local(log.steps[frames[start + params.h_past + j]].pose.position)
            })
            .collect();
        let noise_seed = split_seed_indexed(log.seed, "patch", ref_idx as u64);
        let full = render_patch(
            &log.world,
            &RobotState {
                pose: ref_step.pose,
                time: ref_step.time,
            },
            noise_seed,
            sim,
        );
        let pooled = full
            .forward_window_pooled(params.patch_crop, params.patch_cells)
            .expect("patch_cells must divide the cropped render resolution");
        let patch = Patch {
            cells: params.patch_cells,
            data: pooled.iter().map(|&v| v as f32).collect(),
        };
        dataset.examples.push(Example {
            past_positions,
            patch,
            future_positions,
        });
    }
    dataset
}

pub const DATASET_MAGIC: &str = "offnav-dataset v1";

/// Text header plus little-endian binary payload. Positions are f64, patch
/// values f32, so round-trips are bit-exact.
pub fn write_dataset(
    w: &mut impl Write,
    ds: &Dataset,
    header_comments: &[String],
) -> Result<(), DataError> {
    writeln!(w, "{DATASET_MAGIC}")?;
    for c in header_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "examples {}", ds.examples.len())?;
    writeln!(w, "f_tau {}", ds.meta.f_tau)?;
    writeln!(w, "h_past {}", ds.meta.h_past)?;
    writeln!(w, "horizon {}", ds.meta.horizon)?;
    writeln!(w, "patch_cells {}", ds.meta.patch_cells)?;
    writeln!(w, "windows_considered {}", ds.meta.windows_considered)?;
    writeln!(w, "windows_dropped {}", ds.meta.windows_dropped)?;
    let join = |v: &[u64]| {
        v.iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "collect_seeds {}", join(&ds.meta.collect_seeds))?;
    writeln!(w, "world_seeds {}", join(&ds.meta.world_seeds))?;
    writeln!(w, "data")?;
    for ex in &ds.examples {
        for p in ex.past_positions.iter().chain(ex.future_positions.iter()) {
            w.write_all(&p.x.to_le_bytes())?;
            w.write_all(&p.y.to_le_bytes())?;
        }
        for v in &ex.patch.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl BufRead) -> Result<Dataset, DataError> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<String, DataError> {
        loop {
            line.clear();
            let n = r.read_line(&mut line)?;
            if n == 0 {
                return Err(DataError::Parse("unexpected end of header".into()));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.to_string());
        }
    };
    let magic = read_line(r)?;
    if magic != DATASET_MAGIC {
        return Err(DataError::Parse(format!("unsupported header `{magic}`")));
    }
    let mut meta = DatasetMeta::default();
    let mut examples = 0usize;
    loop {
        let l = read_line(r)?;
        if l == "data" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| DataError::Parse(format!("bad header line `{l}`")))?;
        match key {
            "examples" => examples = value.parse().map_err(|e| bad("examples", e))?,
            "f_tau" => meta.f_tau = value.parse().map_err(|e| bad("f_tau", e))?,
            "h_past" => meta.h_past = value.parse().map_err(|e| bad("h_past", e))?,
            "horizon" => meta.horizon = value.parse().map_err(|e| bad("horizon", e))?,
            "patch_cells" => {
                meta.patch_cells = value.parse().map_err(|e| bad("patch_cells", e))?
            }
            "windows_considered" => {
                meta.windows_considered =
                    value.parse().map_err(|e| bad("windows_considered", e))?
            }
            "windows_dropped" => {
                meta.windows_dropped = value.parse().map_err(|e| bad("windows_dropped", e))?
            }
            "collect_seeds" => meta.collect_seeds = parse_u64s(value)?,
            "world_seeds" => meta.world_seeds = parse_u64s(value)?,
            other => return Err(DataError::Parse(format!("unknown header key `{other}`"))),
        }
    }
    let mut out = Dataset {
        examples: Vec::with_capacity(examples),
        meta,
    };
    let patch_len = out.meta.patch_cells * out.meta.patch_cells * 4;
    for _ in 0..examples {
        let mut past = Vec::with_capacity(out.meta.h_past);
        let mut future = Vec::with_capacity(out.meta.horizon);
        for i in 0..(out.meta.h_past + out.meta.horizon) {
            let x = read_f64(r)?;
            let y = read_f64(r)?;
            if i < out.meta.h_past {
                past.push(Vec2::new(x, y));
            } else {
                future.push(Vec2::new(x, y));
            }
        }
        let mut data = Vec::with_capacity(patch_len);
        for _ in 0..patch_len {
            data.push(read_f32(r)?);
        }
        out.examples.push(Example {
            past_positions: past,
            patch: Patch {
                cells: out.meta.patch_cells,
                data,
            },
            future_positions: future,
        });
    }
    Ok(out)
}

fn bad(key: &'static str, e: impl std::fmt::Display) -> DataError {
    DataError::Parse(format!("{key}: {e}"))
}

fn parse_u64s(s: &str) -> Result<Vec<u64>, DataError> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<u64>()
                .map_err(|e| DataError::Parse(format!("seed list: {e}")))
        })
        .collect()
}

fn read_f64(r: &mut impl Read) -> Result<f64, DataError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f32(r: &mut impl Read) -> Result<f32, DataError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(f32::from_le_bytes(buf))
}
