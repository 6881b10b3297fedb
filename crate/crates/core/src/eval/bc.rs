//! Goal-conditioned behavior cloning baseline: the learner's encoder
//! architecture with the goal appended to the input, regressing the first
//! future displacement instead of a density.

use super::EvalError;
use crate::data::Dataset;
use crate::density::{DensityError, TrainConfig};
use crate::geometry::Vec2;
use crate::nn::{Adam, Mlp, MlpCache};
use crate::rng::{seeded_rng, split_seed, split_seed_indexed};
use crate::world::Patch;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub patch_input_cells: usize,
    pub patch_crop: f64,
    pub encoder_widths: Vec<usize>,
    pub h_past: usize,
    pub horizon: usize,
    pub channel_mask: [bool; 4],
    /// Per-channel offsets subtracted from pooled patch values, matching
    /// the learner's preprocessing.
    pub input_offset: [f64; 4],
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            patch_input_cells: 25,
            patch_crop: 0.5,
            encoder_widths: vec![128, 96],
            h_past: 10,
            horizon: 10,
            channel_mask: [true; 4],
            input_offset: [0.40, 0.32, 0.18, 0.0],
        }
    }
}

impl BcConfig {
    pub fn input_dim(&self) -> usize {
        self.patch_input_cells * self.patch_input_cells * 4 + 2 * self.h_past + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcModel {
    pub config: BcConfig,
    pub net: Mlp,
    pub train_seed: u64,
}

impl BcModel {
    pub fn new_seeded(config: BcConfig, seed: u64) -> BcModel {
        let dims: Vec<usize> = std::iter::once(config.input_dim())
            .chain(config.encoder_widths.iter().copied())
            .chain(std::iter::once(2))
            .collect();
        BcModel {
            net: Mlp::new_seeded(&dims, false, split_seed(seed, "bc-init")),
            config,
            train_seed: seed,
        }
    }

    pub fn input(
        &self,
        patch: &Patch,
        past_positions: &[Vec2],
        goal: Vec2,
    ) -> Result<Vec<f64>, DensityError> {
        if past_positions.len() != self.config.h_past {
            return Err(DensityError::ShapeMismatch(format!(
                "expected {} past positions, got {}",
                self.config.h_past,
                past_positions.len()
            )));
        }
        let pooled = patch
            .forward_window_pooled(self.config.patch_crop, self.config.patch_input_cells)
            .ok_or_else(|| {
                DensityError::ShapeMismatch(format!(
                    "patch side {} incompatible with crop {} to {} cells",
                    patch.cells, self.config.patch_crop, self.config.patch_input_cells
                ))
            })?;
        let mut input = Vec::with_capacity(self.config.input_dim());
        for (i, v) in pooled.iter().enumerate() {
            let ch = i % 4;
            input.push(if self.config.channel_mask[ch] {
                *v - self.config.input_offset[ch]
            } else {
                0.0
            });
        }
        for p in past_positions {
            input.push(p.x);
            input.push(p.y);
        }
        input.push(goal.x);
        input.push(goal.y);
        Ok(input)
    }

    /// Predicted displacement over one trajectory frame, robot frame.
    pub fn predict(
        &self,
        patch: &Patch,
        past_positions: &[Vec2],
        goal: Vec2,
    ) -> Result<Vec2, DensityError> {
        let input = self.input(patch, past_positions, goal)?;
        let out = self.net.forward(&input);
        Ok(Vec2::new(out[0], out[1]))
    }
}

/// Train the behavior-cloning baseline: mean squared error to the first
/// future displacement, goal input taken in hindsight as the example's
/// final future position.
pub fn train_bc(
    dataset: &Dataset,
    bc_cfg: &BcConfig,
    cfg: &TrainConfig,
) -> Result<(BcModel, Vec<f64>), EvalError> {
    if dataset.examples.is_empty() {
        return Err(EvalError::Density(DensityError::EmptyDataset));
    }
    let mut model = BcModel::new_seeded(bc_cfg.clone(), cfg.seed);
    let n = dataset.examples.len();
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for ex in &dataset.examples {
        let goal = *ex.future_positions.last().unwrap();
        inputs.push(model.input(&ex.patch, &ex.past_positions, goal)?);
        targets.push(ex.future_positions[0]);
    }

    let mut opt = Adam::new(model.net.param_count(), cfg.learning_rate);
    let mut grad = vec![0.0f64; model.net.param_count()];
    let mut cache = MlpCache::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = seeded_rng(split_seed_indexed(cfg.seed, "bc-shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                model.net.forward_cached(&inputs[idx], &mut cache);
                let out = cache.activations.last().unwrap();
                let ex = (out[0] - targets[idx].x, out[1] - targets[idx].y);
                epoch_loss += 0.5 * (ex.0 * ex.0 + ex.1 * ex.1);
                let dout = [ex.0 * scale, ex.1 * scale];
                model.net.backward(&cache, &dout, &mut grad, false);
            }
            opt.step(&mut model.net.params, &grad);
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() {
            return Err(EvalError::Density(DensityError::Diverged {
                epoch,
                loss: mean,
            }));
        }
        losses.push(mean);
    }
    Ok((model, losses))
}

pub const BC_MAGIC: &str = "offnav-bc v1";

pub fn write_bc(
    w: &mut impl Write,
    model: &BcModel,
    header_comments: &[String],
) -> Result<(), EvalError> {
    writeln!(w, "{BC_MAGIC}")?;
    for c in header_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "patch_input_cells {}", model.config.patch_input_cells)?;
    writeln!(
        w,
        "encoder_widths {}",
        model
            .config
            .encoder_widths
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(w, "h_past {}", model.config.h_past)?;
    writeln!(w, "horizon {}", model.config.horizon)?;
    writeln!(
        w,
        "channel_mask {}",
        model
            .config
            .channel_mask
            .iter()
            .map(|&b| if b { "1" } else { "0" })
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(w, "train_seed {}", model.train_seed)?;
    writeln!(w, "param_count {}", model.net.param_count())?;
    writeln!(w, "data")?;
    for p in &model.net.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_bc(r: &mut impl BufRead) -> Result<BcModel, EvalError> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<String, EvalError> {
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(EvalError::Parse("unexpected end of header".into()));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.to_string());
        }
    };
    if read_line(r)? != BC_MAGIC {
        return Err(EvalError::Parse("unsupported bc header".into()));
    }
    let mut cfg = BcConfig::default();
    let mut train_seed = 0u64;
    let mut param_count = 0usize;
    loop {
        let l = read_line(r)?;
        if l == "data" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| EvalError::Parse(format!("bad header line `{l}`")))?;
        match key {
            "patch_input_cells" => {
                cfg.patch_input_cells = value
                    .parse()
                    .map_err(|e| EvalError::Parse(format!("{key}: {e}")))?
            }
            "encoder_widths" => {
                cfg.encoder_widths = value
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|e| EvalError::Parse(format!("{key}: {e}"))))
                    .collect::<Result<_, _>>()?
            }
            "h_past" => {
                cfg.h_past = value
                    .parse()
                    .map_err(|e| EvalError::Parse(format!("{key}: {e}")))?
            }
            "horizon" => {
                cfg.horizon = value
                    .parse()
                    .map_err(|e| EvalError::Parse(format!("{key}: {e}")))?
            }
            "channel_mask" => {
                let flags: Vec<&str> = value.split_whitespace().collect();
                if flags.len() != 4 {
                    return Err(EvalError::Parse("channel_mask needs 4 flags".into()));
                }
                for (i, f) in flags.iter().enumerate() {
                    cfg.channel_mask[i] = *f == "1";
                }
            }
            "train_seed" => {
                train_seed = value
                    .parse()
                    .map_err(|e| EvalError::Parse(format!("{key}: {e}")))?
            }
            "param_count" => {
                param_count = value
                    .parse()
                    .map_err(|e| EvalError::Parse(format!("{key}: {e}")))?
            }
            other => return Err(EvalError::Parse(format!("unknown bc header key `{other}`"))),
        }
    }
    let dims: Vec<usize> = std::iter::once(cfg.input_dim())
        .chain(cfg.encoder_widths.iter().copied())
        .chain(std::iter::once(2))
        .collect();
    let mut net = Mlp::zeros(&dims, false);
    if net.param_count() != param_count {
        return Err(EvalError::Parse(format!(
            "param_count {} does not match architecture {}",
            param_count,
            net.param_count()
        )));
    }
    let mut buf = [0u8; 8];
    for p in net.params.iter_mut() {
        r.read_exact(&mut buf)?;
        *p = f64::from_le_bytes(buf);
    }
    Ok(BcModel {
        config: cfg,
        net,
        train_seed,
    })
}
