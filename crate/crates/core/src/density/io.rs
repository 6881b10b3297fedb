//! Model checkpoint: text header plus little-endian f64 parameter blob.
//! Floats that must survive round trips exactly are stored as hex bit
//! patterns with a readable comment.

use super::{DensityError, ImitativeModel, ModelConfig};
use crate::nn::Mlp;
use std::io::{BufRead, Write};

pub const MODEL_MAGIC: &str = "offnav-model v1";

pub fn write_model(
    w: &mut impl Write,
    model: &ImitativeModel,
    header_comments: &[String],
) -> Result<(), DensityError> {
    writeln!(w, "{MODEL_MAGIC}")?;
    for c in header_comments {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "kind imitative")?;
    writeln!(w, "patch_input_cells {}", model.config.patch_input_cells)?;
    let widths: Vec<String> = model
        .config
        .encoder_widths
        .iter()
        .map(|v| v.to_string())
        .collect();
    writeln!(w, "encoder_widths {}", widths.join(" "))?;
    writeln!(w, "step_hidden {}", model.config.step_hidden)?;
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
    writeln!(w, "# eta = {}, sigma_floor = {}", model.eta, model.sigma_floor)?;
    writeln!(w, "eta_bits {:016x}", model.eta.to_bits())?;
    writeln!(w, "sigma_floor_bits {:016x}", model.sigma_floor.to_bits())?;
    writeln!(w, "train_seed {}", model.train_seed)?;
    writeln!(
        w,
        "param_count {}",
        model.encoder.param_count() + model.step_net.param_count()
    )?;
    writeln!(w, "data")?;
    for p in model.encoder.params.iter().chain(model.step_net.params.iter()) {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_model(r: &mut impl BufRead) -> Result<ImitativeModel, DensityError> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead| -> Result<String, DensityError> {
        loop {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(DensityError::Parse("unexpected end of header".into()));
            }
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(t.to_string());
        }
    };
    if read_line(r)? != MODEL_MAGIC {
        return Err(DensityError::Parse("unsupported model header".into()));
    }
    let mut cfg = ModelConfig::default();
    let mut eta_bits: Option<u64> = None;
    let mut sigma_bits: Option<u64> = None;
    let mut train_seed = 0u64;
    let mut param_count = 0usize;
    let mut kind = String::new();
    loop {
        let l = read_line(r)?;
        if l == "data" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| DensityError::Parse(format!("bad header line `{l}`")))?;
        match key {
            "kind" => kind = value.to_string(),
            "patch_input_cells" => cfg.patch_input_cells = parse(value, key)?,
            "encoder_widths" => {
                cfg.encoder_widths = value
                    .split_whitespace()
                    .map(|v| parse(v, key))
                    .collect::<Result<_, _>>()?
            }
            "step_hidden" => cfg.step_hidden = parse(value, key)?,
            "h_past" => cfg.h_past = parse(value, key)?,
            "horizon" => cfg.horizon = parse(value, key)?,
            "channel_mask" => {
                let flags: Vec<&str> = value.split_whitespace().collect();
                if flags.len() != 4 {
                    return Err(DensityError::Parse("channel_mask needs 4 flags".into()));
                }
                for (i, f) in flags.iter().enumerate() {
                    cfg.channel_mask[i] = *f == "1";
                }
            }
            "eta_bits" => eta_bits = Some(parse_hex(value)?),
            "sigma_floor_bits" => sigma_bits = Some(parse_hex(value)?),
            "train_seed" => train_seed = parse(value, key)?,
            "param_count" => param_count = parse(value, key)?,
            other => {
                return Err(DensityError::Parse(format!(
                    "unknown model header key `{other}`"
                )))
            }
        }
    }
    if kind != "imitative" {
        return Err(DensityError::Parse(format!(
            "expected kind imitative, got `{kind}`"
        )));
    }
    let eta = f64::from_bits(
        eta_bits.ok_or_else(|| DensityError::Parse("missing eta_bits".into()))?,
    );
    let sigma_floor = f64::from_bits(
        sigma_bits.ok_or_else(|| DensityError::Parse("missing sigma_floor_bits".into()))?,
    );
    cfg.eta = eta;

    let enc_dims: Vec<usize> = std::iter::once(cfg.encoder_input_dim())
        .chain(cfg.encoder_widths.iter().copied())
        .collect();
    let step_dims = vec![cfg.context_dim() + 4, cfg.step_hidden, 5];
    let mut encoder = Mlp::zeros(&enc_dims, true);
    let mut step_net = Mlp::zeros(&step_dims, false);
    if encoder.param_count() + step_net.param_count() != param_count {
        return Err(DensityError::Parse(format!(
            "param_count {} does not match architecture ({} + {})",
            param_count,
            encoder.param_count(),
            step_net.param_count()
        )));
    }
    let mut buf = [0u8; 8];
    for p in encoder
        .params
        .iter_mut()
        .chain(step_net.params.iter_mut())
    {
        r.read_exact(&mut buf)?;
        *p = f64::from_le_bytes(buf);
    }
    Ok(ImitativeModel {
        config: cfg,
        encoder,
        step_net,
        sigma_floor,
        eta,
        train_seed,
    })
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, DensityError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| DensityError::Parse(format!("{key}: {e}")))
}

fn parse_hex(value: &str) -> Result<u64, DensityError> {
    u64::from_str_radix(value, 16).map_err(|e| DensityError::Parse(format!("hex bits: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = ModelConfig {
            patch_input_cells: 2,
            encoder_widths: vec![8, 8],
            step_hidden: 8,
            ..ModelConfig::default()
        };
        let model = ImitativeModel::new_seeded(cfg, 99);
        let mut buf = Vec::new();
        write_model(&mut buf, &model, &["trained on nothing".into()]).unwrap();
        let back = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let text = b"offnav-model v999\n";
        assert!(read_model(&mut text.as_slice()).is_err());
    }
}
