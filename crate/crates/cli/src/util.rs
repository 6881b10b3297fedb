//! Config loading/merging, artifact headers, and the run manifest.

use anyhow::{Context, Result};
use offnav_core::pipeline::PipelineConfig;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Defaults, overlaid by an optional TOML file. Unknown keys are rejected.
pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            let cfg: PipelineConfig =
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
            Ok(cfg)
        }
    }
}

/// Header comment block for artifacts: the invoking command plus the full
/// effective configuration, so every output records how it was produced.
pub fn header_comments(cfg: &PipelineConfig, command_line: &str) -> Vec<String> {
    let mut out = vec![
        format!("offnav {}", env!("CARGO_PKG_VERSION")),
        format!("command: {command_line}"),
        "seed derivation: splitmix64(master ^ fnv1a(stage label))".to_string(),
        "config:".to_string(),
    ];
    let toml = toml::to_string(cfg).unwrap_or_else(|_| "<unserializable>".into());
    for line in toml.lines() {
        out.push(format!("  {line}"));
    }
    out
}

/// Resolve an output path under the run directory, creating parents.
pub fn out_path(out_dir: &Path, rel: &Path) -> Result<PathBuf> {
    let path = if rel.is_absolute() {
        rel.to_path_buf()
    } else {
        out_dir.join(rel)
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(path)
}

/// Append one line to the run manifest.
pub fn manifest_append(out_dir: &Path, entry: &str) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join("manifest.txt"))?;
    writeln!(f, "{entry}")?;
    Ok(())
}

/// Prepend `#` comment lines to CSV-style text content.
pub fn with_comments(comments: &[String], body: &str) -> String {
    let mut s = String::new();
    for c in comments {
        s.push_str("# ");
        s.push_str(c);
        s.push('\n');
    }
    s.push_str(body);
    s
}

pub fn parse_pose(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    anyhow::ensure!(parts.len() == 3, "pose must be x,y,heading");
    Ok((
        parts[0].trim().parse()?,
        parts[1].trim().parse()?,
        parts[2].trim().parse()?,
    ))
}

pub fn parse_point(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(',').collect();
    anyhow::ensure!(parts.len() == 2, "point must be x,y");
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

pub fn parse_extent(s: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(['x', ',']).collect();
    anyhow::ensure!(parts.len() == 2, "extent must be WxH");
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(Into::into))
        .collect()
}
