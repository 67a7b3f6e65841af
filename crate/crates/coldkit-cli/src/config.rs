//! Run configuration: JSON config file merged under command-line
//! overrides, with `COLDKIT_SEED` as the seed fallback.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coldkit::relations::RelationThresholds;
use serde::{Deserialize, Serialize};

/// Optional settings from a `--config` JSON file. Every field may be
/// omitted; command-line flags override whatever is present.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub scenes_path: Option<PathBuf>,
    pub classifier: Option<String>,
    pub prototypes_path: Option<PathBuf>,
    pub max_anchors: Option<usize>,
    pub ambiguous_rate: Option<f64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: ThresholdOverrides,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
pub struct ThresholdOverrides {
    pub near_max: Option<f64>,
    pub far_min: Option<f64>,
    pub support_gap: Option<f64>,
    pub between_perp_max: Option<f64>,
    pub between_t_min: Option<f64>,
    pub between_t_max: Option<f64>,
}

pub fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            serde_json::from_str(&raw)
                .with_context(|| format!("parsing config file {}", path.display()))
        }
    }
}

/// Threshold flags shared by the grounding commands.
#[derive(Debug, Clone, Copy, Default, clap::Args)]
pub struct ThresholdArgs {
    /// near: centroid distance at most this (meters)
    #[arg(long)]
    pub near_max: Option<f64>,
    /// far: centroid distance at least this (meters)
    #[arg(long)]
    pub far_min: Option<f64>,
    /// supported_by: max |bottom(subject) - top(anchor)| (meters)
    #[arg(long)]
    pub support_gap: Option<f64>,
    /// between: max perpendicular distance to the anchor segment (meters)
    #[arg(long)]
    pub between_perp_max: Option<f64>,
    /// between: lower projection parameter bound
    #[arg(long)]
    pub between_t_min: Option<f64>,
    /// between: upper projection parameter bound
    #[arg(long)]
    pub between_t_max: Option<f64>,
}

impl ThresholdArgs {
    pub fn resolve(&self, file: &ThresholdOverrides) -> Result<RelationThresholds> {
        let defaults = RelationThresholds::default();
        let thresholds = RelationThresholds {
            near_max: self.near_max.or(file.near_max).unwrap_or(defaults.near_max),
            far_min: self.far_min.or(file.far_min).unwrap_or(defaults.far_min),
            support_gap: self
                .support_gap
                .or(file.support_gap)
                .unwrap_or(defaults.support_gap),
            between_perp_max: self
                .between_perp_max
                .or(file.between_perp_max)
                .unwrap_or(defaults.between_perp_max),
            between_t_min: self
                .between_t_min
                .or(file.between_t_min)
                .unwrap_or(defaults.between_t_min),
            between_t_max: self
                .between_t_max
                .or(file.between_t_max)
                .unwrap_or(defaults.between_t_max),
        };
        for (name, value) in [
            ("near-max", thresholds.near_max),
            ("far-min", thresholds.far_min),
            ("support-gap", thresholds.support_gap),
            ("between-perp-max", thresholds.between_perp_max),
        ] {
            anyhow::ensure!(
                value > 0.0,
                "threshold --{name} must be positive, got {value}"
            );
        }
        anyhow::ensure!(
            thresholds.between_t_min < thresholds.between_t_max,
            "--between-t-min ({}) must be below --between-t-max ({})",
            thresholds.between_t_min,
            thresholds.between_t_max
        );
        Ok(thresholds)
    }
}

/// Resolve the effective seed: CLI flag, then config file, then the
/// `COLDKIT_SEED` environment variable, then 0.
pub fn resolve_seed(cli: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(seed) = cli.or(file) {
        return Ok(seed);
    }
    match std::env::var("COLDKIT_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .with_context(|| format!("COLDKIT_SEED must be a u64, got {raw:?}")),
        Err(_) => Ok(0),
    }
}

/// Fully resolved settings echoed into every report so results are
/// reproducible from the output file alone.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub seed: u64,
    pub classifier: String,
    pub max_anchors: usize,
    pub ambiguous_rate: f64,
    pub all_targets: bool,
    pub thresholds: RelationThresholds,
    pub scenes_path: Option<PathBuf>,
    pub instructions_path: Option<PathBuf>,
    pub references_path: Option<PathBuf>,
    pub perturb: Option<String>,
}
