//! Run configuration: a single JSON document with paths, thresholds and
//! defaults. Relative input paths resolve against the config file's
//! directory, so a generated bundle can be moved around freely.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use blockdisc_core::ingest::{PlaceColumns, VoterColumns};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inputs {
    pub voters_2012: PathBuf,
    pub voters_2016: PathBuf,
    pub places_2012: PathBuf,
    pub places_2016: PathBuf,
    #[serde(default)]
    pub vote_center_counties: Option<PathBuf>,
    #[serde(default)]
    pub geocoder_fixture: Option<PathBuf>,
    #[serde(default)]
    pub state_covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub block_pair_miles: f64,
    pub baseline_gap_miles: f64,
    pub assignment_max_miles: f64,
    pub baseline_strict: bool,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            block_pair_miles: 0.3,
            baseline_gap_miles: 0.25,
            assignment_max_miles: 25.0,
            baseline_strict: true,
        }
    }
}

fn default_window_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.25, 0.5, 1.0]
}

fn default_seed() -> u64 {
    7
}

fn default_gap_sample() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub inputs: Inputs,
    #[serde(default)]
    pub voter_columns: VoterColumns,
    #[serde(default)]
    pub place_columns: PlaceColumns,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Window thresholds in miles; the full sample is always included.
    #[serde(default = "default_window_grid")]
    pub window_grid: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_gap_sample")]
    pub gap_sample_size: usize,
}

/// A loaded config plus the provenance of its bytes.
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the raw config file.
    pub sha256: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut config: RunConfig =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", path.display()))?;

    if config.thresholds.block_pair_miles <= 0.0
        || config.thresholds.baseline_gap_miles <= 0.0
        || config.thresholds.assignment_max_miles <= 0.0
    {
        anyhow::bail!("thresholds must be positive");
    }

    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&p);
        }
    };
    resolve(&mut config.inputs.voters_2012);
    resolve(&mut config.inputs.voters_2016);
    resolve(&mut config.inputs.places_2012);
    resolve(&mut config.inputs.places_2016);
    if let Some(p) = config.inputs.vote_center_counties.as_mut() {
        resolve(p);
    }
    if let Some(p) = config.inputs.geocoder_fixture.as_mut() {
        resolve(p);
    }
    if let Some(p) = config.inputs.state_covariates.as_mut() {
        resolve(p);
    }
    if config.output_dir.is_relative() {
        config.output_dir = base.join(&config.output_dir);
    }

    for (label, p) in [
        ("voters_2012", &config.inputs.voters_2012),
        ("voters_2016", &config.inputs.voters_2016),
        ("places_2012", &config.inputs.places_2012),
        ("places_2016", &config.inputs.places_2016),
    ] {
        if !p.exists() {
            anyhow::bail!("input path for {label} does not exist: {}", p.display());
        }
    }

    use sha2::Digest;
    let sha256 = sha2::Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { config, sha256 })
}

/// Provenance header embedded in every JSON artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(sha256: &str, seed: u64) -> Self {
        Self {
            config_sha256: sha256.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}
