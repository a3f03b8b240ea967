//! JSON run configuration. Every section is optional and command-line flags
//! take precedence over it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sqgame::certify::SeeSawConfig;
use sqgame::oracle::Side;
use sqgame::witness::EnsembleName;

use crate::Failure;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub target: Option<TargetSpec>,
    /// Design file written by `sqgame design`.
    pub game: Option<PathBuf>,
    /// `L`, magnitude of the negative witness eigenvalues.
    pub penalty: Option<f64>,
    pub l1: Option<f64>,
    /// `l`, penalty of the swap operator.
    pub swap_penalty: Option<f64>,
    pub ensemble: Option<EnsembleName>,
    pub seesaw: Option<SeeSawConfig>,
    pub instance: Option<InstanceSpec>,
    pub optimize: Option<bool>,
    pub probe: Option<ProbeSpec>,
    pub bound: Option<BoundSpec>,
}

/// Either a Schmidt angle with optional local-unitary seed, or explicit
/// amplitudes over `|00>, |01>, |10>, |11>` as `[re, im]` pairs.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub chi: Option<f64>,
    pub lu_seed: Option<u64>,
    pub amplitudes: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Ideal,
    Werner { visibility: f64 },
    Random { seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub name: Option<String>,
    pub n: Option<usize>,
    pub min_mix: Option<f64>,
    pub min_angle: Option<f64>,
    pub side: Option<Side>,
    pub dims: Option<Vec<[usize; 2]>>,
    pub theta: Option<f64>,
    pub gamma: Option<f64>,
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub chi: Option<f64>,
    pub grid_n: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::invalid(format!("invalid config {}: {e}", path.display())))
    }
}
