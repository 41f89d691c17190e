use std::path::{Path, PathBuf};

use anyhow::Context;
use cpdegen::als::AlsInit;
use cpdegen::degeneracy::Thresholds;
use cpdegen::families::{FamilyKind, FamilyParams, DEFAULT_N_GRID};
use cpdegen::sgsd::{EigenOptions, SgsdOptions, SlicemixOptions};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CPDEGEN_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Sweep,
    Analyze,
    Fit,
    Example,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub init: AlsInit,
    pub record_every: usize,
    pub ridge_scale: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = cpdegen::als::AlsOptions::default();
        FitSettings {
            max_iters: d.max_iters,
            rel_tol: d.rel_tol,
            init: d.init,
            record_every: d.record_every,
            ridge_scale: d.ridge_scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSettings {
    pub sgsd: SgsdOptions,
    pub slicemix: SlicemixOptions,
    pub eigen: EigenOptions,
}

impl Default for AnalyzeSettings {
    fn default() -> Self {
        AnalyzeSettings {
            sgsd: SgsdOptions::default(),
            slicemix: SlicemixOptions::default(),
            eigen: EigenOptions::default(),
        }
    }
}

/// Everything one run needs. Stored as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub family: FamilyParams,
    pub n_grid: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Tensor file for `analyze` and `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Target rank for `analyze` and `fit`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Write the snapshot at this n instead of the limit (`example`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    pub thresholds: Thresholds,
    pub fit: FitSettings,
    pub analyze: AnalyzeSettings,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        RunConfig {
            command,
            family: FamilyParams {
                kind: FamilyKind::R3Example,
                a: None,
                e: None,
                f: None,
                seed: None,
                dims: None,
            },
            n_grid: DEFAULT_N_GRID.to_vec(),
            seed: 0,
            out_dir: None,
            input: None,
            rank: None,
            n: None,
            thresholds: Thresholds::default(),
            fit: FitSettings::default(),
            analyze: AnalyzeSettings::default(),
        }
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(s: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let s =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&s).with_context(|| format!("parsing {}", path.display()))
    }

    /// `out_dir`, else the environment default, else the working directory.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}
