//! Sweeps of a family over an n grid: snapshots are built in parallel,
//! assembled in grid order, and handed to group detection.

use serde::{Deserialize, Serialize};

use crate::cp::CpDecomposition;
use crate::degeneracy::{
    classify_group, detect_groups, Classification, DivergenceReport, Thresholds,
};
use crate::error::{invalid, Result};
use crate::families::{FamilyDescription, FamilyParams, DEFAULT_N_GRID};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub family: FamilyParams,
    pub n_grid: Vec<f64>,
    pub thresholds: Thresholds,
}

impl SweepConfig {
    pub fn new(family: FamilyParams) -> Self {
        SweepConfig {
            family,
            n_grid: DEFAULT_N_GRID.to_vec(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(invalid("n grid is empty"));
        }
        if self.n_grid.len() < 3 {
            return Err(invalid("n grid needs at least three points"));
        }
        if self.n_grid.iter().any(|n| !n.is_finite() || *n <= 0.0) {
            return Err(invalid("n grid values must be positive and finite"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("n grid must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupClassification {
    pub group: usize,
    #[serde(flatten)]
    pub classification: Classification,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub family: FamilyDescription,
    pub report: DivergenceReport,
    /// One entry per detected group, numbered from 1 as in the CSV.
    pub classifications: Vec<GroupClassification>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        self.report.to_csv()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the normalized snapshot at every grid point, one thread per point.
pub fn snapshots(family: &FamilyParams, n_grid: &[f64]) -> Result<Vec<(f64, CpDecomposition)>> {
    let fam = family.build()?;
    let results: Vec<Result<CpDecomposition>> = std::thread::scope(|scope| {
        let handles: Vec<_> = n_grid
            .iter()
            .map(|&n| {
                let fam = &fam;
                scope.spawn(move || fam.normalized_snapshot(n))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("snapshot thread panicked"))
            .collect()
    });
    n_grid
        .iter()
        .copied()
        .zip(results)
        .map(|(n, r)| r.map(|cp| (n, cp)))
        .collect()
}

/// Runs a sweep. Every group is classified against the family's limit tensor.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let fam = config.family.build()?;
    let series = snapshots(&config.family, &config.n_grid)?;
    let report = detect_groups(&series, &config.thresholds)?;
    let classifications = report
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            classify_group(&series, &g.group, Some(fam.limit()), &config.thresholds).map(
                |classification| GroupClassification {
                    group: i + 1,
                    classification,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        family: fam.describe(),
        report,
        classifications,
    })
}
