use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cpdegen::als::{fit_als, AlsOptions, Termination};
use cpdegen::degeneracy::{pattern_of, EigenPattern};
use cpdegen::sgsd::analyze_boundary;
use cpdegen::sweep::{run_sweep, SweepConfig};
use cpdegen::Tensor3;
use serde::Serialize;

use crate::config::{CommandKind, RunConfig};

/// Why a command did not succeed, mapped to an exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input, configuration or I/O. Exit code 2.
    Usage(String),
    /// The computation ran but did not reach its goal. Exit code 1.
    Analysis(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Analysis(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Analysis(m) => f.write_str(m),
        }
    }
}

impl From<cpdegen::Error> for Failure {
    fn from(e: cpdegen::Error) -> Self {
        match e {
            cpdegen::Error::InvalidArgument(_)
            | cpdegen::Error::Io(_)
            | cpdegen::Error::Json(_) => Failure::Usage(e.to_string()),
            other => Failure::Analysis(other.to_string()),
        }
    }
}

/// What a successful run produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
    /// Set when artifacts were written but the analysis fell short.
    pub shortfall: Option<String>,
}

fn write(dir: &Path, name: &str, contents: &str, out: &mut Outcome) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Usage(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::Usage(format!("writing {}: {e}", path.display())))?;
    out.artifacts.push(path);
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v).map_err(|e| Failure::Usage(e.to_string()))
}

fn read_input(config: &RunConfig) -> Result<(Tensor3, usize), Failure> {
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Failure::Usage("an input tensor file is required".into()))?;
    let rank = config
        .rank
        .ok_or_else(|| Failure::Usage("a target rank is required".into()))?;
    let x =
        Tensor3::read(input).map_err(|e| Failure::Usage(format!("{}: {e}", input.display())))?;
    Ok((x, rank))
}

pub fn run(config: &RunConfig) -> Result<Outcome, Failure> {
    match config.command {
        CommandKind::Sweep => cmd_sweep(config),
        CommandKind::Analyze => cmd_analyze(config),
        CommandKind::Fit => cmd_fit(config),
        CommandKind::Example => cmd_example(config),
    }
}

pub fn cmd_sweep(config: &RunConfig) -> Result<Outcome, Failure> {
    let sweep = SweepConfig {
        family: config.family.clone(),
        n_grid: config.n_grid.clone(),
        thresholds: config.thresholds.clone(),
    };
    let result = run_sweep(&sweep)?;
    let dir = config.resolved_out_dir();
    let stem = format!("sweep_{}", config.family.kind.name());
    let mut out = Outcome::default();
    write(&dir, &format!("{stem}.csv"), &result.to_csv(), &mut out)?;
    write(&dir, &format!("{stem}.json"), &result.to_json()?, &mut out)?;
    let mut summary = format!(
        "{}: {} candidate(s), {} group(s)\n",
        config.family.kind.name(),
        result.report.candidates.len(),
        result.report.groups.len()
    );
    for (g, c) in result.report.groups.iter().zip(&result.classifications) {
        summary.push_str(&format!(
            "group {} {}: verdict {:?}, {}\n",
            c.group,
            g.group,
            c.classification.verdict,
            describe_pattern(&c.classification.eigen_pattern)
        ));
    }
    out.summary = summary;
    Ok(out)
}

fn describe_pattern(p: &EigenPattern) -> String {
    match p {
        EigenPattern::Available {
            joint_partition,
            eigenvector_count,
            ..
        } => format!("joint partition {joint_partition:?}, {eigenvector_count} eigenvector(s)"),
        EigenPattern::Unavailable { zero_diagonal } => {
            format!("no slicemix, zero diagonal at {zero_diagonal:?}")
        }
    }
}

#[derive(Serialize)]
struct AnalysisSummary<'a> {
    rank: usize,
    converged: bool,
    below_diag_residual: f64,
    reconstruction_error: f64,
    slicemix_found: bool,
    zero_diagonal: &'a [usize],
    eigen_pattern: EigenPattern,
}

pub fn cmd_analyze(config: &RunConfig) -> Result<Outcome, Failure> {
    let (x, rank) = read_input(config)?;
    let s = &config.analyze;
    let an = analyze_boundary(&x, rank, &s.sgsd, &s.slicemix, &s.eigen)?;
    let dir = config.resolved_out_dir();
    let mut out = Outcome::default();
    write(&dir, "schur.json", &an.form.to_json()?, &mut out)?;
    let summary = AnalysisSummary {
        rank,
        converged: an.form.converged,
        below_diag_residual: an.form.below_diag_residual,
        reconstruction_error: an.form.reconstruction_error,
        slicemix_found: an.mix.is_some(),
        zero_diagonal: &an.zero_diagonal,
        eigen_pattern: pattern_of(&an),
    };
    write(&dir, "analysis.json", &json(&summary)?, &mut out)?;
    let diag = an.diagnostics();
    write(&dir, "diagnostics.txt", &diag, &mut out)?;
    out.summary = diag;
    if !an.form.converged {
        out.shortfall = Some("SGSD did not converge".into());
    }
    Ok(out)
}

#[derive(Serialize)]
struct FitSummary {
    rank: usize,
    termination: Termination,
    iterations: usize,
    fit_error: f64,
    final_relative_change: f64,
    max_abs_weight: f64,
    ridge_warning: bool,
}

pub fn cmd_fit(config: &RunConfig) -> Result<Outcome, Failure> {
    let (x, rank) = read_input(config)?;
    let f = &config.fit;
    let opts = AlsOptions {
        max_iters: f.max_iters,
        rel_tol: f.rel_tol,
        seed: config.seed,
        init: f.init,
        record_every: f.record_every,
        ridge_scale: f.ridge_scale,
    };
    let trace = fit_als(&x, rank, &opts)?;
    let last = trace.last();
    let summary = FitSummary {
        rank,
        termination: trace.termination,
        iterations: trace.iterations,
        fit_error: last.fit_error,
        final_relative_change: trace.final_relative_change,
        max_abs_weight: last.max_abs_weight(),
        ridge_warning: trace.ridge_warning,
    };
    let dir = config.resolved_out_dir();
    let mut out = Outcome::default();
    write(&dir, "fit_trace.csv", &trace.to_csv(), &mut out)?;
    write(&dir, "fit_cp.json", &trace.final_cp.to_json()?, &mut out)?;
    write(&dir, "fit_summary.json", &json(&summary)?, &mut out)?;
    out.summary = format!(
        "{:?} after {} sweeps: fit error {:.6e}, max |omega| {:.6e}, relative change {:.3e}\n",
        summary.termination,
        summary.iterations,
        summary.fit_error,
        summary.max_abs_weight,
        summary.final_relative_change
    );
    if trace.termination == Termination::MaxIterations {
        out.shortfall = Some(format!(
            "ALS stopped at the iteration limit ({})",
            trace.iterations
        ));
    }
    Ok(out)
}

pub fn cmd_example(config: &RunConfig) -> Result<Outcome, Failure> {
    let fam = config.family.build()?;
    let name = config.family.kind.name();
    let (file, x) = match config.n {
        Some(n) => (format!("{name}_n{n}.json"), fam.snapshot(n)?.evaluate()),
        None => (format!("{name}.json"), fam.limit().clone()),
    };
    let dir = config.resolved_out_dir();
    let mut out = Outcome::default();
    write(&dir, &file, &x.to_json()?, &mut out)?;
    let [i, j, k] = x.dims();
    out.summary = format!("{name}: {i}x{j}x{k} tensor, rank {}\n", fam.rank());
    Ok(out)
}
