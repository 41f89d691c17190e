use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpdegen::als::AlsInit;
use cpdegen::families::FamilyKind;

use crate::config::{CommandKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cpdegen",
    version,
    about = "CP degeneracy sweeps, SGSD analysis and ALS fits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep a family over an n grid and report diverging groups.
    Sweep(SweepArgs),
    /// SGSD, slicemix and eigenstructure of a tensor file.
    Analyze(AnalyzeArgs),
    /// Fit a CP decomposition by ALS and record the trace.
    Fit(FitArgs),
    /// Write a family's limit tensor (or one snapshot) to a file.
    Example(ExampleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    R3,
    R4,
    R6,
    GenericR3,
    Generic332,
}

impl From<FamilyArg> for FamilyKind {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::R3 => FamilyKind::R3Example,
            FamilyArg::R4 => FamilyKind::R4Example,
            FamilyArg::R6 => FamilyKind::R6Example,
            FamilyArg::GenericR3 => FamilyKind::GenericR3,
            FamilyArg::Generic332 => FamilyKind::Generic332,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Hosvd,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $CPDEGEN_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the effective configuration to this TOML file.
    #[arg(long)]
    pub save_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FamilyArgs {
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub e: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<f64>,
    /// Tensor dimensions I,J,K for the r4 and r6 families.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub dims: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Comma-separated n values, increasing.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub omega_growth: Option<f64>,
    #[arg(long)]
    pub bound_ratio: Option<f64>,
    #[arg(long)]
    pub congruence_link: Option<f64>,
    #[arg(long)]
    pub tol_prop: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tensor JSON file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub sgsd_tol: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub cond_cap: Option<f64>,
    #[arg(long)]
    pub coincidence_tol: Option<f64>,
    #[arg(long)]
    pub zero_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tensor JSON file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub record_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Write the snapshot at this n instead of the limit.
    #[arg(long)]
    pub n: Option<f64>,
}

fn base(kind: CommandKind, common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let mut c = RunConfig::read(path)?;
            c.command = kind;
            c
        }
        None => RunConfig::new(kind),
    };
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.family.seed = Some(seed);
        cfg.analyze.sgsd.seed = seed;
        cfg.analyze.slicemix.seed = seed;
    }
    Ok(cfg)
}

fn apply_family(cfg: &mut RunConfig, f: &FamilyArgs) {
    if let Some(kind) = f.family {
        cfg.family.kind = kind.into();
    }
    if f.a.is_some() {
        cfg.family.a = f.a;
    }
    if f.e.is_some() {
        cfg.family.e = f.e;
    }
    if f.f.is_some() {
        cfg.family.f = f.f;
    }
    if let Some(d) = &f.dims {
        cfg.family.dims = Some([d[0], d[1], d[2]]);
    }
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Sweep(a) => &a.common,
            Command::Analyze(a) => &a.common,
            Command::Fit(a) => &a.common,
            Command::Example(a) => &a.common,
        }
    }

    /// Effective configuration: config file, then flags.
    pub fn to_config(&self) -> anyhow::Result<RunConfig> {
        Ok(match self {
            Command::Sweep(a) => {
                let mut c = base(CommandKind::Sweep, &a.common)?;
                apply_family(&mut c, &a.family);
                set!(c.n_grid, a.n_grid.clone());
                set!(c.thresholds.omega_growth, a.omega_growth);
                set!(c.thresholds.bound_ratio, a.bound_ratio);
                set!(c.thresholds.congruence_link, a.congruence_link);
                set!(c.thresholds.tol_prop, a.tol_prop);
                c
            }
            Command::Analyze(a) => {
                let mut c = base(CommandKind::Analyze, &a.common)?;
                if a.input.is_some() {
                    c.input = a.input.clone();
                }
                if a.rank.is_some() {
                    c.rank = a.rank;
                }
                set!(c.analyze.sgsd.max_sweeps, a.max_sweeps);
                set!(c.analyze.sgsd.tol, a.sgsd_tol);
                set!(c.analyze.sgsd.starts, a.starts);
                set!(c.analyze.slicemix.cond_cap, a.cond_cap);
                set!(c.analyze.eigen.coincidence_tol, a.coincidence_tol);
                set!(c.analyze.eigen.zero_tol, a.zero_tol);
                c
            }
            Command::Fit(a) => {
                let mut c = base(CommandKind::Fit, &a.common)?;
                if a.input.is_some() {
                    c.input = a.input.clone();
                }
                if a.rank.is_some() {
                    c.rank = a.rank;
                }
                set!(c.fit.max_iters, a.max_iters);
                set!(c.fit.rel_tol, a.rel_tol);
                set!(c.fit.record_every, a.record_every);
                if let Some(init) = a.init {
                    c.fit.init = match init {
                        InitArg::Random => AlsInit::Random,
                        InitArg::Hosvd => AlsInit::Hosvd,
                    };
                }
                c
            }
            Command::Example(a) => {
                let mut c = base(CommandKind::Example, &a.common)?;
                apply_family(&mut c, &a.family);
                if a.n.is_some() {
                    c.n = a.n;
                }
                c
            }
        })
    }
}
