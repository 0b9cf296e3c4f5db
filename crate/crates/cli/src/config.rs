//! Command-line surface and config resolution.
//!
//! Values come from flags, then the optional TOML config file, then
//! built-in defaults, in that order of precedence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use genea_sel::moran::ModelParams;
use genea_sel::sde::SdeConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default output root when neither `--out` nor the config file name one.
pub const OUT_ENV: &str = "GENEA_SEL_OUT";
pub const DEFAULT_OUT_ROOT: &str = "genea-sel-out";

#[derive(Debug, Parser)]
#[command(name = "genea-sel", version, about = "Genealogical distance under selection: simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Empirical CDF of the pair distance in the Moran model.
    SimulateMoran,
    /// P(R_{T+h} <= h) through the family chain.
    SimulateFamilies,
    /// P(R_T <= h) through the family diffusion.
    SimulateSde,
    /// Stationary density, CDF and moments of the fit frequency.
    Equilibrium,
    /// Neutral law, small-alpha expansion and large-alpha upper curve.
    AnalyticCurves,
    /// Exact symbolic generator identities.
    VerifyGenerators(VerifyArgs),
    /// Matrix, family-chain and diffusion estimates at matched parameters.
    Compare(CompareArgs),
    /// Figure data: equilibrium CDFs and E[R] across an alpha sweep.
    ReproduceFigures(FigureArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SimulateMoran => "simulate-moran",
            Self::SimulateFamilies => "simulate-families",
            Self::SimulateSde => "simulate-sde",
            Self::Equilibrium => "equilibrium",
            Self::AnalyticCurves => "analytic-curves",
            Self::VerifyGenerators(_) => "verify-generators",
            Self::Compare(_) => "compare",
            Self::ReproduceFigures(_) => "reproduce-figures",
        }
    }
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct VerifyArgs {
    /// Largest number of families checked (from 2).
    #[arg(long, default_value_t = 5)]
    pub max_families: usize,
    /// Expected-image fixture for the selection row of Ybar^m sum y_i z_i.
    #[arg(long, value_enum, default_value_t = Fixture::Corrected)]
    pub fixture: Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Corrected,
    Misprinted,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct CompareArgs {
    /// Family counts for the diffusion sweep (advisory trend report).
    #[arg(long, value_delimiter = ',')]
    pub sweep: Vec<usize>,
}

#[derive(Debug, Args, Clone, Serialize)]
pub struct FigureArgs {
    /// Selection strengths; 0 is always included as the reference.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 5.0, 10.0])]
    pub alphas: Vec<f64>,
    /// Also write SVG renderings of the curves.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Moran,
    Sde,
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// TOML file with any of the keys below (flag names with `_`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Population size N.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta0: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta1: Option<f64>,
    /// Observation time T.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Distances to report: `a,b,c` or `start:stop:step`.
    #[arg(long, global = true)]
    pub h_grid: Option<String>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Number of families n for the diffusion.
    #[arg(long, global = true)]
    pub families: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $GENEA_SEL_OUT/<command>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

/// Config-file mirror of [`CommonArgs`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub theta0: Option<f64>,
    pub theta1: Option<f64>,
    pub p0: Option<f64>,
    pub t: Option<f64>,
    pub h_grid: Option<String>,
    pub reps: Option<usize>,
    pub dt: Option<f64>,
    pub families: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub backend: Option<Backend>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved configuration, echoed into every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub n: usize,
    pub alpha: f64,
    pub theta0: f64,
    pub theta1: f64,
    /// Initial fit probability for fixed-start runs.
    pub p0: f64,
    pub t: f64,
    /// `None` lets the command pick its default grid.
    pub h_grid: Option<Vec<f64>>,
    pub reps: usize,
    pub dt: f64,
    pub families: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub backend: Backend,
    pub workers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareArgs>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figures: Option<FigureArgs>,
}

pub mod defaults {
    pub const N: usize = 100;
    pub const ALPHA: f64 = 0.0;
    pub const THETA: f64 = 0.5;
    pub const P0: f64 = 0.5;
    pub const T: f64 = 4.0;
    pub const REPS: usize = 1000;
    pub const DT: f64 = 1e-3;
    pub const FAMILIES: usize = 16;
    pub const SEED: u64 = 1;
}

/// Parses `a,b,c` or `start:stop:step` (stop included when hit).
pub fn parse_h_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |msg: &str| CliError::Config(format!("h-grid `{spec}`: {msg}"));
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
    let grid = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:stop:step"));
        }
        let (start, stop, step) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(step > 0.0) || !(stop >= start) {
            return Err(bad("need step > 0 and stop >= start"));
        }
        linspace_step(start, stop, step)
    } else {
        spec.split(',').filter(|s| !s.trim().is_empty()).map(number).collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err(bad("empty grid"));
    }
    if grid.iter().any(|h| !h.is_finite() || *h < 0.0) {
        return Err(bad("values must be finite and >= 0"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(grid)
}

impl ExperimentConfig {
    /// Merges flags over the config file over defaults and validates.
    pub fn resolve(cli: &Cli) -> Result<Self, CliError> {
        let file = match &cli.common.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let a = &cli.common;
        let command = cli.command.name().to_string();
        let out = match a.out.clone().or(file.out.clone()) {
            Some(p) => p,
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
                .join(&command),
        };
        let h_grid = match a.h_grid.as_deref().or(file.h_grid.as_deref()) {
            Some(spec) => Some(parse_h_grid(spec)?),
            None => None,
        };
        let workers =
            a.workers.or(file.workers).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let cfg = Self {
            n: a.n.or(file.n).unwrap_or(defaults::N),
            alpha: a.alpha.or(file.alpha).unwrap_or(defaults::ALPHA),
            theta0: a.theta0.or(file.theta0).unwrap_or(defaults::THETA),
            theta1: a.theta1.or(file.theta1).unwrap_or(defaults::THETA),
            p0: file.p0.unwrap_or(defaults::P0),
            t: a.t.or(file.t).unwrap_or(defaults::T),
            h_grid,
            reps: a.reps.or(file.reps).unwrap_or(defaults::REPS),
            dt: a.dt.or(file.dt).unwrap_or(defaults::DT),
            families: a.families.or(file.families).unwrap_or(defaults::FAMILIES),
            seed: a.seed.or(file.seed).unwrap_or(defaults::SEED),
            out,
            format: a.format.or(file.format).unwrap_or(Format::Csv),
            backend: a.backend.or(file.backend).unwrap_or(Backend::Moran),
            workers,
            verify: match &cli.command {
                Command::VerifyGenerators(v) => Some(v.clone()),
                _ => None,
            },
            compare: match &cli.command {
                Command::Compare(c) => Some(c.clone()),
                _ => None,
            },
            figures: match &cli.command {
                Command::ReproduceFigures(f) => Some(f.clone()),
                _ => None,
            },
            command,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        self.sde(self.families)?;
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(CliError::Config(format!("t must be positive, got {}", self.t)));
        }
        if self.reps == 0 {
            return Err(CliError::Config("reps must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if let Some(v) = &self.verify {
            if v.max_families < 2 {
                return Err(CliError::Config("max-families must be at least 2".into()));
            }
        }
        if let Some(f) = &self.figures {
            if f.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                return Err(CliError::Config("alphas must be finite and >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams<f64>, CliError> {
        self.model_with_alpha(self.alpha)
    }

    pub fn model_with_alpha(&self, alpha: f64) -> Result<ModelParams<f64>, CliError> {
        Ok(ModelParams::new(self.n, alpha, self.theta0, self.theta1, self.p0)?)
    }

    pub fn sde(&self, families: usize) -> Result<SdeConfig<f64>, CliError> {
        self.sde_with(families, self.alpha)
    }

    pub fn sde_with(&self, families: usize, alpha: f64) -> Result<SdeConfig<f64>, CliError> {
        let mut cfg = SdeConfig::new(families, alpha, self.theta0, self.theta1);
        cfg.dt = self.dt;
        cfg.paths = self.reps;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured grid, or `default` when none was given.
    pub fn grid_or(&self, default: impl FnOnce() -> Vec<f64>) -> Vec<f64> {
        self.h_grid.clone().unwrap_or_else(default)
    }
}

/// `start, start + step, ...` up to and including `stop` (within rounding).
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| start + k as f64 * step).collect()
}
