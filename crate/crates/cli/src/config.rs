//! Command-line options, the JSON config file, and their merge.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nsquant::procsim::ProcessSpec;
use serde::{Deserialize, Serialize};

pub const DEFAULT_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Parser)]
#[command(name = "nsquant", version, about = "Local linear quantile curves and confidence bands for nonstationary time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jackknifed quantile curves with pointwise bands, one CSV per level.
    Fit(Options),
    /// Interquartile-range curve with its pointwise band.
    Iqr(Options),
    /// Subtract residue-class means of a periodic series.
    Deseasonalize(Options),
    /// Simulate a series from a process spec in the config file.
    Simulate(Options),
    /// Monte Carlo coverage of the pointwise bands.
    Coverage(Options),
    /// Report the selected bandwidths without fitting curves.
    Bandwidth(Options),
    /// Local constant versus local linear RMSE at a boundary point.
    Boundary(Options),
}

impl Command {
    pub fn options(&self) -> &Options {
        match self {
            Command::Fit(o)
            | Command::Iqr(o)
            | Command::Deseasonalize(o)
            | Command::Simulate(o)
            | Command::Coverage(o)
            | Command::Bandwidth(o)
            | Command::Boundary(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthMode {
    AutoStatic,
    AutoLocal,
    Fixed,
}

impl BandwidthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BandwidthMode::AutoStatic => "auto-static",
            BandwidthMode::AutoLocal => "auto-local",
            BandwidthMode::Fixed => "fixed",
        }
    }
}

/// Flags shared by all commands; each command reads the ones it needs.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Input CSV: one `value` column or `label,value`, header optional.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for CSV and JSON outputs.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Output file for `deseasonalize` and `simulate` (stdout if omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Quantile level; repeat for several.
    #[arg(long = "alpha")]
    pub alpha: Vec<f64>,
    /// First-stage bandwidth (fixed mode, boundary experiment).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    pub bandwidth_mode: Option<BandwidthMode>,
    /// Second-stage bandwidth; defaults to half the first-stage one.
    #[arg(long)]
    pub second_bandwidth: Option<f64>,
    /// Bands have nominal coverage 1 - gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Season length for `deseasonalize`.
    #[arg(long)]
    pub period: Option<usize>,
    /// Evaluate on this many equispaced points instead of the default grid.
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Series length for simulations.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Coverage test point; repeat for several.
    #[arg(long = "test-point")]
    pub test_points: Vec<f64>,
    /// Evaluation point of the boundary experiment.
    #[arg(long)]
    pub t: Option<f64>,
}

/// Config-file counterpart of [`Options`], plus the process spec.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub alpha: Option<Vec<f64>>,
    pub bandwidth: Option<f64>,
    pub bandwidth_mode: Option<BandwidthMode>,
    pub second_bandwidth: Option<f64>,
    pub gamma: Option<f64>,
    pub kernel: Option<String>,
    pub seed: Option<u64>,
    pub period: Option<usize>,
    pub grid_points: Option<usize>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub test_points: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub oracle_draws: Option<usize>,
    pub process: Option<ProcessSpec>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Options after merging flags over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub output: Option<PathBuf>,
    /// Empty when neither flags nor config gave levels.
    pub alpha: Vec<f64>,
    pub bandwidth: Option<f64>,
    pub bandwidth_mode: BandwidthMode,
    pub second_bandwidth: Option<f64>,
    pub gamma: f64,
    pub kernel: String,
    pub seed: u64,
    pub period: Option<usize>,
    pub grid_points: Option<usize>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub test_points: Vec<f64>,
    pub t: Option<f64>,
    pub oracle_draws: Option<usize>,
    pub process: Option<ProcessSpec>,
}

impl Settings {
    pub fn resolve(opts: &Options) -> Result<Self> {
        let file = match &opts.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let alpha = if opts.alpha.is_empty() { file.alpha.unwrap_or_default() } else { opts.alpha.clone() };
        let test_points =
            if opts.test_points.is_empty() { file.test_points.unwrap_or_default() } else { opts.test_points.clone() };
        let s = Settings {
            input: opts.input.clone().or(file.input),
            output_dir: opts.output_dir.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from(".")),
            output: opts.output.clone().or(file.output),
            alpha,
            bandwidth: opts.bandwidth.or(file.bandwidth),
            bandwidth_mode: opts.bandwidth_mode.or(file.bandwidth_mode).unwrap_or(BandwidthMode::AutoStatic),
            second_bandwidth: opts.second_bandwidth.or(file.second_bandwidth),
            gamma: opts.gamma.or(file.gamma).unwrap_or(0.05),
            kernel: opts.kernel.clone().or(file.kernel).unwrap_or_else(|| "epanechnikov".into()),
            seed: opts.seed.or(file.seed).unwrap_or(0),
            period: opts.period.or(file.period),
            grid_points: opts.grid_points.or(file.grid_points),
            n: opts.n.or(file.n),
            replications: opts.replications.or(file.replications),
            test_points,
            t: opts.t.or(file.t),
            oracle_draws: file.oracle_draws,
            process: file.process,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            bail!("quantile level {a} outside (0, 1)");
        }
        if self.alpha.windows(2).any(|w| w[0] >= w[1]) {
            bail!("quantile levels must be strictly increasing");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            bail!("gamma {} outside (0, 1)", self.gamma);
        }
        if self.bandwidth_mode == BandwidthMode::Fixed && self.bandwidth.is_none() {
            bail!("--bandwidth-mode fixed needs --bandwidth");
        }
        Ok(())
    }

    /// Levels given by the user, or `default`.
    pub fn levels_or(&self, default: &[f64]) -> Vec<f64> {
        if self.alpha.is_empty() {
            default.to_vec()
        } else {
            self.alpha.clone()
        }
    }

    pub fn require_input(&self) -> Result<&Path> {
        self.input.as_deref().context("no input file; pass --input or set \"input\" in the config")
    }

    pub fn require_process(&self) -> Result<&ProcessSpec> {
        self.process.as_ref().context("no process spec; set \"process\" in the config file")
    }
}
