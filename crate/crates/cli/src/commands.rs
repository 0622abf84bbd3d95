use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nsquant::bandwidth::{local_bandwidth_profile, select_bandwidth, BandwidthSelection, LocalBandwidthProfile};
use nsquant::inference::{iqr_band, pointwise_band_with, PlugInConfig, PointwiseBand};
use nsquant::procsim::{
    boundary_experiment, coverage_study, BandwidthChoice, CoverageReport, ExperimentSpec, DEFAULT_ORACLE_DRAWS,
};
use nsquant::{Bandwidth, EvaluationGrid, Kernel, PointFlags, UnitTimeSeries};
use serde::Serialize;

use crate::config::{BandwidthMode, Command, Settings, DEFAULT_LEVELS};
use crate::deseason::deseasonalize;
use crate::io::{self, fmt_f64, Dataset};

pub fn run(command: &Command) -> Result<()> {
    let s = Settings::resolve(command.options())?;
    match command {
        Command::Fit(_) => cmd_fit(&s),
        Command::Iqr(_) => cmd_iqr(&s),
        Command::Deseasonalize(_) => cmd_deseasonalize(&s),
        Command::Simulate(_) => cmd_simulate(&s),
        Command::Coverage(_) => cmd_coverage(&s),
        Command::Bandwidth(_) => cmd_bandwidth(&s),
        Command::Boundary(_) => cmd_boundary(&s),
    }
}

fn load_series(s: &Settings) -> Result<UnitTimeSeries> {
    io::read_dataset(s.require_input()?)?.to_series()
}

fn grid_for(s: &Settings, n: usize) -> Result<EvaluationGrid> {
    match s.grid_points {
        Some(m) if m < 2 => bail!("--grid-points must be at least 2"),
        Some(m) => Ok(EvaluationGrid::uniform(m)),
        None => Ok(EvaluationGrid::default_for(n)),
    }
}

fn level_tag(alpha: f64) -> String {
    format!("{alpha}")
}

/// Writes to `--output` if given, stdout otherwise.
fn write_dataset_out(s: &Settings, data: &Dataset) -> Result<()> {
    match &s.output {
        Some(p) => {
            let mut w = io::create(p)?;
            io::write_dataset(&mut w, data)?;
            w.flush()?;
        }
        None => io::write_dataset(std::io::stdout().lock(), data)?,
    }
    Ok(())
}

fn flag_counts(flags: &[PointFlags]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for f in flags.iter().filter(|f| !f.is_empty()) {
        for name in f.to_string().split('|') {
            *counts.entry(name.to_string()).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Default, Serialize)]
struct LevelSummary {
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    second_bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b_yj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma_tilde_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clamped: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band_points: Option<usize>,
    flag_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    command: &'static str,
    n: usize,
    gamma: f64,
    kernel: String,
    bandwidth_mode: &'static str,
    grid_points: usize,
    levels: Vec<LevelSummary>,
}

/// First-stage bandwidth for one level plus what the selector reported.
struct Chosen {
    bandwidth: Bandwidth,
    selection: Option<BandwidthSelection>,
    profile: Option<LocalBandwidthProfile>,
}

fn choose_bandwidth(s: &Settings, series: &UnitTimeSeries, alpha: f64, kernel: &Kernel, grid: &EvaluationGrid) -> Result<Chosen> {
    Ok(match s.bandwidth_mode {
        BandwidthMode::Fixed => {
            let b = s.bandwidth.expect("validated");
            Chosen { bandwidth: Bandwidth::Static(b), selection: None, profile: None }
        }
        BandwidthMode::AutoStatic => {
            let sel = select_bandwidth(series, alpha, kernel)?;
            Chosen { bandwidth: Bandwidth::Static(sel.b_star), selection: Some(sel), profile: None }
        }
        BandwidthMode::AutoLocal => {
            let p = local_bandwidth_profile(series, alpha, kernel, grid)?;
            Chosen { bandwidth: p.to_bandwidth(), selection: None, profile: Some(p) }
        }
    })
}

fn second_bandwidth(s: &Settings, first: f64) -> f64 {
    s.second_bandwidth.unwrap_or(0.5 * first)
}

fn fit_level(
    s: &Settings,
    series: &UnitTimeSeries,
    alpha: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<(PointwiseBand, LevelSummary)> {
    let chosen = choose_bandwidth(s, series, alpha, kernel, grid)?;
    let first = chosen.bandwidth.representative();
    let bbar = second_bandwidth(s, first);
    let band = pointwise_band_with(series, alpha, &chosen.bandwidth, bbar, s.gamma, kernel, grid, &PlugInConfig::default())?;
    let mut summary = LevelSummary {
        alpha,
        bandwidth: Some(first),
        second_bandwidth: Some(bbar),
        band_points: Some(band.lower.iter().filter(|l| l.is_some()).count()),
        flag_counts: flag_counts(&band.flags),
        ..Default::default()
    };
    if let Some(sel) = &chosen.selection {
        summary.b_yj = Some(sel.b_yj);
        summary.rho_star = Some(sel.rho_star);
        summary.sigma_tilde_sq = Some(sel.sigma_tilde_sq);
        summary.clamped = Some(sel.clamped);
    }
    if let Some(p) = &chosen.profile {
        summary.b_yj = Some(p.b_yj);
        summary.clamped = Some(p.clamped.iter().any(|&c| c));
    }
    Ok((band, summary))
}

fn cmd_fit(s: &Settings) -> Result<()> {
    let series = load_series(s)?;
    let kernel = Kernel::by_name(&s.kernel)?;
    let grid = grid_for(s, series.len())?;
    let mut levels = Vec::new();
    for alpha in s.levels_or(&DEFAULT_LEVELS) {
        let entry = match fit_level(s, &series, alpha, &kernel, &grid) {
            Ok((band, mut summary)) => {
                let name = format!("quantile_{}.csv", level_tag(alpha));
                let mut w = io::create(&s.output_dir.join(&name))?;
                io::write_band(&mut w, &band)?;
                w.flush()?;
                summary.file = Some(name);
                summary
            }
            Err(e) => {
                eprintln!("warning: level {alpha}: {e:#}");
                LevelSummary { alpha, error: Some(format!("{e:#}")), ..Default::default() }
            }
        };
        levels.push(entry);
    }
    let summary = RunSummary {
        command: "fit",
        n: series.len(),
        gamma: s.gamma,
        kernel: kernel.name().to_string(),
        bandwidth_mode: s.bandwidth_mode.as_str(),
        grid_points: grid.len(),
        levels,
    };
    io::write_json(&s.output_dir.join("summary.json"), &summary)
}

fn iqr_bandwidths(s: &Settings, series: &UnitTimeSeries, kernel: &Kernel) -> Result<(f64, f64, Vec<LevelSummary>)> {
    match s.bandwidth_mode {
        BandwidthMode::Fixed => {
            let b = s.bandwidth.expect("validated");
            Ok((b, b, Vec::new()))
        }
        BandwidthMode::AutoStatic => {
            let mut sel = Vec::new();
            for alpha in [0.25, 0.75] {
                let x = select_bandwidth(series, alpha, kernel).with_context(|| format!("level {alpha}"))?;
                sel.push(LevelSummary {
                    alpha,
                    bandwidth: Some(x.b_star),
                    b_yj: Some(x.b_yj),
                    rho_star: Some(x.rho_star),
                    sigma_tilde_sq: Some(x.sigma_tilde_sq),
                    clamped: Some(x.clamped),
                    ..Default::default()
                });
            }
            Ok((sel[0].bandwidth.unwrap(), sel[1].bandwidth.unwrap(), sel))
        }
        BandwidthMode::AutoLocal => bail!("the IQR band needs static bandwidths; use auto-static or fixed"),
    }
}

#[derive(Debug, Serialize)]
struct IqrSummary {
    command: &'static str,
    n: usize,
    gamma: f64,
    kernel: String,
    bandwidth_mode: &'static str,
    grid_points: usize,
    b25: f64,
    b75: f64,
    second_bandwidth: f64,
    quartiles: Vec<LevelSummary>,
    crossings: usize,
    band_points: usize,
    flag_counts: BTreeMap<String, usize>,
    file: String,
}

fn cmd_iqr(s: &Settings) -> Result<()> {
    let series = load_series(s)?;
    let kernel = Kernel::by_name(&s.kernel)?;
    let grid = grid_for(s, series.len())?;
    let (b25, b75, quartiles) = iqr_bandwidths(s, &series, &kernel)?;
    let bbar = second_bandwidth(s, b25.min(b75));
    let band = iqr_band(&series, b25, b75, bbar, s.gamma, &kernel, &grid, &PlugInConfig::default())?;
    let file = "iqr.csv".to_string();
    let mut w = io::create(&s.output_dir.join(&file))?;
    io::write_iqr_band(&mut w, &band)?;
    w.flush()?;
    let summary = IqrSummary {
        command: "iqr",
        n: series.len(),
        gamma: s.gamma,
        kernel: kernel.name().to_string(),
        bandwidth_mode: s.bandwidth_mode.as_str(),
        grid_points: grid.len(),
        b25,
        b75,
        second_bandwidth: bbar,
        quartiles,
        crossings: band.center.crossing.iter().filter(|c| **c).count(),
        band_points: band.lower.iter().filter(|l| l.is_some()).count(),
        flag_counts: flag_counts(&band.flags),
        file,
    };
    io::write_json(&s.output_dir.join("summary.json"), &summary)
}

fn cmd_deseasonalize(s: &Settings) -> Result<()> {
    let data = io::read_dataset(s.require_input()?)?;
    let period = s.period.context("deseasonalize needs --period")?;
    let values = deseasonalize(&data.values, period)?;
    write_dataset_out(s, &Dataset { labels: data.labels, values })
}

fn cmd_simulate(s: &Settings) -> Result<()> {
    let process = s.require_process()?;
    let n = s.n.context("simulate needs --n")?;
    let series = process.generate(n, s.seed)?;
    write_dataset_out(s, &Dataset::unlabeled(series.values().to_vec()))
}

fn experiment_bandwidth(s: &Settings) -> Result<(BandwidthChoice, f64)> {
    match s.bandwidth_mode {
        BandwidthMode::Fixed => {
            let b = s.bandwidth.expect("validated");
            Ok((BandwidthChoice::Fixed(b), s.second_bandwidth.map_or(0.5, |bb| bb / b)))
        }
        BandwidthMode::AutoStatic if s.second_bandwidth.is_some() => {
            bail!("--second-bandwidth needs a fixed first-stage bandwidth in coverage runs")
        }
        BandwidthMode::AutoStatic => Ok((BandwidthChoice::Auto, 0.5)),
        BandwidthMode::AutoLocal => bail!("coverage studies support auto-static or fixed bandwidths"),
    }
}

#[derive(Debug, Serialize)]
struct LevelCoverage {
    alpha: f64,
    report: CoverageReport,
}

fn cmd_coverage(s: &Settings) -> Result<()> {
    let process = s.require_process()?.clone();
    let (bandwidth, ratio) = experiment_bandwidth(s)?;
    let test_points = if s.test_points.is_empty() { vec![0.25, 0.5, 0.75] } else { s.test_points.clone() };
    let mut out = Vec::new();
    for alpha in s.levels_or(&[0.5]) {
        let spec = ExperimentSpec {
            process: process.clone(),
            n: s.n.unwrap_or(1000),
            alpha,
            gamma: s.gamma,
            replications: s.replications.unwrap_or(100),
            test_points: test_points.clone(),
            seed: s.seed,
            bandwidth,
            second_bandwidth_ratio: ratio,
            oracle_draws: s.oracle_draws.unwrap_or(DEFAULT_ORACLE_DRAWS),
        };
        let report = coverage_study(&spec)?;
        if report.failures > 0 {
            eprintln!("warning: level {alpha}: {} of {} replications failed", report.failures, report.replications);
        }
        out.push(LevelCoverage { alpha, report });
    }
    let mut w = io::create(&s.output_dir.join("coverage.csv"))?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record([
            "alpha", "t", "oracle", "evaluated", "covered", "coverage", "std_error", "mean_half_width", "failures",
        ])?;
        for lc in &out {
            for p in &lc.report.points {
                csv.write_record([
                    fmt_f64(lc.alpha),
                    fmt_f64(p.t),
                    fmt_f64(p.oracle),
                    p.evaluated.to_string(),
                    p.covered.to_string(),
                    fmt_f64(p.coverage),
                    fmt_f64(p.std_error),
                    fmt_f64(p.mean_half_width),
                    lc.report.failures.to_string(),
                ])?;
            }
        }
        csv.flush()?;
    }
    w.flush()?;
    io::write_json(&s.output_dir.join("coverage.json"), &out)
}

#[derive(Debug, Serialize)]
struct BandwidthReport {
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<BandwidthSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn write_profile(path: &Path, p: &LocalBandwidthProfile) -> Result<()> {
    let mut w = io::create(path)?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["t", "sigma_sq", "rho_star", "bandwidth", "clamped"])?;
        for (k, &t) in p.grid.points().iter().enumerate() {
            csv.write_record([
                fmt_f64(t),
                fmt_f64(p.sigma_sq[k]),
                fmt_f64(p.rho_star_local[k]),
                fmt_f64(p.b_local[k]),
                p.clamped[k].to_string(),
            ])?;
        }
        csv.flush()?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bandwidth(s: &Settings) -> Result<()> {
    let series = load_series(s)?;
    let kernel = Kernel::by_name(&s.kernel)?;
    let grid = grid_for(s, series.len())?;
    let mut reports = Vec::new();
    for alpha in s.levels_or(&DEFAULT_LEVELS) {
        let outcome: Result<BandwidthReport> = match s.bandwidth_mode {
            BandwidthMode::Fixed => bail!("the bandwidth command selects bandwidths; use an auto mode"),
            BandwidthMode::AutoStatic => select_bandwidth(&series, alpha, &kernel)
                .map(|sel| BandwidthReport { alpha, selection: Some(sel), profile_file: None, error: None })
                .map_err(Into::into),
            BandwidthMode::AutoLocal => local_bandwidth_profile(&series, alpha, &kernel, &grid)
                .map_err(anyhow::Error::from)
                .and_then(|p| {
                    let name = format!("bandwidth_{}.csv", level_tag(alpha));
                    write_profile(&s.output_dir.join(&name), &p)?;
                    Ok(BandwidthReport { alpha, selection: None, profile_file: Some(name), error: None })
                }),
        };
        reports.push(outcome.unwrap_or_else(|e| {
            eprintln!("warning: level {alpha}: {e:#}");
            BandwidthReport { alpha, selection: None, profile_file: None, error: Some(format!("{e:#}")) }
        }));
    }
    io::write_json(&s.output_dir.join("bandwidth.json"), &reports)
}

fn cmd_boundary(s: &Settings) -> Result<()> {
    let process = s.require_process()?;
    let b = s.bandwidth.context("boundary needs --bandwidth")?;
    let n = s.n.unwrap_or(2000);
    let reps = s.replications.unwrap_or(200);
    let t = s.t.unwrap_or(0.0);
    let mut reports = Vec::new();
    for alpha in s.levels_or(&[0.9]) {
        reports.push(boundary_experiment(process, alpha, n, reps, b, t, s.seed)?);
    }
    let mut w = io::create(&s.output_dir.join("boundary.csv"))?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        csv.write_record(["alpha", "t", "oracle", "bandwidth", "estimator", "bias", "bias_se", "rmse", "rmse_se"])?;
        for (alpha, r) in s.levels_or(&[0.9]).iter().zip(&reports) {
            for (name, e) in [("local_constant", &r.constant), ("local_linear", &r.linear)] {
                csv.write_record([
                    fmt_f64(*alpha),
                    fmt_f64(r.t),
                    fmt_f64(r.oracle),
                    fmt_f64(r.bandwidth),
                    name.to_string(),
                    fmt_f64(e.bias),
                    fmt_f64(e.bias_se),
                    fmt_f64(e.rmse),
                    fmt_f64(e.rmse_se),
                ])?;
            }
        }
        csv.flush()?;
    }
    w.flush()?;
    io::write_json(&s.output_dir.join("boundary.json"), &reports)
}
