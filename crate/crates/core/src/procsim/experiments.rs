//! Monte Carlo harnesses: band coverage, boundary RMSE and bias studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, ProcessSpec};
use crate::bandwidth::select_bandwidth;
use crate::curvefit::{jackknife_parts, Bandwidth, EvaluationGrid};
use crate::error::{check_alpha, Error, Result};
use crate::inference::{band_from_parts, PlugInConfig};
use crate::kernel::Kernel;
use crate::normal;
use crate::solver::{fit_local_constant, fit_local_linear, LocalFitProblem};

pub const DEFAULT_ORACLE_DRAWS: usize = 200_000;

/// First-stage bandwidth used by a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthChoice {
    /// Selected per replication by the rule-of-thumb plus variance correction.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub process: ProcessSpec,
    pub n: usize,
    pub alpha: f64,
    /// `γ`: nominal coverage is `1 - γ`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub replications: usize,
    pub test_points: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: BandwidthChoice,
    /// `b̄ = ratio · b`.
    #[serde(default = "default_ratio")]
    pub second_bandwidth_ratio: f64,
    #[serde(default = "default_oracle_draws")]
    pub oracle_draws: usize,
}

fn default_gamma() -> f64 {
    0.05
}
fn default_bandwidth() -> BandwidthChoice {
    BandwidthChoice::Auto
}
fn default_ratio() -> f64 {
    0.5
}
fn default_oracle_draws() -> usize {
    DEFAULT_ORACLE_DRAWS
}

impl ExperimentSpec {
    pub fn new(process: ProcessSpec, n: usize, alpha: f64, replications: usize, test_points: Vec<f64>) -> Self {
        Self {
            process,
            n,
            alpha,
            gamma: default_gamma(),
            replications,
            test_points,
            seed: 0,
            bandwidth: BandwidthChoice::Auto,
            second_bandwidth_ratio: default_ratio(),
            oracle_draws: DEFAULT_ORACLE_DRAWS,
        }
    }

    fn validate(&self) -> Result<()> {
        self.process.validate()?;
        check_alpha(self.alpha)?;
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("nominal level {} outside (0, 1)", self.gamma)));
        }
        if self.replications == 0 || self.n == 0 {
            return Err(Error::InvalidArgument("need n > 0 and at least one replication".into()));
        }
        if !(self.second_bandwidth_ratio > 0.0) {
            return Err(Error::InvalidArgument("second bandwidth ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Coverage at one test point.
#[derive(Debug, Clone, Serialize)]
pub struct PointCoverage {
    pub t: f64,
    pub oracle: f64,
    /// Replications where the band existed at `t`.
    pub evaluated: usize,
    pub covered: usize,
    pub coverage: f64,
    /// Binomial standard error of `coverage`.
    pub std_error: f64,
    pub mean_half_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub nominal: f64,
    pub replications: usize,
    pub failures: usize,
    /// First few failure messages, for diagnosis.
    pub failure_messages: Vec<String>,
    pub mean_bandwidth: f64,
    pub points: Vec<PointCoverage>,
}

impl CoverageReport {
    /// Coverage pooled over all test points.
    pub fn overall(&self) -> f64 {
        let (c, e) = self.points.iter().fold((0, 0), |(c, e), p| (c + p.covered, e + p.evaluated));
        if e == 0 {
            f64::NAN
        } else {
            c as f64 / e as f64
        }
    }
}

struct Replication {
    bandwidth: f64,
    /// `(center, half width)` at each test point at the study's own `γ`.
    points: Vec<Option<(f64, f64)>>,
}

fn run_replication(spec: &ExperimentSpec, r: usize, kernel: &Kernel, grid: &EvaluationGrid) -> Result<Replication> {
    let series = spec.process.generate(spec.n, derive_seed(spec.seed, r as u64))?;
    let b = match spec.bandwidth {
        BandwidthChoice::Auto => select_bandwidth(&series, spec.alpha, kernel)?.b_star,
        BandwidthChoice::Fixed(b) => b,
    };
    let bw = Bandwidth::Static(b);
    let parts = jackknife_parts(&series, spec.alpha, &bw, spec.second_bandwidth_ratio * b, kernel, grid)?;
    let band = band_from_parts(&series, &parts, &bw, spec.gamma, kernel, &PlugInConfig::default())?;
    let points = (0..grid.len())
        .map(|k| Some((band.center.values[k]?, band.half_width(k)?)))
        .collect();
    Ok(Replication { bandwidth: b, points })
}

fn sorted_grid(points: &[f64]) -> Result<(EvaluationGrid, Vec<usize>)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let grid = EvaluationGrid::new(sorted)?;
    let slots = points.iter().map(|&t| grid.points().iter().position(|&g| g == t).expect("grid point")).collect();
    Ok((grid, slots))
}

/// Empirical coverage of the pointwise band at nominal `1 - γ`.
pub fn coverage_study(spec: &ExperimentSpec) -> Result<CoverageReport> {
    Ok(coverage_study_levels(spec, &[spec.gamma])?.remove(0))
}

/// Coverage at several nominal levels on one replication set. Bands at other
/// levels rescale the half width by `z_{1-γ/2}`, so coverage is monotone in
/// the nominal level by construction.
pub fn coverage_study_levels(spec: &ExperimentSpec, gammas: &[f64]) -> Result<Vec<CoverageReport>> {
    spec.validate()?;
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(Error::InvalidArgument(format!("nominal level {g} outside (0, 1)")));
    }
    let kernel = Kernel::epanechnikov();
    let (grid, slots) = sorted_grid(&spec.test_points)?;
    let oracle: Vec<f64> = spec
        .test_points
        .iter()
        .map(|&t| spec.process.oracle_quantile(t, spec.alpha, spec.oracle_draws, derive_seed(spec.seed, u64::MAX)))
        .collect::<Result<_>>()?;
    let reps: Vec<Result<Replication>> =
        (0..spec.replications).into_par_iter().map(|r| run_replication(spec, r, &kernel, &grid)).collect();

    let z0 = normal::two_sided_critical(spec.gamma);
    let ok: Vec<&Replication> = reps.iter().filter_map(|r| r.as_ref().ok()).collect();
    let failure_messages: Vec<String> =
        reps.iter().filter_map(|r| r.as_ref().err()).take(5).map(|e| e.to_string()).collect();
    let failures = reps.len() - ok.len();
    let mean_bandwidth = ok.iter().map(|r| r.bandwidth).sum::<f64>() / ok.len().max(1) as f64;

    Ok(gammas
        .iter()
        .map(|&gamma| {
            let scale = normal::two_sided_critical(gamma) / z0;
            let points = spec
                .test_points
                .iter()
                .zip(&slots)
                .zip(&oracle)
                .map(|((&t, &slot), &q)| {
                    let (mut evaluated, mut covered, mut width) = (0, 0, 0.0);
                    for rep in &ok {
                        if let Some((c, hw)) = rep.points[slot] {
                            let hw = hw * scale;
                            evaluated += 1;
                            width += hw;
                            if (c - q).abs() <= hw {
                                covered += 1;
                            }
                        }
                    }
                    let e = evaluated.max(1) as f64;
                    let coverage = if evaluated == 0 { f64::NAN } else { covered as f64 / e };
                    PointCoverage {
                        t,
                        oracle: q,
                        evaluated,
                        covered,
                        coverage,
                        std_error: (coverage * (1.0 - coverage) / e).sqrt(),
                        mean_half_width: width / e,
                    }
                })
                .collect();
            CoverageReport {
                nominal: 1.0 - gamma,
                replications: spec.replications,
                failures,
                failure_messages: failure_messages.clone(),
                mean_bandwidth,
                points,
            }
        })
        .collect())
}

/// Mean, root mean square and standard errors of a set of estimation errors.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorSummary {
    pub bias: f64,
    pub bias_se: f64,
    pub rmse: f64,
    /// Delta-method standard error of `rmse`.
    pub rmse_se: f64,
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Self {
        let r = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / r;
        let sq: Vec<f64> = errors.iter().map(|e| e * e).collect();
        let mse = sq.iter().sum::<f64>() / r;
        let var = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (r - 1.0).max(1.0);
        let rmse = mse.sqrt();
        let mse_se = (var(&sq, mse) / r).sqrt();
        Self {
            bias: mean,
            bias_se: (var(errors, mean) / r).sqrt(),
            rmse,
            rmse_se: if rmse > 0.0 { mse_se / (2.0 * rmse) } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub t: f64,
    pub oracle: f64,
    pub bandwidth: f64,
    pub replications: usize,
    pub constant: ErrorSummary,
    pub linear: ErrorSummary,
    /// `rmse_linear / rmse_constant`.
    pub ratio: f64,
}

/// Local constant versus local linear estimates of `Q_α(t)`, typically at
/// the boundary `t = 0`, at a common bandwidth `b`.
pub fn boundary_experiment(
    process: &ProcessSpec,
    alpha: f64,
    n: usize,
    replications: usize,
    b: f64,
    t: f64,
    seed: u64,
) -> Result<BoundaryReport> {
    process.validate()?;
    check_alpha(alpha)?;
    if replications < 2 {
        return Err(Error::InvalidArgument("need at least two replications".into()));
    }
    let kernel = Kernel::epanechnikov();
    let oracle = process.oracle_quantile(t, alpha, DEFAULT_ORACLE_DRAWS, derive_seed(seed, u64::MAX))?;
    let errs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let series = process.generate(n, derive_seed(seed, r as u64))?;
            let p = LocalFitProblem { series: &series, t, alpha, bandwidth: b, kernel: &kernel };
            Ok((fit_local_constant(&p)?.qhat - oracle, fit_local_linear(&p)?.qhat - oracle))
        })
        .collect::<Result<_>>()?;
    let (c, l): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
    let constant = ErrorSummary::from_errors(&c);
    let linear = ErrorSummary::from_errors(&l);
    Ok(BoundaryReport { t, oracle, bandwidth: b, replications, constant, linear, ratio: linear.rmse / constant.rmse })
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub t: f64,
    pub oracle: f64,
    pub replications: usize,
    /// Second-stage smoothed curve at bandwidth `b`, without the jackknife.
    pub two_stage: ErrorSummary,
    pub jackknifed: ErrorSummary,
}

/// Errors of `Q̌_b(t)` and `Q̃(t)` over independent replications.
#[allow(clippy::too_many_arguments)]
pub fn bias_experiment(
    process: &ProcessSpec,
    alpha: f64,
    n: usize,
    replications: usize,
    b: f64,
    bbar: f64,
    t: f64,
    seed: u64,
) -> Result<BiasReport> {
    process.validate()?;
    if replications < 2 {
        return Err(Error::InvalidArgument("need at least two replications".into()));
    }
    let kernel = Kernel::epanechnikov();
    let grid = EvaluationGrid::new(vec![t])?;
    let oracle = process.oracle_quantile(t, alpha, DEFAULT_ORACLE_DRAWS, derive_seed(seed, u64::MAX))?;
    let errs: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let series = process.generate(n, derive_seed(seed, r as u64))?;
            let parts = jackknife_parts(&series, alpha, &Bandwidth::Static(b), bbar, &kernel, &grid)?;
            let missing = || Error::InsufficientData(format!("no estimate at t = {t}"));
            let s = parts.smooth.values[0].ok_or_else(missing)?;
            let j = parts.jackknifed.values[0].ok_or_else(missing)?;
            Ok((s - oracle, j - oracle))
        })
        .collect::<Result<_>>()?;
    let (s, j): (Vec<f64>, Vec<f64>) = errs.into_iter().unzip();
    Ok(BiasReport {
        t,
        oracle,
        replications,
        two_stage: ErrorSummary::from_errors(&s),
        jackknifed: ErrorSummary::from_errors(&j),
    })
}

/// Mean over replications of the grid-averaged squared error of the
/// jackknifed estimate with automatically selected bandwidth.
#[derive(Debug, Clone, Serialize)]
pub struct MseReport {
    pub n: usize,
    pub replications: usize,
    pub mse: f64,
    pub mse_se: f64,
    pub mean_bandwidth: f64,
}

pub fn integrated_mse(
    process: &ProcessSpec,
    alpha: f64,
    n: usize,
    replications: usize,
    grid: &EvaluationGrid,
    seed: u64,
) -> Result<MseReport> {
    process.validate()?;
    if replications < 2 {
        return Err(Error::InvalidArgument("need at least two replications".into()));
    }
    let kernel = Kernel::epanechnikov();
    let oracle: Vec<f64> = grid
        .points()
        .iter()
        .map(|&t| process.oracle_quantile(t, alpha, DEFAULT_ORACLE_DRAWS, derive_seed(seed, u64::MAX)))
        .collect::<Result<_>>()?;
    let per_rep: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let series = process.generate(n, derive_seed(seed, r as u64))?;
            let b = select_bandwidth(&series, alpha, &kernel)?.b_star;
            let parts = jackknife_parts(&series, alpha, &Bandwidth::Static(b), 0.5 * b, &kernel, grid)?;
            let mut sum = 0.0;
            for (v, q) in parts.jackknifed.values.iter().zip(&oracle) {
                let v = v.ok_or_else(|| Error::InsufficientData("missing estimate on MSE grid".into()))?;
                sum += (v - q).powi(2);
            }
            Ok((sum / oracle.len() as f64, b))
        })
        .collect::<Result<_>>()?;
    let r = replications as f64;
    let mse = per_rep.iter().map(|p| p.0).sum::<f64>() / r;
    let var = per_rep.iter().map(|p| (p.0 - mse).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(MseReport {
        n,
        replications,
        mse,
        mse_se: (var / r).sqrt(),
        mean_bandwidth: per_rep.iter().map(|p| p.1).sum::<f64>() / r,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{CoefficientFn, Innovation, LsLinearSpec};
    use super::*;

    fn iid() -> ProcessSpec {
        ProcessSpec::Linear(LsLinearSpec {
            coefficients: vec![CoefficientFn::constant(1.0)],
            innovation: Innovation::default(),
        })
    }

    #[test]
    fn error_summary() {
        let s = ErrorSummary::from_errors(&[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(s.bias, 0.0);
        assert_eq!(s.rmse, 1.0);
        assert_eq!(s.rmse_se, 0.0);
    }

    #[test]
    fn coverage_levels_are_monotone_and_deterministic() {
        let mut spec = ExperimentSpec::new(iid(), 300, 0.5, 8, vec![0.5, 0.4]);
        spec.bandwidth = BandwidthChoice::Fixed(0.2);
        spec.seed = 4;
        let levels = coverage_study_levels(&spec, &[0.5, 0.2, 0.05, 0.01]).unwrap();
        for w in levels.windows(2) {
            for (a, b) in w[0].points.iter().zip(&w[1].points) {
                assert!(a.covered <= b.covered);
                assert!(a.mean_half_width < b.mean_half_width);
            }
        }
        let again = coverage_study(&spec).unwrap();
        assert_eq!(again.points[0].covered, levels[2].points[0].covered);
        assert_eq!(again.points[1].t, 0.4);
        assert_eq!(again.failures, 0);
    }

    #[test]
    fn failing_replications_are_counted() {
        let mut spec = ExperimentSpec::new(iid(), 30, 0.5, 3, vec![0.5]);
        spec.bandwidth = BandwidthChoice::Fixed(0.9);
        let rep = coverage_study(&spec).unwrap();
        assert_eq!(rep.failures, 3);
        assert_eq!(rep.failure_messages.len(), 3);
        assert_eq!(rep.points[0].evaluated, 0);
    }
}
