//! First-stage bandwidth selection.
//!
//! An independence rule of thumb `b_YJ(α)` (a quartic-trend plug-in
//! mean-regression bandwidth times the normal quantile-smoothing multiplier)
//! is rescaled by the dependence correction
//! `ρ̂*(α) = (σ̃² / (α(1-α)))^{1/5}`, where `σ̃²` is the overlapping-block
//! long-run variance of the pilot-fit scores `ψ_α(X_i - Q̂_α(i/n))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::curvefit::{estimate_raw_curve, Bandwidth, BandwidthCurve, EvaluationGrid, QuantileCurve};
use crate::error::{check_alpha, Error, Result};
use crate::inference::{block_length, block_variance_streaming, neighborhood, quantile_scores, SIGMA_FLOOR};
use crate::kernel::Kernel;
use crate::normal;
use crate::series::UnitTimeSeries;
use crate::solver::psi;

pub const MIN_LEN_RULE_OF_THUMB: usize = 20;
pub const MIN_LEN_CORRECTION: usize = 27;

/// Upper clamp for selected bandwidths. Keeps `√2 b` admissible for the
/// jackknife and `t ∈ [b, 1 - b]` for the quartile points.
pub const MAX_BANDWIDTH: f64 = 0.25;

/// Floor on `∫ m̈²` in the mean-regression plug-in.
pub const CURVATURE_FLOOR: f64 = 1e-8;

/// `{α(1-α) / φ(Φ⁻¹(α))²}^{1/5}`.
pub fn yj_multiplier(alpha: f64) -> f64 {
    let d = normal::pdf(normal::quantile(alpha));
    (alpha * (1.0 - alpha) / (d * d)).powf(0.2)
}

/// Global quartic trend fit in `u = 2t - 1`; returns coefficients `c_0..c_4`
/// and the residual variance.
fn quartic_fit(series: &UnitTimeSeries) -> Result<([f64; 5], f64)> {
    let n = series.len();
    let design = DMatrix::from_fn(n, 5, |i, k| (2.0 * series.time(i) - 1.0).powi(k as i32));
    let y = DVector::from_column_slice(series.values());
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * &y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InsufficientData("quartic trend design is singular".into()))?;
    let coef = chol.solve(&rhs);
    let resid = y - &design * &coef;
    let var = resid.norm_squared() / (n - 5) as f64;
    let mut c = [0.0; 5];
    c.copy_from_slice(coef.as_slice());
    Ok((c, var))
}

/// `∫_0^1 m̈(t)² dt` for `m(t) = Σ c_k (2t - 1)^k`.
pub fn quartic_curvature(c: &[f64; 5]) -> f64 {
    // m̈(t) = 4 p''(u) with p''(u) = a + b u + d u², and dt = du / 2.
    let (a, b, d) = (2.0 * c[2], 6.0 * c[3], 12.0 * c[4]);
    let int_u = 2.0 * a * a + 2.0 / 3.0 * (b * b + 2.0 * a * d) + 2.0 / 5.0 * d * d;
    8.0 * int_u
}

/// Plug-in mean-regression bandwidth
/// `[σ̂² φ_K / (n μ_2² ∫ m̈²)]^{1/5}` from a global quartic trend.
pub fn mean_regression_bandwidth(series: &UnitTimeSeries, kernel: &Kernel) -> Result<f64> {
    let n = series.len();
    if n < MIN_LEN_RULE_OF_THUMB {
        return Err(Error::InsufficientData(format!("{n} observations, rule of thumb needs {MIN_LEN_RULE_OF_THUMB}")));
    }
    let (coef, var) = quartic_fit(series)?;
    let curvature = quartic_curvature(&coef).max(CURVATURE_FLOOR);
    let mu2 = kernel.constants().mu[2];
    let ratio = var * kernel.phi() / (n as f64 * mu2 * mu2 * curvature);
    Ok(ratio.powf(0.2))
}

/// Independence rule-of-thumb bandwidth for quantile level `alpha`.
pub fn yj_rule_of_thumb(series: &UnitTimeSeries, alpha: f64, kernel: &Kernel) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(mean_regression_bandwidth(series, kernel)? * yj_multiplier(alpha))
}

/// Clamps to `[2/n, MAX_BANDWIDTH]`; the flag reports whether it engaged.
pub fn clamp_bandwidth(b: f64, n: usize) -> (f64, bool) {
    let lo = (2.0 / n as f64).min(MAX_BANDWIDTH);
    let c = b.clamp(lo, MAX_BANDWIDTH);
    (c, c != b)
}

/// Largest `m` with `m³ <= n`.
pub fn integer_cube_root(n: usize) -> usize {
    let mut m = (n as f64).cbrt().round() as usize;
    while m * m * m > n {
        m -= 1;
    }
    while (m + 1) * (m + 1) * (m + 1) <= n {
        m += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceCorrection {
    pub rho_star: f64,
    pub sigma_tilde_sq: f64,
    pub m_tilde: usize,
    pub sigma_floored: bool,
}

fn correction_from_scores(scores: &[f64], alpha: f64) -> Result<VarianceCorrection> {
    let m_tilde = integer_cube_root(scores.len());
    let raw = block_variance_streaming(scores, m_tilde)?;
    let sigma_floored = raw < SIGMA_FLOOR;
    let sigma_tilde_sq = raw.max(SIGMA_FLOOR);
    Ok(VarianceCorrection {
        rho_star: (sigma_tilde_sq / (alpha * (1.0 - alpha))).powf(0.2),
        sigma_tilde_sq,
        m_tilde,
        sigma_floored,
    })
}

fn pilot_curve(series: &UnitTimeSeries, alpha: f64, pilot_b: f64, kernel: &Kernel) -> Result<QuantileCurve> {
    let curve = estimate_raw_curve(series, alpha, pilot_b, kernel, &EvaluationGrid::unit(series.len()))?;
    if curve.values.iter().any(Option::is_none) {
        return Err(Error::InsufficientData(format!("pilot bandwidth {pilot_b} leaves points without support")));
    }
    Ok(curve)
}

fn pilot_scores(series: &UnitTimeSeries, alpha: f64, pilot: &QuantileCurve) -> Vec<f64> {
    series
        .values()
        .iter()
        .zip(&pilot.values)
        .map(|(x, q)| psi(alpha, x - q.expect("pilot curve complete")))
        .collect()
}

/// Dependence correction factor `ρ̂*(α)` from a pilot raw curve at `pilot_b`.
pub fn variance_correction(series: &UnitTimeSeries, alpha: f64, pilot_b: f64, kernel: &Kernel) -> Result<VarianceCorrection> {
    check_alpha(alpha)?;
    if series.len() < MIN_LEN_CORRECTION {
        return Err(Error::InsufficientData(format!(
            "{} observations, correction factor needs {MIN_LEN_CORRECTION}",
            series.len()
        )));
    }
    let pilot = pilot_curve(series, alpha, pilot_b, kernel)?;
    correction_from_scores(&pilot_scores(series, alpha, &pilot), alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSelection {
    pub alpha: f64,
    pub b_yj: f64,
    pub sigma_tilde_sq: f64,
    pub rho_star: f64,
    /// Selected bandwidth after clamping.
    pub b_star: f64,
    /// `b_yj * rho_star` before clamping.
    pub b_star_unclamped: f64,
    pub m_tilde: usize,
    pub pilot_bandwidth: f64,
    pub clamped: bool,
    pub sigma_floored: bool,
}

/// `b* = b_YJ ρ̂*`, clamped to `[2/n, MAX_BANDWIDTH]`. The pilot curve uses
/// the clamped rule-of-thumb bandwidth.
pub fn select_bandwidth(series: &UnitTimeSeries, alpha: f64, kernel: &Kernel) -> Result<BandwidthSelection> {
    let b_yj = yj_rule_of_thumb(series, alpha, kernel)?;
    let (pilot_bandwidth, _) = clamp_bandwidth(b_yj, series.len());
    let vc = variance_correction(series, alpha, pilot_bandwidth, kernel)?;
    let raw = b_yj * vc.rho_star;
    let (b_star, clamped) = clamp_bandwidth(raw, series.len());
    Ok(BandwidthSelection {
        alpha,
        b_yj,
        sigma_tilde_sq: vc.sigma_tilde_sq,
        rho_star: vc.rho_star,
        b_star,
        b_star_unclamped: raw,
        m_tilde: vc.m_tilde,
        pilot_bandwidth,
        clamped,
        sigma_floored: vc.sigma_floored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalBandwidthProfile {
    pub alpha: f64,
    pub grid: EvaluationGrid,
    pub b_yj: f64,
    pub sigma_sq: Vec<f64>,
    pub rho_star_local: Vec<f64>,
    pub b_local: Vec<f64>,
    pub clamped: Vec<bool>,
}

impl LocalBandwidthProfile {
    pub fn to_bandwidth(&self) -> Bandwidth {
        Bandwidth::Local(Arc::new(BandwidthCurve { grid: self.grid.clone(), values: self.b_local.clone() }))
    }
}

/// Maps local long-run variances to `ρ*(α, t)` and `b_yj ρ*(α, t)`.
pub fn profile_from_variances(alpha: f64, b_yj: f64, n: usize, grid: EvaluationGrid, sigma_sq: Vec<f64>) -> LocalBandwidthProfile {
    let rho: Vec<f64> = sigma_sq.iter().map(|s| (s.max(SIGMA_FLOOR) / (alpha * (1.0 - alpha))).powf(0.2)).collect();
    let (b_local, clamped) = rho.iter().map(|r| clamp_bandwidth(b_yj * r, n)).unzip();
    LocalBandwidthProfile { alpha, grid, b_yj, sigma_sq, rho_star_local: rho, b_local, clamped }
}

/// Time-varying bandwidth `b_yj ρ*(α, t)` with `ρ*(α, t)` from the localized
/// block variance of the pilot scores. Where a neighborhood is too short for a
/// block estimate the global `σ̃²` is used.
pub fn local_bandwidth_profile(
    series: &UnitTimeSeries,
    alpha: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<LocalBandwidthProfile> {
    let b_yj = yj_rule_of_thumb(series, alpha, kernel)?;
    let (pilot_b, _) = clamp_bandwidth(b_yj, series.len());
    if series.len() < MIN_LEN_CORRECTION {
        return Err(Error::InsufficientData(format!("{} observations", series.len())));
    }
    let pilot = pilot_curve(series, alpha, pilot_b, kernel)?;
    let global = correction_from_scores(&pilot_scores(series, alpha, &pilot), alpha)?;
    let n = series.len();
    let sigma_sq = grid
        .points()
        .iter()
        .map(|&t| {
            let hood = neighborhood(n, t, pilot_b);
            let m = block_length(hood.size(), 1.0);
            quantile_scores(series, alpha, &pilot, &hood)
                .and_then(|z| block_variance_streaming(&z, m))
                .map(|s| s.max(SIGMA_FLOOR))
                .unwrap_or(global.sigma_tilde_sq)
        })
        .collect();
    Ok(profile_from_variances(alpha, b_yj, n, grid.clone(), sigma_sq))
}
