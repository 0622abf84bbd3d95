//! Plug-in estimates of the local long-run variance and of the density at the
//! quantile, and pointwise confidence bands built from them.
//!
//! A band at `t` has half-width `z_{1-γ/2} sqrt(φ_{K*} σ̂²(t)) / (f̂(t) sqrt(n b))`
//! around the jackknifed curve, where `K*` is the jackknife kernel.

use serde::Serialize;

use crate::curvefit::{iqr_from_components, jackknife_parts, Bandwidth, EvaluationGrid, IqrCurve, JackknifeParts, QuantileCurve};
use crate::error::{check_alpha, Error, Result};
use crate::flags::PointFlags;
use crate::kernel::{jackknife_kernel, Kernel};
use crate::normal;
use crate::series::UnitTimeSeries;
use crate::solver::{fit_local_linear, psi, LocalFitProblem};

pub const SIGMA_FLOOR: f64 = 1e-10;
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Observation indices `s..=l` (one-based) with
/// `s = max(⌊nt - nb⌋, 1)` and `l = min(⌊nt + nb⌋, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LocalNeighborhood {
    pub start: usize,
    pub end: usize,
}

impl LocalNeighborhood {
    pub fn size(&self) -> usize {
        self.end + 1 - self.start
    }

    /// Zero-based index range into the series.
    pub fn range(&self) -> std::ops::Range<usize> {
        (self.start - 1)..self.end
    }
}

fn floor_guarded(x: f64) -> f64 {
    // keeps exact products such as 100 * 0.15 from landing one below
    (x + 1e-9).floor()
}

pub fn neighborhood(n: usize, t: f64, b: f64) -> LocalNeighborhood {
    let nf = n as f64;
    let lo = floor_guarded(nf * t - nf * b).max(1.0);
    let hi = floor_guarded(nf * t + nf * b).min(nf);
    let start = (lo as usize).clamp(1, n.max(1));
    let end = (hi.max(1.0) as usize).clamp(start, n.max(1));
    LocalNeighborhood { start, end }
}

/// Overlapping-block long-run variance of `z` with block length `m`,
/// `m/(N - m + 1) Σ_j (mean(z[j..j+m]) - mean(z))²`, summing block by block.
pub fn block_variance(z: &[f64], m: usize) -> Result<f64> {
    check_block(z.len(), m)?;
    let z = &centered(z);
    let n = z.len();
    let zbar = z.iter().sum::<f64>() / n as f64;
    let blocks = n - m + 1;
    let mut acc = 0.0;
    for j in 0..blocks {
        let mean = z[j..j + m].iter().sum::<f64>() / m as f64;
        acc += (mean - zbar).powi(2);
    }
    Ok(m as f64 / blocks as f64 * acc)
}

/// Same statistic as [`block_variance`] with a rolling window sum.
pub fn block_variance_streaming(z: &[f64], m: usize) -> Result<f64> {
    check_block(z.len(), m)?;
    let z = &centered(z);
    let n = z.len();
    let zbar = z.iter().sum::<f64>() / n as f64;
    let mut window: f64 = z[..m].iter().sum();
    let mut acc = (window / m as f64 - zbar).powi(2);
    for j in m..n {
        window += z[j] - z[j - m];
        acc += (window / m as f64 - zbar).powi(2);
    }
    Ok(m as f64 / (n - m + 1) as f64 * acc)
}

// The statistic is shift invariant; shifting by the first score makes
// constant sequences exactly zero.
fn centered(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v - z[0]).collect()
}

fn check_block(len: usize, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InsufficientData(format!("block length {m} < 2")));
    }
    if len <= m {
        return Err(Error::InsufficientData(format!("{len} observations for block length {m}")));
    }
    Ok(())
}

/// Block length `max(⌊λ N^{1/3}⌋, 2)`.
pub fn block_length(size: usize, lambda: f64) -> usize {
    ((lambda * (size as f64).cbrt() + 1e-9).floor() as usize).max(2)
}

/// Residual signs `ψ_α(X_i - Q̂_α(i/n))` over a neighborhood, from a raw
/// curve on `{i/n}`.
pub fn quantile_scores(series: &UnitTimeSeries, alpha: f64, raw: &QuantileCurve, hood: &LocalNeighborhood) -> Result<Vec<f64>> {
    if !raw.grid.is_unit_grid(series.len()) {
        return Err(Error::InvalidGrid("scores need a raw curve on {i/n}".into()));
    }
    let x = series.values();
    hood.range()
        .map(|i| {
            raw.values[i]
                .map(|q| psi(alpha, x[i] - q))
                .ok_or_else(|| Error::InsufficientData(format!("raw curve missing at index {}", i + 1)))
        })
        .collect()
}

/// Localized block estimate `σ̂²(t)` of the long-run variance of the
/// quantile scores.
pub fn long_run_variance(
    series: &UnitTimeSeries,
    alpha: f64,
    raw: &QuantileCurve,
    t: f64,
    b: f64,
    m_n: usize,
) -> Result<f64> {
    check_alpha(alpha)?;
    let hood = neighborhood(series.len(), t, b);
    let z = quantile_scores(series, alpha, raw, &hood)?;
    block_variance_streaming(&z, m_n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub floored: bool,
}

/// `(1/(N h)) Σ_{i ∈ N(t)} K#((q - X_i)/h)`, floored at [`DENSITY_FLOOR`].
pub fn density_at_quantile(
    series: &UnitTimeSeries,
    t: f64,
    b: f64,
    qhat: f64,
    h: f64,
    kernel_sharp: &Kernel,
) -> Result<DensityEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidBandwidth { value: h, range: "(0, inf)" });
    }
    let hood = neighborhood(series.len(), t, b);
    let x = &series.values()[hood.range()];
    Ok(kernel_density(x, qhat, h, kernel_sharp))
}

fn kernel_density(x: &[f64], q: f64, h: f64, kernel: &Kernel) -> DensityEstimate {
    let sum: f64 = x.iter().map(|&xi| kernel.evaluate((q - xi) / h)).sum();
    let value = sum / (x.len() as f64 * h);
    if value < DENSITY_FLOOR || !value.is_finite() {
        DensityEstimate { value: DENSITY_FLOOR, floored: true }
    } else {
        DensityEstimate { value, floored: false }
    }
}

/// Interpolated sample quantile (linear between order statistics).
fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Normal-reference scale `1.06 min(sd, IQR/1.34)`, falling back to whichever
/// spread is positive. `None` when the values have no spread.
pub fn density_scale(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (sample_quantile(&sorted, 0.75) - sample_quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return None,
    };
    Some(1.06 * spread)
}

/// Smoothing parameters for the plug-in estimates.
#[derive(Debug, Clone)]
pub struct PlugInConfig {
    /// Block-length multiplier `λ` in `m_n = ⌊λ N^{1/3}⌋`.
    pub block_lambda: f64,
    /// Overrides the normal-reference scale `c` in `h_n = c N^{-1/5}`.
    pub density_scale: Option<f64>,
    pub kernel_sharp: Kernel,
}

impl Default for PlugInConfig {
    fn default() -> Self {
        Self { block_lambda: 1.0, density_scale: None, kernel_sharp: Kernel::epanechnikov() }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PlugIns {
    pub sigma_sq: Vec<Option<f64>>,
    pub density: Vec<Option<f64>>,
    pub m_n: Vec<Option<usize>>,
    pub h_n: Vec<Option<f64>>,
}

impl PlugIns {
    fn push_none(&mut self) {
        self.sigma_sq.push(None);
        self.density.push(None);
        self.m_n.push(None);
        self.h_n.push(None);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointwiseBand {
    pub center: QuantileCurve,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// `γ`; the band has nominal coverage `1 - γ`.
    pub nominal: f64,
    pub plugins: PlugIns,
    pub first_bandwidth: f64,
    /// Raw local linear slope `Q̂'(t)` at each grid point.
    pub slopes: Vec<Option<f64>>,
    pub flags: Vec<PointFlags>,
}

impl PointwiseBand {
    pub fn half_width(&self, k: usize) -> Option<f64> {
        Some(0.5 * (self.upper[k]? - self.lower[k]?))
    }
}

/// `z sqrt(φ σ²) / (f sqrt(n b))`.
pub fn half_width(z: f64, phi_star: f64, sigma_sq: f64, density: f64, n: usize, b: f64) -> f64 {
    z * (phi_star * sigma_sq).sqrt() / (density * (n as f64 * b).sqrt())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("nominal level {gamma} outside (0, 1)")))
    }
}

fn is_interior(t: f64, b: f64) -> bool {
    t >= b - 1e-12 && t <= 1.0 - b + 1e-12
}

/// Raw fit `(Q̂(t), Q̂'(t))` at `t`: read off the raw curve on `{i/n}` when
/// `t` is an observation time, fitted directly otherwise.
fn raw_fit_at(series: &UnitTimeSeries, raw: &QuantileCurve, t: f64, b: f64, kernel: &Kernel) -> Option<(f64, Option<f64>)> {
    if let Some(k) = raw.position(t) {
        let slope = raw.slopes.as_ref().and_then(|s| s[k]);
        return raw.values[k].map(|v| (v, slope));
    }
    let p = LocalFitProblem { series, t, alpha: raw.alpha, bandwidth: b, kernel };
    fit_local_linear(&p).ok().map(|f| (f.qhat, Some(f.slope)))
}

struct LocalPlugIn {
    sigma_sq: f64,
    density: f64,
    m_n: usize,
    h_n: f64,
    flags: PointFlags,
}

fn local_plugin(
    series: &UnitTimeSeries,
    alpha: f64,
    raw: &QuantileCurve,
    qhat: f64,
    t: f64,
    b: f64,
    cfg: &PlugInConfig,
) -> Result<LocalPlugIn> {
    let hood = neighborhood(series.len(), t, b);
    let m_n = block_length(hood.size(), cfg.block_lambda);
    let z = quantile_scores(series, alpha, raw, &hood)?;
    let mut flags = PointFlags::NONE;
    let mut sigma_sq = block_variance_streaming(&z, m_n)?;
    if sigma_sq < SIGMA_FLOOR {
        sigma_sq = SIGMA_FLOOR;
        flags |= PointFlags::SIGMA_FLOOR;
    }
    let x = &series.values()[hood.range()];
    let (density, h_n) = match cfg.density_scale.or_else(|| density_scale(x)) {
        Some(c) => {
            let h = c * (hood.size() as f64).powf(-0.2);
            let d = kernel_density(x, qhat, h, &cfg.kernel_sharp);
            if d.floored {
                flags |= PointFlags::DENSITY_FLOOR;
            }
            (d.value, h)
        }
        None => {
            flags |= PointFlags::DENSITY_FLOOR;
            (DENSITY_FLOOR, 0.0)
        }
    };
    Ok(LocalPlugIn { sigma_sq, density, m_n, h_n, flags })
}

/// Band around an already computed jackknife estimate.
pub fn band_from_parts(
    series: &UnitTimeSeries,
    parts: &JackknifeParts,
    bandwidth: &Bandwidth,
    gamma: f64,
    kernel: &Kernel,
    cfg: &PlugInConfig,
) -> Result<PointwiseBand> {
    check_gamma(gamma)?;
    let z = normal::two_sided_critical(gamma);
    let phi_star = jackknife_kernel(kernel).phi();
    let center = parts.jackknifed.clone();
    let alpha = center.alpha;
    let n = series.len();
    let m = center.grid.len();
    let mut lower = Vec::with_capacity(m);
    let mut upper = Vec::with_capacity(m);
    let mut slopes = Vec::with_capacity(m);
    let mut flags = center.flags.clone();
    let mut plugins = PlugIns::default();
    for (k, &t) in center.grid.points().iter().enumerate() {
        let b = bandwidth.at(t);
        let fit = raw_fit_at(series, &parts.raw, t, b, kernel);
        slopes.push(fit.and_then(|f| f.1));
        let estimate = match (center.values[k], fit) {
            (Some(c), Some((qhat, _))) if is_interior(t, b) => {
                local_plugin(series, alpha, &parts.raw, qhat, t, b, cfg).map(|p| (c, p)).ok()
            }
            (_, _) if !is_interior(t, b) => {
                flags[k] |= PointFlags::BOUNDARY_EXCLUDED;
                None
            }
            _ => None,
        };
        match estimate {
            Some((c, p)) => {
                let hw = half_width(z, phi_star, p.sigma_sq, p.density, n, b);
                lower.push(Some(c - hw));
                upper.push(Some(c + hw));
                flags[k] |= p.flags;
                plugins.sigma_sq.push(Some(p.sigma_sq));
                plugins.density.push(Some(p.density));
                plugins.m_n.push(Some(p.m_n));
                plugins.h_n.push(Some(p.h_n));
            }
            None => {
                if !flags[k].contains(PointFlags::BOUNDARY_EXCLUDED) {
                    flags[k] |= PointFlags::PLUGIN_FAILED;
                }
                lower.push(None);
                upper.push(None);
                plugins.push_none();
            }
        }
    }
    Ok(PointwiseBand {
        center,
        lower,
        upper,
        nominal: gamma,
        plugins,
        first_bandwidth: bandwidth.representative(),
        slopes,
        flags,
    })
}

/// Pointwise band for `Q_α(t)` at nominal coverage `1 - γ`.
pub fn pointwise_band(
    series: &UnitTimeSeries,
    alpha: f64,
    b: f64,
    bbar: f64,
    gamma: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<PointwiseBand> {
    pointwise_band_with(series, alpha, &Bandwidth::Static(b), bbar, gamma, kernel, grid, &PlugInConfig::default())
}

#[allow(clippy::too_many_arguments)]
pub fn pointwise_band_with(
    series: &UnitTimeSeries,
    alpha: f64,
    bandwidth: &Bandwidth,
    bbar: f64,
    gamma: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
    cfg: &PlugInConfig,
) -> Result<PointwiseBand> {
    check_gamma(gamma)?;
    let parts = jackknife_parts(series, alpha, bandwidth, bbar, kernel, grid)?;
    band_from_parts(series, &parts, bandwidth, gamma, kernel, cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct IqrBand {
    pub center: IqrCurve,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub nominal: f64,
    pub sigma_sq: Vec<Option<f64>>,
    pub density_lower: Vec<Option<f64>>,
    pub density_upper: Vec<Option<f64>>,
    pub first_bandwidth: f64,
    pub flags: Vec<PointFlags>,
}

/// Combined IQR scores `ψ_.75(X_i - Q̂_.75)/f_.75 - ψ_.25(X_i - Q̂_.25)/f_.25`.
pub fn iqr_scores(upper_scores: &[f64], lower_scores: &[f64], f_upper: f64, f_lower: f64) -> Vec<f64> {
    upper_scores.iter().zip(lower_scores).map(|(u, l)| u / f_upper - l / f_lower).collect()
}

/// Pointwise band for the interquartile-range curve.
#[allow(clippy::too_many_arguments)]
pub fn iqr_band(
    series: &UnitTimeSeries,
    b25: f64,
    b75: f64,
    bbar: f64,
    gamma: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
    cfg: &PlugInConfig,
) -> Result<IqrBand> {
    check_gamma(gamma)?;
    let lo_parts = jackknife_parts(series, 0.25, &Bandwidth::Static(b25), bbar, kernel, grid)?;
    let hi_parts = jackknife_parts(series, 0.75, &Bandwidth::Static(b75), bbar, kernel, grid)?;
    let center = iqr_from_components(lo_parts.jackknifed.clone(), hi_parts.jackknifed.clone())?;
    let z = normal::two_sided_critical(gamma);
    let phi_star = jackknife_kernel(kernel).phi();
    let n = series.len();
    let b_eff = b25.min(b75);
    let b_outer = b25.max(b75);

    let m = grid.len();
    let mut out = IqrBand {
        lower: Vec::with_capacity(m),
        upper: Vec::with_capacity(m),
        nominal: gamma,
        sigma_sq: Vec::with_capacity(m),
        density_lower: Vec::with_capacity(m),
        density_upper: Vec::with_capacity(m),
        first_bandwidth: b_eff,
        flags: vec![PointFlags::NONE; m],
        center,
    };
    for (k, &t) in grid.points().iter().enumerate() {
        out.flags[k] = out.center.lower.flags[k] | out.center.upper.flags[k];
        if out.center.crossing[k] {
            out.flags[k] |= PointFlags::CROSSING;
        }
        let computed = (|| -> Option<(f64, f64, f64, PointFlags)> {
            if !is_interior(t, b_outer) {
                return None;
            }
            out.center.values[k]?;
            let (q_lo, _) = raw_fit_at(series, &lo_parts.raw, t, b25, kernel)?;
            let (q_hi, _) = raw_fit_at(series, &hi_parts.raw, t, b75, kernel)?;
            let p_lo = local_plugin(series, 0.25, &lo_parts.raw, q_lo, t, b_eff, cfg).ok()?;
            let p_hi = local_plugin(series, 0.75, &hi_parts.raw, q_hi, t, b_eff, cfg).ok()?;
            let hood = neighborhood(n, t, b_eff);
            let s_lo = quantile_scores(series, 0.25, &lo_parts.raw, &hood).ok()?;
            let s_hi = quantile_scores(series, 0.75, &hi_parts.raw, &hood).ok()?;
            let w = iqr_scores(&s_hi, &s_lo, p_hi.density, p_lo.density);
            let mut flags = PointFlags::NONE;
            if p_lo.flags.contains(PointFlags::DENSITY_FLOOR) || p_hi.flags.contains(PointFlags::DENSITY_FLOOR) {
                flags |= PointFlags::DENSITY_FLOOR;
            }
            let mut s2 = block_variance_streaming(&w, p_lo.m_n).ok()?;
            if s2 < SIGMA_FLOOR {
                s2 = SIGMA_FLOOR;
                flags |= PointFlags::SIGMA_FLOOR;
            }
            Some((s2, p_lo.density, p_hi.density, flags))
        })();
        match (computed, out.center.values[k]) {
            (Some((s2, f_lo, f_hi, flags)), Some(c)) => {
                let hw = z * (phi_star * s2).sqrt() / (n as f64 * b_eff).sqrt();
                out.lower.push(Some(c - hw));
                out.upper.push(Some(c + hw));
                out.sigma_sq.push(Some(s2));
                out.density_lower.push(Some(f_lo));
                out.density_upper.push(Some(f_hi));
                out.flags[k] |= flags;
            }
            _ => {
                out.flags[k] |= if is_interior(t, b_outer) { PointFlags::PLUGIN_FAILED } else { PointFlags::BOUNDARY_EXCLUDED };
                out.lower.push(None);
                out.upper.push(None);
                out.sigma_sq.push(None);
                out.density_lower.push(None);
                out.density_upper.push(None);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighborhood_examples() {
        let h = neighborhood(100, 0.5, 0.1);
        assert_eq!((h.start, h.end, h.size()), (40, 60, 21));
        let h = neighborhood(100, 0.05, 0.1);
        assert_eq!((h.start, h.end), (1, 15));
        let h = neighborhood(100, 0.95, 0.1);
        assert_eq!(h.end, 100);
        assert_eq!(neighborhood(100, 0.5, 0.1).range(), 39..60);
    }

    #[test]
    fn block_variance_constant_is_zero() {
        assert_eq!(block_variance(&[0.3; 20], 4).unwrap(), 0.0);
        assert_eq!(block_variance_streaming(&[0.3; 20], 4).unwrap(), 0.0);
        assert!(block_variance(&[0.3; 4], 4).is_err());
        assert!(block_variance(&[0.3; 10], 1).is_err());
    }

    #[test]
    fn alternating_scores_by_hand() {
        // z = +.5, -.5, ... (10 terms): every length-2 block averages to 0 and
        // the overall mean is 0.
        let z: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        assert!(block_variance(&z, 2).unwrap().abs() < 1e-15);
        // 9 terms: overall mean 0.5/9; blocks still average 0.
        let z9 = &z[..9];
        let zbar = 0.5 / 9.0;
        let want = 2.0 / 8.0 * 8.0 * zbar * zbar;
        assert!((block_variance(z9, 2).unwrap() - want).abs() < 1e-15);
        // length-3 blocks alternate between 1/6 and -1/6.
        let blocks: Vec<f64> = (0..8).map(|j| if j % 2 == 0 { 1.0 / 6.0 } else { -1.0 / 6.0 }).collect();
        let want3 = 3.0 / 8.0 * blocks.iter().map(|m| (m - 0.0f64).powi(2)).sum::<f64>();
        assert!((block_variance(&z, 3).unwrap() - want3).abs() < 1e-15);
    }

    #[test]
    fn block_length_rule() {
        assert_eq!(block_length(1000, 1.0), 10);
        assert_eq!(block_length(27, 1.0), 3);
        assert_eq!(block_length(3, 1.0), 2);
        assert_eq!(block_length(1000, 2.0), 20);
    }

    #[test]
    fn density_all_at_quantile() {
        let s = UnitTimeSeries::new(vec![2.0; 50]).unwrap();
        let k = Kernel::epanechnikov();
        let d = density_at_quantile(&s, 0.5, 0.2, 2.0, 0.3, &k).unwrap();
        assert!((d.value - 0.75 / 0.3).abs() < 1e-12);
        assert!(!d.floored);
        let far = density_at_quantile(&s, 0.5, 0.2, 10.0, 0.3, &k).unwrap();
        assert_eq!(far, DensityEstimate { value: DENSITY_FLOOR, floored: true });
    }

    #[test]
    fn half_width_formula() {
        let phi_star = jackknife_kernel(&Kernel::epanechnikov()).phi();
        let z = normal::two_sided_critical(0.05);
        let hw = half_width(z, phi_star, 0.25, 0.4, 1000, 0.1);
        let want = 1.959_963_984_540_054 * (phi_star * 0.25).sqrt() / (0.4 * 10.0);
        assert!((hw - want).abs() < 1e-9);
    }

    #[test]
    fn density_scale_rule() {
        assert_eq!(density_scale(&[1.0; 10]), None);
        let v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let sd = (v.iter().map(|x| (x - 50.0f64).powi(2)).sum::<f64>() / 100.0).sqrt();
        let iqr = 50.0 / 1.34;
        assert!((density_scale(&v).unwrap() - 1.06 * sd.min(iqr)).abs() < 1e-12);
    }
}
