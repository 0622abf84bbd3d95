//! Quantile curves over an evaluation grid: raw local linear estimates,
//! second-stage local linear smoothing of the raw curve, the jackknife
//! combination `2 Q̌_b - Q̌_{√2 b}`, and interquartile-range curves.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::flags::PointFlags;
use crate::kernel::Kernel;
use crate::series::UnitTimeSeries;
use crate::solver::{solve_descent, LocalDesign};

/// Largest admissible first-stage bandwidth for a raw curve.
pub const MAX_RAW_BANDWIDTH: f64 = 0.5;

/// Smoothing windows with `B2 B0 - B1²` below this are reported as missing.
pub const WINDOW_DENOMINATOR_FLOOR: f64 = 1e-14;

const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EvaluationGrid {
    points: Vec<f64>,
}

impl EvaluationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("empty".into()));
        }
        if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidGrid("points must lie in [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// The observation times `{i/n : i = 1..n}`.
    pub fn unit(n: usize) -> Self {
        Self { points: (1..=n).map(|i| i as f64 / n as f64).collect() }
    }

    /// `m` equally spaced points covering `[0, 1]` (the midpoint when `m = 1`).
    pub fn uniform(m: usize) -> Self {
        match m {
            0 | 1 => Self { points: vec![0.5] },
            _ => Self { points: (0..m).map(|k| k as f64 / (m - 1) as f64).collect() },
        }
    }

    /// `{i/n}` up to `n = 5000`, a uniform 1000-point grid beyond.
    pub fn default_for(n: usize) -> Self {
        if n <= 5000 {
            Self::unit(n)
        } else {
            Self::uniform(1000)
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_unit_grid(&self, n: usize) -> bool {
        self.points.len() == n
            && self.points.iter().enumerate().all(|(k, &p)| (p - (k + 1) as f64 / n as f64).abs() <= 1e-12)
    }
}

impl TryFrom<Vec<f64>> for EvaluationGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<EvaluationGrid> for Vec<f64> {
    fn from(g: EvaluationGrid) -> Self {
        g.points
    }
}

/// First-stage bandwidth: one value for all times, or a piecewise-linear
/// profile over a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    Static(f64),
    Local(Arc<BandwidthCurve>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthCurve {
    pub grid: EvaluationGrid,
    pub values: Vec<f64>,
}

impl BandwidthCurve {
    pub fn at(&self, t: f64) -> f64 {
        let p = self.grid.points();
        match p.partition_point(|&x| x < t) {
            0 => self.values[0],
            k if k == p.len() => self.values[p.len() - 1],
            k => {
                let (x0, x1) = (p[k - 1], p[k]);
                let w = (t - x0) / (x1 - x0);
                self.values[k - 1] * (1.0 - w) + self.values[k] * w
            }
        }
    }
}

impl Bandwidth {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Bandwidth::Static(b) => *b,
            Bandwidth::Local(curve) => curve.at(t),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Bandwidth::Static(b) => Bandwidth::Static(b * factor),
            Bandwidth::Local(c) => Bandwidth::Local(Arc::new(BandwidthCurve {
                grid: c.grid.clone(),
                values: c.values.iter().map(|v| v * factor).collect(),
            })),
        }
    }

    /// Representative scalar: the static value or the profile median.
    pub fn representative(&self) -> f64 {
        match self {
            Bandwidth::Static(b) => *b,
            Bandwidth::Local(c) => {
                let mut v = c.values.clone();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |b: f64| b > 0.0 && b <= MAX_RAW_BANDWIDTH;
        let bad = match self {
            Bandwidth::Static(b) => (!ok(*b)).then_some(*b),
            Bandwidth::Local(c) => c.values.iter().copied().find(|&b| !ok(b)),
        };
        match bad {
            Some(value) => Err(Error::InvalidBandwidth { value, range: "(0, 0.5]" }),
            None => Ok(()),
        }
    }
}

impl From<f64> for Bandwidth {
    fn from(b: f64) -> Self {
        Bandwidth::Static(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Raw,
    Smoothed,
    Jackknifed,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Smoothed => "smoothed",
            Stage::Jackknifed => "jackknifed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileCurve {
    pub alpha: f64,
    pub grid: EvaluationGrid,
    /// `None` where the point could not be estimated; see `flags`.
    pub values: Vec<Option<f64>>,
    pub slopes: Option<Vec<Option<f64>>>,
    /// First-stage bandwidth (representative value for local profiles).
    pub bandwidth: f64,
    pub second_bandwidth: Option<f64>,
    pub stage: Stage,
    pub flags: Vec<PointFlags>,
}

impl QuantileCurve {
    pub fn value_at(&self, k: usize) -> Option<f64> {
        self.values[k]
    }

    /// Index of grid point `t` (exact match within 1e-12).
    pub fn position(&self, t: f64) -> Option<usize> {
        let p = self.grid.points();
        let k = p.partition_point(|&x| x < t - 1e-12);
        (k < p.len() && (p[k] - t).abs() <= 1e-12).then_some(k)
    }
}

/// Raw local linear quantile curve at a static bandwidth.
pub fn estimate_raw_curve(
    series: &UnitTimeSeries,
    alpha: f64,
    b: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<QuantileCurve> {
    estimate_raw_curve_with(series, alpha, &Bandwidth::Static(b), kernel, grid)
}

/// Raw curve with a possibly time-varying bandwidth. Points with fewer than
/// two weighted observations are left missing and flagged.
pub fn estimate_raw_curve_with(
    series: &UnitTimeSeries,
    alpha: f64,
    bandwidth: &Bandwidth,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<QuantileCurve> {
    estimate_raw_masked(series, alpha, bandwidth, kernel, grid, None)
}

fn estimate_raw_masked(
    series: &UnitTimeSeries,
    alpha: f64,
    bandwidth: &Bandwidth,
    kernel: &Kernel,
    grid: &EvaluationGrid,
    mask: Option<&[bool]>,
) -> Result<QuantileCurve> {
    check_alpha(alpha)?;
    bandwidth.validate()?;
    let points = grid.points();
    let chunks: Vec<Vec<(Option<(f64, f64)>, PointFlags)>> = points
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            // Warm start each point from the series index the previous fit pivoted on.
            let mut warm: Option<usize> = None;
            chunk
                .iter()
                .enumerate()
                .map(|(j, &t)| {
                    if mask.is_some_and(|m| !m[c * CHUNK + j]) {
                        warm = None;
                        return (None, PointFlags::NOT_EVALUATED);
                    }
                    let design = LocalDesign::around(series, t, bandwidth.at(t), kernel);
                    if design.len() < 2 {
                        warm = None;
                        return (None, PointFlags::INSUFFICIENT_SUPPORT);
                    }
                    let start = warm.and_then(|idx| design.indices.binary_search(&idx).ok());
                    match solve_descent(&design, alpha, start) {
                        Ok(sol) => {
                            warm = Some(design.indices[sol.pivots.1]);
                            let flags = if sol.fit.degenerate { PointFlags::DEGENERATE_DESIGN } else { PointFlags::NONE };
                            (Some((sol.fit.qhat, sol.fit.slope)), flags)
                        }
                        Err(_) => (None, PointFlags::INSUFFICIENT_SUPPORT),
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    let mut slopes = Vec::with_capacity(points.len());
    let mut flags = Vec::with_capacity(points.len());
    for (fit, flag) in chunks.into_iter().flatten() {
        values.push(fit.map(|f| f.0));
        slopes.push(fit.map(|f| f.1));
        flags.push(flag);
    }
    Ok(QuantileCurve {
        alpha,
        grid: grid.clone(),
        values,
        slopes: Some(slopes),
        bandwidth: bandwidth.representative(),
        second_bandwidth: None,
        stage: Stage::Raw,
        flags,
    })
}

/// Local linear smoothing weights `w_n(t, i)` for the available raw points.
/// Returns `None` when the window denominator degenerates.
pub fn smoothing_weights(times: &[f64], t: f64, bbar: f64, kernel: &Kernel) -> Option<Vec<f64>> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let k: Vec<f64> = times.iter().map(|&s| kernel.scaled(t - s, bbar)).collect();
    for (&s, &kv) in times.iter().zip(&k) {
        let d = t - s;
        b0 += kv;
        b1 += d * kv;
        b2 += d * d * kv;
    }
    let den = b2 * b0 - b1 * b1;
    if !(den >= WINDOW_DENOMINATOR_FLOOR) {
        return None;
    }
    Some(times.iter().zip(&k).map(|(&s, &kv)| kv * (b2 - (t - s) * b1) / den).collect())
}

/// Second-stage smoothing evaluated on the raw curve's own grid.
pub fn second_stage_smooth(raw: &QuantileCurve, bbar: f64, kernel: &Kernel) -> Result<QuantileCurve> {
    let grid = raw.grid.clone();
    second_stage_smooth_on(raw, bbar, kernel, &grid)
}

/// `Q̌(t) = Σ_i Q̂(i/n) w_n(t, i)` on `grid`. The raw curve must live on the
/// full `{i/n}` grid; missing raw points are left out of the sums.
pub fn second_stage_smooth_on(
    raw: &QuantileCurve,
    bbar: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<QuantileCurve> {
    if !(bbar > 0.0 && bbar.is_finite()) {
        return Err(Error::InvalidBandwidth { value: bbar, range: "(0, inf)" });
    }
    if raw.stage != Stage::Raw {
        return Err(Error::InvalidArgument("second-stage smoothing takes a raw curve".into()));
    }
    let n = raw.grid.len();
    if !raw.grid.is_unit_grid(n) {
        return Err(Error::InvalidGrid("raw curve must be evaluated on {i/n}".into()));
    }
    let raw_t = raw.grid.points();
    let reach = bbar * kernel.support_radius();
    let out: Vec<(Option<f64>, PointFlags)> = grid
        .points()
        .par_iter()
        .map(|&t| {
            let lo = raw_t.partition_point(|&s| s < t - reach);
            let hi = raw_t.partition_point(|&s| s <= t + reach);
            let (times, vals): (Vec<f64>, Vec<f64>) =
                (lo..hi).filter_map(|k| raw.values[k].map(|v| (raw_t[k], v))).unzip();
            match smoothing_weights(&times, t, bbar, kernel) {
                Some(w) => (Some(w.iter().zip(&vals).map(|(a, b)| a * b).sum()), PointFlags::NONE),
                None => (None, PointFlags::DEGENERATE_WINDOW),
            }
        })
        .collect();
    let (values, flags) = out.into_iter().unzip();
    Ok(QuantileCurve {
        alpha: raw.alpha,
        grid: grid.clone(),
        values,
        slopes: None,
        bandwidth: raw.bandwidth,
        second_bandwidth: Some(bbar),
        stage: Stage::Smoothed,
        flags,
    })
}

/// All intermediate curves of the jackknife estimate.
#[derive(Debug, Clone)]
pub struct JackknifeParts {
    /// Raw curve on `{i/n}` at bandwidth `b`.
    pub raw: QuantileCurve,
    /// Raw curve on `{i/n}` at bandwidth `√2 b`.
    pub raw_wide: QuantileCurve,
    pub smooth: QuantileCurve,
    pub smooth_wide: QuantileCurve,
    pub jackknifed: QuantileCurve,
}

/// `2 a - c` pointwise, tagged as the jackknife stage.
pub fn jackknife_combine(narrow: &QuantileCurve, wide: &QuantileCurve) -> Result<QuantileCurve> {
    if narrow.grid != wide.grid {
        return Err(Error::InvalidGrid("jackknife components on different grids".into()));
    }
    let values = narrow
        .values
        .iter()
        .zip(&wide.values)
        .map(|(a, c)| match (a, c) {
            (Some(a), Some(c)) => Some(2.0 * a - c),
            _ => None,
        })
        .collect();
    let flags = narrow.flags.iter().zip(&wide.flags).map(|(a, c)| *a | *c).collect();
    Ok(QuantileCurve {
        alpha: narrow.alpha,
        grid: narrow.grid.clone(),
        values,
        slopes: None,
        bandwidth: narrow.bandwidth,
        second_bandwidth: narrow.second_bandwidth,
        stage: Stage::Jackknifed,
        flags,
    })
}

/// Observation times whose raw fits can enter the smoothing window or the
/// plug-in neighborhood of some grid point.
fn raw_support_mask(n: usize, bandwidth: &Bandwidth, bbar: f64, kernel: &Kernel, grid: &EvaluationGrid) -> Vec<bool> {
    let nf = n as f64;
    let mut mask = vec![false; n];
    for &t in grid.points() {
        let reach = (bbar * kernel.support_radius()).max(bandwidth.at(t)) + 2.0 / nf;
        let lo = ((t - reach) * nf).floor().max(1.0) as usize;
        let hi = (((t + reach) * nf).ceil() as usize).min(n);
        for m in &mut mask[lo - 1..hi] {
            *m = true;
        }
    }
    mask
}

pub fn jackknife_parts(
    series: &UnitTimeSeries,
    alpha: f64,
    bandwidth: &Bandwidth,
    bbar: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<JackknifeParts> {
    let n = series.len();
    let unit = EvaluationGrid::unit(n);
    let wide_bw = bandwidth.scaled(SQRT_2);
    let mask = (!grid.is_unit_grid(n)).then(|| raw_support_mask(n, bandwidth, bbar, kernel, grid));
    let raw = estimate_raw_masked(series, alpha, bandwidth, kernel, &unit, mask.as_deref())?;
    let raw_wide = estimate_raw_masked(series, alpha, &wide_bw, kernel, &unit, mask.as_deref())?;
    let smooth = second_stage_smooth_on(&raw, bbar, kernel, grid)?;
    let smooth_wide = second_stage_smooth_on(&raw_wide, bbar, kernel, grid)?;
    let jackknifed = jackknife_combine(&smooth, &smooth_wide)?;
    Ok(JackknifeParts { raw, raw_wide, smooth, smooth_wide, jackknifed })
}

/// Bias-corrected curve `2 Q̌_{α,b} - Q̌_{α,√2 b}`.
pub fn jackknife_curve(
    series: &UnitTimeSeries,
    alpha: f64,
    b: f64,
    bbar: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<QuantileCurve> {
    Ok(jackknife_parts(series, alpha, &Bandwidth::Static(b), bbar, kernel, grid)?.jackknifed)
}

#[derive(Debug, Clone, Serialize)]
pub struct IqrCurve {
    pub grid: EvaluationGrid,
    pub values: Vec<Option<f64>>,
    /// Points where the estimated upper quartile lies below the lower one.
    pub crossing: Vec<bool>,
    pub lower: QuantileCurve,
    pub upper: QuantileCurve,
}

pub fn iqr_from_components(lower: QuantileCurve, upper: QuantileCurve) -> Result<IqrCurve> {
    if lower.grid != upper.grid {
        return Err(Error::InvalidGrid("quartile curves on different grids".into()));
    }
    let values: Vec<Option<f64>> = upper
        .values
        .iter()
        .zip(&lower.values)
        .map(|(u, l)| Some((*u)? - (*l)?))
        .collect();
    let crossing = values.iter().map(|v| matches!(v, Some(x) if *x < 0.0)).collect();
    Ok(IqrCurve { grid: lower.grid.clone(), values, crossing, lower, upper })
}

/// `Q̃_{0.75}(t) - Q̃_{0.25}(t)` from jackknifed quartile curves.
pub fn iqr_curve(
    series: &UnitTimeSeries,
    b25: f64,
    b75: f64,
    bbar: f64,
    kernel: &Kernel,
    grid: &EvaluationGrid,
) -> Result<IqrCurve> {
    let lower = jackknife_curve(series, 0.25, b25, bbar, kernel, grid)?;
    let upper = jackknife_curve(series, 0.75, b75, bbar, kernel, grid)?;
    iqr_from_components(lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: Vec<f64>) -> UnitTimeSeries {
        UnitTimeSeries::new(v).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(EvaluationGrid::new(vec![]).is_err());
        assert!(EvaluationGrid::new(vec![0.2, 0.2]).is_err());
        assert!(EvaluationGrid::new(vec![0.2, 1.1]).is_err());
        assert!(EvaluationGrid::unit(7).is_unit_grid(7));
        assert_eq!(EvaluationGrid::uniform(5).points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(EvaluationGrid::default_for(6000).len(), 1000);
        assert_eq!(EvaluationGrid::default_for(300).len(), 300);
    }

    #[test]
    fn constant_series_raw_curve() {
        let s = series(vec![7.0; 120]);
        let k = Kernel::epanechnikov();
        let c = estimate_raw_curve(&s, 0.3, 0.1, &k, &EvaluationGrid::unit(120)).unwrap();
        assert!(c.values.iter().all(|v| *v == Some(7.0)));
        assert!(c.slopes.unwrap().iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn linear_trend_reproduced() {
        let n = 200;
        let s = series((1..=n).map(|i| i as f64 / n as f64).collect());
        let k = Kernel::epanechnikov();
        let grid = EvaluationGrid::new(vec![0.3, 0.5, 0.77]).unwrap();
        let c = estimate_raw_curve(&s, 0.5, 0.1, &k, &grid).unwrap();
        for (t, (v, sl)) in grid.points().iter().zip(c.values.iter().zip(c.slopes.unwrap())) {
            assert!((v.unwrap() - t).abs() < 1e-9);
            assert!((sl.unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bandwidth_range_enforced() {
        let s = series(vec![1.0; 50]);
        let k = Kernel::epanechnikov();
        let g = EvaluationGrid::unit(50);
        assert!(estimate_raw_curve(&s, 0.5, 0.0, &k, &g).is_err());
        assert!(estimate_raw_curve(&s, 0.5, 0.6, &k, &g).is_err());
        assert!(jackknife_curve(&s, 0.5, 0.4, 0.1, &k, &g).is_err());
    }

    #[test]
    fn tiny_bandwidth_flags_missing_points() {
        let s = series((0..100).map(|i| (i % 7) as f64).collect());
        let k = Kernel::epanechnikov();
        let c = estimate_raw_curve(&s, 0.5, 0.004, &k, &EvaluationGrid::unit(100)).unwrap();
        assert!(c.values.iter().all(Option::is_none));
        assert!(c.flags.iter().all(|f| f.contains(PointFlags::INSUFFICIENT_SUPPORT)));
    }

    #[test]
    fn smoothing_rejects_non_unit_raw() {
        let s = series(vec![1.0; 30]);
        let k = Kernel::epanechnikov();
        let raw = estimate_raw_curve(&s, 0.5, 0.2, &k, &EvaluationGrid::uniform(10)).unwrap();
        assert!(second_stage_smooth(&raw, 0.1, &k).is_err());
    }

    #[test]
    fn degenerate_window_is_missing() {
        let n = 50;
        let s = series((0..n).map(|i| i as f64).collect());
        let k = Kernel::epanechnikov();
        let raw = estimate_raw_curve(&s, 0.5, 0.2, &k, &EvaluationGrid::unit(n)).unwrap();
        let sm = second_stage_smooth(&raw, 0.01, &k).unwrap();
        assert!(sm.values.iter().all(Option::is_none));
        assert!(sm.flags.iter().all(|f| f.contains(PointFlags::DEGENERATE_WINDOW)));
    }

    #[test]
    fn iqr_constant_series_is_zero() {
        let s = series(vec![3.25; 80]);
        let k = Kernel::epanechnikov();
        let iqr = iqr_curve(&s, 0.2, 0.2, 0.1, &k, &EvaluationGrid::unit(80)).unwrap();
        assert!(iqr.values.iter().all(|v| *v == Some(0.0)));
        assert!(iqr.crossing.iter().all(|c| !c));
    }

    #[test]
    fn local_bandwidth_interpolates() {
        let c = BandwidthCurve { grid: EvaluationGrid::new(vec![0.0, 0.5, 1.0]).unwrap(), values: vec![0.1, 0.2, 0.4] };
        assert!((c.at(0.25) - 0.15).abs() < 1e-15);
        assert_eq!(c.at(1.0), 0.4);
        let b = Bandwidth::Local(Arc::new(c));
        assert!((b.scaled(2.0).at(0.75) - 0.6).abs() < 1e-15);
        assert_eq!(b.representative(), 0.2);
    }
}
