//! Kernel-weighted check-loss minimization for one time point.
//!
//! The local linear objective `Σ w_i ρ_α(x_i - β0 - β1 d_i)` is convex and
//! piecewise linear in `(β0, β1)`, so a minimizer sits on a line through two
//! observations. [`solve_descent`] walks between such lines: it rotates the
//! fitted line about one observation it passes through, which is a weighted
//! quantile problem in the slope, and then pivots on the observation that
//! became active. It stops once no rotation about any observation on the
//! current line lowers the loss, which certifies a global minimum because every
//! edge of the loss surface at a vertex is such a rotation.
//! [`solve_enumeration`] is the cubic-time exhaustive reference.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::kernel::Kernel;
use crate::series::UnitTimeSeries;

/// Kernel weights at or below this value are dropped from the design.
pub const WEIGHT_FLOOR: f64 = 1e-14;

/// `ρ_α(x) = α x⁺ + (1 - α)(-x)⁺`.
#[inline]
pub fn check_loss(alpha: f64, x: f64) -> f64 {
    if x >= 0.0 {
        alpha * x
    } else {
        (alpha - 1.0) * x
    }
}

/// Left derivative of the check function, `α - 1{x <= 0}`.
#[inline]
pub fn psi(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        alpha - 1.0
    } else {
        alpha
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LocalFitProblem<'a> {
    pub series: &'a UnitTimeSeries,
    pub t: f64,
    pub alpha: f64,
    pub bandwidth: f64,
    pub kernel: &'a Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub qhat: f64,
    pub slope: f64,
    pub loss: f64,
    pub support_count: usize,
    /// Set when every weighted observation shares one time and the fit fell
    /// back to a local constant.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    #[default]
    Descent,
    Enumeration,
}

/// Positively weighted observations of one local problem, with time offsets
/// `d_i = i/n - t` and the series index each came from.
#[derive(Debug, Clone, Default)]
pub struct LocalDesign {
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub indices: Vec<usize>,
}

impl LocalDesign {
    pub fn new(offsets: Vec<f64>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if offsets.len() != values.len() || values.len() != weights.len() {
            return Err(Error::InvalidArgument("design arrays differ in length".into()));
        }
        let mut design = LocalDesign::default();
        for (i, ((&d, &x), &w)) in offsets.iter().zip(&values).zip(&weights).enumerate() {
            if !(d.is_finite() && x.is_finite() && w.is_finite()) || w < 0.0 {
                return Err(Error::InvalidArgument(format!("bad design entry at {i}")));
            }
            if w > WEIGHT_FLOOR {
                design.push(d, x, w, i);
            }
        }
        Ok(design)
    }

    /// Builds the kernel-weighted design of `series` around `t` at bandwidth `b`.
    pub fn around(series: &UnitTimeSeries, t: f64, b: f64, kernel: &Kernel) -> Self {
        let reach = b * kernel.support_radius();
        let range = series.index_range(t - reach, t + reach);
        let mut design = LocalDesign {
            offsets: Vec::with_capacity(range.len()),
            values: Vec::with_capacity(range.len()),
            weights: Vec::with_capacity(range.len()),
            indices: Vec::with_capacity(range.len()),
        };
        let x = series.values();
        for idx in range {
            let d = series.time(idx) - t;
            let w = kernel.scaled(d, b);
            if w > WEIGHT_FLOOR {
                design.push(d, x[idx], w, idx);
            }
        }
        design
    }

    fn push(&mut self, d: f64, x: f64, w: f64, idx: usize) {
        self.offsets.push(d);
        self.values.push(x);
        self.weights.push(w);
        self.indices.push(idx);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn loss(&self, alpha: f64, b0: f64, b1: f64) -> f64 {
        let mut acc = 0.0;
        for ((&d, &x), &w) in self.offsets.iter().zip(&self.values).zip(&self.weights) {
            acc += w * check_loss(alpha, x - b0 - b1 * d);
        }
        acc
    }

    fn has_two_times(&self) -> bool {
        self.offsets.iter().any(|&d| d != self.offsets[0])
    }
}

/// Result of a local linear solve, with the two design positions the
/// optimal line passes through (usable as a warm start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolution {
    pub fit: QuantileFit,
    pub pivots: (usize, usize),
}

/// Lower weighted `alpha`-quantile: the smallest value `v` with
/// `Σ_{x_i <= v} w_i >= alpha Σ w_i`. Returns the position of the chosen value.
pub fn weighted_quantile_position(values: &[f64], weights: &[f64], alpha: f64) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let target = alpha * total;
    let slack = 1e-12 * total;
    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= target - slack {
            return Some(i);
        }
    }
    order.last().copied()
}

pub fn weighted_quantile(values: &[f64], weights: &[f64], alpha: f64) -> Option<f64> {
    weighted_quantile_position(values, weights, alpha).map(|i| values[i])
}

struct Rotation {
    slope: f64,
    through: usize,
}

/// Best slope for lines through design point `p`.
///
/// With `y_j = x_j - x_p` and `z_j = d_j - d_p`, the objective is
/// `Σ w_j |z_j| ρ_{a_j}(y_j/z_j - s)` with `a_j = α` for `z_j > 0` and
/// `1 - α` otherwise: a weighted quantile problem in `s`.
fn rotate_about(design: &LocalDesign, alpha: f64, p: usize, kinks: &mut Vec<(f64, f64, usize)>) -> Option<Rotation> {
    let (dp, xp) = (design.offsets[p], design.values[p]);
    kinks.clear();
    let mut threshold = 0.0;
    for j in 0..design.len() {
        let z = design.offsets[j] - dp;
        if z == 0.0 {
            continue;
        }
        let c = design.weights[j] * z.abs();
        threshold += c * if z > 0.0 { alpha } else { 1.0 - alpha };
        kinks.push(((design.values[j] - xp) / z, c, j));
    }
    if kinks.is_empty() {
        return None;
    }
    kinks.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
    let total: f64 = kinks.iter().map(|k| k.1).sum();
    let slack = 1e-12 * total;
    let mut cum = 0.0;
    for &(slope, c, j) in kinks.iter() {
        cum += c;
        if cum >= threshold - slack {
            return Some(Rotation { slope, through: j });
        }
    }
    let &(slope, _, j) = kinks.last()?;
    Some(Rotation { slope, through: j })
}

fn constant_fallback(design: &LocalDesign, alpha: f64) -> Result<LinearSolution> {
    let pos = weighted_quantile_position(&design.values, &design.weights, alpha)
        .ok_or(Error::InsufficientSupport { found: 0, needed: 1 })?;
    let qhat = design.values[pos];
    Ok(LinearSolution {
        fit: QuantileFit {
            qhat,
            slope: 0.0,
            loss: design.loss(alpha, qhat, 0.0),
            support_count: design.len(),
            degenerate: true,
        },
        pivots: (pos, pos),
    })
}

fn check_linear_design(design: &LocalDesign, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    if design.len() < 2 {
        return Err(Error::InsufficientSupport { found: design.len(), needed: 2 });
    }
    Ok(())
}

/// Exact local linear solve by pivoting descent, optionally warm-started at
/// a design position the optimal line is expected to pass near.
pub fn solve_descent(design: &LocalDesign, alpha: f64, warm: Option<usize>) -> Result<LinearSolution> {
    check_linear_design(design, alpha)?;
    if !design.has_two_times() {
        return constant_fallback(design, alpha);
    }
    let m = design.len();
    let scale = design.values.iter().fold(0.0f64, |a, x| a.max(x.abs())) + design.offsets.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let zero_tol = 1e-11 * (1.0 + scale);

    let mut kinks = Vec::with_capacity(m);
    let start = match warm {
        Some(p) if p < m => p,
        _ => weighted_quantile_position(&design.values, &design.weights, alpha).unwrap_or(0),
    };
    // The first rotation always lands on a vertex; accept it unconditionally.
    let rot = rotate_about(design, alpha, start, &mut kinks).expect("two distinct times present");
    let mut slope = rot.slope;
    let mut intercept = design.values[start] - slope * design.offsets[start];
    let mut loss = design.loss(alpha, intercept, slope);
    let mut pivots = (start, rot.through);
    let mut next = rot.through;

    let mut tried: Vec<usize> = vec![start];
    let max_moves = 4 * m + 64;
    for _ in 0..max_moves {
        let mut moved = false;
        let mut candidates = vec![next];
        for j in 0..m {
            if j != next && (design.values[j] - intercept - slope * design.offsets[j]).abs() <= zero_tol {
                candidates.push(j);
            }
        }
        for c in candidates {
            if tried.contains(&c) {
                continue;
            }
            tried.push(c);
            let Some(rot) = rotate_about(design, alpha, c, &mut kinks) else { continue };
            let b1 = rot.slope;
            let b0 = design.values[c] - b1 * design.offsets[c];
            let l = design.loss(alpha, b0, b1);
            if l < loss - 1e-13 * loss.max(1.0) {
                slope = b1;
                intercept = b0;
                loss = l;
                pivots = (c, rot.through);
                next = rot.through;
                tried.clear();
                tried.push(c);
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }

    Ok(LinearSolution {
        fit: QuantileFit { qhat: intercept, slope, loss, support_count: m, degenerate: false },
        pivots,
    })
}

/// Exhaustive reference solve: every line through two observations at
/// distinct times plus the flat line through each observation. Among minimal
/// candidates the lexicographically smallest `(β0, β1)` is returned.
pub fn solve_enumeration(design: &LocalDesign, alpha: f64) -> Result<LinearSolution> {
    check_linear_design(design, alpha)?;
    if !design.has_two_times() {
        return constant_fallback(design, alpha);
    }
    let m = design.len();
    let mut candidates: Vec<(f64, f64, f64, (usize, usize))> = Vec::with_capacity(m * (m + 1) / 2);
    for i in 0..m {
        let (di, xi) = (design.offsets[i], design.values[i]);
        candidates.push((design.loss(alpha, xi, 0.0), xi, 0.0, (i, i)));
        for j in (i + 1)..m {
            let dz = design.offsets[j] - di;
            if dz == 0.0 {
                continue;
            }
            let b1 = (design.values[j] - xi) / dz;
            let b0 = xi - b1 * di;
            candidates.push((design.loss(alpha, b0, b1), b0, b1, (i, j)));
        }
    }
    let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.max(1.0);
    let (loss, b0, b1, pivots) = candidates
        .into_iter()
        .filter(|c| c.0 <= best + tol)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))
        .expect("at least one candidate");
    Ok(LinearSolution {
        fit: QuantileFit { qhat: b0, slope: b1, loss, support_count: m, degenerate: false },
        pivots,
    })
}

fn check_problem(p: &LocalFitProblem<'_>) -> Result<()> {
    check_alpha(p.alpha)?;
    if !(p.bandwidth > 0.0 && p.bandwidth.is_finite()) {
        return Err(Error::InvalidBandwidth { value: p.bandwidth, range: "(0, inf)" });
    }
    if !(0.0..=1.0).contains(&p.t) {
        return Err(Error::InvalidArgument(format!("t = {} outside [0, 1]", p.t)));
    }
    Ok(())
}

/// Local linear quantile fit at `p.t`.
pub fn fit_local_linear(p: &LocalFitProblem<'_>) -> Result<QuantileFit> {
    fit_local_linear_with(p, LinearSolver::Descent)
}

pub fn fit_local_linear_with(p: &LocalFitProblem<'_>, solver: LinearSolver) -> Result<QuantileFit> {
    check_problem(p)?;
    let design = LocalDesign::around(p.series, p.t, p.bandwidth, p.kernel);
    let sol = match solver {
        LinearSolver::Descent => solve_descent(&design, p.alpha, None)?,
        LinearSolver::Enumeration => solve_enumeration(&design, p.alpha)?,
    };
    Ok(sol.fit)
}

/// Local constant fit: the lower weighted `alpha`-quantile of the
/// kernel-weighted observations.
pub fn fit_local_constant(p: &LocalFitProblem<'_>) -> Result<QuantileFit> {
    check_problem(p)?;
    let design = LocalDesign::around(p.series, p.t, p.bandwidth, p.kernel);
    if design.is_empty() {
        return Err(Error::InsufficientSupport { found: 0, needed: 1 });
    }
    let qhat = weighted_quantile(&design.values, &design.weights, p.alpha).expect("nonempty");
    Ok(QuantileFit {
        qhat,
        slope: 0.0,
        loss: design.loss(p.alpha, qhat, 0.0),
        support_count: design.len(),
        degenerate: false,
    })
}
