//! Seedable simulators for locally stationary processes `X_i = G(i/n, Υ_i)`
//! driven by one shared i.i.d. innovation stream.
//!
//! Two families are provided: time-varying linear filters
//! `G(t, Υ_i) = Σ_j a_j(t) ε_{i-j}` ([`LsLinearSpec`]) and time-varying
//! threshold autoregressions
//! `ζ_i(t) = a(t) ζ_{i-1}(t)⁺ + b(t) (-ζ_{i-1}(t))⁺ + ε_i` ([`TvtarSpec`]).

mod experiments;

pub use experiments::*;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::normal;
use crate::series::UnitTimeSeries;

/// Number of uniform grid points used by the parameter validators.
pub const VALIDATION_GRID: usize = 1000;
pub const DEFAULT_BURN_IN: usize = 200;
pub const MIN_BURN_IN: usize = 50;
pub const MIN_ORACLE_DRAWS: usize = 10_000;

/// A coefficient function on `[0, 1]`.
///
/// `poly` evaluates `Σ_k p_k t^k`; `trig` evaluates
/// `p_0 + Σ_{k>=1} (p_{2k-1} cos(kπt) + p_{2k} sin(kπt))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum CoefficientFn {
    Poly(Vec<f64>),
    Trig(Vec<f64>),
}

impl CoefficientFn {
    pub fn constant(c: f64) -> Self {
        CoefficientFn::Poly(vec![c])
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Poly(p) => p.iter().rev().fold(0.0, |acc, c| acc * t + c),
            CoefficientFn::Trig(p) => {
                let mut acc = p.first().copied().unwrap_or(0.0);
                for (k, pair) in p[1.min(p.len())..].chunks(2).enumerate() {
                    let w = (k + 1) as f64 * std::f64::consts::PI * t;
                    acc += pair[0] * w.cos() + pair.get(1).map_or(0.0, |s| s * w.sin());
                }
                acc
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Innovation {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64 },
}

impl Default for Innovation {
    fn default() -> Self {
        Innovation::Normal { mean: 0.0, sd: 1.0 }
    }
}

impl Innovation {
    fn validate(&self) -> Result<()> {
        match *self {
            Innovation::Normal { mean, sd } if mean.is_finite() && sd > 0.0 && sd.is_finite() => Ok(()),
            Innovation::StudentT { df } if df > 0.0 && df.is_finite() => Ok(()),
            other => Err(Error::InvalidProcess(format!("bad innovation parameters {other:?}"))),
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            Innovation::Normal { mean, sd } => Sampler::Normal(Normal::new(mean, sd).expect("validated")),
            Innovation::StudentT { df } => Sampler::StudentT(StudentT::new(df).expect("validated")),
        }
    }

    /// `count` innovations from `rng`.
    pub fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.sample(rng)).collect()
    }
}

enum Sampler {
    Normal(Normal<f64>),
    StudentT(StudentT<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::StudentT(d) => d.sample(rng),
        }
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `r` under base seed `base`; independent of the order
/// in which replications are run.
pub fn derive_seed(base: u64, r: u64) -> u64 {
    splitmix64(base ^ splitmix64(r.wrapping_add(1)))
}

fn validation_points() -> impl Iterator<Item = f64> {
    (0..VALIDATION_GRID).map(|k| k as f64 / (VALIDATION_GRID - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsLinearSpec {
    /// `a_0, ..., a_J`.
    pub coefficients: Vec<CoefficientFn>,
    #[serde(default)]
    pub innovation: Innovation,
}

impl LsLinearSpec {
    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        let Some(a0) = self.coefficients.first() else {
            return Err(Error::InvalidProcess("linear process needs at least a_0".into()));
        };
        let mut min_a0 = f64::INFINITY;
        for t in validation_points() {
            for (j, a) in self.coefficients.iter().enumerate() {
                if !a.evaluate(t).is_finite() {
                    return Err(Error::InvalidProcess(format!("a_{j}({t}) is not finite")));
                }
            }
            min_a0 = min_a0.min(a0.evaluate(t).abs());
        }
        if min_a0 <= 0.0 {
            return Err(Error::InvalidProcess("min_t |a_0(t)| must be positive".into()));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// `sqrt(Σ_j a_j(t)²)`.
    pub fn scale_at(&self, t: f64) -> f64 {
        self.coefficients.iter().map(|a| a.evaluate(t).powi(2)).sum::<f64>().sqrt()
    }

    fn frozen(&self, t: f64, eps: &[f64]) -> f64 {
        // eps[j] plays ε_{i-j}
        self.coefficients.iter().zip(eps).map(|(a, e)| a.evaluate(t) * e).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvtarSpec {
    pub a: CoefficientFn,
    pub b: CoefficientFn,
    #[serde(default)]
    pub innovation: Innovation,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl TvtarSpec {
    /// Contraction constant `χ = sup_t max(|a(t)|, |b(t)|)` over the
    /// validation grid: the Lipschitz constant of `x ↦ a x⁺ + b (-x)⁺`.
    pub fn contraction(&self) -> f64 {
        validation_points()
            .map(|t| self.a.evaluate(t).abs().max(self.b.evaluate(t).abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sup_t (|a(t)| + |b(t)|)`, a cruder sufficient bound on `χ`.
    pub fn coefficient_sum_bound(&self) -> f64 {
        validation_points()
            .map(|t| self.a.evaluate(t).abs() + self.b.evaluate(t).abs())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.innovation.validate()?;
        let chi = self.contraction();
        if !(chi < 1.0) {
            return Err(Error::InvalidProcess(format!(
                "contraction condition violated: chi = sup max(|a|,|b|) = {chi} >= 1 (sup|a|+|b| = {})",
                self.coefficient_sum_bound()
            )));
        }
        if self.burn_in < MIN_BURN_IN {
            return Err(Error::InvalidProcess(format!("burn-in {} < {MIN_BURN_IN}", self.burn_in)));
        }
        Ok(())
    }

    /// `M` frozen-coefficient steps from zero over `eps` (oldest first).
    fn iterate(&self, t: f64, eps: &[f64]) -> f64 {
        let (a, b) = (self.a.evaluate(t), self.b.evaluate(t));
        eps.iter().fold(0.0, |z, e| a * z.max(0.0) + b * (-z).max(0.0) + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProcessSpec {
    Linear(LsLinearSpec),
    Tvtar(TvtarSpec),
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessSpec::Linear(s) => s.validate(),
            ProcessSpec::Tvtar(s) => s.validate(),
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<UnitTimeSeries> {
        match self {
            ProcessSpec::Linear(s) => gen_ls_linear(s, n, seed),
            ProcessSpec::Tvtar(s) => gen_tvtar(s, n, seed),
        }
    }

    /// One draw of `ζ(t)` from fresh innovations.
    fn frozen_draw(&self, t: f64, rng: &mut ChaCha8Rng, buf: &mut Vec<f64>) -> f64 {
        match self {
            ProcessSpec::Linear(s) => {
                *buf = s.innovation.draw(s.coefficients.len(), rng);
                s.frozen(t, buf)
            }
            ProcessSpec::Tvtar(s) => {
                *buf = s.innovation.draw(s.burn_in, rng);
                s.iterate(t, buf)
            }
        }
    }

    /// `Q_α(t)`: closed form for Gaussian linear processes, Monte Carlo
    /// (`draws` frozen-time realizations) otherwise.
    pub fn oracle_quantile(&self, t: f64, alpha: f64, draws: usize, seed: u64) -> Result<f64> {
        match self {
            ProcessSpec::Linear(s) if matches!(s.innovation, Innovation::Normal { .. }) => {
                oracle_quantile_linear_gaussian(s, t, alpha)
            }
            _ => Ok(oracle_quantile_mc(self, t, alpha, draws, seed)?.value),
        }
    }
}

/// Simulates `X_i = Σ_{j=0}^J a_j(i/n) ε_{i-j}`, drawing `ε_{1-J}, ..., ε_n`
/// once in that order.
pub fn gen_ls_linear(spec: &LsLinearSpec, n: usize, seed: u64) -> Result<UnitTimeSeries> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let j = spec.order();
    let mut rng = rng_from_seed(seed);
    let eps = spec.innovation.draw(n + j, &mut rng);
    let nf = n as f64;
    let values = (1..=n)
        .map(|i| {
            let t = i as f64 / nf;
            // ε_{i-k} sits at eps[i - 1 + j - k]
            spec.coefficients.iter().enumerate().map(|(k, a)| a.evaluate(t) * eps[i - 1 + j - k]).sum()
        })
        .collect();
    UnitTimeSeries::new(values)
}

/// Simulates `X_i = G(i/n, Υ_i)` for a TVTAR model: each `X_i` is `M`
/// frozen-coefficient steps from zero over `ε_{i-M+1}, ..., ε_i`, with one
/// stream `ε_{2-M}, ..., ε_n` shared by all `i`.
pub fn gen_tvtar(spec: &TvtarSpec, n: usize, seed: u64) -> Result<UnitTimeSeries> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("series length must be positive".into()));
    }
    let m = spec.burn_in;
    let mut rng = rng_from_seed(seed);
    let eps = spec.innovation.draw(n + m - 1, &mut rng);
    let nf = n as f64;
    // ε_k sits at eps[k + M - 2]; the window for X_i is k = i-M+1..=i
    let values = (1..=n).map(|i| spec.iterate(i as f64 / nf, &eps[i - 1..i - 1 + m])).collect();
    UnitTimeSeries::new(values)
}

/// Exact `Q_α(t)` of a Gaussian linear process: `μ Σ a_j(t) + σ s(t) Φ⁻¹(α)`.
pub fn oracle_quantile_linear_gaussian(spec: &LsLinearSpec, t: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let Innovation::Normal { mean, sd } = spec.innovation else {
        return Err(Error::Unsupported("closed-form oracle needs normal innovations".into()));
    };
    let mean_sum: f64 = spec.coefficients.iter().map(|a| a.evaluate(t)).sum();
    Ok(mean * mean_sum + sd * spec.scale_at(t) * normal::quantile(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McQuantile {
    pub value: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Empirical `α`-quantile of `draws` independent realizations of `ζ(t)`.
/// The standard error comes from the distribution-free order-statistic
/// interval `x_(N(α ± z sqrt(α(1-α)/N)))` divided by `2z`.
pub fn oracle_quantile_mc(spec: &ProcessSpec, t: f64, alpha: f64, draws: usize, seed: u64) -> Result<McQuantile> {
    spec.validate()?;
    check_alpha(alpha)?;
    if draws < MIN_ORACLE_DRAWS {
        return Err(Error::InvalidArgument(format!("{draws} draws < {MIN_ORACLE_DRAWS}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut buf = Vec::new();
    let mut sample: Vec<f64> = (0..draws).map(|_| spec.frozen_draw(t, &mut rng, &mut buf)).collect();
    sample.sort_by(f64::total_cmp);
    let nf = draws as f64;
    let order = |p: f64| -> f64 {
        let k = ((p * nf).ceil() as usize).clamp(1, draws);
        sample[k - 1]
    };
    let z = normal::two_sided_critical(0.05);
    let delta = z * (alpha * (1.0 - alpha) / nf).sqrt();
    let spread = order((alpha + delta).min(1.0)) - order((alpha - delta).max(0.0));
    Ok(McQuantile { value: order(alpha), std_error: spread / (2.0 * z), draws })
}
