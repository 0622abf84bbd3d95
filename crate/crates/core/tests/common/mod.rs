#![allow(dead_code)]

use nsquant::procsim::{rng_from_seed, Innovation};
use nsquant::UnitTimeSeries;

pub fn rho(alpha: f64, x: f64) -> f64 {
    if x >= 0.0 {
        alpha * x
    } else {
        (alpha - 1.0) * x
    }
}

/// Weighted check loss of the line `b0 + b1 d` over explicit triples.
pub fn loss(points: &[(f64, f64, f64)], alpha: f64, b0: f64, b1: f64) -> f64 {
    points.iter().map(|&(d, x, w)| w * rho(alpha, x - b0 - b1 * d)).sum()
}

/// Kernel-weighted `(d, x, w)` triples around `t`, built without the
/// library's design code.
pub fn triples(x: &[f64], t: f64, b: f64) -> Vec<(f64, f64, f64)> {
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            let d = (i + 1) as f64 / n - t;
            let u = d / b;
            let w = if u.abs() < 1.0 { 0.75 * (1.0 - u * u) } else { 0.0 };
            (w > 1e-14).then_some((d, v, w))
        })
        .collect()
}

/// Minimum loss over every line through two observations and every flat
/// line through one. Exhaustive, so it bounds any solver from below.
pub fn brute_force_min(points: &[(f64, f64, f64)], alpha: f64) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut consider = |b0: f64, b1: f64| {
        let l = loss(points, alpha, b0, b1);
        if l < best.0 {
            best = (l, b0, b1);
        }
    };
    for (i, &(di, xi, _)) in points.iter().enumerate() {
        consider(xi, 0.0);
        for &(dj, xj, _) in &points[i + 1..] {
            if dj != di {
                let b1 = (xj - xi) / (dj - di);
                consider(xi - b1 * di, b1);
            }
        }
    }
    best
}

pub fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    Innovation::default().draw(n, &mut rng_from_seed(seed))
}

pub fn series(v: Vec<f64>) -> UnitTimeSeries {
    UnitTimeSeries::new(v).unwrap()
}
