mod common;

use std::f64::consts::SQRT_2;

use common::{gaussian, series};
use nsquant::curvefit::{
    estimate_raw_curve, jackknife_combine, jackknife_parts, second_stage_smooth, second_stage_smooth_on,
};
use nsquant::{Bandwidth, EvaluationGrid, Kernel, QuantileCurve, Stage};
use proptest::prelude::*;

fn raw_from(values: Vec<f64>) -> QuantileCurve {
    let n = values.len();
    QuantileCurve {
        alpha: 0.5,
        grid: EvaluationGrid::unit(n),
        values: values.into_iter().map(Some).collect(),
        slopes: None,
        bandwidth: 0.1,
        second_bandwidth: None,
        stage: Stage::Raw,
        flags: vec![Default::default(); n],
    }
}

/// Local linear smoother written as a weighted least-squares fit of the raw
/// values on `s - t` via centred moments.
fn wls_intercept(raw: &[f64], t: f64, bbar: f64) -> Option<f64> {
    let n = raw.len() as f64;
    let mut sw = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut rows = Vec::new();
    for (i, &y) in raw.iter().enumerate() {
        let x = (i + 1) as f64 / n - t;
        let u = x / bbar;
        if u.abs() < 1.0 {
            let w = 0.75 * (1.0 - u * u);
            sw += w;
            sx += w * x;
            sy += w * y;
            rows.push((x, y, w));
        }
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y, w) in rows {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    (sxx > 1e-14).then(|| my - (sxy / sxx) * mx)
}

#[test]
fn smoothing_matches_weighted_least_squares() {
    let k = Kernel::epanechnikov();
    let raw: Vec<f64> = gaussian(150, 3).iter().enumerate().map(|(i, e)| (i as f64 / 20.0).sin() + 0.3 * e).collect();
    let curve = raw_from(raw.clone());
    for bbar in [0.02, 0.05, 0.2] {
        let sm = second_stage_smooth(&curve, bbar, &k).unwrap();
        for (j, &t) in sm.grid.points().iter().enumerate() {
            match (sm.values[j], wls_intercept(&raw, t, bbar)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9, "t={t}: {a} vs {b}"),
                (None, None) => {}
                (a, b) => panic!("t={t}: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn linear_raw_curve_is_reproduced() {
    let k = Kernel::epanechnikov();
    let n = 400;
    let raw: Vec<f64> = (1..=n).map(|i| 2.0 - 3.0 * i as f64 / n as f64).collect();
    let sm = second_stage_smooth(&raw_from(raw), 0.05, &k).unwrap();
    for (j, &t) in sm.grid.points().iter().enumerate() {
        if (0.05..=0.95).contains(&t) {
            assert!((sm.values[j].unwrap() - (2.0 - 3.0 * t)).abs() < 1e-9);
        }
    }
}

#[test]
fn noiseless_line_gives_exact_raw_fits() {
    let k = Kernel::epanechnikov();
    let n = 300;
    let s = series((1..=n).map(|i| 1.5 + 0.7 * i as f64 / n as f64).collect());
    let raw = estimate_raw_curve(&s, 0.3, 0.1, &k, &EvaluationGrid::unit(n)).unwrap();
    for (j, &t) in raw.grid.points().iter().enumerate() {
        assert!((raw.values[j].unwrap() - (1.5 + 0.7 * t)).abs() < 1e-12);
    }
}

#[test]
fn jackknife_parts_are_consistent() {
    let k = Kernel::epanechnikov();
    let s = series(gaussian(300, 8));
    let grid = EvaluationGrid::uniform(31);
    let parts = jackknife_parts(&s, 0.7, &Bandwidth::Static(0.12), 0.05, &k, &grid).unwrap();
    let wide = estimate_raw_curve(&s, 0.7, 0.12 * SQRT_2, &k, &EvaluationGrid::unit(300)).unwrap();
    let narrow = estimate_raw_curve(&s, 0.7, 0.12, &k, &EvaluationGrid::unit(300)).unwrap();
    let a = second_stage_smooth_on(&narrow, 0.05, &k, &grid).unwrap();
    let c = second_stage_smooth_on(&wide, 0.05, &k, &grid).unwrap();
    for j in 0..grid.len() {
        let want = 2.0 * a.values[j].unwrap() - c.values[j].unwrap();
        assert!((parts.jackknifed.values[j].unwrap() - want).abs() < 1e-12);
    }
    assert_eq!(jackknife_combine(&parts.smooth, &parts.smooth_wide).unwrap().values, parts.jackknifed.values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smoothing_is_linear(a in prop::collection::vec(-3.0f64..3.0, 60), b in prop::collection::vec(-3.0f64..3.0, 60), bbar in 0.03f64..0.3) {
        let k = Kernel::epanechnikov();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let sa = second_stage_smooth(&raw_from(a), bbar, &k).unwrap();
        let sb = second_stage_smooth(&raw_from(b), bbar, &k).unwrap();
        let ss = second_stage_smooth(&raw_from(sum), bbar, &k).unwrap();
        for j in 0..60 {
            if let (Some(x), Some(y), Some(z)) = (sa.values[j], sb.values[j], ss.values[j]) {
                prop_assert!((x + y - z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn every_stage_is_equivariant(seed in 0u64..1000, c in -20.0f64..20.0, lam in 0.1f64..10.0, alpha in 0.1f64..0.9) {
        let k = Kernel::epanechnikov();
        let x = gaussian(120, seed);
        let grid = EvaluationGrid::uniform(25);
        let bw = Bandwidth::Static(0.2);
        let base = jackknife_parts(&series(x.clone()), alpha, &bw, 0.08, &k, &grid).unwrap();
        let moved = jackknife_parts(&series(x.iter().map(|v| lam * v + c).collect()), alpha, &bw, 0.08, &k, &grid).unwrap();
        let pairs = [
            (&base.raw, &moved.raw),
            (&base.raw_wide, &moved.raw_wide),
            (&base.smooth, &moved.smooth),
            (&base.smooth_wide, &moved.smooth_wide),
            (&base.jackknifed, &moved.jackknifed),
        ];
        for (u, v) in pairs {
            for (p, q) in u.values.iter().zip(&v.values) {
                match (p, q) {
                    (Some(p), Some(q)) => prop_assert!((lam * p + c - q).abs() < 1e-9 * (1.0 + c.abs() + lam * p.abs())),
                    (None, None) => {}
                    _ => prop_assert!(false, "missing pattern changed"),
                }
            }
        }
    }
}
