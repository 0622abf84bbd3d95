mod common;

use common::{gaussian, series};
use nsquant::curvefit::estimate_raw_curve;
use nsquant::inference::{
    block_variance, block_variance_streaming, density_at_quantile, half_width, long_run_variance, pointwise_band,
};
use nsquant::{EvaluationGrid, Kernel};
use proptest::prelude::*;

#[test]
fn constant_shift_leaves_long_run_variance_unchanged() {
    let k = Kernel::epanechnikov();
    let x = gaussian(400, 12);
    let n = x.len();
    let unit = EvaluationGrid::unit(n);
    let s = series(x.clone());
    let shifted = series(x.iter().map(|v| v + 7.25).collect());
    let r1 = estimate_raw_curve(&s, 0.8, 0.15, &k, &unit).unwrap();
    let r2 = estimate_raw_curve(&shifted, 0.8, 0.15, &k, &unit).unwrap();
    for t in [0.2, 0.5, 0.8] {
        let a = long_run_variance(&s, 0.8, &r1, t, 0.15, 7).unwrap();
        let b = long_run_variance(&shifted, 0.8, &r2, t, 0.15, 7).unwrap();
        assert!(a >= 0.0);
        assert_eq!(a, b);
    }
}

#[test]
fn density_rescales_with_the_data() {
    let k = Kernel::epanechnikov();
    let x = gaussian(500, 2);
    let lam = 3.5;
    let s = series(x.clone());
    let scaled = series(x.iter().map(|v| lam * v).collect());
    let f1 = density_at_quantile(&s, 0.5, 0.2, 0.1, 0.3, &k).unwrap().value;
    let f2 = density_at_quantile(&scaled, 0.5, 0.2, lam * 0.1, lam * 0.3, &k).unwrap().value;
    assert!((f2 - f1 / lam).abs() < 1e-14);
}

#[test]
fn half_width_shrinks_with_n_b() {
    let mut last = f64::INFINITY;
    for (n, b) in [(100, 0.1), (200, 0.1), (200, 0.2), (1000, 0.25)] {
        let h = half_width(1.96, 0.6, 0.25, 0.4, n, b);
        assert!(h < last);
        last = h;
    }
    let ratio = half_width(1.96, 0.6, 0.25, 0.4, 400, 0.1) / half_width(1.96, 0.6, 0.25, 0.4, 100, 0.1);
    assert!((ratio - 0.5).abs() < 1e-15);
}

#[test]
fn band_nominal_level_widens_band() {
    let k = Kernel::epanechnikov();
    let s = series(gaussian(600, 4));
    let grid = EvaluationGrid::new(vec![0.4, 0.5, 0.6]).unwrap();
    let narrow = pointwise_band(&s, 0.5, 0.2, 0.1, 0.2, &k, &grid).unwrap();
    let wide = pointwise_band(&s, 0.5, 0.2, 0.1, 0.01, &k, &grid).unwrap();
    for j in 0..3 {
        assert!(wide.half_width(j).unwrap() > narrow.half_width(j).unwrap());
        assert_eq!(wide.center.values[j], narrow.center.values[j]);
    }
}

proptest! {
    #[test]
    fn block_statistics_agree(z in prop::collection::vec(-1.0f64..1.0, 10..300), m in 2usize..9) {
        prop_assume!(z.len() > m);
        let a = block_variance(&z, m).unwrap();
        let b = block_variance_streaming(&z, m).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
    }
}
