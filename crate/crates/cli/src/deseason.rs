use anyhow::{bail, Result};

fn class_means(values: &[f64], period: usize) -> Vec<f64> {
    let mut sum = vec![0.0; period];
    let mut count = vec![0usize; period];
    for (i, v) in values.iter().enumerate() {
        sum[i % period] += v;
        count[i % period] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Removes the mean of each residue class `i mod period`. A second pass
/// clears the rounding left by the first.
pub fn deseasonalize(values: &[f64], period: usize) -> Result<Vec<f64>> {
    if period < 2 {
        bail!("period must be at least 2, got {period}");
    }
    if values.len() < 2 * period {
        bail!("period {period} needs at least {} observations, got {}", 2 * period, values.len());
    }
    let mut out = values.to_vec();
    for _ in 0..2 {
        let means = class_means(&out, period);
        for (i, v) in out.iter_mut().enumerate() {
            *v -= means[i % period];
        }
    }
    Ok(out)
}

/// Largest absolute residue-class mean.
pub fn max_class_mean(values: &[f64], period: usize) -> f64 {
    class_means(values, period).iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_vanishes() {
        let x: Vec<f64> = (0..120).map(|i| (2.0 * std::f64::consts::PI * i as f64 / 12.0).sin() * 3.0 + 0.7).collect();
        let d = deseasonalize(&x, 12).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn period_checks() {
        assert!(deseasonalize(&[1.0; 10], 1).is_err());
        assert!(deseasonalize(&[1.0; 10], 6).is_err());
        assert!(deseasonalize(&[1.0; 10], 5).is_ok());
    }
}
