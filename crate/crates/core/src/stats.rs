//! Small sample statistics.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{floor, sqrt};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    sqrt(variance(xs))
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n - 1)·q`). NaNs sort last.
pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptyPath);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument("quantile level must be in [0, 1]"));
    }
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = floor(h) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(xs: &[f64]) -> Result<f64> {
    quantile(xs, 0.5)
}

/// Two-sided Kolmogorov-Smirnov distance between the empirical CDF of
/// `samples` and `cdf`.
pub fn ks_statistic<F: FnMut(f64) -> Result<f64>>(samples: &[f64], mut cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyPath);
    }
    let mut v: Vec<f64> = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x)?;
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.63 / sqrt(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs).unwrap(), 2.5);
        assert_eq!(quantile(&xs, 0.9).unwrap(), 3.7);
        assert_eq!(quantile(&xs, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&xs, 1.0).unwrap(), 4.0);
        assert_eq!(median(&[]), Err(Error::EmptyPath));
    }

    #[test]
    fn moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ks_of_uniform_grid() {
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&xs, |x| Ok(x)).unwrap();
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.5).collect();
        let d = ks_statistic(&shifted, |x| Ok(x.min(1.0))).unwrap();
        assert!(d > 0.49);
    }
}
