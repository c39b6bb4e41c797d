//! Small statistics helpers shared by the Monte-Carlo checks and the harness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> Interval {
    if trials == 0 {
        return Interval {
            lower: 0.0,
            upper: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Interval {
        lower: if successes == 0 { 0.0 } else { (centre - half).max(0.0) },
        upper: if successes == trials { 1.0 } else { (centre + half).min(1.0) },
    }
}

/// Ordinary least squares line `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination. Defined as 1 when `y` has zero variance,
    /// since the fitted line then reproduces the data exactly.
    pub r_squared: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

/// Least-squares fit over `(x, y)` pairs. Needs at least [`MIN_FIT_POINTS`]
/// distinct `x` values.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit {
            found: xs.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        points: points.len(),
    })
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at the 1% level, `1.628/√n`.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_brackets_the_point_estimate() {
        let ci = wilson_interval(200, 300);
        assert!(ci.contains(200.0 / 300.0));
        assert!(ci.upper - ci.lower < 0.12);
        let all = wilson_interval(300, 300);
        assert_eq!(all.upper, 1.0);
        assert!(all.lower > 0.98);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let pts: Vec<_> = [1.0, 2.0, 3.0, 5.0].iter().map(|&x| (x, 3.0 * x - 1.0)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_too_few_distinct_values() {
        let pts = [(1.0, 1.0), (2.0, 2.0), (2.0, 2.5), (1.0, 0.5)];
        assert!(matches!(
            linear_fit(&pts),
            Err(Error::DegenerateFit { found: 2, .. })
        ));
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts: Vec<_> = [6.0, 50.0, 200.0, 500.0].iter().map(|&x| (x, 879.0)).collect();
        let fit = linear_fit(&pts).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }
}
