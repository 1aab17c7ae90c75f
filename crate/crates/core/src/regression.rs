//! Ordinary least squares with a two-sided t-test on the slope.

use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value for `slope != 0`.
    pub p_value: f64,
}

/// Fits `y = a + b x`. Returns `None` for fewer than 3 points or when `x`
/// has no spread.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<SlopeFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mean_x).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    if y.iter().all(|&v| v == y[0]) {
        return Some(SlopeFit {
            slope: 0.0,
            intercept: y[0],
            p_value: 1.0,
        });
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mean_x) * (b - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let df = nf - 2.0;
    let se = (sse / df / sxx).sqrt();
    let p_value = if slope == 0.0 {
        1.0
    } else if se == 0.0 || !se.is_finite() {
        0.0
    } else {
        let t = (slope / se).abs();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
    };
    Some(SlopeFit {
        slope,
        intercept,
        p_value,
    })
}
