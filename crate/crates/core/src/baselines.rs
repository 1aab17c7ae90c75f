//! Reference change point detectors.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::regression::fit_slope;
use crate::windowing::TimeSeries;
use crate::SCHEMA_VERSION;

/// Relative margin by which the short average must undercut the long one
/// before a crossing counts; absorbs rounding in the running sums.
const CROSS_RELATIVE: f64 = 1e-12;

/// Default burn-in length for [`cusum`].
pub const CUSUM_BURN_IN: usize = 14;

fn trailing_means(values: &[f64], w: usize) -> Vec<f64> {
    values
        .windows(w)
        .map(|win| win.iter().sum::<f64>() / w as f64)
        .collect()
}

/// Days on which the short trailing average drops from at-or-above the long
/// one to below it.
pub fn ma_crossover(series: &TimeSeries, short_w: usize, long_w: usize) -> Result<Vec<NaiveDate>> {
    if short_w == 0 || short_w >= long_w {
        return Err(Error::Config(format!(
            "need 0 < short window < long window, got {short_w} and {long_w}"
        )));
    }
    if series.len() < long_w + 1 {
        return Err(Error::InsufficientData {
            required: long_w + 1,
            actual: series.len(),
        });
    }
    let values = series.values();
    let dates = series.dates();
    let short = trailing_means(&values, short_w);
    let long = trailing_means(&values, long_w);
    // align on the end index: long[j] and short[j + long_w - short_w] both end at j + long_w - 1
    let offset = long_w - short_w;
    let below: Vec<bool> = long
        .iter()
        .enumerate()
        .map(|(j, &l)| l - short[j + offset] > CROSS_RELATIVE * l.abs())
        .collect();
    Ok((1..below.len())
        .filter(|&j| below[j] && !below[j - 1])
        .map(|j| dates[j + long_w - 1])
        .collect())
}

/// Two-sided standardized CUSUM.
///
/// Values are standardized by the mean and sample standard deviation of the
/// first `burn_in` observations; the recursions start right after it. A
/// flag is raised when either sum exceeds `h`, after which both restart at
/// zero.
pub fn cusum(series: &TimeSeries, k_ref: f64, h: f64, burn_in: usize) -> Result<Vec<NaiveDate>> {
    if !(h > 0.0 && h.is_finite() && k_ref >= 0.0) {
        return Err(Error::Config(format!(
            "need h > 0 and k_ref >= 0, got h={h}, k_ref={k_ref}"
        )));
    }
    if burn_in < 2 {
        return Err(Error::Config(format!(
            "burn-in must be at least 2, got {burn_in}"
        )));
    }
    let required = burn_in.max(9) + 1;
    if series.len() < required {
        return Err(Error::InsufficientData {
            required,
            actual: series.len(),
        });
    }
    let values = series.values();
    let dates = series.dates();
    let prefix = &values[..burn_in];
    // shifted by the first value so a constant prefix has an exact mean
    let mean = prefix[0] + prefix.iter().map(|v| v - prefix[0]).sum::<f64>() / burn_in as f64;
    let var = prefix.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (burn_in - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        if values.iter().all(|&v| v == mean) {
            return Ok(Vec::new());
        }
        return Err(Error::Degenerate(
            "burn-in prefix has zero variance, so deviations cannot be standardized".into(),
        ));
    }
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    let mut flags = Vec::new();
    for i in burn_in..values.len() {
        let z = (values[i] - mean) / sd;
        hi = (hi + z - k_ref).max(0.0);
        lo = (lo - z - k_ref).max(0.0);
        if hi > h || lo > h {
            flags.push(dates[i]);
            hi = 0.0;
            lo = 0.0;
        }
    }
    Ok(flags)
}

/// Days on which the trailing `w`-observation OLS slope becomes
/// significantly negative after a window that was not.
pub fn rolling_regression(series: &TimeSeries, w: usize, alpha: f64) -> Result<Vec<NaiveDate>> {
    if w < 3 {
        return Err(Error::Config(format!("window must be >= 3, got {w}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if series.len() < w {
        return Ok(Vec::new());
    }
    let x: Vec<f64> = series.day_offsets().into_iter().map(|d| d as f64).collect();
    let y = series.values();
    let dates = series.dates();
    let mut prev = false;
    let mut flags = Vec::new();
    for end in w..=y.len() {
        let fit = fit_slope(&x[end - w..end], &y[end - w..end]);
        let declining = fit.is_some_and(|f| f.slope < 0.0 && f.p_value < alpha);
        if declining && !prev {
            flags.push(dates[end - 1]);
        }
        prev = declining;
    }
    Ok(flags)
}

/// A detector with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Signature(DetectorConfig),
    MaCrossover {
        short_window: usize,
        long_window: usize,
    },
    Cusum {
        k_ref: f64,
        h: f64,
        burn_in: usize,
    },
    RollingRegression {
        window: usize,
        alpha: f64,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Signature(_) => "signature",
            Method::MaCrossover { .. } => "ma_crossover",
            Method::Cusum { .. } => "cusum",
            Method::RollingRegression { .. } => "rolling_regression",
        }
    }

    /// Method by name with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "signature" => Ok(Method::Signature(DetectorConfig::default())),
            "ma_crossover" => Ok(Method::MaCrossover {
                short_window: 7,
                long_window: 28,
            }),
            "cusum" => Ok(Method::Cusum {
                k_ref: 0.5,
                h: 5.0,
                burn_in: CUSUM_BURN_IN,
            }),
            "rolling_regression" => Ok(Method::RollingRegression {
                window: 7,
                alpha: 0.05,
            }),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected signature, ma_crossover, cusum or rolling_regression)"
            ))),
        }
    }

    /// Numeric parameters in declaration order, for ordering grid cells.
    pub fn param_key(&self) -> Vec<f64> {
        match self {
            Method::Signature(c) => vec![
                c.window as f64,
                c.depth as f64,
                c.k,
                c.alpha,
                c.effective_merge_gap() as f64,
            ],
            Method::MaCrossover {
                short_window,
                long_window,
            } => vec![*short_window as f64, *long_window as f64],
            Method::Cusum { k_ref, h, burn_in } => vec![*k_ref, *h, *burn_in as f64],
            Method::RollingRegression { window, alpha } => vec![*window as f64, *alpha],
        }
    }

    pub fn run(&self, series: &TimeSeries) -> Result<Vec<NaiveDate>> {
        match self {
            Method::Signature(cfg) => Ok(detect(series, cfg)?.change_dates()),
            Method::MaCrossover {
                short_window,
                long_window,
            } => ma_crossover(series, *short_window, *long_window),
            Method::Cusum { k_ref, h, burn_in } => cusum(series, *k_ref, *h, *burn_in),
            Method::RollingRegression { window, alpha } => {
                rolling_regression(series, *window, *alpha)
            }
        }
    }

    pub fn report(&self, series: &TimeSeries) -> Result<MethodReport> {
        Ok(MethodReport {
            schema_version: SCHEMA_VERSION,
            method: self.clone(),
            change_points: self.run(series)?,
        })
    }
}

/// Change point dates tagged with the method that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub schema_version: u32,
    pub method: Method,
    pub change_points: Vec<NaiveDate>,
}
