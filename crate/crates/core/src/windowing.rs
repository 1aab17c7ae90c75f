//! Daily performance series, adjacent window pairs, and unit-square
//! normalization.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigcore::NormalizedPath;

/// One day of delivery data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub date: NaiveDate,
    pub impressions: u64,
    pub clicks: u64,
    pub ctr: f64,
    /// Total spend for the day, if known.
    pub cost: Option<f64>,
}

impl SeriesPoint {
    /// Builds a point with `ctr = clicks / impressions`.
    ///
    /// Zero-impression days have no CTR and are rejected here; ingestion
    /// drops them before they reach this constructor.
    pub fn new(date: NaiveDate, impressions: u64, clicks: u64, cost: Option<f64>) -> Result<Self> {
        if impressions == 0 {
            return Err(Error::InvalidInput(format!("{date}: zero impressions")));
        }
        if clicks > impressions {
            return Err(Error::InvalidInput(format!(
                "{date}: clicks ({clicks}) exceed impressions ({impressions})"
            )));
        }
        if let Some(c) = cost {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::InvalidInput(format!("{date}: invalid cost {c}")));
            }
        }
        Ok(SeriesPoint {
            date,
            impressions,
            clicks,
            ctr: clicks as f64 / impressions as f64,
            cost,
        })
    }
}

/// Column analysed by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Ctr,
    Impressions,
    Clicks,
    Cost,
}

impl Metric {
    pub fn value(self, p: &SeriesPoint) -> Option<f64> {
        match self {
            Metric::Ctr => Some(p.ctr),
            Metric::Impressions => Some(p.impressions as f64),
            Metric::Clicks => Some(p.clicks as f64),
            Metric::Cost => p.cost,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ctr => "ctr",
            Metric::Impressions => "impressions",
            Metric::Clicks => "clicks",
            Metric::Cost => "cost",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctr" => Ok(Metric::Ctr),
            "impressions" => Ok(Metric::Impressions),
            "clicks" => Ok(Metric::Clicks),
            "cost" => Ok(Metric::Cost),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Date-ordered daily observations with a selected metric column.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    points: Vec<SeriesPoint>,
    metric: Metric,
}

impl TimeSeries {
    /// Dates must be strictly increasing; gaps are allowed.
    pub fn new(points: Vec<SeriesPoint>) -> Result<Self> {
        Self::with_metric(points, Metric::Ctr)
    }

    pub fn with_metric(points: Vec<SeriesPoint>, metric: Metric) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData {
                required: 1,
                actual: 0,
            });
        }
        if let Some(w) = points.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(Error::InvalidInput(format!(
                "dates must be strictly increasing ({} follows {})",
                w[1].date, w[0].date
            )));
        }
        if let Some(p) = points.iter().find(|p| metric.value(p).is_none()) {
            return Err(Error::InvalidInput(format!(
                "{}: no value for metric `{}`",
                p.date,
                metric.name()
            )));
        }
        Ok(TimeSeries { points, metric })
    }

    /// Same observations, different analysed column.
    pub fn select_metric(&self, metric: Metric) -> Result<Self> {
        Self::with_metric(self.points.clone(), metric)
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].date
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    /// Values of the selected metric.
    pub fn values(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| self.metric.value(p).unwrap_or(f64::NAN))
            .collect()
    }

    /// Whole days since the first observation.
    pub fn day_offsets(&self) -> Vec<i64> {
        let first = self.first_date();
        self.points
            .iter()
            .map(|p| (p.date - first).num_days())
            .collect()
    }

    pub fn has_cost(&self) -> bool {
        self.points.iter().all(|p| p.cost.is_some())
    }

    /// Index of the observation on `date`, if any.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.points.binary_search_by_key(&date, |p| p.date).ok()
    }
}

/// Two adjacent windows of equal observation count.
#[derive(Debug, Clone, Copy)]
pub struct WindowPair<'a> {
    pub first: &'a [SeriesPoint],
    pub second: &'a [SeriesPoint],
    /// Date of the first observation of `second`.
    pub boundary: NaiveDate,
}

fn check_window(window: usize, len: usize) -> Result<()> {
    if window < 2 {
        return Err(Error::Config(format!(
            "window size must be >= 2, got {window}"
        )));
    }
    if len < 2 * window {
        return Err(Error::InsufficientData {
            required: 2 * window,
            actual: len,
        });
    }
    Ok(())
}

/// All stride-1 pairs of adjacent, non-overlapping windows of `window`
/// observations: `T - 2w + 1` of them.
pub fn window_pairs(series: &TimeSeries, window: usize) -> Result<Vec<WindowPair<'_>>> {
    check_window(window, series.len())?;
    let pts = series.points();
    Ok((0..=pts.len() - 2 * window)
        .map(|i| WindowPair {
            first: &pts[i..i + window],
            second: &pts[i + window..i + 2 * window],
            boundary: pts[i + window].date,
        })
        .collect())
}

/// Maps a window onto the unit square.
///
/// Time is scaled by calendar days so gaps stay visible as uneven spacing;
/// the metric is min-max scaled, and a constant window maps to `y = 0.5`.
pub fn normalize_window(window: &[SeriesPoint], metric: Metric) -> Result<NormalizedPath> {
    if window.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: window.len(),
        });
    }
    let first = window[0].date;
    let days: Vec<f64> = window
        .iter()
        .map(|p| (p.date - first).num_days() as f64)
        .collect();
    let values = window
        .iter()
        .map(|p| {
            metric.value(p).ok_or_else(|| {
                Error::InvalidInput(format!("{}: no value for `{}`", p.date, metric.name()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NormalizedPath::new(normalize_values(&days, &values)?)
}

/// Normalization on raw day offsets and metric values.
pub(crate) fn normalize_values(days: &[f64], values: &[f64]) -> Result<Vec<[f64; 2]>> {
    let span = days[days.len() - 1] - days[0];
    if span <= 0.0 {
        return Err(Error::InvalidInput("window spans zero days".into()));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidInput("non-finite metric value".into()));
    }
    let range = hi - lo;
    Ok(days
        .iter()
        .zip(values)
        .map(|(&d, &v)| {
            let t = (d - days[0]) / span;
            let y = if range > 0.0 { (v - lo) / range } else { 0.5 };
            [t, y]
        })
        .collect())
}
