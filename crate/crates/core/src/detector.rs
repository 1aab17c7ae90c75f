//! Sliding-window signature-distance change point detection.
//!
//! For every boundary between two adjacent windows of `w` observations the
//! detector computes the Euclidean distance between the windows' normalized
//! signatures. Boundaries whose distance exceeds `mean + k * std` of all
//! distances are flagged; nearby flags are merged into a single change
//! point, and the series is cut into segments whose trend is classified by a
//! slope test.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::fit_slope;
use crate::sigcore::{self, FeatureMode, TensorSeq};
use crate::windowing::{normalize_values, Metric, TimeSeries};
use crate::SCHEMA_VERSION;

/// Relative tolerance under which two distances count as tied when
/// ordering flags for merging.
const TIE_RELATIVE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Window size in observations.
    pub window: usize,
    /// Signature truncation depth.
    pub depth: usize,
    /// Threshold multiplier on the distance standard deviation.
    pub k: f64,
    /// Significance level for the segment slope test.
    pub alpha: f64,
    /// Flags within this many days of a stronger flag are merged into it.
    /// `None` means "same as `window`"; `Some(0)` disables merging.
    pub merge_gap: Option<u32>,
    pub feature_mode: FeatureMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 14,
            depth: sigcore::DEFAULT_DEPTH,
            k: 2.0,
            alpha: 0.05,
            merge_gap: None,
            feature_mode: FeatureMode::Full,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.window < 2 {
            problems.push(format!("window must be >= 2, got {}", self.window));
        }
        if self.depth < 1 {
            problems.push("depth must be >= 1".to_string());
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            problems.push(format!("k must be > 0, got {}", self.k));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            problems.push(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn effective_merge_gap(&self) -> u32 {
        self.merge_gap.unwrap_or(self.window as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    pub boundary_date: NaiveDate,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    pub date: NaiveDate,
    pub distance: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Improving,
    Declining,
    Stable,
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Improving => "improving",
            Trend::Declining => "declining",
            Trend::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendFit {
    pub trend: Trend,
    /// Metric units per day.
    pub slope: f64,
    pub p_value: f64,
}

/// A date span of the series between change points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentSpan {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    /// Observation indices `[start, end)` inside the span.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub n_points: usize,
    pub trend: Trend,
    pub slope: f64,
    pub p_value: f64,
    pub mean_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub schema_version: u32,
    pub config: DetectorConfig,
    pub metric: Metric,
    pub distances: Vec<DistancePoint>,
    pub mu_d: f64,
    pub sigma_d: f64,
    pub threshold: f64,
    /// Every boundary whose distance exceeded the threshold, before merging.
    pub flagged: Vec<NaiveDate>,
    pub change_points: Vec<ChangePoint>,
    pub segments: Vec<Segment>,
}

impl ChangePointReport {
    pub fn change_dates(&self) -> Vec<NaiveDate> {
        self.change_points.iter().map(|c| c.date).collect()
    }
}

fn window_feature(
    days: &[f64],
    values: &[f64],
    depth: usize,
    mode: FeatureMode,
) -> Result<TensorSeq> {
    let points = normalize_values(days, values)?;
    let sig = sigcore::polyline_signature(&points, depth)?;
    match mode {
        FeatureMode::Full => Ok(sig),
        FeatureMode::Log => sigcore::log_signature(&sig),
    }
}

/// Distance between the two windows at every boundary, in date order.
pub fn distance_series(series: &TimeSeries, cfg: &DetectorConfig) -> Result<Vec<DistancePoint>> {
    cfg.validate()?;
    let w = cfg.window;
    let n = series.len();
    if n < 2 * w {
        return Err(Error::InsufficientData {
            required: 2 * w,
            actual: n,
        });
    }
    let days: Vec<f64> = series.day_offsets().into_iter().map(|d| d as f64).collect();
    let values = series.values();
    // every window start is used twice (as W2, later as W1)
    let features = (0..=n - w)
        .map(|j| {
            window_feature(
                &days[j..j + w],
                &values[j..j + w],
                cfg.depth,
                cfg.feature_mode,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dates = series.dates();
    (0..=n - 2 * w)
        .map(|i| {
            Ok(DistancePoint {
                boundary_date: dates[i + w],
                distance: sigcore::sig_distance(&features[i], &features[i + w])?,
            })
        })
        .collect()
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Greedy peak suppression over flagged boundaries.
///
/// Flags are visited in decreasing distance; a flag is kept unless a kept
/// flag lies within `gap` days. Because the visiting order does not depend
/// on the threshold, raising `k` only removes a tail of this order, so the
/// kept set shrinks monotonically. Distances tied within [`TIE_RELATIVE`]
/// are visited most-central first (most other flags within `gap`), then by
/// date.
fn merge_flags(flags: &[DistancePoint], gap: u32) -> Vec<DistancePoint> {
    let gap = i64::from(gap);
    let within = |a: NaiveDate, b: NaiveDate| (a - b).num_days().abs() <= gap;
    let neighbours: Vec<usize> = flags
        .iter()
        .map(|f| {
            flags
                .iter()
                .filter(|g| {
                    g.boundary_date != f.boundary_date && within(f.boundary_date, g.boundary_date)
                })
                .count()
        })
        .collect();

    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| {
        flags[b]
            .distance
            .total_cmp(&flags[a].distance)
            .then(flags[a].boundary_date.cmp(&flags[b].boundary_date))
    });
    let mut start = 0;
    while start < order.len() {
        let top = flags[order[start]].distance;
        let mut end = start + 1;
        while end < order.len() && top - flags[order[end]].distance <= TIE_RELATIVE * top {
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| {
            neighbours[b]
                .cmp(&neighbours[a])
                .then(flags[a].boundary_date.cmp(&flags[b].boundary_date))
        });
        start = end;
    }

    let mut kept: Vec<DistancePoint> = Vec::new();
    for idx in order {
        let f = flags[idx];
        if kept
            .iter()
            .all(|k| !within(k.boundary_date, f.boundary_date))
        {
            kept.push(f);
        }
    }
    kept.sort_by_key(|f| f.boundary_date);
    kept
}

/// Runs the full pipeline: distances, threshold, merged change points and
/// classified segments.
pub fn detect(series: &TimeSeries, cfg: &DetectorConfig) -> Result<ChangePointReport> {
    let distances = distance_series(series, cfg)?;
    let values: Vec<f64> = distances.iter().map(|d| d.distance).collect();
    let (mu_d, sigma_d) = mean_std(&values);
    let threshold = mu_d + cfg.k * sigma_d;

    let flags: Vec<DistancePoint> = distances
        .iter()
        .copied()
        .filter(|d| d.distance > threshold)
        .collect();
    let change_points: Vec<ChangePoint> = merge_flags(&flags, cfg.effective_merge_gap())
        .into_iter()
        .map(|f| ChangePoint {
            date: f.boundary_date,
            distance: f.distance,
            threshold,
        })
        .collect();

    let cp_dates: Vec<NaiveDate> = change_points.iter().map(|c| c.date).collect();
    let segments = classify_segments(series, &cp_dates, cfg.alpha)?;

    Ok(ChangePointReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        metric: series.metric(),
        distances,
        mu_d,
        sigma_d,
        threshold,
        flagged: flags.iter().map(|f| f.boundary_date).collect(),
        change_points,
        segments,
    })
}

/// Least-squares trend of `(day_offset, value)` points.
///
/// Improving or declining only when the slope is significant at `alpha`;
/// segments with fewer than 3 points are stable with `p_value = 1`.
pub fn classify_trend(points: &[(f64, f64)], alpha: f64) -> TrendFit {
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let Some(fit) = fit_slope(&x, &y) else {
        return TrendFit {
            trend: Trend::Stable,
            slope: 0.0,
            p_value: 1.0,
        };
    };
    let trend = if fit.p_value < alpha && fit.slope > 0.0 {
        Trend::Improving
    } else if fit.p_value < alpha && fit.slope < 0.0 {
        Trend::Declining
    } else {
        Trend::Stable
    };
    TrendFit {
        trend,
        slope: fit.slope,
        p_value: fit.p_value,
    }
}

/// Cuts the series' calendar span at each change point date. Each change
/// point starts a new segment; segments tile the span without overlap.
pub fn segment_series(
    series: &TimeSeries,
    change_points: &[NaiveDate],
) -> Result<Vec<SegmentSpan>> {
    let mut cuts: Vec<NaiveDate> = change_points.to_vec();
    cuts.sort();
    cuts.dedup();
    let mut starts = Vec::with_capacity(cuts.len() + 1);
    starts.push(0usize);
    for &date in &cuts {
        if date < series.first_date() || date > series.last_date() {
            return Err(Error::InvalidInput(format!(
                "change point {date} outside series span {}..={}",
                series.first_date(),
                series.last_date()
            )));
        }
        let idx = series.index_of(date).ok_or_else(|| {
            Error::InvalidInput(format!("change point {date} is not an observation date"))
        })?;
        if idx > 0 {
            starts.push(idx);
        }
    }
    let pts = series.points();
    let spans = starts
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = starts.get(i + 1).copied().unwrap_or(pts.len());
            let end_date = if end < pts.len() {
                pts[end].date - Duration::days(1)
            } else {
                series.last_date()
            };
            SegmentSpan {
                start_date: pts[start].date,
                end_date,
                start,
                end,
            }
        })
        .collect();
    Ok(spans)
}

/// Segments with trend labels and mean metric values.
pub fn classify_segments(
    series: &TimeSeries,
    change_points: &[NaiveDate],
    alpha: f64,
) -> Result<Vec<Segment>> {
    let spans = segment_series(series, change_points)?;
    let offsets = series.day_offsets();
    let values = series.values();
    Ok(spans
        .into_iter()
        .map(|span| {
            let pts: Vec<(f64, f64)> = (span.start..span.end)
                .map(|i| (offsets[i] as f64, values[i]))
                .collect();
            let fit = classify_trend(&pts, alpha);
            let mean_metric = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
            Segment {
                start_date: span.start_date,
                end_date: span.end_date,
                n_points: span.end - span.start,
                trend: fit.trend,
                slope: fit.slope,
                p_value: fit.p_value,
                mean_metric,
            }
        })
        .collect())
}
