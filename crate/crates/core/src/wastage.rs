//! Opportunity cost of running a creative below its own best performance.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::detector::{Segment, Trend};
use crate::error::{Error, Result};
use crate::windowing::{SeriesPoint, TimeSeries};
use crate::SCHEMA_VERSION;

/// Segment chosen as the performance benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkChoice {
    pub segment: Segment,
    /// Set when no segment was stable or improving and the best declining
    /// segment was used instead.
    pub fallback: bool,
}

/// Where the benchmark cost per click comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum CpcSource {
    /// Total cost over total clicks within the benchmark segment.
    Observed,
    /// A fixed, user-supplied value.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyWastage {
    pub date: NaiveDate,
    pub ctr: f64,
    pub impressions: u64,
    pub lost_clicks: f64,
    pub wastage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WastageReport {
    pub schema_version: u32,
    pub benchmark_segment: Segment,
    pub benchmark_fallback: bool,
    pub ctr_bench: f64,
    pub cpc_bench: f64,
    pub cpc_source: CpcSource,
    pub daily: Vec<DailyWastage>,
    pub total_lost_clicks: f64,
    pub total_wastage: f64,
}

/// First of the segments with the largest mean.
fn highest_mean<'a>(candidates: impl Iterator<Item = &'a Segment>) -> Option<&'a Segment> {
    candidates.fold(None, |acc: Option<&Segment>, s| match acc {
        Some(a) if a.mean_metric >= s.mean_metric => Some(a),
        _ => Some(s),
    })
}

/// Highest-mean segment among those that are stable or improving, falling
/// back to the highest-mean segment overall.
pub fn select_benchmark(segments: &[Segment]) -> Result<BenchmarkChoice> {
    if segments.is_empty() {
        return Err(Error::InvalidInput(
            "no segments to choose a benchmark from".into(),
        ));
    }
    let healthy = highest_mean(
        segments
            .iter()
            .filter(|s| matches!(s.trend, Trend::Stable | Trend::Improving)),
    );
    match healthy {
        Some(s) => Ok(BenchmarkChoice {
            segment: s.clone(),
            fallback: false,
        }),
        None => Ok(BenchmarkChoice {
            segment: highest_mean(segments.iter()).expect("non-empty").clone(),
            fallback: true,
        }),
    }
}

/// `max(0, ctr_bench - ctr) * impressions`.
pub fn lost_clicks(ctr_bench: f64, ctr: f64, impressions: f64) -> f64 {
    (ctr_bench - ctr).max(0.0) * impressions
}

/// Mean that is exact for constant input.
fn stable_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

fn in_segment<'a>(series: &'a TimeSeries, seg: &Segment) -> Vec<&'a SeriesPoint> {
    series
        .points()
        .iter()
        .filter(|p| p.date >= seg.start_date && p.date <= seg.end_date)
        .collect()
}

/// Daily lost clicks and wastage for every observation after the benchmark
/// segment. Days above the benchmark contribute zero.
pub fn compute_wastage(
    series: &TimeSeries,
    segments: &[Segment],
    cpc_source: CpcSource,
) -> Result<WastageReport> {
    let choice = select_benchmark(segments)?;
    let seg = &choice.segment;
    let bench_points = in_segment(series, seg);
    if bench_points.is_empty() {
        return Err(Error::InvalidInput(format!(
            "benchmark segment {}..={} holds no observations of this series",
            seg.start_date, seg.end_date
        )));
    }
    let ctr_bench = stable_mean(&bench_points.iter().map(|p| p.ctr).collect::<Vec<_>>());

    let cpc_bench = match cpc_source {
        CpcSource::Constant(c) => {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!(
                    "cost per click must be >= 0, got {c}"
                )));
            }
            c
        }
        CpcSource::Observed => {
            if !bench_points.iter().all(|p| p.cost.is_some()) {
                return Err(Error::Config(
                    "series has no cost data; supply a constant cost per click".into(),
                ));
            }
            let clicks: u64 = bench_points.iter().map(|p| p.clicks).sum();
            if clicks == 0 {
                return Err(Error::Config(
                    "benchmark segment has zero clicks, so its cost per click is undefined; \
                     supply a constant cost per click"
                        .into(),
                ));
            }
            let cost: f64 = bench_points.iter().filter_map(|p| p.cost).sum();
            cost / clicks as f64
        }
    };

    let daily: Vec<DailyWastage> = series
        .points()
        .iter()
        .filter(|p| p.date > seg.end_date)
        .map(|p| {
            let lost = lost_clicks(ctr_bench, p.ctr, p.impressions as f64);
            DailyWastage {
                date: p.date,
                ctr: p.ctr,
                impressions: p.impressions,
                lost_clicks: lost,
                wastage: lost * cpc_bench,
            }
        })
        .collect();
    // folded from +0.0: an empty float sum would be -0.0
    let total_lost_clicks = daily.iter().fold(0.0, |acc, d| acc + d.lost_clicks);
    let total_wastage = daily.iter().fold(0.0, |acc, d| acc + d.wastage);

    Ok(WastageReport {
        schema_version: SCHEMA_VERSION,
        benchmark_segment: choice.segment,
        benchmark_fallback: choice.fallback,
        ctr_bench,
        cpc_bench,
        cpc_source,
        daily,
        total_lost_clicks,
        total_wastage,
    })
}

/// Writes `date,ctr,impressions,lost_clicks,wastage` rows.
pub fn write_daily_csv<W: Write>(writer: W, report: &WastageReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in &report.daily {
        out.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
