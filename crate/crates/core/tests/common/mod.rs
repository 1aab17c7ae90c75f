#![allow(dead_code)]

pub mod oracle;

use chrono::{Duration, NaiveDate};
use sigfatigue::{SeriesPoint, TimeSeries};

/// Calendar date of 1-based day `n`, counted from 2024-01-01.
pub fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + Duration::days(n - 1)
}

/// Consecutive days with the given CTR values on 100k impressions each.
pub fn ctr_series(ctrs: &[f64]) -> TimeSeries {
    let pts = ctrs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let clicks = (c * 100_000.0).round() as u64;
            SeriesPoint::new(day(i as i64 + 1), 100_000, clicks, None).unwrap()
        })
        .collect();
    TimeSeries::new(pts).unwrap()
}

/// Like [`ctr_series`] with a daily cost of `cpc` per click.
pub fn costed_series(ctrs: &[f64], cpc: f64) -> TimeSeries {
    let pts = ctrs
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let clicks = (c * 100_000.0).round() as u64;
            SeriesPoint::new(
                day(i as i64 + 1),
                100_000,
                clicks,
                Some(clicks as f64 * cpc),
            )
            .unwrap()
        })
        .collect();
    TimeSeries::new(pts).unwrap()
}
