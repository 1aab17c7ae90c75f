mod common;

use common::{ctr_series, day};
use proptest::prelude::*;
use sigfatigue::detector::segment_series;
use sigfatigue::{
    detect, distance_series, DetectorConfig, Error, Metric, SeriesPoint, TimeSeries, Trend,
};

fn cfg(window: usize, k: f64) -> DetectorConfig {
    DetectorConfig {
        window,
        k,
        ..DetectorConfig::default()
    }
}

/// 80 days of mild deterministic wiggle with a halving at day 41.
fn step_series() -> TimeSeries {
    let ctrs: Vec<f64> = (1..=80)
        .map(|t| {
            let level = if t < 41 { 0.02 } else { 0.01 };
            level * (1.0 + 0.01 * ((t * 7 % 5) as f64 - 2.0))
        })
        .collect();
    ctr_series(&ctrs)
}

fn values_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.005f64..0.05, 40..90)
}

#[test]
fn finds_a_single_step() {
    let report = detect(&step_series(), &cfg(10, 2.0)).unwrap();
    let dates = report.change_dates();
    assert_eq!(dates.len(), 1, "{dates:?}");
    let offset = (dates[0] - day(41)).num_days();
    assert!(offset.abs() < 10, "offset {offset}");
    assert_eq!(report.segments.len(), 2);
    assert!(report.segments[0].mean_metric > report.segments[1].mean_metric);
}

#[test]
fn huge_k_reports_nothing() {
    let report = detect(&step_series(), &cfg(10, 99.0)).unwrap();
    assert!(report.change_points.is_empty());
    assert_eq!(report.segments.len(), 1);
}

#[test]
fn distances_sit_at_every_boundary() {
    let s = step_series();
    let d = distance_series(&s, &cfg(10, 2.0)).unwrap();
    assert_eq!(d.len(), s.len() - 2 * 10 + 1);
    assert_eq!(d[0].boundary_date, day(11));
    assert!(d
        .iter()
        .all(|p| p.distance >= 0.0 && p.distance.is_finite()));
}

#[test]
fn short_series_is_insufficient() {
    let s = ctr_series(&[0.02; 27]);
    assert!(matches!(
        detect(&s, &cfg(14, 2.0)),
        Err(Error::InsufficientData {
            required: 28,
            actual: 27
        })
    ));
}

#[test]
fn bad_config_is_rejected() {
    let s = step_series();
    for bad in [cfg(1, 2.0), cfg(10, 0.0), cfg(10, f64::NAN)] {
        assert!(matches!(detect(&s, &bad), Err(Error::Config(_))));
    }
}

#[test]
fn clear_decline_is_labelled_declining() {
    let ctrs: Vec<f64> = (0..30).map(|t| 0.03 - 0.0005 * t as f64).collect();
    let report = detect(&ctr_series(&ctrs), &cfg(7, 99.0)).unwrap();
    assert_eq!(report.segments[0].trend, Trend::Declining);
}

#[test]
fn gapped_dates_use_calendar_time() {
    let pts: Vec<SeriesPoint> = (0..40)
        .map(|i| {
            let t = if i < 20 { i + 1 } else { i + 11 };
            SeriesPoint::new(day(t), 10_000, 200 + (i as u64 % 3), None).unwrap()
        })
        .collect();
    let s = TimeSeries::new(pts).unwrap();
    let report = detect(&s, &cfg(10, 1.0)).unwrap();
    for cp in &report.change_points {
        assert!(s.index_of(cp.date).is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn positive_scaling_does_not_move_change_points(v in values_strategy(), m in 2u64..20) {
        // impressions are the analysed column, so an integer scale is exact in the data
        let build = |scale: u64| {
            let pts = v.iter().enumerate().map(|(i, &x)| {
                let imps = (x * 1e6).round() as u64 * scale;
                SeriesPoint::new(day(i as i64 + 1), imps, 0, None).unwrap()
            }).collect();
            TimeSeries::with_metric(pts, Metric::Impressions).unwrap()
        };
        let a = detect(&build(1), &cfg(10, 1.5)).unwrap();
        let b = detect(&build(m), &cfg(10, 1.5)).unwrap();
        for (x, y) in a.distances.iter().zip(&b.distances) {
            prop_assert!((x.distance - y.distance).abs() < 1e-9);
        }
        prop_assert_eq!(a.change_dates(), b.change_dates());
    }

    #[test]
    fn raising_k_never_adds_change_points(v in values_strategy(), k1 in 0.5f64..3.0, dk in 0.0f64..2.0) {
        let s = ctr_series(&v);
        let low = detect(&s, &cfg(10, k1)).unwrap();
        let high = detect(&s, &cfg(10, k1 + dk)).unwrap();
        prop_assert!(high.change_points.len() <= low.change_points.len());
    }

    #[test]
    fn segments_tile_the_span(v in values_strategy(), k in 0.5f64..2.5) {
        let s = ctr_series(&v);
        let report = detect(&s, &cfg(10, k)).unwrap();
        let segs = &report.segments;
        prop_assert_eq!(segs.len(), report.change_points.len() + 1);
        prop_assert_eq!(segs[0].start_date, s.first_date());
        prop_assert_eq!(segs[segs.len() - 1].end_date, s.last_date());
        for pair in segs.windows(2) {
            prop_assert_eq!(pair[0].end_date.succ_opt().unwrap(), pair[1].start_date);
        }
        prop_assert_eq!(segs.iter().map(|g| g.n_points).sum::<usize>(), s.len());
    }

    #[test]
    fn detection_is_deterministic(v in values_strategy()) {
        let s = ctr_series(&v);
        let a = serde_json::to_string(&detect(&s, &cfg(10, 1.5)).unwrap()).unwrap();
        let b = serde_json::to_string(&detect(&s, &cfg(10, 1.5)).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn segment_spans_partition_indices(v in values_strategy(), cuts in prop::collection::btree_set(1usize..40, 0..5)) {
        let s = ctr_series(&v);
        let dates: Vec<_> = cuts.iter().map(|&i| s.points()[i].date).collect();
        let spans = segment_series(&s, &dates).unwrap();
        prop_assert_eq!(spans.len(), dates.len() + 1);
        prop_assert_eq!(spans[0].start, 0);
        prop_assert_eq!(spans[spans.len() - 1].end, s.len());
        for pair in spans.windows(2) {
            prop_assert_eq!(pair[0].end, pair[1].start);
        }
    }
}
