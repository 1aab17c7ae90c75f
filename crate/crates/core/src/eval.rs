//! Scoring detections against known change points.
//!
//! Detections are paired with true change points greedily by distance, at
//! most one partner each, within `tolerance_days`. Delay is signed:
//! detected minus true, so early warnings are negative.

use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Method;
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::synth::{generate_corpus, PatternKind, PatternSpec, SyntheticSeries};
use crate::windowing::TimeSeries;
use crate::SCHEMA_VERSION;

pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 100;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_CORPUS_SIZE: usize = 50;
pub const DEFAULT_CORPUS_SEED: u64 = 20_240_101;
/// Noise level of the low-noise corpora: the bottom of the documented range.
pub const LOW_NOISE_CV: f64 = 0.10;

/// Objective values closer than this are treated as equal in grid search.
const OBJECTIVE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub tolerance_days: u32,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        MatchPolicy { tolerance_days: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricIntervals {
    pub precision: Interval,
    pub recall: Interval,
    pub f1: Interval,
    pub mean_delay_days: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of detected minus true over matched pairs; `None` without
    /// matches.
    pub mean_delay_days: Option<f64>,
    pub n_detected: usize,
    pub n_true: usize,
    pub n_matched: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<MetricIntervals>,
}

impl EvalMetrics {
    fn from_counts(n_detected: usize, n_true: usize, n_matched: usize, delay_sum: f64) -> Self {
        let precision = if n_detected == 0 {
            0.0
        } else {
            n_matched as f64 / n_detected as f64
        };
        let recall = if n_true == 0 {
            1.0
        } else {
            n_matched as f64 / n_true as f64
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalMetrics {
            precision,
            recall,
            f1,
            mean_delay_days: (n_matched > 0).then(|| delay_sum / n_matched as f64),
            n_detected,
            n_true,
            n_matched,
            ci: None,
        }
    }

    fn delay_sum(&self) -> f64 {
        self.mean_delay_days
            .map_or(0.0, |d| d * self.n_matched as f64)
    }
}

/// A matched `(detected, true)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub detected: NaiveDate,
    pub truth: NaiveDate,
}

impl Match {
    pub fn delay_days(&self) -> i64 {
        (self.detected - self.truth).num_days()
    }
}

/// Greedy one-to-one matching in order of increasing distance; ties go to
/// the earlier true date, then the earlier detection.
pub fn match_detections(
    detected: &[NaiveDate],
    truth: &[NaiveDate],
    policy: MatchPolicy,
) -> Vec<Match> {
    let tol = i64::from(policy.tolerance_days);
    let mut candidates: Vec<(i64, usize, usize)> = Vec::new();
    for (j, t) in truth.iter().enumerate() {
        for (i, d) in detected.iter().enumerate() {
            let gap = (*d - *t).num_days().abs();
            if gap <= tol {
                candidates.push((gap, j, i));
            }
        }
    }
    candidates.sort_by_key(|&(gap, j, i)| (gap, truth[j], detected[i]));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for (_, j, i) in candidates {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            out.push(Match {
                detected: detected[i],
                truth: truth[j],
            });
        }
    }
    out.sort_by_key(|m| m.truth);
    out
}

pub fn score(detected: &[NaiveDate], truth: &[NaiveDate], policy: MatchPolicy) -> EvalMetrics {
    let matches = match_detections(detected, truth, policy);
    let delay_sum: f64 = matches.iter().map(|m| m.delay_days() as f64).sum();
    EvalMetrics::from_counts(detected.len(), truth.len(), matches.len(), delay_sum)
}

/// A series with its known change dates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSeries {
    pub id: String,
    pub kind: PatternKind,
    pub series: TimeSeries,
    pub truth: Vec<NaiveDate>,
}

impl From<&SyntheticSeries> for LabelledSeries {
    fn from(s: &SyntheticSeries) -> Self {
        LabelledSeries {
            id: s.id.clone(),
            kind: s.spec.kind,
            series: s.series.clone(),
            truth: s.truth_dates(),
        }
    }
}

/// Result for one series of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesScore {
    pub id: String,
    pub kind: PatternKind,
    pub detected: Vec<NaiveDate>,
    pub truth: Vec<NaiveDate>,
    pub metrics: EvalMetrics,
    /// Why the method produced nothing, when the series was too short.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Corpus-level metrics from pooled counts.
pub fn aggregate<'a>(scores: impl IntoIterator<Item = &'a SeriesScore>) -> EvalMetrics {
    let (mut det, mut tru, mut mat, mut delay) = (0, 0, 0, 0.0);
    for s in scores {
        det += s.metrics.n_detected;
        tru += s.metrics.n_true;
        mat += s.metrics.n_matched;
        delay += s.metrics.delay_sum();
    }
    EvalMetrics::from_counts(det, tru, mat, delay)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval(mut values: Vec<f64>, level: f64) -> Option<Interval> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Some(Interval {
        lo: quantile(&values, tail),
        hi: quantile(&values, 1.0 - tail),
    })
}

/// Percentile bootstrap over series: each replicate resamples whole series
/// with replacement and recomputes the pooled metrics.
pub fn bootstrap_ci(
    scores: &[SeriesScore],
    samples: usize,
    level: f64,
    seed: u64,
) -> Result<MetricIntervals> {
    if scores.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: scores.len(),
        });
    }
    if samples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "need samples >= 1 and level in (0, 1), got {samples} and {level}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scores.len();
    let replicates: Vec<EvalMetrics> = (0..samples)
        .map(|_| aggregate((0..n).map(|_| &scores[rng.random_range(0..n)])))
        .collect();
    let pick = |f: fn(&EvalMetrics) -> f64| {
        interval(replicates.iter().map(f).collect(), level).expect("samples >= 1")
    };
    Ok(MetricIntervals {
        precision: pick(|m| m.precision),
        recall: pick(|m| m.recall),
        f1: pick(|m| m.f1),
        mean_delay_days: interval(
            replicates
                .iter()
                .filter_map(|m| m.mean_delay_days)
                .collect(),
            level,
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub schema_version: u32,
    pub method: Method,
    pub policy: MatchPolicy,
    pub aggregate: EvalMetrics,
    pub per_series: Vec<SeriesScore>,
}

/// Runs `method` on every series. A series too short for the method scores
/// as having no detections.
pub fn evaluate(
    method: &Method,
    corpus: &[LabelledSeries],
    policy: MatchPolicy,
) -> Result<CorpusEvaluation> {
    let per_series = corpus
        .par_iter()
        .map(|s| {
            let truth = s.truth.clone();
            let (detected, skipped) = match method.run(&s.series) {
                Ok(d) => (d, None),
                Err(e @ Error::InsufficientData { .. }) => (Vec::new(), Some(e.to_string())),
                Err(e) => return Err(e),
            };
            Ok(SeriesScore {
                id: s.id.clone(),
                kind: s.kind,
                metrics: score(&detected, &truth, policy),
                detected,
                truth,
                skipped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusEvaluation {
        schema_version: SCHEMA_VERSION,
        method: method.clone(),
        policy,
        aggregate: aggregate(&per_series),
        per_series,
    })
}

/// [`evaluate`] plus bootstrap intervals on the aggregate.
pub fn evaluate_with_ci(
    method: &Method,
    corpus: &[LabelledSeries],
    policy: MatchPolicy,
    samples: usize,
    seed: u64,
) -> Result<CorpusEvaluation> {
    let mut ev = evaluate(method, corpus, policy)?;
    ev.aggregate.ci = Some(bootstrap_ci(
        &ev.per_series,
        samples,
        DEFAULT_CONFIDENCE,
        seed,
    )?);
    Ok(ev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    F1,
    Precision,
    Recall,
}

impl Objective {
    pub fn value(self, m: &EvalMetrics) -> f64 {
        match self {
            Objective::F1 => m.f1,
            Objective::Precision => m.precision,
            Objective::Recall => m.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub method: Method,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub schema_version: u32,
    pub objective: Objective,
    pub best: GridCell,
    pub cells: Vec<GridCell>,
}

/// Exhaustive search. Ties on the objective go to the earlier mean delay
/// (no matches counts as latest), then to the smaller parameter tuple.
pub fn grid_search(
    candidates: &[Method],
    corpus: &[LabelledSeries],
    policy: MatchPolicy,
    objective: Objective,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::Config("parameter grid is empty".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Config("validation corpus is empty".into()));
    }
    let cells = candidates
        .iter()
        .map(|m| {
            Ok(GridCell {
                method: m.clone(),
                metrics: evaluate(m, corpus, policy)?.aggregate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let better = |a: &GridCell, b: &GridCell| -> bool {
        let (va, vb) = (objective.value(&a.metrics), objective.value(&b.metrics));
        if (va - vb).abs() > OBJECTIVE_TIE {
            return va > vb;
        }
        let da = a.metrics.mean_delay_days.unwrap_or(f64::INFINITY);
        let db = b.metrics.mean_delay_days.unwrap_or(f64::INFINITY);
        if da != db {
            return da < db;
        }
        a.method.param_key().partial_cmp(&b.method.param_key()) == Some(std::cmp::Ordering::Less)
    };
    let mut best = &cells[0];
    for c in &cells[1..] {
        if better(c, best) {
            best = c;
        }
    }
    Ok(GridSearchResult {
        schema_version: SCHEMA_VERSION,
        objective,
        best: best.clone(),
        cells: cells.clone(),
    })
}

/// Seeded 50/50 split of `0..n`: indices are shuffled, then even positions
/// go to training and odd positions to validation.
pub fn parity_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (pos, i) in idx.into_iter().enumerate() {
        if pos % 2 == 0 {
            train.push(i);
        } else {
            validation.push(i);
        }
    }
    train.sort_unstable();
    validation.sort_unstable();
    (train, validation)
}

/// Signature-detector settings to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGrid {
    pub windows: Vec<usize>,
    pub ks: Vec<f64>,
    pub depths: Vec<usize>,
}

impl SensitivityGrid {
    /// Windows 7, 14, 21 by k 1.5, 2.0, 2.5 at depth 3.
    pub fn standard() -> Self {
        SensitivityGrid {
            windows: vec![7, 14, 21],
            ks: vec![1.5, 2.0, 2.5],
            depths: vec![3],
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len() * self.ks.len() * self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cells in window-major, then k, then depth order.
    pub fn configs(&self, base: &DetectorConfig) -> Vec<DetectorConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &window in &self.windows {
            for &k in &self.ks {
                for &depth in &self.depths {
                    out.push(DetectorConfig {
                        window,
                        k,
                        depth,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

/// One sweep cell; flat so it writes cleanly as a CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub window: usize,
    pub k: f64,
    pub depth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mean_delay_days: Option<f64>,
    pub n_detected: usize,
    pub n_true: usize,
    pub n_matched: usize,
    pub precision_lo: f64,
    pub precision_hi: f64,
    pub recall_lo: f64,
    pub recall_hi: f64,
    pub delay_lo: Option<f64>,
    pub delay_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub schema_version: u32,
    pub policy: MatchPolicy,
    pub bootstrap_samples: usize,
    pub rows: Vec<SensitivityRow>,
}

/// Evaluates every grid cell on `corpus` with bootstrap intervals.
pub fn sensitivity_report(
    corpus: &[LabelledSeries],
    grid: &SensitivityGrid,
    base: &DetectorConfig,
    policy: MatchPolicy,
    samples: usize,
    seed: u64,
) -> Result<SensitivityReport> {
    if grid.is_empty() {
        return Err(Error::Config("sensitivity grid is empty".into()));
    }
    let rows = grid
        .configs(base)
        .into_iter()
        .map(|cfg| {
            cfg.validate()?;
            let ev = evaluate_with_ci(
                &Method::Signature(cfg.clone()),
                corpus,
                policy,
                samples,
                seed,
            )?;
            let m = ev.aggregate;
            let ci = m.ci.expect("set by evaluate_with_ci");
            Ok(SensitivityRow {
                window: cfg.window,
                k: cfg.k,
                depth: cfg.depth,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                mean_delay_days: m.mean_delay_days,
                n_detected: m.n_detected,
                n_true: m.n_true,
                n_matched: m.n_matched,
                precision_lo: ci.precision.lo,
                precision_hi: ci.precision.hi,
                recall_lo: ci.recall.lo,
                recall_hi: ci.recall.hi,
                delay_lo: ci.mean_delay_days.map(|i| i.lo),
                delay_hi: ci.mean_delay_days.map(|i| i.hi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityReport {
        schema_version: SCHEMA_VERSION,
        policy,
        bootstrap_samples: samples,
        rows,
    })
}

pub fn write_rows_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// The reference corpus for `kind`: [`DEFAULT_CORPUS_SIZE`] series of 120
/// days at the given noise level, shape parameters sampled from
/// [`DEFAULT_CORPUS_SEED`].
pub fn default_corpus(kind: PatternKind, noise_cv: f64) -> Result<Vec<LabelledSeries>> {
    let template = PatternSpec {
        noise_cv,
        ..PatternSpec::new(kind, 0)
    };
    Ok(labelled(&generate_corpus(
        &template,
        DEFAULT_CORPUS_SIZE,
        DEFAULT_CORPUS_SEED,
    )?))
}

pub fn labelled(corpus: &[SyntheticSeries]) -> Vec<LabelledSeries> {
    corpus.iter().map(LabelledSeries::from).collect()
}
