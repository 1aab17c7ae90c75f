//! Seeded synthetic CTR series for seven fatigue shapes, with the true
//! change days recorded alongside.
//!
//! Days are numbered from 1 (`start_date` is day 1). A change day is the
//! first day governed by the new regime: a step "after day 60" has change
//! day 61.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windowing::{SeriesPoint, TimeSeries};
use crate::SCHEMA_VERSION;

pub const BASELINE_CTR_RANGE: (f64, f64) = (0.005, 0.03);
pub const WEEKLY_DECAY_RANGE: (f64, f64) = (0.02, 0.08);
pub const NOISE_CV_RANGE: (f64, f64) = (0.10, 0.30);
pub const DURATION_RANGE: (u32, u32) = (30, 180);
pub const DROP_FACTOR_RANGE: (f64, f64) = (0.4, 0.7);
pub const STEP_FRACTION_RANGE: (f64, f64) = (0.15, 0.25);
pub const STEPS_RANGE: (u32, u32) = (2, 3);

/// Coefficient of variation of daily impressions.
pub const IMPRESSIONS_CV: f64 = 0.2;
/// Level reached at the end of the fatigue phase of `fatigue_recovery`,
/// relative to baseline.
const RECOVERY_TROUGH: f64 = 0.4;
/// Level held after recovery, relative to baseline.
const RECOVERY_LEVEL: f64 = 0.7;
/// Floor of `gradual_linear_decay`, relative to baseline.
const DECAY_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    ClassicWearOut,
    SharpDrop,
    FatigueRecovery,
    VolatileDecline,
    MultiStageDecline,
    GradualLinearDecay,
    NonContinuous,
}

impl PatternKind {
    pub const ALL: [PatternKind; 7] = [
        PatternKind::ClassicWearOut,
        PatternKind::SharpDrop,
        PatternKind::FatigueRecovery,
        PatternKind::VolatileDecline,
        PatternKind::MultiStageDecline,
        PatternKind::GradualLinearDecay,
        PatternKind::NonContinuous,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::ClassicWearOut => "classic_wear_out",
            PatternKind::SharpDrop => "sharp_drop",
            PatternKind::FatigueRecovery => "fatigue_recovery",
            PatternKind::VolatileDecline => "volatile_decline",
            PatternKind::MultiStageDecline => "multi_stage_decline",
            PatternKind::GradualLinearDecay => "gradual_linear_decay",
            PatternKind::NonContinuous => "non_continuous",
        }
    }
}

impl std::fmt::Display for PatternKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatternKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown pattern `{s}`")))
    }
}

/// Generator configuration. Every field has a default; see
/// [`PatternSpec::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub baseline_ctr: f64,
    pub weekly_decay_rate: f64,
    /// Coefficient of variation of the multiplicative CTR noise. Zero turns
    /// off all randomness: impressions sit at their mean and clicks are
    /// rounded from the clean CTR.
    pub noise_cv: f64,
    pub duration_days: u32,
    pub impressions_mean: u64,
    pub seed: u64,
    /// Probability of dropping each day (`non_continuous` only).
    pub gap_fraction: f64,
    /// Overrides the default change days of `kind`.
    pub change_days: Option<Vec<u32>>,
    /// Post-drop multiplier of `sharp_drop`.
    pub drop_factor: f64,
    /// Fractional loss per step of `multi_stage_decline`.
    pub step_fraction: f64,
    pub steps: u32,
    /// Shape thinned out by `non_continuous`.
    pub base_kind: PatternKind,
    /// First day of decline for the linear-decay shapes.
    pub onset_day: u32,
    pub start_date: NaiveDate,
    /// Gaps never leave fewer observations than this.
    pub min_observations: usize,
    /// Hold the documented parameter ranges. When off, only physical
    /// validity is checked.
    pub strict_ranges: bool,
}

impl Default for PatternSpec {
    fn default() -> Self {
        PatternSpec {
            kind: PatternKind::SharpDrop,
            baseline_ctr: 0.02,
            weekly_decay_rate: 0.05,
            noise_cv: 0.2,
            duration_days: 120,
            impressions_mean: 50_000,
            seed: 0,
            gap_fraction: 0.3,
            change_days: None,
            drop_factor: 0.5,
            step_fraction: 0.2,
            steps: 3,
            base_kind: PatternKind::SharpDrop,
            onset_day: 20,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            min_observations: 28,
            strict_ranges: true,
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Display>(
    problems: &mut Vec<String>,
    name: &str,
    value: T,
    (lo, hi): (T, T),
) {
    if !(value >= lo && value <= hi) {
        problems.push(format!("{name} = {value} outside [{lo}, {hi}]"));
    }
}

impl PatternSpec {
    pub fn new(kind: PatternKind, seed: u64) -> Self {
        PatternSpec {
            kind,
            seed,
            ..Self::default()
        }
    }

    /// Shape actually drawn, after unwrapping `non_continuous`.
    fn shape(&self) -> PatternKind {
        if self.kind == PatternKind::NonContinuous {
            self.base_kind
        } else {
            self.kind
        }
    }

    /// Noise level used for generation; `volatile_decline` always runs at
    /// the top of the documented range.
    pub fn effective_noise_cv(&self) -> f64 {
        if self.shape() == PatternKind::VolatileDecline {
            NOISE_CV_RANGE.1
        } else {
            self.noise_cv
        }
    }

    /// Change days of the shape: the explicit override, or the defaults.
    pub fn resolved_change_days(&self) -> Vec<u32> {
        if let Some(days) = &self.change_days {
            return days.clone();
        }
        let n = self.duration_days;
        match self.shape() {
            PatternKind::ClassicWearOut => vec![n / 4],
            PatternKind::SharpDrop => vec![n / 2 + 1],
            PatternKind::FatigueRecovery => vec![n / 3, 2 * n / 3],
            PatternKind::VolatileDecline | PatternKind::GradualLinearDecay => vec![self.onset_day],
            PatternKind::MultiStageDecline => (1..=self.steps)
                .map(|j| j * n / (self.steps + 1) + 1)
                .collect(),
            PatternKind::NonContinuous => unreachable!("shape() unwraps non_continuous"),
        }
    }

    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut p = Vec::new();
        if self.strict_ranges {
            check_range(
                &mut p,
                "baseline_ctr",
                self.baseline_ctr,
                BASELINE_CTR_RANGE,
            );
            check_range(
                &mut p,
                "weekly_decay_rate",
                self.weekly_decay_rate,
                WEEKLY_DECAY_RANGE,
            );
            if self.noise_cv != 0.0 {
                check_range(&mut p, "noise_cv", self.noise_cv, NOISE_CV_RANGE);
            }
            check_range(&mut p, "duration_days", self.duration_days, DURATION_RANGE);
            check_range(&mut p, "drop_factor", self.drop_factor, DROP_FACTOR_RANGE);
            check_range(
                &mut p,
                "step_fraction",
                self.step_fraction,
                STEP_FRACTION_RANGE,
            );
            check_range(&mut p, "steps", self.steps, STEPS_RANGE);
        } else {
            check_range(
                &mut p,
                "baseline_ctr",
                self.baseline_ctr,
                (f64::MIN_POSITIVE, 1.0),
            );
            check_range(
                &mut p,
                "weekly_decay_rate",
                self.weekly_decay_rate,
                (0.0, 7.0),
            );
            check_range(&mut p, "noise_cv", self.noise_cv, (0.0, 10.0));
            check_range(&mut p, "duration_days", self.duration_days, (2, 100_000));
            check_range(&mut p, "drop_factor", self.drop_factor, (0.0, 1.0));
            check_range(&mut p, "step_fraction", self.step_fraction, (0.0, 1.0));
            check_range(&mut p, "steps", self.steps, (1, self.duration_days.max(1)));
        }
        if self.impressions_mean == 0 {
            p.push("impressions_mean must be positive".into());
        }
        if !(self.gap_fraction >= 0.0 && self.gap_fraction < 1.0) {
            p.push(format!(
                "gap_fraction = {} outside [0, 1)",
                self.gap_fraction
            ));
        }
        if self.base_kind == PatternKind::NonContinuous {
            p.push("base_kind cannot itself be non_continuous".into());
        }
        if self.min_observations < 2 {
            p.push("min_observations must be at least 2".into());
        }
        if self.min_observations > self.duration_days as usize {
            p.push(format!(
                "min_observations ({}) exceeds duration_days ({})",
                self.min_observations, self.duration_days
            ));
        }
        let shape = self.shape();
        if matches!(
            shape,
            PatternKind::GradualLinearDecay | PatternKind::VolatileDecline
        ) && !(1..self.duration_days).contains(&self.onset_day)
        {
            p.push(format!(
                "onset_day = {} must fall within [1, {})",
                self.onset_day, self.duration_days
            ));
        }
        if shape == PatternKind::ClassicWearOut && self.weekly_decay_rate <= 0.0 {
            p.push("classic_wear_out needs a positive weekly_decay_rate".into());
        }

        let days = self.resolved_change_days();
        if days.windows(2).any(|w| w[1] <= w[0]) {
            p.push(format!("change days {days:?} are not strictly increasing"));
        }
        if days.iter().any(|&d| d < 2 || d > self.duration_days) {
            p.push(format!(
                "change days {days:?} must lie in [2, {}]",
                self.duration_days
            ));
        }
        let expected = match shape {
            PatternKind::FatigueRecovery => Some(2),
            PatternKind::MultiStageDecline => None,
            _ => Some(1),
        };
        if let Some(e) = expected {
            if days.len() != e {
                p.push(format!(
                    "{shape} takes {e} change day(s), got {}",
                    days.len()
                ));
            }
        } else if days.is_empty() {
            p.push("multi_stage_decline needs at least one step".into());
        }
        if shape == PatternKind::ClassicWearOut {
            if let Some(&tp) = days.first() {
                let b = self.weekly_decay_rate / 7.0;
                if b > 0.0 && f64::from(tp - 1) >= 1.0 / b {
                    p.push(format!("wear-in peak day {tp} too late for decay rate"));
                }
            }
        }

        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Noise-free CTR on day `day` (1-based).
    pub fn clean_ctr(&self, day: u32) -> f64 {
        let base = self.baseline_ctr;
        let days = self.resolved_change_days();
        let d = f64::from(day);
        let factor = match self.shape() {
            PatternKind::ClassicWearOut => {
                // (1 + r s) e^{-b s} with s = day - 1 peaks at s = 1/b - 1/r
                let b = self.weekly_decay_rate / 7.0;
                let sp = f64::from(days[0] - 1);
                let r = 1.0 / (1.0 / b - sp);
                let s = d - 1.0;
                (1.0 + r * s) * (-b * s).exp()
            }
            PatternKind::SharpDrop => {
                if day >= days[0] {
                    self.drop_factor
                } else {
                    1.0
                }
            }
            PatternKind::FatigueRecovery => {
                let (t1, t2) = (f64::from(days[0]), f64::from(days[1]));
                if d >= t2 {
                    RECOVERY_LEVEL
                } else if d > t1 {
                    1.0 - (1.0 - RECOVERY_TROUGH) * (d - t1) / (t2 - t1)
                } else {
                    1.0
                }
            }
            PatternKind::VolatileDecline | PatternKind::GradualLinearDecay => {
                let onset = f64::from(days[0]);
                if d > onset {
                    (1.0 - self.weekly_decay_rate * (d - onset) / 7.0).max(DECAY_FLOOR)
                } else {
                    1.0
                }
            }
            PatternKind::MultiStageDecline => {
                let passed = days.iter().filter(|&&c| day >= c).count() as i32;
                (1.0 - self.step_fraction).powi(passed)
            }
            PatternKind::NonContinuous => unreachable!("shape() unwraps non_continuous"),
        };
        base * factor
    }

    pub fn date_of(&self, day: u32) -> NaiveDate {
        self.start_date + Duration::days(i64::from(day) - 1)
    }
}

/// True change days, 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub change_days: Vec<u32>,
}

/// A generated series together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub id: String,
    pub spec: PatternSpec,
    pub truth: GroundTruth,
    pub series: TimeSeries,
    /// Noise-free CTR for each retained observation.
    pub clean_ctr: Vec<f64>,
}

impl SyntheticSeries {
    pub fn truth_dates(&self) -> Vec<NaiveDate> {
        self.truth
            .change_days
            .iter()
            .map(|&d| self.spec.date_of(d))
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            id: self.id.clone(),
            spec: self.spec.clone(),
            effective_noise_cv: self.spec.effective_noise_cv(),
            truth: self.truth.clone(),
            change_dates: self.truth_dates(),
            n_observations: self.series.len(),
        }
    }
}

/// JSON sidecar written next to each generated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub id: String,
    pub spec: PatternSpec,
    pub effective_noise_cv: f64,
    pub truth: GroundTruth,
    pub change_dates: Vec<NaiveDate>,
    pub n_observations: usize,
}

/// Log-normal with mean 1 and the given coefficient of variation.
fn unit_lognormal(cv: f64) -> LogNormal<f64> {
    let sigma2 = (1.0 + cv * cv).ln();
    LogNormal::new(-sigma2 / 2.0, sigma2.sqrt()).expect("finite parameters")
}

/// Draws one series. Deterministic in `spec` (including its seed).
pub fn generate(spec: &PatternSpec) -> Result<SyntheticSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cv = spec.effective_noise_cv();
    let noisy = cv > 0.0;
    let ctr_noise = unit_lognormal(cv);
    let imp_noise = unit_lognormal(IMPRESSIONS_CV);
    let mean_imps = spec.impressions_mean as f64;

    let mut points = Vec::with_capacity(spec.duration_days as usize);
    let mut clean = Vec::with_capacity(spec.duration_days as usize);
    for day in 1..=spec.duration_days {
        let c = spec.clean_ctr(day);
        let (impressions, clicks) = if noisy {
            let imps = ((mean_imps * imp_noise.sample(&mut rng)).round() as u64).max(1);
            let p = (c * ctr_noise.sample(&mut rng)).clamp(0.0, 1.0);
            let clicks = Binomial::new(imps, p)
                .expect("p in [0, 1]")
                .sample(&mut rng);
            (imps, clicks)
        } else {
            let imps = spec.impressions_mean;
            (imps, ((c * imps as f64).round() as u64).min(imps))
        };
        points.push(SeriesPoint::new(
            spec.date_of(day),
            impressions,
            clicks,
            None,
        )?);
        clean.push(c);
    }

    if spec.kind == PatternKind::NonContinuous {
        let draws: Vec<f64> = (0..points.len()).map(|_| rng.random::<f64>()).collect();
        let mut keep: Vec<bool> = draws.iter().map(|&u| u >= spec.gap_fraction).collect();
        let short = spec
            .min_observations
            .saturating_sub(keep.iter().filter(|&&k| k).count());
        if short > 0 {
            // restore the dropped days that came closest to surviving
            let mut dropped: Vec<usize> = (0..keep.len()).filter(|&i| !keep[i]).collect();
            dropped.sort_by(|&a, &b| draws[b].total_cmp(&draws[a]).then(a.cmp(&b)));
            for &i in dropped.iter().take(short) {
                keep[i] = true;
            }
        }
        let mut flags = keep.iter();
        points.retain(|_| *flags.next().expect("one flag per point"));
        let mut flags = keep.iter();
        clean.retain(|_| *flags.next().expect("one flag per point"));
    }

    Ok(SyntheticSeries {
        id: format!("{}_{}", spec.kind, spec.seed),
        truth: GroundTruth {
            change_days: spec.resolved_change_days(),
        },
        series: TimeSeries::new(points)?,
        clean_ctr: clean,
        spec: spec.clone(),
    })
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Draws the shape parameters of `template` (baseline, decay, drop, steps,
/// seed) from their documented ranges, leaving everything else untouched.
pub fn sample_shape(template: &PatternSpec, rng: &mut ChaCha8Rng) -> PatternSpec {
    PatternSpec {
        baseline_ctr: uniform(rng, BASELINE_CTR_RANGE),
        weekly_decay_rate: uniform(rng, WEEKLY_DECAY_RANGE),
        drop_factor: uniform(rng, DROP_FACTOR_RANGE),
        step_fraction: uniform(rng, STEP_FRACTION_RANGE),
        steps: rng.random_range(STEPS_RANGE.0..=STEPS_RANGE.1),
        seed: rng.random(),
        ..template.clone()
    }
}

/// A spec of `kind` with every ranged parameter drawn from its documented
/// range.
pub fn sample_spec(kind: PatternKind, rng: &mut ChaCha8Rng) -> PatternSpec {
    let mut spec = sample_shape(&PatternSpec::new(kind, 0), rng);
    spec.noise_cv = uniform(rng, NOISE_CV_RANGE);
    spec.duration_days = rng.random_range(DURATION_RANGE.0..=DURATION_RANGE.1);
    spec
}

fn generate_all(specs: Vec<(String, PatternSpec)>) -> Result<Vec<SyntheticSeries>> {
    specs
        .into_par_iter()
        .map(|(id, spec)| {
            let mut s = generate(&spec)?;
            s.id = id;
            Ok(s)
        })
        .collect()
}

/// `n_per_pattern` series of each kind with fully sampled parameters.
/// Parameters are drawn sequentially from `master_seed`, so the corpus is
/// reproducible regardless of thread count.
pub fn generate_batch(
    kinds: &[PatternKind],
    n_per_pattern: usize,
    master_seed: u64,
) -> Result<Vec<SyntheticSeries>> {
    if n_per_pattern == 0 {
        return Err(Error::Config("n_per_pattern must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let specs = kinds
        .iter()
        .flat_map(|&kind| (0..n_per_pattern).map(move |i| (kind, i)))
        .map(|(kind, i)| (format!("{kind}_{i:04}"), sample_spec(kind, &mut rng)))
        .collect();
    generate_all(specs)
}

/// `n` variations of `template`: shape parameters are sampled, while kind,
/// duration, noise and gap settings are held fixed.
pub fn generate_corpus(
    template: &PatternSpec,
    n: usize,
    master_seed: u64,
) -> Result<Vec<SyntheticSeries>> {
    if n == 0 {
        return Err(Error::Config("corpus size must be at least 1".into()));
    }
    template.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let specs = (0..n)
        .map(|i| {
            (
                format!("{}_{i:04}", template.kind),
                sample_shape(template, &mut rng),
            )
        })
        .collect();
    generate_all(specs)
}
