//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigfatigue::baselines::Method;
use sigfatigue::detector::classify_segments;
use sigfatigue::eval::{self, default_corpus, MatchPolicy, LOW_NOISE_CV};
use sigfatigue::sigcore::{
    chen_concat, flat_len, flatten, levy_area, log_signature, path_signature, polyline_signature,
    tensor_exp,
};
use sigfatigue::synth::{generate, PatternKind, PatternSpec};
use sigfatigue::wastage::{compute_wastage, lost_clicks, CpcSource};
use sigfatigue::{
    detect, distance_series, DetectorConfig, NormalizedPath, SeriesPoint, TensorSeq, TimeSeries,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_unit_path(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    let mut ts: Vec<f64> = (0..n - 2).map(|_| rng.random::<f64>()).collect();
    ts.push(0.0);
    ts.push(1.0);
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    while ts.len() < n {
        // vanishingly unlikely; keep the path strictly increasing in t
        ts.push(1.0 + ts.len() as f64);
        ts.sort_by(f64::total_cmp);
    }
    ts.into_iter()
        .map(|t| [t.min(1.0), rng.random::<f64>()])
        .collect()
}

fn signature_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pts = random_unit_path(&mut rng, 20);
        let path = NormalizedPath::new(pts.clone()).map_err(|e| e.to_string())?;
        let exact = flatten(&path_signature(&path, 3).map_err(|e| e.to_string())?);
        let as_vecs: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        let reference = oracle::richardson_signature(&as_vecs, 3, 10_000);
        for (a, b) in exact.iter().zip(&reference) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 30.0,
        format!("worst relative error {worst:.2e} (limit 1e-6), {secs:.1}s (limit 30s)"),
    )
}

fn chen_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..=30);
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let split = rng.random_range(1..n - 1);
        let whole = polyline_signature(&pts, 3).map_err(|e| e.to_string())?;
        let left = polyline_signature(&pts[..=split], 3).map_err(|e| e.to_string())?;
        let right = polyline_signature(&pts[split..], 3).map_err(|e| e.to_string())?;
        let joined = chen_concat(&left, &right).map_err(|e| e.to_string())?;
        for (a, b) in flatten(&joined).iter().zip(flatten(&whole).iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("worst absolute error {worst:.2e} (limit 1e-12)"),
    )
}

fn dimension() -> Outcome {
    let path =
        NormalizedPath::new(vec![[0.0, 0.0], [0.5, 1.0], [1.0, 0.2]]).map_err(|e| e.to_string())?;
    let sig = path_signature(&path, 3).map_err(|e| e.to_string())?;
    let (formula, actual) = (flat_len(2, 3), flatten(&sig).len());
    check(
        formula == 14 && actual == 14,
        format!("flat_len {formula}, flattened {actual}"),
    )
}

fn log_signature_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut round_trip, mut sig_round_trip, mut antisym) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let levels: Vec<Vec<f64>> = (1..=3)
            .map(|k| {
                (0..2usize.pow(k))
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let x = TensorSeq::from_levels(2, 0.0, levels).map_err(|e| e.to_string())?;
        let back = log_signature(&tensor_exp(&x).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        for (a, b) in flatten(&back).iter().zip(flatten(&x).iter()) {
            round_trip = round_trip.max((a - b).abs());
        }

        let pts: Vec<[f64; 2]> = (0..10)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let sig = polyline_signature(&pts, 3).map_err(|e| e.to_string())?;
        let log = log_signature(&sig).map_err(|e| e.to_string())?;
        let again = tensor_exp(&log).map_err(|e| e.to_string())?;
        for (a, b) in flatten(&again).iter().zip(flatten(&sig).iter()) {
            sig_round_trip = sig_round_trip.max((a - b).abs());
        }
        let l2 = log.level(2);
        antisym = antisym
            .max(l2[0].abs())
            .max(l2[3].abs())
            .max((l2[1] + l2[2]).abs());
    }
    let l_path =
        polyline_signature(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], 3).map_err(|e| e.to_string())?;
    let reversed =
        polyline_signature(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 3).map_err(|e| e.to_string())?;
    let (a, b) = (levy_area(&l_path, 0, 1), levy_area(&reversed, 0, 1));
    check(
        round_trip <= 1e-12 && sig_round_trip <= 1e-12 && antisym <= 1e-12 && a == 0.5 && b == -0.5,
        format!(
            "log(exp x) err {round_trip:.2e}, exp(log S) err {sig_round_trip:.2e}, \
             level-2 symmetric part {antisym:.2e}, L-path areas {a} / {b}"
        ),
    )
}

fn sharp_drop_detection() -> Outcome {
    let cfg = DetectorConfig {
        window: 14,
        k: 1.5,
        depth: 3,
        ..DetectorConfig::default()
    };
    let spec = PatternSpec {
        noise_cv: 0.0,
        ..PatternSpec::new(PatternKind::SharpDrop, 42)
    };
    let s = generate(&spec).map_err(|e| e.to_string())?;
    let truth = s.truth_dates();
    let report = detect(&s.series, &cfg).map_err(|e| e.to_string())?;
    let found = report.change_dates();
    let near = found.len() == 1 && (found[0] - truth[0]).num_days().abs() <= 3;
    let single = eval::score(&found, &truth, MatchPolicy::default());

    let corpus = default_corpus(PatternKind::SharpDrop, LOW_NOISE_CV).map_err(|e| e.to_string())?;
    let ev = eval::evaluate(&Method::Signature(cfg), &corpus, MatchPolicy::default())
        .map_err(|e| e.to_string())?;
    let delay = ev.aggregate.mean_delay_days;
    let delay_ok = delay.is_some_and(|d| (-3.0..=0.0).contains(&d));
    check(
        near && single.recall == 1.0 && delay_ok,
        format!(
            "noiseless: change points {found:?} vs truth {}, recall {}; \
             low-noise corpus (n={}) mean delay {delay:?} (want [-3, 0]), recall {:.2}",
            truth[0],
            single.recall,
            corpus.len(),
            ev.aggregate.recall
        ),
    )
}

fn paper_recall() -> Outcome {
    let policy = MatchPolicy::default();
    let at = |k: f64| {
        Method::Signature(DetectorConfig {
            window: 14,
            k,
            ..DetectorConfig::default()
        })
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [PatternKind::GradualLinearDecay, PatternKind::SharpDrop] {
        let corpus =
            default_corpus(kind, PatternSpec::default().noise_cv).map_err(|e| e.to_string())?;
        let low = eval::evaluate(&at(1.5), &corpus, policy)
            .map_err(|e| e.to_string())?
            .aggregate;
        let high = eval::evaluate(&at(2.5), &corpus, policy)
            .map_err(|e| e.to_string())?
            .aggregate;
        ok &= low.recall == 1.0 && low.precision > 0.0 && high.precision >= low.precision;
        parts.push(format!(
            "{kind}: recall {:.2}, precision {:.3} (k=1.5) -> {:.3} (k=2.5)",
            low.recall, low.precision, high.precision
        ));
    }
    check(ok, parts.join("; "))
}

fn monotone_in_k() -> Outcome {
    let mut checked = 0;
    let mut violations = Vec::new();
    for kind in PatternKind::ALL {
        let corpus =
            default_corpus(kind, PatternSpec::default().noise_cv).map_err(|e| e.to_string())?;
        for s in &corpus {
            let counts: Vec<usize> = [1.5, 2.0, 2.5]
                .iter()
                .map(|&k| {
                    let cfg = DetectorConfig {
                        k,
                        ..DetectorConfig::default()
                    };
                    detect(&s.series, &cfg).map(|r| r.change_points.len())
                })
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            checked += 1;
            if counts.windows(2).any(|w| w[1] > w[0]) {
                violations.push(format!("{} {counts:?}", s.id));
            }
        }
    }
    check(
        violations.is_empty(),
        format!(
            "{checked} series, {} violations {:?}",
            violations.len(),
            violations
        ),
    )
}

fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Duration::days(n - 1)
}

fn wastage_exact() -> Outcome {
    let pts = (1..=20)
        .map(|t| SeriesPoint::new(day(t), 100_000, if t <= 10 { 2_000 } else { 1_000 }, None))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let series = TimeSeries::new(pts).map_err(|e| e.to_string())?;
    let segments = classify_segments(&series, &[day(11)], 0.05).map_err(|e| e.to_string())?;
    let report = compute_wastage(&series, &segments, CpcSource::Constant(1.25))
        .map_err(|e| e.to_string())?;
    let direct = lost_clicks(0.02, 0.01, 100_000.0) * 1.25;
    let all_exact = report.daily.len() == 10 && report.daily.iter().all(|d| d.wastage == 1250.0);
    check(
        direct == 1250.0 && all_exact,
        format!(
            "formula {direct}, report days {} with wastage {:?}",
            report.daily.len(),
            report.daily.first().map(|d| d.wastage)
        ),
    )
}

fn gap_robustness() -> Outcome {
    let cfg = DetectorConfig {
        window: 14,
        k: 1.5,
        ..DetectorConfig::default()
    };
    let template = PatternSpec {
        gap_fraction: 0.3,
        base_kind: PatternKind::SharpDrop,
        ..PatternSpec::new(PatternKind::NonContinuous, 0)
    };
    let corpus = eval::labelled(
        &sigfatigue::synth::generate_corpus(
            &template,
            eval::DEFAULT_CORPUS_SIZE,
            eval::DEFAULT_CORPUS_SEED,
        )
        .map_err(|e| e.to_string())?,
    );
    let mean_len =
        corpus.iter().map(|s| s.series.len()).sum::<usize>() as f64 / corpus.len() as f64;
    let ev = eval::evaluate(
        &Method::Signature(cfg),
        &corpus,
        MatchPolicy { tolerance_days: 5 },
    )
    .map_err(|e| e.to_string())?;
    check(
        ev.aggregate.recall == 1.0,
        format!(
            "n={} (mean {mean_len:.1} of 120 days kept), recall {:.2} at +-5 days, precision {:.3}",
            corpus.len(),
            ev.aggregate.recall,
            ev.aggregate.precision
        ),
    )
}

fn long_series(days: u32) -> Result<TimeSeries, String> {
    let spec = PatternSpec {
        duration_days: days,
        strict_ranges: false,
        ..PatternSpec::new(PatternKind::SharpDrop, 10)
    };
    Ok(generate(&spec).map_err(|e| e.to_string())?.series)
}

fn median_time(series: &TimeSeries, cfg: &DetectorConfig) -> Result<Duration, String> {
    distance_series(series, cfg).map_err(|e| e.to_string())?;
    let mut runs: Vec<Duration> = (0..5)
        .map(|_| {
            let t = Instant::now();
            distance_series(series, cfg).map(|_| t.elapsed())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    runs.sort();
    Ok(runs[2])
}

fn linear_scaling() -> Outcome {
    let cfg = DetectorConfig::default();
    let t2000 = median_time(&long_series(2000)?, &cfg)?;
    let t4000 = median_time(&long_series(4000)?, &cfg)?;
    let ratio = t4000.as_secs_f64() / t2000.as_secs_f64();
    let year = long_series(365)?;
    let start = Instant::now();
    detect(&year, &cfg).map_err(|e| e.to_string())?;
    let one = start.elapsed();
    check(
        ratio <= 2.6 && one < Duration::from_millis(250),
        format!(
            "T=2000 {:.2}ms, T=4000 {:.2}ms, ratio {ratio:.2} (limit 2.6); 365-day detect {:.2}ms",
            t2000.as_secs_f64() * 1e3,
            t4000.as_secs_f64() * 1e3,
            one.as_secs_f64() * 1e3
        ),
    )
}

fn constant_null() -> Outcome {
    let pts = (1..=120)
        .map(|t| SeriesPoint::new(day(t), 50_000, 1_000, Some(1_250.0)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let series = TimeSeries::new(pts).map_err(|e| e.to_string())?;
    let report = detect(&series, &DetectorConfig::default()).map_err(|e| e.to_string())?;
    let w = compute_wastage(&series, &report.segments, CpcSource::Observed)
        .map_err(|e| e.to_string())?;
    check(
        report.change_points.is_empty() && w.total_wastage == 0.0,
        format!(
            "{} change points, total wastage {}",
            report.change_points.len(),
            w.total_wastage
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sigfatigue"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn cli_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
    run_cli(&[
        "generate",
        "--pattern",
        "sharp_drop",
        "--n",
        "6",
        "--seed",
        "11",
        "--out",
        &d("corpus"),
    ])?;
    run_cli(&[
        "detect",
        "--input",
        &d("corpus/sharp_drop_0000.csv"),
        "--out",
        &d("detect.json"),
        "--plot",
        &d("detect.svg"),
    ])?;
    run_cli(&[
        "evaluate",
        "--corpus",
        &d("corpus/corpus.json"),
        "--out",
        &d("evaluate.json"),
        "--csv",
        &d("evaluate.csv"),
    ])?;
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        for entry in std::fs::read_dir(&p).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                files.push((rel, std::fs::read(&path).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = cli_outputs(a.path())?;
    let fb = cli_outputs(b.path())?;
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        fa.len() == fb.len() && differing.is_empty() && !fa.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("signature matches nested Riemann sums", signature_oracle),
        ("Chen identity", chen_identity),
        ("flattened length for d=2, D=3", dimension),
        (
            "log-signature round trip, antisymmetry, Levy area",
            log_signature_checks,
        ),
        ("sharp-drop detection and delay", sharp_drop_detection),
        ("recall on gradual and sharp corpora", paper_recall),
        ("change point count monotone in k", monotone_in_k),
        ("wastage arithmetic", wastage_exact),
        ("gap robustness", gap_robustness),
        ("linear scaling and single-series latency", linear_scaling),
        ("constant-series null", constant_null),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
