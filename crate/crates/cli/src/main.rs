mod plot;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sigfatigue::baselines::Method;
use sigfatigue::eval::{
    self, LabelledSeries, MatchPolicy, SensitivityGrid, DEFAULT_BOOTSTRAP_SAMPLES,
    DEFAULT_CORPUS_SEED, DEFAULT_CORPUS_SIZE,
};
use sigfatigue::io::{read_series, write_series};
use sigfatigue::synth::{self, Manifest, PatternKind, PatternSpec, SyntheticSeries};
use sigfatigue::wastage::{compute_wastage, write_daily_csv, CpcSource};
use sigfatigue::{detect, DetectorConfig, Error, FeatureMode, Metric, TimeSeries, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "sigfatigue",
    version,
    about = "Creative-fatigue detection with path signatures"
)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic series (CSV) with manifests (JSON).
    Generate(GenerateArgs),
    /// Detect change points in a series.
    Detect(DetectArgs),
    /// Quantify spend lost to below-benchmark performance.
    Wastage(WastageArgs),
    /// Score a detection method on a labelled corpus.
    Evaluate(EvaluateArgs),
    /// Evaluate the signature detector over a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct DetectorFlags {
    /// Window size in observations.
    #[arg(long, default_value_t = 14)]
    window: usize,
    /// Signature truncation depth.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Threshold multiplier on the distance standard deviation.
    #[arg(long, default_value_t = 2.0)]
    k: f64,
    /// Significance level of the segment trend test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Merge flags within this many days (default: the window size; 0 disables).
    #[arg(long)]
    merge_gap: Option<u32>,
    /// `full` signature or `log` signature features.
    #[arg(long, default_value = "full")]
    feature_mode: FeatureMode,
}

impl DetectorFlags {
    fn config(&self) -> DetectorConfig {
        DetectorConfig {
            window: self.window,
            depth: self.depth,
            k: self.k,
            alpha: self.alpha,
            merge_gap: self.merge_gap,
            feature_mode: self.feature_mode,
        }
    }
}

/// Overrides for generated series.
#[derive(Args, Clone, Default)]
struct SpecFlags {
    #[arg(long)]
    baseline_ctr: Option<f64>,
    #[arg(long)]
    weekly_decay: Option<f64>,
    #[arg(long)]
    noise_cv: Option<f64>,
    #[arg(long)]
    duration: Option<u32>,
    #[arg(long)]
    impressions: Option<u64>,
    #[arg(long)]
    gap_fraction: Option<f64>,
    #[arg(long)]
    drop_factor: Option<f64>,
    #[arg(long)]
    step_fraction: Option<f64>,
    #[arg(long)]
    steps: Option<u32>,
    /// Shape thinned out by `non_continuous`.
    #[arg(long)]
    base_pattern: Option<PatternKind>,
    #[arg(long)]
    onset_day: Option<u32>,
    /// Allow parameters outside the documented ranges.
    #[arg(long)]
    no_strict_ranges: bool,
}

impl SpecFlags {
    fn any(&self) -> bool {
        self.baseline_ctr.is_some()
            || self.weekly_decay.is_some()
            || self.noise_cv.is_some()
            || self.duration.is_some()
            || self.impressions.is_some()
            || self.gap_fraction.is_some()
            || self.drop_factor.is_some()
            || self.step_fraction.is_some()
            || self.steps.is_some()
            || self.base_pattern.is_some()
            || self.onset_day.is_some()
            || self.no_strict_ranges
    }

    fn apply(&self, mut spec: PatternSpec) -> PatternSpec {
        macro_rules! set {
            ($flag:ident => $field:ident) => {
                if let Some(v) = self.$flag {
                    spec.$field = v;
                }
            };
        }
        set!(baseline_ctr => baseline_ctr);
        set!(weekly_decay => weekly_decay_rate);
        set!(noise_cv => noise_cv);
        set!(duration => duration_days);
        set!(impressions => impressions_mean);
        set!(gap_fraction => gap_fraction);
        set!(drop_factor => drop_factor);
        set!(step_fraction => step_fraction);
        set!(steps => steps);
        set!(base_pattern => base_kind);
        set!(onset_day => onset_day);
        if self.no_strict_ranges {
            spec.strict_ranges = false;
        }
        spec
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Pattern to generate.
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    pattern: Option<PatternKind>,
    /// Generate every pattern with parameters sampled from their ranges.
    #[arg(long)]
    all: bool,
    /// Series per pattern. Without it, `--pattern` writes one series.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    spec: SpecFlags,
}

#[derive(Args)]
struct DetectArgs {
    /// Input CSV (`date,impressions,clicks[,cost]`).
    #[arg(long)]
    input: PathBuf,
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Column to analyse.
    #[arg(long, default_value = "ctr")]
    metric: Metric,
    /// Also write an SVG chart here.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorFlags,
}

#[derive(Args)]
struct WastageArgs {
    #[arg(long)]
    input: PathBuf,
    /// Constant cost per click; otherwise taken from the cost column.
    #[arg(long)]
    cpc: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write daily rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    detector: DetectorFlags,
}

/// Where a labelled corpus comes from.
#[derive(Args, Clone)]
struct CorpusFlags {
    /// `corpus.json` written by `generate --n`.
    #[arg(long, conflicts_with = "pattern")]
    corpus: Option<PathBuf>,
    /// Generate a corpus of this pattern in memory instead.
    #[arg(long, required_unless_present = "corpus")]
    pattern: Option<PatternKind>,
    #[arg(long, default_value_t = DEFAULT_CORPUS_SIZE)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_CORPUS_SEED)]
    seed: u64,
    #[command(flatten)]
    spec: SpecFlags,
    /// Matching tolerance in days.
    #[arg(long, default_value_t = 3)]
    tolerance: u32,
    /// Bootstrap replicates for confidence intervals.
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_SAMPLES)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    /// signature, ma_crossover, cusum or rolling_regression.
    #[arg(long, default_value = "signature")]
    method: String,
    #[command(flatten)]
    corpus: CorpusFlags,
    #[command(flatten)]
    detector: DetectorFlags,
    #[arg(long, default_value_t = 7)]
    ma_short: usize,
    #[arg(long, default_value_t = 28)]
    ma_long: usize,
    #[arg(long, default_value_t = 0.5)]
    cusum_k: f64,
    #[arg(long, default_value_t = 5.0)]
    cusum_h: f64,
    #[arg(long, default_value_t = sigfatigue::baselines::CUSUM_BURN_IN)]
    cusum_burn_in: usize,
    #[arg(long, default_value_t = 7)]
    rr_window: usize,
    #[arg(long, default_value_t = 0.05)]
    rr_alpha: f64,
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-series scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    corpus: CorpusFlags,
    #[arg(long, value_delimiter = ',', default_values_t = [7usize, 14, 21])]
    windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.5, 2.0, 2.5])]
    ks: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize])]
    depths: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    merge_gap: Option<u32>,
    #[arg(long, default_value = "full")]
    feature_mode: FeatureMode,
    /// Report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// One CSV row per grid cell.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Index written next to a generated batch.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusIndex {
    schema_version: u32,
    master_seed: u64,
    entries: Vec<CorpusEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusEntry {
    id: String,
    csv: String,
    manifest: String,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_series(path: &Path) -> anyhow::Result<TimeSeries> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let ingested =
        read_series(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if !ingested.dropped.is_empty() {
        log::warn!("{} zero-impression day(s) skipped", ingested.dropped.len());
    }
    Ok(ingested.series)
}

fn save_generated(dir: &Path, s: &SyntheticSeries) -> anyhow::Result<CorpusEntry> {
    let csv = format!("{}.csv", s.id);
    let manifest = format!("{}.json", s.id);
    let mut w = create(&dir.join(&csv))?;
    write_series(&mut w, &s.series)?;
    w.flush()?;
    write_json(Some(&dir.join(&manifest)), &s.manifest())?;
    Ok(CorpusEntry {
        id: s.id.clone(),
        csv,
        manifest,
    })
}

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let generated = match (args.pattern, args.n) {
        (Some(kind), None) => {
            let spec = args.spec.apply(PatternSpec::new(kind, args.seed));
            vec![synth::generate(&spec)?]
        }
        (Some(kind), Some(n)) => {
            let template = args.spec.apply(PatternSpec::new(kind, 0));
            synth::generate_corpus(&template, n, args.seed)?
        }
        (None, n) => {
            if args.spec.any() {
                bail!(Error::Config(
                    "pattern parameters apply only with --pattern".into()
                ));
            }
            synth::generate_batch(&PatternKind::ALL, n.unwrap_or(1), args.seed)?
        }
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let entries = generated
        .iter()
        .map(|s| save_generated(&args.out, s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if args.n.is_some() || args.all {
        write_json(
            Some(&args.out.join("corpus.json")),
            &CorpusIndex {
                schema_version: SCHEMA_VERSION,
                master_seed: args.seed,
                entries,
            },
        )?;
    }
    log::info!("wrote {} series to {}", generated.len(), args.out.display());
    Ok(())
}

fn cmd_detect(args: &DetectArgs) -> anyhow::Result<()> {
    let series = load_series(&args.input)?.select_metric(args.metric)?;
    let report = detect(&series, &args.detector.config())?;
    write_json(args.out.as_deref(), &report)?;
    if let Some(path) = &args.plot {
        let title = args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut w = create(path)?;
        w.write_all(plot::render(&series, &report, &title).as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_wastage(args: &WastageArgs) -> anyhow::Result<()> {
    let series = load_series(&args.input)?;
    let report = detect(&series, &args.detector.config())?;
    let source = args.cpc.map_or(CpcSource::Observed, CpcSource::Constant);
    let wastage = compute_wastage(&series, &report.segments, source)?;
    write_json(args.out.as_deref(), &wastage)?;
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        write_daily_csv(&mut w, &wastage)?;
        w.flush()?;
    }
    Ok(())
}

fn load_corpus(flags: &CorpusFlags) -> anyhow::Result<Vec<LabelledSeries>> {
    if let Some(index_path) = &flags.corpus {
        let dir = index_path.parent().unwrap_or(Path::new("."));
        let text = fs::read_to_string(index_path)
            .with_context(|| format!("reading {}", index_path.display()))?;
        let index: CorpusIndex = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", index_path.display()))?;
        return index
            .entries
            .iter()
            .map(|e| {
                let manifest_path = dir.join(&e.manifest);
                let text = fs::read_to_string(&manifest_path)
                    .with_context(|| format!("reading {}", manifest_path.display()))?;
                let manifest: Manifest = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", manifest_path.display()))?;
                Ok(LabelledSeries {
                    id: e.id.clone(),
                    kind: manifest.spec.kind,
                    series: load_series(&dir.join(&e.csv))?,
                    truth: manifest.change_dates,
                })
            })
            .collect();
    }
    let kind = flags
        .pattern
        .expect("clap requires --pattern without --corpus");
    let template = flags.spec.apply(PatternSpec::new(kind, 0));
    Ok(eval::labelled(&synth::generate_corpus(
        &template, flags.n, flags.seed,
    )?))
}

fn method_from(args: &EvaluateArgs) -> anyhow::Result<Method> {
    Ok(match Method::from_name(&args.method)? {
        Method::Signature(_) => Method::Signature(args.detector.config()),
        Method::MaCrossover { .. } => Method::MaCrossover {
            short_window: args.ma_short,
            long_window: args.ma_long,
        },
        Method::Cusum { .. } => Method::Cusum {
            k_ref: args.cusum_k,
            h: args.cusum_h,
            burn_in: args.cusum_burn_in,
        },
        Method::RollingRegression { .. } => Method::RollingRegression {
            window: args.rr_window,
            alpha: args.rr_alpha,
        },
    })
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    id: &'a str,
    kind: PatternKind,
    n_detected: usize,
    n_true: usize,
    n_matched: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    mean_delay_days: Option<f64>,
}

fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let method = method_from(args)?;
    if let Method::Signature(cfg) = &method {
        cfg.validate()?;
    }
    let corpus = load_corpus(&args.corpus)?;
    let policy = MatchPolicy {
        tolerance_days: args.corpus.tolerance,
    };
    let ev = if corpus.len() >= 2 && args.corpus.bootstrap > 0 {
        eval::evaluate_with_ci(
            &method,
            &corpus,
            policy,
            args.corpus.bootstrap,
            args.corpus.bootstrap_seed,
        )?
    } else {
        eval::evaluate(&method, &corpus, policy)?
    };
    write_json(args.out.as_deref(), &ev)?;
    if let Some(path) = &args.csv {
        let rows: Vec<SeriesRow> = ev
            .per_series
            .iter()
            .map(|s| SeriesRow {
                id: &s.id,
                kind: s.kind,
                n_detected: s.metrics.n_detected,
                n_true: s.metrics.n_true,
                n_matched: s.metrics.n_matched,
                precision: s.metrics.precision,
                recall: s.metrics.recall,
                f1: s.metrics.f1,
                mean_delay_days: s.metrics.mean_delay_days,
            })
            .collect();
        let mut w = create(path)?;
        eval::write_rows_csv(&mut w, &rows)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let grid = SensitivityGrid {
        windows: args.windows.clone(),
        ks: args.ks.clone(),
        depths: args.depths.clone(),
    };
    let base = DetectorConfig {
        alpha: args.alpha,
        merge_gap: args.merge_gap,
        feature_mode: args.feature_mode,
        ..DetectorConfig::default()
    };
    for cfg in grid.configs(&base) {
        cfg.validate()?;
    }
    let corpus = load_corpus(&args.corpus)?;
    let policy = MatchPolicy {
        tolerance_days: args.corpus.tolerance,
    };
    let report = eval::sensitivity_report(
        &corpus,
        &grid,
        &base,
        policy,
        args.corpus.bootstrap,
        args.corpus.bootstrap_seed,
    )?;
    write_json(args.out.as_deref(), &report)?;
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        eval::write_rows_csv(&mut w, &report.rows)?;
        w.flush()?;
    }
    Ok(())
}

/// 2 for bad input or configuration, 3 when the data cannot support the
/// analysis, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::InsufficientData { .. } | Error::Degenerate(_)) => 3,
        Some(Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Wastage(a) => cmd_wastage(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
