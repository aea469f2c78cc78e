use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use callsignal::anonymizer::sample_corpus;
use callsignal::composite::{
    training_rows, weight_history, weight_history_stats, weighted_score, write_composite_csv, write_stats_csv,
    write_weights_csv, FirmSales,
};
use callsignal::corpus::{chunk_transcript, ingest_corpus, write_corpus};
use callsignal::econometrics::{fe_within, format_table, ols, ols_nw, NwLags, RegressionResult, StarThresholds};
use callsignal::error::Error;
use callsignal::panel::{
    aggregate_scores, annualize, build_frame, firm_sectors, read_panels, write_panels, DataColumn, FrameSpec, Level,
    MacroSeries, RegressionFrame, ScorePanel,
};
use callsignal::period::Frequency;
use callsignal::pipeline::{
    derive_seed, load_config, mask_corpus, run_pipeline, sales_column, score_column_name, synthetic, validate_config,
    write_mask_reports, Clock, EntityMode, LoadedConfig, RunError, RunManifest, RunOptions, Stage, MANIFEST_FILE,
};
use callsignal::scoring::{
    read_answers, read_scores, run_scoring, write_answers, write_scores, MockBackend, ModelBackend,
    OpenAiCompatBackend, QuestionId, ResponseCache, ScoringOptions, DEFAULT_API_KEY_ENV,
};
use callsignal::textval::{
    bucket_explanations, bundled_stopwords, bundled_wordlist, top_ngrams, write_ngram_tables, Bucket, Normalizer,
    SuffixLemmatizer,
};
use callsignal::var_engine::{bootstrap_irf, write_irf_csv, VarData, VarSpec};

/// Earnings-call expectation scores and the forecasting econometrics built on them.
#[derive(Parser)]
#[command(name = "callsignal", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSON Lines corpus and write its normalized form.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = callsignal::corpus::DEFAULT_MAX_WORDS)]
        max_words: usize,
    },
    /// Mask dates and named entities in a sample of calls.
    Mask {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        fraction: f64,
        #[arg(long, value_enum, default_value = "heuristic")]
        tagger: TaggerArg,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        /// Program for `--tagger external`; reads text on stdin, writes spans as JSON.
        #[arg(long)]
        tagger_command: Option<String>,
    },
    /// Ask every question of every chunk and average to call scores.
    Score(ScoreArgs),
    /// Equal-weighted national, industry and firm panels.
    Aggregate {
        #[arg(long)]
        scores: PathBuf,
        /// Corpus the scores came from, for sector lookup.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "national,industry,firm")]
        levels: Vec<Level>,
        #[arg(long, default_value = "all")]
        questions: String,
        #[arg(long)]
        no_annual: bool,
    },
    /// Build a forecasting regression frame.
    Frame(FrameArgs),
    /// Estimate regressions on one or more frames.
    Regress {
        #[arg(long, required = true, num_args = 1..)]
        frame: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "nw")]
        estimator: EstimatorArg,
        /// A lag count, or `auto`.
        #[arg(long, default_value = "auto")]
        nw_lags: String,
        /// Entity-clustered errors for the fixed-effects estimator.
        #[arg(long)]
        cluster: bool,
        #[arg(long)]
        no_intercept: bool,
    },
    /// Recursive VAR impulse responses with bootstrap bands.
    Var(VarArgs),
    /// Expanding-window composite weights and the weighted score.
    Composite {
        #[arg(long)]
        firm_panel: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Quarterly panels to weight; omit for weights only.
        #[arg(long)]
        panels: Option<PathBuf>,
        #[arg(long, default_value_t = callsignal::composite::DEFAULT_MIN_WINDOW)]
        min_window: usize,
        #[arg(long)]
        intercept: bool,
        #[arg(long, default_value = "all")]
        questions: String,
    },
    /// Most frequent phrases in low and high answer explanations.
    Ngrams {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        bucket: BucketArg,
        #[arg(long, value_delimiter = ',', default_value = "3,4")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run every configured stage, reusing unchanged results.
    Run {
        /// Re-run stages even when inputs are unchanged.
        #[arg(long)]
        force: bool,
    },
    /// Validate the configuration and summarize the last run.
    Report,
    /// Write the synthetic demonstration inputs.
    Synth {
        #[arg(long, default_value_t = 7)]
        data_seed: u64,
    },
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "all")]
    questions: String,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendArg,
    #[arg(long, default_value = "mock-1")]
    model: String,
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    max_inflight: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long, default_value_t = callsignal::corpus::DEFAULT_MAX_WORDS)]
    max_words: usize,
    /// Variable holding the bearer token.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    api_key_env: String,
}

#[derive(Args)]
struct FrameArgs {
    /// Quarterly score panels from `aggregate`.
    #[arg(long)]
    panels: PathBuf,
    /// Macro levels; required unless the level is `firm`.
    #[arg(long = "macro")]
    macro_csv: Option<PathBuf>,
    /// Firm sales; required for `--level firm`.
    #[arg(long)]
    firm_sales: Option<PathBuf>,
    #[arg(long, default_value = "real_gdp")]
    target: String,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    horizon: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    lags: usize,
    #[arg(long, default_value = "national")]
    level: Level,
    #[arg(long, default_value = "economy_us")]
    question: QuestionId,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
}

#[derive(Args)]
struct VarArgs {
    #[arg(long)]
    data: PathBuf,
    /// Extra series merged into the data, e.g. quarterly panels from `aggregate`.
    #[arg(long)]
    panels: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<String>>,
    #[arg(long, default_value_t = 2)]
    lags: usize,
    #[arg(long, default_value = "ai_economy_score")]
    shock: String,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0.95)]
    coverage: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaggerArg {
    None,
    Heuristic,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    OpenaiCompat,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Ols,
    Nw,
    Fe,
}

#[derive(Clone, Copy, ValueEnum)]
enum BucketArg {
    Low,
    High,
    Both,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn stage(stage: Stage) -> impl FnOnce(Error) -> Failure {
        move |e| Failure { code: stage.exit_code() as u8, message: format!("{stage}: {e}") }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 3 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

type CliResult = std::result::Result<(), Failure>;

struct Env {
    config: Option<LoadedConfig>,
    seed: Option<u64>,
    out: PathBuf,
}

impl Env {
    fn new(cli: &Cli) -> std::result::Result<Self, Failure> {
        let config = cli.config.as_deref().map(load_config).transpose()?;
        let out = match (&cli.out, &config) {
            (Some(o), _) => o.clone(),
            (None, Some(c)) => c.output_dir(),
            (None, None) => PathBuf::from("out"),
        };
        let seed = cli.seed.or(config.as_ref().map(|c| c.config.seed));
        Ok(Env { config, seed, out })
    }

    fn seed(&self) -> std::result::Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure { code: 2, message: "a seed is required (--seed or --config)".into() })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = Env::new(&cli).and_then(|env| dispatch(cli.command, env));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command, env: Env) -> CliResult {
    match command {
        Command::Ingest { corpus, max_words } => {
            ingest(&env, &corpus, max_words).map_err(Failure::stage(Stage::Ingest))
        }
        Command::Mask { corpus, fraction, tagger, gazetteer, tagger_command } => {
            let seed = env.seed()?;
            mask(&env, &corpus, fraction, seed, tagger, gazetteer.as_deref(), tagger_command.as_deref())
                .map_err(Failure::stage(Stage::Mask))
        }
        Command::Score(args) => {
            let seed = env.seed()?;
            score(&env, &args, seed).map_err(Failure::stage(Stage::Score))
        }
        Command::Aggregate { scores, corpus, levels, questions, no_annual } => {
            aggregate(&env, &scores, &corpus, &levels, &questions, !no_annual).map_err(Failure::stage(Stage::Aggregate))
        }
        Command::Frame(args) => frame(&env, &args).map_err(Failure::stage(Stage::Frames)),
        Command::Regress { frame, estimator, nw_lags, cluster, no_intercept } => {
            regress(&env, &frame, estimator, &nw_lags, cluster, !no_intercept).map_err(Failure::stage(Stage::Regress))
        }
        Command::Var(args) => {
            let seed = env.seed()?;
            var(&env, &args, seed).map_err(Failure::stage(Stage::Var))
        }
        Command::Composite { firm_panel, scores, panels, min_window, intercept, questions } => {
            composite(&env, &firm_panel, &scores, panels.as_deref(), min_window, intercept, &questions)
                .map_err(Failure::stage(Stage::Composite))
        }
        Command::Ngrams { answers, bucket, n, top } => {
            ngrams(&env, &answers, bucket, &n, top).map_err(Failure::stage(Stage::Ngrams))
        }
        Command::Run { force } => run(env, force),
        Command::Report => report(&env),
        Command::Synth { data_seed } => {
            let spec = synthetic::SyntheticSpec { seed: data_seed, ..Default::default() };
            synthetic::write_bundle(&env.out, &spec)?;
            println!("wrote synthetic inputs to {}", env.out.display());
            Ok(())
        }
    }
}

type R = callsignal::error::Result<()>;

fn ensure_dir(dir: &Path) -> R {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ingest(env: &Env, corpus: &Path, max_words: usize) -> R {
    let calls = ingest_corpus(corpus)?;
    let chunks: usize = calls.iter().map(|t| chunk_transcript(t, max_words).map(|c| c.len())).sum::<Result<_, _>>()?;
    ensure_dir(&env.out)?;
    write_corpus(&env.out.join("corpus.jsonl"), &calls)?;
    println!("{} calls, {chunks} chunks", calls.len());
    Ok(())
}

fn mask(
    env: &Env,
    corpus: &Path,
    fraction: f64,
    seed: u64,
    tagger: TaggerArg,
    gazetteer: Option<&Path>,
    command: Option<&str>,
) -> R {
    let calls = ingest_corpus(corpus)?;
    let sample = sample_corpus(&calls, fraction, derive_seed(seed, "mask"))?;
    let mode = match tagger {
        TaggerArg::None => EntityMode::None,
        TaggerArg::Heuristic => EntityMode::Heuristic,
        TaggerArg::External => EntityMode::Command,
    };
    let (masked, reports) = mask_corpus(&sample, mode, gazetteer, command)?;
    ensure_dir(&env.out)?;
    write_corpus(&env.out.join("masked_corpus.jsonl"), &masked)?;
    write_mask_reports(&env.out.join("mask_report.jsonl"), &reports)?;
    println!("masked {} of {} calls", masked.len(), calls.len());
    Ok(())
}

fn score(env: &Env, a: &ScoreArgs, seed: u64) -> R {
    let calls = ingest_corpus(&a.corpus)?;
    let backend: Box<dyn ModelBackend> = match a.backend {
        BackendArg::Mock => Box::new(MockBackend::new(a.model.clone(), derive_seed(seed, "score"))),
        BackendArg::OpenaiCompat => Box::new(OpenAiCompatBackend::new(
            a.base_url.as_deref().ok_or_else(|| Error::invalid("--base-url is required for openai-compat"))?,
            &a.model,
            &a.api_key_env,
            Duration::from_secs(a.timeout_secs),
        )),
    };
    let cache = a.cache.as_deref().map(ResponseCache::open).transpose()?;
    let opts = ScoringOptions {
        max_words: a.max_words,
        max_inflight: a.max_inflight,
        retries: a.retries,
        temperature: a.temperature,
        seed: Some(derive_seed(seed, "score")),
        ..Default::default()
    };
    let out = run_scoring(&calls, &QuestionId::parse_set(&a.questions)?, backend.as_ref(), cache.as_ref(), &opts)?;
    ensure_dir(&env.out)?;
    write_answers(&env.out.join("answers.csv"), &out.answers)?;
    write_scores(&env.out.join("scores.csv"), &out.scores)?;
    println!(
        "{} answers, {} scores ({} backend calls, {} cache hits)",
        out.answers.len(),
        out.scores.len(),
        out.stats.backend_calls,
        out.stats.cache_hits
    );
    Ok(())
}

fn aggregate(env: &Env, scores: &Path, corpus: &Path, levels: &[Level], questions: &str, annual: bool) -> R {
    let scores = read_scores(scores)?;
    let sectors = firm_sectors(&ingest_corpus(corpus)?);
    let mut quarterly = Vec::new();
    for &level in levels {
        for q in QuestionId::parse_set(questions)? {
            quarterly.push(aggregate_scores(&scores, &sectors, level, q)?);
        }
    }
    ensure_dir(&env.out)?;
    write_panels(&env.out.join("panel_quarterly.csv"), &quarterly)?;
    if annual {
        let yearly = quarterly.iter().map(annualize).collect::<callsignal::error::Result<Vec<_>>>()?;
        write_panels(&env.out.join("panel_annual.csv"), &yearly)?;
    }
    println!("{} panels", quarterly.len());
    Ok(())
}

fn find_panel(panels: &[ScorePanel], level: Level, q: QuestionId) -> callsignal::error::Result<&ScorePanel> {
    panels
        .iter()
        .find(|p| p.level == level && p.question == q && p.frequency == Frequency::Quarterly)
        .ok_or_else(|| Error::Missing(format!("{level} panel for `{}`", q.id())))
}

fn frame(env: &Env, a: &FrameArgs) -> R {
    let panels = read_panels(&a.panels)?;
    let score = find_panel(&panels, a.level, a.question)?.to_column();
    let macro_data = a.macro_csv.as_deref().map(MacroSeries::read_csv).transpose()?;
    let macro_ref = || macro_data.as_ref().ok_or_else(|| Error::invalid("--macro is required"));
    let target: DataColumn = if a.level == Level::Firm {
        let path = a.firm_sales.as_deref().ok_or_else(|| Error::invalid("--firm-sales is required for firm frames"))?;
        sales_column(&FirmSales::read_csv(path)?)
    } else {
        macro_ref()?.column(&a.target)?.clone()
    };
    let mut regs: Vec<(String, &DataColumn)> = vec![(score_column_name(a.question), &score)];
    for c in &a.controls {
        regs.push((c.clone(), macro_ref()?.column(c)?));
    }
    ensure_dir(&env.out.join("frames"))?;
    for &h in &a.horizon {
        let spec = FrameSpec { target: a.target.clone(), horizon: h, lags: a.lags, level: a.level };
        let f = build_frame(&spec, &target, &regs)?;
        let path = env.out.join(format!("frames/{}_{}_h{h}.csv", a.level, a.target));
        f.write_csv(&path)?;
        println!("{}: {} rows", path.display(), f.n_rows());
    }
    Ok(())
}

fn regress(env: &Env, frames: &[PathBuf], est: EstimatorArg, nw_lags: &str, cluster: bool, intercept: bool) -> R {
    let lags = if nw_lags.eq_ignore_ascii_case("auto") {
        NwLags::Auto
    } else {
        NwLags::Fixed(nw_lags.parse().map_err(|_| Error::invalid(format!("bad --nw-lags `{nw_lags}`")))?)
    };
    let mut results: Vec<RegressionResult> = Vec::new();
    for path in frames {
        let f = RegressionFrame::read_csv(path)?;
        results.push(match est {
            EstimatorArg::Ols => ols(&f, intercept)?,
            EstimatorArg::Nw => ols_nw(&f, intercept, lags)?,
            EstimatorArg::Fe => fe_within(&f, cluster)?,
        });
    }
    let table = format_table(&results, &StarThresholds::default())?;
    ensure_dir(&env.out)?;
    let write = |name: &str, body: String| {
        let p = env.out.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("regressions.json", serde_json::to_string_pretty(&results)? + "\n")?;
    write("regressions.csv", table.to_csv()?)?;
    let md = table.to_markdown();
    print!("{md}");
    write("regressions.md", md)
}

fn var(env: &Env, a: &VarArgs, seed: u64) -> R {
    let mut series = MacroSeries::read_csv(&a.data)?;
    let spec = match &a.order {
        Some(o) => VarSpec::with_order(o.clone(), a.lags, a.horizon)?,
        None => VarSpec { lags: a.lags, horizon: a.horizon, ..VarSpec::default() },
    };
    if let Some(p) = &a.panels {
        let panels = read_panels(p)?;
        if !series.columns.contains_key("ai_economy_score") {
            let national = find_panel(&panels, Level::National, QuestionId::EconomyUs)?;
            series.columns.insert("ai_economy_score".into(), national.to_column());
        }
    }
    let data = VarData::from_macro(&series, &spec.order)?;
    let shock = spec.shock_index(&a.shock)?;
    let irf = bootstrap_irf(&data.values, &spec, shock, a.reps, a.coverage, derive_seed(seed, "var"))?;
    let path = env.out.join("var/irf.csv");
    ensure_dir(&env.out.join("var"))?;
    write_irf_csv(&path, &irf)?;
    println!("{} replications kept, wrote {}", irf.replications, path.display());
    Ok(())
}

fn composite(
    env: &Env,
    firm_panel: &Path,
    scores: &Path,
    panels: Option<&Path>,
    min_window: usize,
    intercept: bool,
    questions: &str,
) -> R {
    let questions = QuestionId::parse_set(questions)?;
    let sales = FirmSales::read_csv(firm_panel)?;
    let scores = read_scores(scores)?;
    let rows = training_rows(&sales, &scores, &questions)?;
    let last_score = scores.iter().map(|s| s.quarter).max().ok_or_else(|| Error::Missing("no scores".into()))?;
    let history = weight_history(&rows, &questions, min_window, last_score, intercept)?;
    let dir = env.out.join("composite");
    ensure_dir(&dir)?;
    write_weights_csv(&dir.join("weights.csv"), &history)?;
    if history.len() >= 3 {
        write_stats_csv(&dir.join("weight_stats.csv"), &weight_history_stats(&history)?)?;
    }
    if let Some(p) = panels {
        let all = read_panels(p)?;
        let mut series = Vec::new();
        for level in [Level::National, Level::Industry] {
            let level_panels: Vec<ScorePanel> =
                questions.iter().filter_map(|&q| find_panel(&all, level, q).ok().cloned()).collect();
            if level_panels.len() == questions.len() {
                series.push(weighted_score(&level_panels, &history)?);
            }
        }
        write_composite_csv(&dir.join("composite.csv"), &series)?;
    }
    println!("{} weight vectors from {} training rows", history.len(), rows.len());
    Ok(())
}

fn ngrams(env: &Env, answers: &Path, bucket: BucketArg, sizes: &[usize], top: usize) -> R {
    let answers = read_answers(answers)?;
    let explanations = bucket_explanations(&answers);
    let lem = SuffixLemmatizer::new(bundled_wordlist());
    let norm = Normalizer::new(bundled_stopwords(), bundled_wordlist(), &lem);
    let buckets: &[Bucket] = match bucket {
        BucketArg::Low => &[Bucket::Low],
        BucketArg::High => &[Bucket::High],
        BucketArg::Both => &[Bucket::Low, Bucket::High],
    };
    let mut tables = Vec::new();
    for &b in buckets {
        for &n in sizes {
            tables.push(top_ngrams(&explanations, b, n, top, &norm)?);
        }
    }
    ensure_dir(&env.out)?;
    write_ngram_tables(&env.out.join("ngrams.csv"), &tables)
}

fn loaded(env: Env) -> std::result::Result<LoadedConfig, Failure> {
    let mut cfg = env.config.ok_or_else(|| Failure { code: 2, message: "--config is required".into() })?;
    if let Some(s) = env.seed {
        cfg.config.seed = s;
    }
    cfg.config.output_dir = std::path::absolute(&env.out).map_err(|e| Error::io(&env.out, e))?;
    Ok(cfg)
}

fn run(env: Env, force: bool) -> CliResult {
    let cfg = loaded(env)?;
    let opts = RunOptions { clock: Clock::from_env(), force };
    match run_pipeline(&cfg, &opts) {
        Ok(report) => {
            let names = |s: &[Stage]| s.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
            println!("executed: [{}]", names(&report.executed));
            println!("skipped:  [{}]", names(&report.skipped));
            println!("manifest: {}", cfg.output_dir().join(MANIFEST_FILE).display());
            Ok(())
        }
        Err(e) => {
            let code = e.exit_code() as u8;
            if let RunError::Invalid(findings) = &e {
                for f in findings {
                    eprintln!("  {f}");
                }
            }
            Err(Failure { code, message: e.to_string() })
        }
    }
}

fn report(env: &Env) -> CliResult {
    if let Some(cfg) = &env.config {
        let findings = validate_config(cfg);
        if findings.is_empty() {
            println!("configuration: ok");
        } else {
            println!("configuration: {} finding(s)", findings.len());
            for f in &findings {
                println!("  {f}");
            }
        }
    }
    let path = env.out.join(MANIFEST_FILE);
    let manifest = match RunManifest::read(&path) {
        Ok(m) => m,
        Err(_) => {
            println!("no manifest at {}", path.display());
            return Ok(());
        }
    };
    println!(
        "run: version {}, seed {}, config {}, {}",
        manifest.tool_version,
        manifest.seed,
        &manifest.config_hash[..12],
        if manifest.complete { "complete" } else { "incomplete" }
    );
    for s in &manifest.stages {
        println!(
            "  {:<10} {:?} {} output(s) {}",
            s.stage.name(),
            s.status,
            s.outputs.len(),
            s.error.as_deref().unwrap_or("")
        );
    }
    if let Ok(md) = std::fs::read_to_string(env.out.join("regressions.md")) {
        println!();
        print!("{md}");
    }
    Ok(())
}
