//! Stage orchestration with a digest manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{BackendKind, EntityMode, EstimatorChoice, LoadedConfig, RegressionSection, RunConfig};
use super::figures::{score_vs_growth, write_score_by_industry, write_score_vs_growth, FigureKind};
use super::{derive_seed, validate_config, Finding};
use crate::anonymizer::{mask_dates, mask_transcript, sample_corpus, CommandTagger, HeuristicTagger, MaskReport};
use crate::composite::{
    training_rows, weight_history, weight_history_stats, weighted_score, write_composite_csv, write_stats_csv,
    write_weights_csv, FirmSales,
};
use crate::corpus::{ingest_corpus, write_corpus, Transcript};
use crate::econometrics::{fe_within, format_table, ols, ols_nw, RegressionResult, StarThresholds};
use crate::error::{Error, Result};
use crate::panel::{
    aggregate_scores, annualize, build_frame, firm_sectors, read_panels, write_panels, DataColumn, FrameSpec, Level,
    MacroSeries, RegressionFrame, ScorePanel, NATIONAL,
};
use crate::period::{Frequency, Period};
use crate::scoring::{
    read_answers, read_scores, run_scoring, sha256_hex, write_answers, write_scores, MockBackend, ModelBackend,
    OpenAiCompatBackend, QuestionId, ResponseCache, ScoringOptions,
};
use crate::textval::{
    bucket_explanations, bundled_stopwords, bundled_wordlist, top_ngrams, write_ngram_tables, Bucket, Normalizer,
    SuffixLemmatizer,
};
use crate::var_engine::{bootstrap_irf, write_irf_csv, VarData, VarSpec};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Mask,
    Score,
    Aggregate,
    Frames,
    Regress,
    Var,
    Composite,
    Ngrams,
    Figures,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Mask,
        Stage::Score,
        Stage::Aggregate,
        Stage::Frames,
        Stage::Regress,
        Stage::Var,
        Stage::Composite,
        Stage::Ngrams,
        Stage::Figures,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Mask => "mask",
            Stage::Score => "score",
            Stage::Aggregate => "aggregate",
            Stage::Frames => "frames",
            Stage::Regress => "regress",
            Stage::Var => "var",
            Stage::Composite => "composite",
            Stage::Ngrams => "ngrams",
            Stage::Figures => "figures",
        }
    }

    /// Process exit status when this stage fails.
    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|s| *s == self).expect("stage listed") as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub input_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub complete: bool,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn stage(&self, s: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == s)
    }
}

#[derive(Debug)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration has {} problem(s)", .0.len())]
    Invalid(Vec<Finding>),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
        manifest: Box<RunManifest>,
    },
    #[error(transparent)]
    Other(#[from] Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 3,
            RunError::Stage { stage, .. } => stage.exit_code(),
            RunError::Other(_) => 1,
        }
    }
}

/// Source of manifest timestamps.
#[derive(Debug, Clone, Copy, Default)]
pub enum Clock {
    #[default]
    System,
    /// Every timestamp is this Unix time.
    Fixed(i64),
}

impl Clock {
    /// Fixed at `SOURCE_DATE_EPOCH` when that variable holds an integer.
    pub fn from_env() -> Self {
        std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()).map_or(Clock::System, Clock::Fixed)
    }

    fn now(self) -> String {
        let secs = match self {
            Clock::Fixed(s) => s,
            Clock::System => SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64),
        };
        chrono::DateTime::from_timestamp(secs, 0).unwrap_or_default().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub clock: Clock,
    /// Re-run every stage even when its inputs are unchanged.
    pub force: bool,
}

/// Hash of everything in the config that can change results.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    c.backend.cache_dir = None;
    c.backend.api_key_env = String::new();
    Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

struct Ctx<'a> {
    cfg: &'a LoadedConfig,
    out: PathBuf,
}

impl Ctx<'_> {
    fn c(&self) -> &RunConfig {
        &self.cfg.config
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn external(&self, p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        p.as_ref().map(|p| self.cfg.resolve(p)).ok_or_else(|| Error::Config(format!("`{key}` is not set")))
    }

    fn scored_corpus(&self) -> &'static str {
        if self.c().masking.enabled {
            "masked_corpus.jsonl"
        } else {
            "corpus.jsonl"
        }
    }

    fn panel(&self, panels: &[ScorePanel], level: Level, q: QuestionId) -> Result<ScorePanel> {
        panels
            .iter()
            .find(|p| p.level == level && p.question == q && p.frequency == Frequency::Quarterly)
            .cloned()
            .ok_or_else(|| Error::Missing(format!("{level} panel for `{}`", q.id())))
    }
}

type Inputs = Vec<(String, PathBuf)>;

struct StagePlan {
    stage: Stage,
    settings: serde_json::Value,
    inputs: Inputs,
}

fn frame_file(r: &RegressionSection, h: usize) -> String {
    format!("frames/{}_h{h}.csv", r.name)
}

fn plan(ctx: &Ctx<'_>) -> Result<Vec<StagePlan>> {
    let c = ctx.c();
    let seed = c.seed;
    let mut plans = vec![StagePlan {
        stage: Stage::Ingest,
        settings: json!({}),
        inputs: vec![("corpus.path".into(), ctx.cfg.resolve(&c.corpus.path))],
    }];
    if c.masking.enabled {
        let mut inputs = vec![("out:corpus.jsonl".to_string(), ctx.out("corpus.jsonl"))];
        if let Some(g) = &c.masking.gazetteer {
            inputs.push(("masking.gazetteer".into(), ctx.cfg.resolve(g)));
        }
        plans.push(StagePlan {
            stage: Stage::Mask,
            settings: json!({ "masking": c.masking, "seed": derive_seed(seed, "mask") }),
            inputs,
        });
    }
    let mut backend = serde_json::to_value(&c.backend)?;
    if let Some(obj) = backend.as_object_mut() {
        for k in ["cache_dir", "api_key_env", "max_inflight", "retries", "timeout_secs"] {
            obj.remove(k);
        }
    }
    plans.push(StagePlan {
        stage: Stage::Score,
        settings: json!({
            "backend": backend,
            "questions": c.questions.set,
            "max_words": c.corpus.max_words,
            "seed": derive_seed(seed, "score"),
        }),
        inputs: vec![(format!("out:{}", ctx.scored_corpus()), ctx.out(ctx.scored_corpus()))],
    });
    plans.push(StagePlan {
        stage: Stage::Aggregate,
        settings: json!({ "aggregate": c.aggregate, "questions": c.questions.set }),
        inputs: vec![
            ("out:scores.csv".into(), ctx.out("scores.csv")),
            ("out:corpus.jsonl".into(), ctx.out("corpus.jsonl")),
        ],
    });
    if !c.regression.is_empty() {
        let mut inputs = vec![("out:panel_quarterly.csv".to_string(), ctx.out("panel_quarterly.csv"))];
        if c.regression.iter().any(|r| r.level != Level::Firm) {
            inputs.push(("data.macro_csv".into(), ctx.external(&c.data.macro_csv, "data.macro_csv")?));
        }
        if c.regression.iter().any(|r| r.level == Level::Firm) {
            inputs.push(("data.firm_sales".into(), ctx.external(&c.data.firm_sales, "data.firm_sales")?));
        }
        let frame_settings: Vec<serde_json::Value> = c
            .regression
            .iter()
            .map(|r| {
                json!({ "name": r.name, "target": r.target, "horizons": r.horizons, "lags": r.lags,
                             "level": r.level, "question": r.question, "controls": r.controls })
            })
            .collect();
        plans.push(StagePlan { stage: Stage::Frames, settings: json!(frame_settings), inputs });
        let frames: Inputs = c
            .regression
            .iter()
            .flat_map(|r| r.horizons.iter().map(move |&h| frame_file(r, h)))
            .map(|f| (format!("out:{f}"), ctx.out(&f)))
            .collect();
        plans.push(StagePlan { stage: Stage::Regress, settings: json!(c.regression), inputs: frames });
    }
    if let Some(v) = &c.var {
        plans.push(StagePlan {
            stage: Stage::Var,
            settings: json!({ "var": v, "seed": derive_seed(seed, "var") }),
            inputs: vec![
                ("data.var_csv".into(), ctx.external(&c.data.var_csv, "data.var_csv")?),
                ("out:panel_quarterly.csv".into(), ctx.out("panel_quarterly.csv")),
            ],
        });
    }
    if let Some(comp) = &c.composite {
        plans.push(StagePlan {
            stage: Stage::Composite,
            settings: json!({ "composite": comp, "questions": c.questions.set }),
            inputs: vec![
                ("data.firm_sales".into(), ctx.external(&c.data.firm_sales, "data.firm_sales")?),
                ("out:scores.csv".into(), ctx.out("scores.csv")),
                ("out:panel_quarterly.csv".into(), ctx.out("panel_quarterly.csv")),
            ],
        });
    }
    if c.ngrams.enabled {
        plans.push(StagePlan {
            stage: Stage::Ngrams,
            settings: json!(c.ngrams),
            inputs: vec![("out:answers.csv".into(), ctx.out("answers.csv"))],
        });
    }
    if c.figures.enabled {
        let mut inputs = vec![
            ("out:panel_quarterly.csv".to_string(), ctx.out("panel_quarterly.csv")),
            ("data.macro_csv".into(), ctx.external(&c.data.macro_csv, "data.macro_csv")?),
        ];
        if c.aggregate.annual {
            inputs.push(("out:panel_annual.csv".into(), ctx.out("panel_annual.csv")));
        }
        plans.push(StagePlan { stage: Stage::Figures, settings: json!(c.figures), inputs });
    }
    Ok(plans)
}

fn execute(stage: Stage, ctx: &Ctx<'_>) -> Result<Vec<String>> {
    match stage {
        Stage::Ingest => run_ingest(ctx),
        Stage::Mask => run_mask(ctx),
        Stage::Score => run_score(ctx),
        Stage::Aggregate => run_aggregate(ctx),
        Stage::Frames => run_frames(ctx),
        Stage::Regress => run_regress(ctx),
        Stage::Var => run_var(ctx),
        Stage::Composite => run_composite(ctx),
        Stage::Ngrams => run_ngrams(ctx),
        Stage::Figures => run_figures(ctx),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn run_ingest(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let corpus = ingest_corpus(&ctx.cfg.resolve(&ctx.c().corpus.path))?;
    write_corpus(&ctx.out("corpus.jsonl"), &corpus)?;
    log::info!("ingested {} calls", corpus.len());
    Ok(vec!["corpus.jsonl".into()])
}

fn run_mask(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let m = &ctx.c().masking;
    let corpus = ingest_corpus(&ctx.out("corpus.jsonl"))?;
    let sample = sample_corpus(&corpus, m.fraction, derive_seed(ctx.c().seed, "mask"))?;
    let (masked, reports) = mask_corpus(
        &sample,
        m.entities,
        m.gazetteer.as_ref().map(|g| ctx.cfg.resolve(g)).as_deref(),
        m.tagger_command.as_deref(),
    )?;
    write_corpus(&ctx.out("masked_corpus.jsonl"), &masked)?;
    write_mask_reports(&ctx.out("mask_report.jsonl"), &reports)?;
    Ok(vec!["masked_corpus.jsonl".into(), "mask_report.jsonl".into()])
}

/// Masks dates, and entities when asked, in every transcript.
pub fn mask_corpus(
    corpus: &[Transcript],
    entities: EntityMode,
    gazetteer: Option<&Path>,
    command: Option<&str>,
) -> Result<(Vec<Transcript>, Vec<MaskReport>)> {
    let tagger: Option<Box<dyn crate::anonymizer::EntityTagger>> = match entities {
        EntityMode::None => None,
        EntityMode::Heuristic => {
            let mut t = HeuristicTagger::new();
            if let Some(g) = gazetteer {
                t = t.with_gazetteer(&std::fs::read_to_string(g).map_err(|e| Error::io(g, e))?)?;
            }
            Some(Box::new(t))
        }
        EntityMode::Command => Some(Box::new(CommandTagger::new(
            command.ok_or_else(|| Error::Config("masking.tagger_command is not set".into()))?,
        )?)),
    };
    let mut masked = Vec::with_capacity(corpus.len());
    let mut reports = Vec::with_capacity(corpus.len());
    for t in corpus {
        let (m, r) = match &tagger {
            Some(tagger) => mask_transcript(t, tagger.as_ref())?,
            None => {
                let (text, replacements) = mask_dates(&t.text);
                let m = Transcript { text: text.clone(), ..t.clone() };
                (m, MaskReport { call_id: t.call_id.clone(), masked_text: text, replacements })
            }
        };
        masked.push(m);
        reports.push(r);
    }
    Ok((masked, reports))
}

pub fn write_mask_reports(path: &Path, reports: &[MaskReport]) -> Result<()> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&serde_json::to_string(&json!({ "call_id": r.call_id, "replacements": r.replacements }))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Backend described by the config; mock responses are seeded from the run seed.
pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn ModelBackend>> {
    let b = &cfg.backend;
    Ok(match b.kind {
        BackendKind::Mock => Box::new(MockBackend::new(b.model.clone(), derive_seed(cfg.seed, "score"))),
        BackendKind::Openai => Box::new(OpenAiCompatBackend::new(
            b.base_url.as_deref().ok_or_else(|| Error::Config("backend.base_url is not set".into()))?,
            &b.model,
            &b.api_key_env,
            Duration::from_secs(b.timeout_secs),
        )),
    })
}

fn run_score(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let corpus = ingest_corpus(&ctx.out(ctx.scored_corpus()))?;
    let backend = make_backend(c)?;
    let cache = c.backend.cache_dir.as_ref().map(|d| ResponseCache::open(&ctx.cfg.resolve(d))).transpose()?;
    let opts = ScoringOptions {
        max_words: c.corpus.max_words,
        max_inflight: c.backend.max_inflight,
        retries: c.backend.retries,
        temperature: c.backend.temperature,
        seed: Some(derive_seed(c.seed, "score")),
        ..Default::default()
    };
    let out = run_scoring(&corpus, &ctx.cfg.questions()?, backend.as_ref(), cache.as_ref(), &opts)?;
    log::info!("scoring: {} backend calls, {} cache hits", out.stats.backend_calls, out.stats.cache_hits);
    write_answers(&ctx.out("answers.csv"), &out.answers)?;
    write_scores(&ctx.out("scores.csv"), &out.scores)?;
    Ok(vec!["answers.csv".into(), "scores.csv".into()])
}

fn run_aggregate(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let scores = read_scores(&ctx.out("scores.csv"))?;
    let sectors = firm_sectors(&ingest_corpus(&ctx.out("corpus.jsonl"))?);
    let mut quarterly = Vec::new();
    for &level in &c.aggregate.levels {
        for q in ctx.cfg.questions()? {
            quarterly.push(aggregate_scores(&scores, &sectors, level, q)?);
        }
    }
    write_panels(&ctx.out("panel_quarterly.csv"), &quarterly)?;
    let mut outputs = vec!["panel_quarterly.csv".to_string()];
    if c.aggregate.annual {
        let annual = quarterly.iter().map(annualize).collect::<Result<Vec<_>>>()?;
        write_panels(&ctx.out("panel_annual.csv"), &annual)?;
        outputs.push("panel_annual.csv".into());
    }
    Ok(outputs)
}

/// Firm sales levels as a frame target column.
pub fn sales_column(sales: &FirmSales) -> DataColumn {
    DataColumn { cells: sales.levels.iter().map(|((f, q), v)| ((f.clone(), Period::Quarter(*q)), *v)).collect() }
}

pub fn score_column_name(q: QuestionId) -> String {
    format!("score_{}", q.id())
}

fn run_frames(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let panels = read_panels(&ctx.out("panel_quarterly.csv"))?;
    let macro_data = c.data.macro_csv.as_ref().map(|p| MacroSeries::read_csv(&ctx.cfg.resolve(p))).transpose()?;
    let sales = c.data.firm_sales.as_ref().map(|p| FirmSales::read_csv(&ctx.cfg.resolve(p))).transpose()?;
    let mut outputs = Vec::new();
    for r in &c.regression {
        let score = ctx.panel(&panels, r.level, r.question)?.to_column();
        let target = if r.level == Level::Firm {
            sales_column(sales.as_ref().ok_or_else(|| Error::Config("data.firm_sales is not set".into()))?)
        } else {
            macro_data
                .as_ref()
                .ok_or_else(|| Error::Config("data.macro_csv is not set".into()))?
                .column(&r.target)?
                .clone()
        };
        let mut regs: Vec<(String, &DataColumn)> = vec![(score_column_name(r.question), &score)];
        for ctl in &r.controls {
            let m = macro_data.as_ref().ok_or_else(|| Error::Config("data.macro_csv is not set".into()))?;
            regs.push((ctl.clone(), m.column(ctl)?));
        }
        for &h in &r.horizons {
            let spec = FrameSpec { target: r.target.clone(), horizon: h, lags: r.lags, level: r.level };
            let frame = build_frame(&spec, &target, &regs)?;
            let rel = frame_file(r, h);
            ensure_parent(&ctx.out(&rel))?;
            frame.write_csv(&ctx.out(&rel))?;
            outputs.push(rel);
        }
    }
    Ok(outputs)
}

/// Runs the configured estimator on one frame.
pub fn estimate(frame: &RegressionFrame, r: &RegressionSection) -> Result<RegressionResult> {
    match r.estimator {
        EstimatorChoice::Ols => ols(frame, true),
        EstimatorChoice::Nw => ols_nw(frame, true, r.nw_lags.lags()),
        EstimatorChoice::Fe => fe_within(frame, r.cluster),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NamedResult {
    pub spec: String,
    pub horizon: usize,
    pub result: RegressionResult,
}

fn run_regress(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let mut named = Vec::new();
    for r in &c.regression {
        for &h in &r.horizons {
            let frame = RegressionFrame::read_csv(&ctx.out(&frame_file(r, h)))?;
            named.push(NamedResult { spec: r.name.clone(), horizon: h, result: estimate(&frame, r)? });
        }
    }
    let results: Vec<RegressionResult> = named.iter().map(|n| n.result.clone()).collect();
    let table = format_table(&results, &StarThresholds::default())?;
    let mut json = serde_json::to_string_pretty(&named)?;
    json.push('\n');
    for (name, body) in
        [("regressions.json", json), ("regressions.md", table.to_markdown()), ("regressions.csv", table.to_csv()?)]
    {
        std::fs::write(ctx.out(name), body).map_err(|e| Error::io(ctx.out(name), e))?;
    }
    Ok(vec!["regressions.json".into(), "regressions.md".into(), "regressions.csv".into()])
}

fn run_var(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let v = c.var.as_ref().ok_or_else(|| Error::Config("no [var] section".into()))?;
    let mut series = MacroSeries::read_csv(&ctx.external(&c.data.var_csv, "data.var_csv")?)?;
    if !series.columns.contains_key("ai_economy_score") {
        let panels = read_panels(&ctx.out("panel_quarterly.csv"))?;
        let national = ctx.panel(&panels, Level::National, QuestionId::EconomyUs)?;
        series.columns.insert("ai_economy_score".into(), national.to_column());
    }
    let spec = VarSpec::with_order(v.order.clone(), v.lags, v.horizon)?;
    let data = VarData::from_macro(&series, &spec.order)?;
    let shock = spec.shock_index(&v.shock)?;
    let irf = bootstrap_irf(&data.values, &spec, shock, v.replications, v.coverage, derive_seed(c.seed, "var"))?;
    ensure_parent(&ctx.out("var/irf.csv"))?;
    ensure_parent(&ctx.out("figures/irf.csv"))?;
    write_irf_csv(&ctx.out("var/irf.csv"), &irf)?;
    let fig = format!("figures/{}", FigureKind::Irf.file_name());
    write_irf_csv(&ctx.out(&fig), &irf)?;
    Ok(vec!["var/irf.csv".into(), fig])
}

fn run_composite(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let comp = c.composite.as_ref().ok_or_else(|| Error::Config("no [composite] section".into()))?;
    let questions = ctx.cfg.questions()?;
    let sales = FirmSales::read_csv(&ctx.external(&c.data.firm_sales, "data.firm_sales")?)?;
    let scores = read_scores(&ctx.out("scores.csv"))?;
    let rows = training_rows(&sales, &scores, &questions)?;
    let panels = read_panels(&ctx.out("panel_quarterly.csv"))?;
    let through = panels
        .iter()
        .flat_map(|p| p.cells.keys().map(|(_, per)| *per))
        .filter_map(|p| match p {
            Period::Quarter(q) => Some(q),
            Period::Year(_) => None,
        })
        .max()
        .ok_or_else(|| Error::Missing("score panel is empty".into()))?;
    let history = weight_history(&rows, &questions, comp.min_window, through, comp.intercept)?;
    let mut series = Vec::new();
    for level in [Level::National, Level::Industry] {
        if !c.aggregate.levels.contains(&level) {
            continue;
        }
        let level_panels: Vec<ScorePanel> =
            questions.iter().map(|&q| ctx.panel(&panels, level, q)).collect::<Result<_>>()?;
        series.push(weighted_score(&level_panels, &history)?);
    }
    std::fs::create_dir_all(ctx.out("composite")).map_err(|e| Error::io(ctx.out("composite"), e))?;
    write_weights_csv(&ctx.out("composite/weights.csv"), &history)?;
    write_composite_csv(&ctx.out("composite/composite.csv"), &series)?;
    let stats = if history.len() >= 3 { weight_history_stats(&history)? } else { vec![] };
    write_stats_csv(&ctx.out("composite/weight_stats.csv"), &stats)?;
    Ok(vec!["composite/weights.csv".into(), "composite/composite.csv".into(), "composite/weight_stats.csv".into()])
}

fn run_ngrams(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let n = &ctx.c().ngrams;
    let answers = read_answers(&ctx.out("answers.csv"))?;
    let explanations = bucket_explanations(&answers);
    let lem = SuffixLemmatizer::new(bundled_wordlist());
    let norm = Normalizer::new(bundled_stopwords(), bundled_wordlist(), &lem);
    let mut tables = Vec::new();
    for bucket in [Bucket::Low, Bucket::High] {
        for &size in &n.sizes {
            tables.push(top_ngrams(&explanations, bucket, size, n.top, &norm)?);
        }
    }
    write_ngram_tables(&ctx.out("ngrams.csv"), &tables)?;
    Ok(vec!["ngrams.csv".into()])
}

fn run_figures(ctx: &Ctx<'_>) -> Result<Vec<String>> {
    let c = ctx.c();
    let f = &c.figures;
    let panels = read_panels(&ctx.out("panel_quarterly.csv"))?;
    let national = ctx.panel(&panels, Level::National, f.question)?;
    let macro_data = MacroSeries::read_csv(&ctx.external(&c.data.macro_csv, "data.macro_csv")?)?;
    let gdp = macro_data.column(&f.gdp_column)?.series(NATIONAL);
    let score = national.to_column().series(NATIONAL);
    std::fs::create_dir_all(ctx.out("figures")).map_err(|e| Error::io(ctx.out("figures"), e))?;
    let mut outputs = Vec::new();
    let rel = format!("figures/{}", FigureKind::ScoreVsGrowth.file_name());
    write_score_vs_growth(&ctx.out(&rel), &score_vs_growth(&score, &gdp)?)?;
    outputs.push(rel);
    if c.aggregate.annual && c.aggregate.levels.contains(&Level::Industry) {
        let annual = read_panels(&ctx.out("panel_annual.csv"))?;
        if let Some(p) = annual.iter().find(|p| p.level == Level::Industry && p.question == f.question) {
            let rel = format!("figures/{}", FigureKind::ScoreByIndustry.file_name());
            write_score_by_industry(&ctx.out(&rel), p)?;
            outputs.push(rel);
        }
    }
    Ok(outputs)
}

fn input_digest(plan: &StagePlan, inputs: &BTreeMap<String, String>) -> Result<String> {
    let body =
        json!({ "stage": plan.stage, "settings": plan.settings, "inputs": inputs, "tool": env!("CARGO_PKG_VERSION") });
    Ok(sha256_hex(serde_json::to_string(&body)?.as_bytes()))
}

fn reusable(prior: Option<&RunManifest>, stage: Stage, digest: &str, out: &Path) -> Option<StageRecord> {
    let rec = prior?.stage(stage)?;
    if rec.status != StageStatus::Completed || rec.input_digest != digest {
        return None;
    }
    for (rel, d) in &rec.outputs {
        if file_digest(&out.join(rel)).ok()? != *d {
            return None;
        }
    }
    Some(rec.clone())
}

/// Runs every enabled stage in dependency order, skipping stages whose inputs
/// and settings match the manifest already in the output directory.
pub fn run_pipeline(cfg: &LoadedConfig, opts: &RunOptions) -> std::result::Result<RunReport, RunError> {
    let findings = validate_config(cfg);
    if !findings.is_empty() {
        return Err(RunError::Invalid(findings));
    }
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let prior = if opts.force { None } else { RunManifest::read(&manifest_path).ok() };
    let ctx = Ctx { cfg, out: out.clone() };
    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&cfg.config)?,
        seed: cfg.config.seed,
        complete: false,
        stages: Vec::new(),
    };
    let mut executed = Vec::new();
    let mut skipped = Vec::new();
    for plan in plan(&ctx)? {
        let stage = plan.stage;
        let fail = |manifest: &mut RunManifest, e: Error, inputs, digest: String, started: String| {
            manifest.stages.push(StageRecord {
                stage,
                status: StageStatus::Failed,
                input_digest: digest,
                inputs,
                outputs: BTreeMap::new(),
                started_at: started,
                finished_at: opts.clock.now(),
                error: Some(e.to_string()),
            });
            if let Err(w) = manifest.write(&manifest_path) {
                log::error!("could not write manifest: {w}");
            }
            RunError::Stage { stage, source: e, manifest: Box::new(manifest.clone()) }
        };
        let started = opts.clock.now();
        let mut inputs = BTreeMap::new();
        for (name, path) in &plan.inputs {
            match file_digest(path) {
                Ok(d) => {
                    inputs.insert(name.clone(), d);
                }
                Err(e) => return Err(fail(&mut manifest, e, inputs, String::new(), started)),
            }
        }
        let digest = input_digest(&plan, &inputs)?;
        if let Some(rec) = reusable(prior.as_ref(), stage, &digest, &out) {
            log::info!("{stage}: inputs unchanged, skipping");
            manifest.stages.push(rec);
            skipped.push(stage);
            continue;
        }
        log::info!("{stage}: running");
        let outputs = match execute(stage, &ctx) {
            Ok(o) => o,
            Err(e) => return Err(fail(&mut manifest, e, inputs, digest, started)),
        };
        let mut out_digests = BTreeMap::new();
        for rel in outputs {
            let d = file_digest(&out.join(&rel))?;
            out_digests.insert(rel, d);
        }
        manifest.stages.push(StageRecord {
            stage,
            status: StageStatus::Completed,
            input_digest: digest,
            inputs,
            outputs: out_digests,
            started_at: started,
            finished_at: opts.clock.now(),
            error: None,
        });
        executed.push(stage);
    }
    manifest.complete = true;
    manifest.write(&manifest_path)?;
    Ok(RunReport { manifest, executed, skipped })
}
