//! Run configuration (TOML) and its validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::Level;
use crate::scoring::QuestionId;
use crate::var_engine::DEFAULT_ORDER;

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_words() -> usize {
    crate::corpus::DEFAULT_MAX_WORDS
}
fn default_fraction() -> f64 {
    1.0
}
fn default_model() -> String {
    "mock-1".into()
}
fn default_inflight() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    60
}
fn default_api_key_env() -> String {
    crate::scoring::DEFAULT_API_KEY_ENV.into()
}
fn default_questions() -> String {
    "all".into()
}
fn default_levels() -> Vec<Level> {
    vec![Level::National, Level::Industry, Level::Firm]
}
fn yes() -> bool {
    true
}
fn default_dep_lags() -> usize {
    4
}
fn default_horizons() -> Vec<usize> {
    vec![1]
}
fn default_question() -> QuestionId {
    QuestionId::EconomyUs
}
fn default_var_order() -> Vec<String> {
    DEFAULT_ORDER.iter().map(|s| s.to_string()).collect()
}
fn default_var_lags() -> usize {
    2
}
fn default_var_horizon() -> usize {
    20
}
fn default_shock() -> String {
    "ai_economy_score".into()
}
fn default_reps() -> usize {
    2000
}
fn default_coverage() -> f64 {
    0.95
}
fn default_min_window() -> usize {
    crate::composite::DEFAULT_MIN_WINDOW
}
fn default_ngram_sizes() -> Vec<usize> {
    vec![3, 4]
}
fn default_top() -> usize {
    10
}
fn default_gdp_column() -> String {
    "real_gdp".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub masking: MaskingSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub questions: QuestionsSection,
    #[serde(default)]
    pub aggregate: AggregateSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub regression: Vec<RegressionSection>,
    #[serde(default)]
    pub var: Option<VarSection>,
    #[serde(default)]
    pub composite: Option<CompositeSection>,
    #[serde(default)]
    pub ngrams: NgramSection,
    #[serde(default)]
    pub figures: FigureSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityMode {
    #[default]
    None,
    Heuristic,
    Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub entities: EntityMode,
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
    #[serde(default)]
    pub tagger_command: Option<String>,
}

impl Default for MaskingSection {
    fn default() -> Self {
        Self { enabled: false, fraction: 1.0, entities: EntityMode::None, gazetteer: None, tagger_command: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSection {
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model: default_model(),
            temperature: 0.0,
            max_inflight: default_inflight(),
            retries: default_retries(),
            timeout_secs: default_timeout(),
            cache_dir: None,
            api_key_env: default_api_key_env(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionsSection {
    #[serde(default = "default_questions")]
    pub set: String,
}

impl Default for QuestionsSection {
    fn default() -> Self {
        Self { set: default_questions() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSection {
    #[serde(default = "default_levels")]
    pub levels: Vec<Level>,
    #[serde(default = "yes")]
    pub annual: bool,
}

impl Default for AggregateSection {
    fn default() -> Self {
        Self { levels: default_levels(), annual: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    /// Quarterly macro levels and controls; optional `entity` column for industry rows.
    #[serde(default)]
    pub macro_csv: Option<PathBuf>,
    /// firm_id, quarter, sales.
    #[serde(default)]
    pub firm_sales: Option<PathBuf>,
    /// Quarterly VAR variables.
    #[serde(default)]
    pub var_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    Ols,
    Nw,
    Fe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NwLagSetting {
    Fixed(usize),
    Named(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

impl Default for NwLagSetting {
    fn default() -> Self {
        NwLagSetting::Named(AutoKeyword::Auto)
    }
}

impl NwLagSetting {
    pub fn lags(self) -> crate::econometrics::NwLags {
        match self {
            NwLagSetting::Fixed(l) => crate::econometrics::NwLags::Fixed(l),
            NwLagSetting::Named(_) => crate::econometrics::NwLags::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSection {
    pub name: String,
    /// Macro column, or `sales` for firm-level specifications.
    pub target: String,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_dep_lags")]
    pub lags: usize,
    pub level: Level,
    #[serde(default = "default_question")]
    pub question: QuestionId,
    #[serde(default)]
    pub controls: Vec<String>,
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub nw_lags: NwLagSetting,
    #[serde(default)]
    pub cluster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSection {
    #[serde(default = "default_var_order")]
    pub order: Vec<String>,
    #[serde(default = "default_var_lags")]
    pub lags: usize,
    #[serde(default = "default_var_horizon")]
    pub horizon: usize,
    #[serde(default = "default_shock")]
    pub shock: String,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSection {
    #[serde(default = "default_min_window")]
    pub min_window: usize,
    #[serde(default)]
    pub intercept: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_ngram_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_top")]
    pub top: usize,
}

impl Default for NgramSection {
    fn default() -> Self {
        Self { enabled: true, sizes: default_ngram_sizes(), top: default_top() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSection {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_question")]
    pub question: QuestionId,
    #[serde(default = "default_gdp_column")]
    pub gdp_column: String,
}

impl Default for FigureSection {
    fn default() -> Self {
        Self { enabled: true, question: default_question(), gdp_column: default_gdp_column() }
    }
}

/// One problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// A configuration plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    /// Keys present in the file but not understood.
    pub unknown_keys: Vec<String>,
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn questions(&self) -> Result<Vec<QuestionId>> {
        QuestionId::parse_set(&self.config.questions.set)
    }
}

/// Parses TOML, collecting every unrecognized key instead of stopping at the first.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut unknown = Vec::new();
    let config: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(LoadedConfig { config, base_dir: base_dir.to_path_buf(), unknown_keys: unknown })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parse_config(&text, base)
}

fn csv_headers(path: &Path) -> Option<BTreeSet<String>> {
    let mut r = csv::Reader::from_path(path).ok()?;
    Some(r.headers().ok()?.iter().map(String::from).collect())
}

/// Every problem that would stop a run; an empty list means the config is runnable.
pub fn validate_config(cfg: &LoadedConfig) -> Vec<Finding> {
    let mut out: Vec<Finding> =
        cfg.unknown_keys.iter().map(|k| Finding { key: k.clone(), message: "unknown key".into() }).collect();
    let c = &cfg.config;
    let mut push = |key: &str, message: String| out.push(Finding { key: key.into(), message });
    let check_file = |p: &Path| cfg.resolve(p).is_file();

    if !check_file(&c.corpus.path) {
        push("corpus.path", format!("file not found: {}", c.corpus.path.display()));
    }
    if c.corpus.max_words == 0 {
        push("corpus.max_words", "must be at least 1".into());
    }
    if let Err(e) = QuestionId::parse_set(&c.questions.set) {
        push("questions.set", e.to_string());
    }
    if c.masking.enabled {
        if !(c.masking.fraction > 0.0 && c.masking.fraction <= 1.0) {
            push("masking.fraction", format!("{} outside (0, 1]", c.masking.fraction));
        }
        if let Some(g) = &c.masking.gazetteer {
            if !check_file(g) {
                push("masking.gazetteer", format!("file not found: {}", g.display()));
            }
        }
        if c.masking.entities == EntityMode::Command && c.masking.tagger_command.is_none() {
            push("masking.tagger_command", "required when entities = \"command\"".into());
        }
    }
    if c.backend.kind == BackendKind::Openai && c.backend.base_url.is_none() {
        push("backend.base_url", "required for the openai backend".into());
    }
    if c.backend.max_inflight == 0 {
        push("backend.max_inflight", "must be at least 1".into());
    }

    let macro_cols = match &c.data.macro_csv {
        Some(p) if !check_file(p) => {
            push("data.macro_csv", format!("file not found: {}", p.display()));
            None
        }
        Some(p) => csv_headers(&cfg.resolve(p)),
        None => None,
    };
    if let Some(p) = &c.data.firm_sales {
        if !check_file(p) {
            push("data.firm_sales", format!("file not found: {}", p.display()));
        }
    }
    for (i, r) in c.regression.iter().enumerate() {
        let key = |f: &str| format!("regression[{i}].{f}");
        if r.level == Level::Firm {
            if r.target != "sales" {
                push(&key("target"), "firm-level specifications use target = \"sales\"".into());
            }
            if c.data.firm_sales.is_none() {
                push("data.firm_sales", format!("required by regression `{}`", r.name));
            }
        } else if c.data.macro_csv.is_none() {
            push("data.macro_csv", format!("required by regression `{}`", r.name));
        } else if let Some(cols) = &macro_cols {
            for col in std::iter::once(&r.target).chain(&r.controls) {
                if !cols.contains(col) {
                    push(&key("target"), format!("column `{col}` not in macro CSV"));
                }
            }
        }
        if r.horizons.is_empty() || r.horizons.contains(&0) {
            push(&key("horizons"), "need one or more horizons of at least 1".into());
        }
        if r.estimator == EstimatorChoice::Fe && r.level == Level::National {
            push(&key("estimator"), "fixed effects need an industry or firm panel".into());
        }
        if !c.aggregate.levels.contains(&r.level) {
            push("aggregate.levels", format!("level `{}` needed by regression `{}`", r.level, r.name));
        }
    }
    if let Some(v) = &c.var {
        if v.order.len() != 8 {
            push("var.order", format!("{} variables listed, expected 8", v.order.len()));
        }
        if !v.order.contains(&v.shock) {
            push("var.shock", format!("`{}` is not in var.order", v.shock));
        }
        if v.lags == 0 || v.horizon == 0 || v.replications == 0 {
            push("var", "lags, horizon and replications must be at least 1".into());
        }
        if !(v.coverage > 0.0 && v.coverage < 1.0) {
            push("var.coverage", format!("{} outside (0, 1)", v.coverage));
        }
        match &c.data.var_csv {
            None => push("data.var_csv", "required by the [var] section".into()),
            Some(p) if !check_file(p) => push("data.var_csv", format!("file not found: {}", p.display())),
            Some(p) => {
                if let Some(cols) = csv_headers(&cfg.resolve(p)) {
                    for name in &v.order {
                        if !cols.contains(name) && name != "ai_economy_score" {
                            push("var.order", format!("variable `{name}` absent from {}", p.display()));
                        }
                    }
                }
            }
        }
    }
    if c.composite.is_some() && c.data.firm_sales.is_none() {
        push("data.firm_sales", "required by the [composite] section".into());
    }
    if c.ngrams.enabled && c.ngrams.sizes.iter().any(|n| !(3..=4).contains(n)) {
        push("ngrams.sizes", "n-gram sizes must be 3 or 4".into());
    }
    if c.figures.enabled {
        if c.data.macro_csv.is_none() {
            push("data.macro_csv", "required for figure data".into());
        } else if let Some(cols) = &macro_cols {
            if !cols.contains(&c.figures.gdp_column) {
                push("figures.gdp_column", format!("column `{}` not in macro CSV", c.figures.gdp_column));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
