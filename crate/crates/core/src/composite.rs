//! Expanding-window loadings of firm sales growth on lagged scores, and the
//! weighted score built from them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::econometrics::{least_squares, newey_west_cov, INTERCEPT};
use crate::error::{Error, Result};
use crate::panel::{Level, ScorePanel};
use crate::period::{Period, Quarter};
use crate::scoring::{FirmQuarterScore, QuestionId};

pub const DEFAULT_MIN_WINDOW: usize = 8;
pub const MIN_TRAINING_ROWS: usize = 15;
/// Newey–West lags for the weight-series t-statistics.
pub const STATS_NW_LAGS: usize = 2;

/// Firm sales levels by quarter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FirmSales {
    pub levels: BTreeMap<(String, Quarter), f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct SalesRow {
    firm_id: String,
    quarter: Period,
    sales: f64,
}

impl FirmSales {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut levels = BTreeMap::new();
        for (i, row) in r.deserialize::<SalesRow>().enumerate() {
            let row = row?;
            let Period::Quarter(q) = row.quarter else {
                return Err(Error::Record { line: i + 2, message: "sales must be quarterly".into() });
            };
            levels.insert((row.firm_id, q), row.sales);
        }
        Ok(Self { levels })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for ((firm_id, q), &sales) in &self.levels {
            w.serialize(SalesRow { firm_id: firm_id.clone(), quarter: Period::Quarter(*q), sales })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One pooled observation: `ln(S_s / S_{s−2})` and the firm's scores at `s − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub firm_id: String,
    pub quarter: Quarter,
    pub growth: f64,
    pub scores: Vec<f64>,
}

/// Complete-case training rows, ordered by (quarter, firm).
pub fn training_rows(
    sales: &FirmSales,
    scores: &[FirmQuarterScore],
    questions: &[QuestionId],
) -> Result<Vec<TrainingRow>> {
    let mut by_key: BTreeMap<(&str, Quarter), BTreeMap<QuestionId, f64>> = BTreeMap::new();
    for s in scores {
        by_key.entry((s.firm_id.as_str(), s.quarter)).or_default().insert(s.question, s.score);
    }
    let mut rows = Vec::new();
    for ((firm, s), &level) in &sales.levels {
        let Some(&base) = sales.levels.get(&(firm.clone(), s.offset(-2))) else { continue };
        for (q, v) in [(*s, level), (s.offset(-2), base)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonPositiveLevel { period: format!("{firm} {q}"), value: v });
            }
        }
        let Some(lagged) = by_key.get(&(firm.as_str(), s.offset(-1))) else { continue };
        let Some(vals) = questions.iter().map(|q| lagged.get(q).copied()).collect::<Option<Vec<_>>>() else {
            continue;
        };
        rows.push(TrainingRow { firm_id: firm.clone(), quarter: *s, growth: (level / base).ln(), scores: vals });
    }
    rows.sort_by(|a, b| (a.quarter, &a.firm_id).cmp(&(b.quarter, &b.firm_id)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub quarter: Quarter,
    pub questions: Vec<QuestionId>,
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
    pub window: (Quarter, Quarter),
    pub n_obs: usize,
}

impl WeightVector {
    pub fn weight(&self, q: QuestionId) -> Option<f64> {
        self.questions.iter().position(|x| *x == q).map(|i| self.weights[i])
    }
}

/// Pooled OLS on every row dated `≤ as_of − 1`.
pub fn estimate_weights(
    rows: &[TrainingRow],
    questions: &[QuestionId],
    as_of: Quarter,
    intercept: bool,
) -> Result<WeightVector> {
    let cutoff = as_of.offset(-1);
    let window: Vec<&TrainingRow> = rows.iter().filter(|r| r.quarter <= cutoff).collect();
    if window.len() < MIN_TRAINING_ROWS {
        return Err(Error::InsufficientData { have: window.len(), need: MIN_TRAINING_ROWS });
    }
    let k = questions.len() + usize::from(intercept);
    let off = usize::from(intercept);
    let x = DMatrix::from_fn(window.len(), k, |i, j| if intercept && j == 0 { 1.0 } else { window[i].scores[j - off] });
    let y = DVector::from_iterator(window.len(), window.iter().map(|r| r.growth));
    let mut names: Vec<String> = questions.iter().map(|q| q.id().to_string()).collect();
    if intercept {
        names.insert(0, INTERCEPT.to_string());
    }
    let fit = least_squares(&x, &y, &names)?;
    let first = window.iter().map(|r| r.quarter).min().expect("window is non-empty");
    let last = window.iter().map(|r| r.quarter).max().expect("window is non-empty");
    Ok(WeightVector {
        quarter: as_of,
        questions: questions.to_vec(),
        weights: fit.coef.iter().skip(off).copied().collect(),
        intercept: intercept.then(|| fit.coef[0]),
        window: (first, last),
        n_obs: window.len(),
    })
}

/// Weights for every quarter in `first_row + min_window ..= through` whose
/// window covers at least `min_window` distinct quarters. Quarters whose
/// window is too small or rank deficient are skipped.
pub fn weight_history(
    rows: &[TrainingRow],
    questions: &[QuestionId],
    min_window: usize,
    through: Quarter,
    intercept: bool,
) -> Result<Vec<WeightVector>> {
    let Some(first) = rows.iter().map(|r| r.quarter).min() else {
        return Ok(vec![]);
    };
    let quarters: BTreeSet<Quarter> = rows.iter().map(|r| r.quarter).collect();
    let candidates: Vec<Quarter> = (1..)
        .map(|i| first.offset(i))
        .take_while(|q| *q <= through)
        .filter(|t| quarters.range(..*t).count() >= min_window.max(1))
        .collect();
    let results: Vec<(Quarter, Result<WeightVector>)> =
        candidates.par_iter().map(|&t| (t, estimate_weights(rows, questions, t, intercept))).collect();
    let mut out = Vec::with_capacity(results.len());
    for (t, r) in results {
        match r {
            Ok(w) => out.push(w),
            Err(e @ (Error::InsufficientData { .. } | Error::RankDeficient { .. })) => {
                log::warn!("no weights for {t}: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeScoreSeries {
    pub level: Level,
    pub values: BTreeMap<(String, Quarter), f64>,
}

pub fn inner_product(weights: &[f64], scores: &[f64]) -> f64 {
    weights.iter().zip(scores).map(|(w, s)| w * s).sum()
}

/// Inner product of each entity's scores at `t` with the weights estimated for `t`.
/// Cells missing any score are skipped.
pub fn weighted_score(panels: &[ScorePanel], history: &[WeightVector]) -> Result<CompositeScoreSeries> {
    let Some(first) = panels.first() else {
        return Err(Error::invalid("no score panels given"));
    };
    if panels.iter().any(|p| p.level != first.level) {
        return Err(Error::invalid("score panels mix aggregation levels"));
    }
    let by_q: BTreeMap<QuestionId, &ScorePanel> = panels.iter().map(|p| (p.question, p)).collect();
    let mut values = BTreeMap::new();
    for w in history {
        let ps: Vec<&ScorePanel> = w
            .questions
            .iter()
            .map(|q| {
                by_q.get(q).copied().ok_or_else(|| Error::Missing(format!("no score panel for weight `{}`", q.id())))
            })
            .collect::<Result<_>>()?;
        let t = Period::Quarter(w.quarter);
        let entities: BTreeSet<&String> =
            ps.iter().flat_map(|p| p.cells.keys().filter(|(_, pp)| *pp == t).map(|(e, _)| e)).collect();
        for e in entities {
            let key = (e.clone(), t);
            match ps.iter().map(|p| p.cells.get(&key).map(|c| c.score)).collect::<Option<Vec<f64>>>() {
                Some(s) => {
                    values.insert((e.clone(), w.quarter), inner_product(&w.weights, &s));
                }
                None => log::info!("skipping `{e}` at {}: incomplete score vector", w.quarter),
            }
        }
    }
    Ok(CompositeScoreSeries { level: first.level, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStat {
    pub question_id: QuestionId,
    pub mean: f64,
    pub t_stat: f64,
    pub n_quarters: usize,
}

/// Time-series mean of each weight and its Newey–West t-statistic.
pub fn weight_history_stats(history: &[WeightVector]) -> Result<Vec<WeightStat>> {
    if history.len() < 3 {
        return Err(Error::InsufficientData { have: history.len(), need: 3 });
    }
    let questions = &history[0].questions;
    if history.iter().any(|w| &w.questions != questions) {
        return Err(Error::invalid("weight vectors cover different questions"));
    }
    let n = history.len();
    let ones = DMatrix::from_element(n, 1, 1.0);
    questions
        .iter()
        .enumerate()
        .map(|(k, &q)| {
            let series: Vec<f64> = history.iter().map(|w| w.weights[k]).collect();
            let mean = series.iter().sum::<f64>() / n as f64;
            let resid: Vec<f64> = series.iter().map(|v| v - mean).collect();
            let var = newey_west_cov(&ones, &resid, STATS_NW_LAGS.min(n - 1))?[(0, 0)];
            if var <= 0.0 {
                return Err(Error::Numerical(format!("weight series for `{}` has zero variance", q.id())));
            }
            Ok(WeightStat { question_id: q, mean, t_stat: mean / var.sqrt(), n_quarters: n })
        })
        .collect()
}

pub fn write_weights_csv(path: &Path, history: &[WeightVector]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["quarter", "question_id", "beta", "n_obs"])?;
    for v in history {
        for (q, b) in v.questions.iter().zip(&v.weights) {
            w.write_record([v.quarter.to_string(), q.id().to_string(), b.to_string(), v.n_obs.to_string()])?;
        }
        if let Some(c) = v.intercept {
            w.write_record([v.quarter.to_string(), INTERCEPT.to_string(), c.to_string(), v.n_obs.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_composite_csv(path: &Path, series: &[CompositeScoreSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["level", "entity", "quarter", "weighted_score"])?;
    for s in series {
        for ((e, q), v) in &s.values {
            w.write_record([s.level.to_string(), e.clone(), q.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_stats_csv(path: &Path, stats: &[WeightStat]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stats {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
