//! Score panels, macro series and regression frames.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sector, Transcript};
use crate::error::{Error, Result};
use crate::period::{Frequency, Period, Quarter};
use crate::scoring::{FirmQuarterScore, QuestionId};

/// Entity key of national-level cells and of columns shared by every entity.
pub const NATIONAL: &str = "";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    National,
    Industry,
    Firm,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::National => "national",
            Level::Industry => "industry",
            Level::Firm => "firm",
        })
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "national" => Ok(Level::National),
            "industry" => Ok(Level::Industry),
            "firm" => Ok(Level::Firm),
            _ => Err(Error::invalid(format!("unknown level `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelCell {
    pub score: f64,
    pub n_firms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorePanel {
    pub level: Level,
    pub frequency: Frequency,
    pub question: QuestionId,
    pub cells: BTreeMap<(String, Period), PanelCell>,
}

impl ScorePanel {
    /// Panel values as a column keyed the way frames look them up.
    pub fn to_column(&self) -> DataColumn {
        DataColumn { cells: self.cells.iter().map(|((e, p), c)| ((e.clone(), *p), c.score)).collect() }
    }
}

/// Firm → sector, from the corpus. A firm whose label changes keeps the most recent one.
pub fn firm_sectors(corpus: &[Transcript]) -> HashMap<String, Sector> {
    let mut latest: HashMap<String, (Quarter, Sector)> = HashMap::new();
    for t in corpus {
        let e = latest.entry(t.firm_id.clone()).or_insert((t.quarter, t.sector));
        if t.quarter >= e.0 {
            *e = (t.quarter, t.sector);
        }
    }
    latest.into_iter().map(|(f, (_, s))| (f, s)).collect()
}

/// Equal-weighted mean of firm scores per (entity, quarter). Firms without a
/// call in a quarter are absent from that quarter's mean.
pub fn aggregate_scores(
    scores: &[FirmQuarterScore],
    sectors: &HashMap<String, Sector>,
    level: Level,
    question: QuestionId,
) -> Result<ScorePanel> {
    let mut sums: BTreeMap<(String, Period), (f64, usize)> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.question == question) {
        let entity = match level {
            Level::National => NATIONAL.to_string(),
            Level::Firm => s.firm_id.clone(),
            Level::Industry => sectors
                .get(&s.firm_id)
                .ok_or_else(|| Error::Missing(format!("no sector for firm `{}`", s.firm_id)))?
                .id()
                .to_string(),
        };
        let e = sums.entry((entity, Period::Quarter(s.quarter))).or_insert((0.0, 0));
        e.0 += s.score;
        e.1 += 1;
    }
    Ok(ScorePanel {
        level,
        frequency: Frequency::Quarterly,
        question,
        cells: sums.into_iter().map(|(k, (sum, n))| (k, PanelCell { score: sum / n as f64, n_firms: n })).collect(),
    })
}

/// Mean of the available quarters in each year. `n_firms` of an annual cell
/// is the largest quarterly count in that year.
pub fn annualize(panel: &ScorePanel) -> Result<ScorePanel> {
    if panel.frequency != Frequency::Quarterly {
        return Err(Error::invalid("annualize expects a quarterly panel"));
    }
    let mut acc: BTreeMap<(String, Period), (f64, usize, usize)> = BTreeMap::new();
    for ((entity, period), cell) in &panel.cells {
        let e = acc.entry((entity.clone(), Period::Year(period.year()))).or_insert((0.0, 0, 0));
        e.0 += cell.score;
        e.1 += 1;
        e.2 = e.2.max(cell.n_firms);
    }
    Ok(ScorePanel {
        level: panel.level,
        frequency: Frequency::Annual,
        question: panel.question,
        cells: acc
            .into_iter()
            .map(|(k, (sum, n, firms))| (k, PanelCell { score: sum / n as f64, n_firms: firms }))
            .collect(),
    })
}

pub fn write_panel(path: &Path, panel: &ScorePanel) -> Result<()> {
    write_panels(path, std::slice::from_ref(panel))
}

/// Long-format panel CSV: question_id, level, entity, period, score, n_firms.
pub fn write_panels(path: &Path, panels: &[ScorePanel]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["question_id", "level", "entity", "period", "score", "n_firms"])?;
    for p in panels {
        for ((entity, period), cell) in &p.cells {
            w.write_record([
                p.question.id().to_string(),
                p.level.to_string(),
                entity.clone(),
                period.to_string(),
                cell.score.to_string(),
                cell.n_firms.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    question_id: QuestionId,
    level: String,
    entity: String,
    period: Period,
    score: f64,
    n_firms: usize,
}

pub fn read_panels(path: &Path) -> Result<Vec<ScorePanel>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut panels: BTreeMap<(QuestionId, String, Frequency), ScorePanel> = BTreeMap::new();
    for row in r.deserialize::<PanelRow>() {
        let row = row?;
        let level: Level = row.level.parse()?;
        let freq = row.period.frequency();
        panels
            .entry((row.question_id, row.level.clone(), freq))
            .or_insert_with(|| ScorePanel { level, frequency: freq, question: row.question_id, cells: BTreeMap::new() })
            .cells
            .insert((row.entity, row.period), PanelCell { score: row.score, n_firms: row.n_firms });
    }
    Ok(panels.into_values().collect())
}

/// `ln(X_{t+to} / X_{t+from})` for every `t` where both levels exist.
pub fn log_growth(levels: &BTreeMap<Period, f64>, from_offset: i64, to_offset: i64) -> Result<BTreeMap<Period, f64>> {
    let mut out = BTreeMap::new();
    for &t in levels.keys() {
        let base_p = t.offset(from_offset);
        let end_p = t.offset(to_offset);
        let (Some(&base), Some(&end)) = (levels.get(&base_p), levels.get(&end_p)) else { continue };
        for (p, v) in [(base_p, base), (end_p, end)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::NonPositiveLevel { period: p.to_string(), value: v });
            }
        }
        out.insert(t, (end / base).ln());
    }
    Ok(out)
}

/// Monthly observations keyed by (year, month).
pub type MonthlySeries = BTreeMap<(i32, u8), f64>;

/// Quarter value = mean of its three months; every touched quarter must be complete.
pub fn quarterly_average(monthly: &MonthlySeries) -> Result<BTreeMap<Quarter, f64>> {
    let mut by_q: BTreeMap<Quarter, Vec<f64>> = BTreeMap::new();
    for (&(year, month), &v) in monthly {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} outside 1..=12")));
        }
        by_q.entry(Quarter::new(year, (month - 1) / 3 + 1)?).or_default().push(v);
    }
    by_q.into_iter()
        .map(|(q, vals)| {
            if vals.len() != 3 {
                return Err(Error::Missing(format!("{q} has {} of 3 months", vals.len())));
            }
            Ok((q, vals.iter().sum::<f64>() / 3.0))
        })
        .collect()
}

/// Year value = mean of its twelve months.
pub fn annual_average(monthly: &MonthlySeries) -> Result<BTreeMap<i32, f64>> {
    let mut by_y: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (&(year, _), &v) in monthly {
        by_y.entry(year).or_default().push(v);
    }
    by_y.into_iter()
        .map(|(y, vals)| {
            if vals.len() != 12 {
                return Err(Error::Missing(format!("{y} has {} of 12 months", vals.len())));
            }
            Ok((y, vals.iter().sum::<f64>() / 12.0))
        })
        .collect()
}

/// Arithmetic growth of the median t+1 forecast over the realized t−1 level.
pub fn spf_growth(median_forecast: f64, realized_prev: f64) -> Result<f64> {
    if realized_prev <= 0.0 || !realized_prev.is_finite() {
        return Err(Error::NonPositiveLevel { period: "t-1".into(), value: realized_prev });
    }
    Ok((median_forecast - realized_prev) / realized_prev)
}

/// One named series over (entity, period). Entity [`NATIONAL`] cells apply to
/// every entity that lacks its own value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataColumn {
    pub cells: BTreeMap<(String, Period), f64>,
}

impl DataColumn {
    pub fn get(&self, entity: &str, period: Period) -> Option<f64> {
        self.cells
            .get(&(entity.to_string(), period))
            .or_else(|| self.cells.get(&(NATIONAL.to_string(), period)))
            .copied()
    }

    pub fn entities(&self) -> BTreeSet<String> {
        self.cells.keys().map(|(e, _)| e.clone()).collect()
    }

    pub fn periods(&self) -> BTreeSet<Period> {
        self.cells.keys().map(|(_, p)| *p).collect()
    }

    pub fn series(&self, entity: &str) -> BTreeMap<Period, f64> {
        self.cells.iter().filter(|((e, _), _)| e == entity).map(|((_, p), v)| (*p, *v)).collect()
    }

    pub fn from_series(entity: &str, series: &BTreeMap<Period, f64>) -> Self {
        Self { cells: series.iter().map(|(p, v)| ((entity.to_string(), *p), *v)).collect() }
    }
}

/// Named macro columns read from CSV: a `period` column (YYYYQn or YYYY), an
/// optional `entity` column, and numeric value columns. Empty cells are missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroSeries {
    pub columns: BTreeMap<String, DataColumn>,
}

impl MacroSeries {
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        Self::from_reader(&mut r)
    }

    pub fn from_reader<R: std::io::Read>(r: &mut csv::Reader<R>) -> Result<Self> {
        let headers = r.headers()?.clone();
        let period_idx = headers
            .iter()
            .position(|h| h == "period")
            .ok_or_else(|| Error::invalid("macro CSV lacks a `period` column"))?;
        let entity_idx = headers.iter().position(|h| h == "entity");
        let mut columns: BTreeMap<String, DataColumn> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != period_idx && Some(*i) != entity_idx)
            .map(|(_, h)| (h.to_string(), DataColumn::default()))
            .collect();
        for (row_no, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row_no + 2;
            let period: Period =
                rec[period_idx].parse().map_err(|e: Error| Error::Record { line, message: e.to_string() })?;
            let entity = entity_idx.map(|i| rec[i].to_string()).unwrap_or_default();
            for (i, field) in rec.iter().enumerate() {
                if i == period_idx || Some(i) == entity_idx || field.trim().is_empty() {
                    continue;
                }
                let v: f64 = field.trim().parse().map_err(|_| Error::Record {
                    line,
                    message: format!("`{field}` in column `{}` is not a number", &headers[i]),
                })?;
                columns
                    .get_mut(&headers[i])
                    .expect("column registered from headers")
                    .cells
                    .insert((entity.clone(), period), v);
            }
        }
        Ok(Self { columns })
    }

    /// Monthly CSV (`period` = YYYY-MM) averaged to quarters or years.
    pub fn from_monthly_csv(path: &Path, frequency: Frequency) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let period_idx = headers
            .iter()
            .position(|h| h == "period")
            .ok_or_else(|| Error::invalid("monthly CSV lacks a `period` column"))?;
        let mut monthly: BTreeMap<String, MonthlySeries> = BTreeMap::new();
        for (row_no, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row_no + 2;
            let bad = || Error::Record { line, message: format!("`{}` is not YYYY-MM", &rec[period_idx]) };
            let (y, m) = rec[period_idx].split_once('-').ok_or_else(bad)?;
            let key: (i32, u8) = (y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
            for (i, field) in rec.iter().enumerate() {
                if i == period_idx || field.trim().is_empty() {
                    continue;
                }
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Record { line, message: format!("`{field}` is not a number") })?;
                monthly.entry(headers[i].to_string()).or_default().insert(key, v);
            }
        }
        let mut columns = BTreeMap::new();
        for (name, series) in monthly {
            let series: BTreeMap<Period, f64> = match frequency {
                Frequency::Quarterly => {
                    quarterly_average(&series)?.into_iter().map(|(q, v)| (Period::Quarter(q), v)).collect()
                }
                Frequency::Annual => annual_average(&series)?.into_iter().map(|(y, v)| (Period::Year(y), v)).collect(),
            };
            columns.insert(name, DataColumn::from_series(NATIONAL, &series));
        }
        Ok(Self { columns })
    }

    pub fn column(&self, name: &str) -> Result<&DataColumn> {
        self.columns.get(name).ok_or_else(|| Error::Missing(format!("column `{name}`")))
    }

    pub fn merge(&mut self, other: MacroSeries) {
        for (name, col) in other.columns {
            self.columns.entry(name).or_default().cells.extend(col.cells);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpec {
    pub target: String,
    pub horizon: usize,
    pub lags: usize,
    pub level: Level,
}

/// Regression-ready rows, sorted by (entity, period), with no missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFrame {
    pub dependent: String,
    pub y: Vec<f64>,
    pub regressors: Vec<String>,
    /// Row-major, `x[row][col]`.
    pub x: Vec<Vec<f64>>,
    pub periods: Vec<Period>,
    pub entities: Vec<String>,
    pub horizon: usize,
    pub lags: usize,
    pub level: Level,
}

impl RegressionFrame {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    /// Keeps only the named regressors, in the given order.
    pub fn select(&self, names: &[String]) -> Result<RegressionFrame> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.regressors
                    .iter()
                    .position(|r| r == n)
                    .ok_or_else(|| Error::Missing(format!("regressor `{n}` not in frame")))
            })
            .collect::<Result<_>>()?;
        Ok(RegressionFrame {
            regressors: names.to_vec(),
            x: self.x.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect(),
            ..self.clone()
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut file = std::io::BufWriter::new(file);
        writeln!(file, "# horizon={} lags={} level={}", self.horizon, self.lags, self.level)
            .map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = vec!["entity".to_string(), "period".to_string(), format!("y:{}", self.dependent)];
        header.extend(self.regressors.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.entities[i].clone(), self.periods[i].to_string(), self.y[i].to_string()];
            rec.extend(self.x[i].iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (mut horizon, mut lags, mut level) = (0, 0, Level::National);
        if let Some(meta) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("horizon", v)) => horizon = v.parse().map_err(|_| Error::invalid("bad horizon"))?,
                    Some(("lags", v)) => lags = v.parse().map_err(|_| Error::invalid("bad lags"))?,
                    Some(("level", v)) => level = v.parse()?,
                    _ => {}
                }
            }
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "entity" || &headers[1] != "period" {
            return Err(Error::invalid("frame CSV must start with entity, period, y:<name>"));
        }
        let dependent = headers[2].strip_prefix("y:").unwrap_or(&headers[2]).to_string();
        let regressors: Vec<String> = headers.iter().skip(3).map(String::from).collect();
        let mut frame = RegressionFrame {
            dependent,
            y: vec![],
            regressors,
            x: vec![],
            periods: vec![],
            entities: vec![],
            horizon,
            lags,
            level,
        };
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Record { line: i + 3, message: format!("`{s}` is not a number") })
            };
            frame.entities.push(rec[0].to_string());
            frame.periods.push(rec[1].parse()?);
            frame.y.push(num(&rec[2])?);
            frame.x.push(rec.iter().skip(3).map(num).collect::<Result<_>>()?);
        }
        Ok(frame)
    }
}

pub fn lag_name(target: &str, i: usize) -> String {
    format!("{target}_lag{i}")
}

/// Builds `ln(X_{t+n}/X_{t-1})` on regressors dated `t` plus `L` one-period
/// growth lags `ln(X_{t-i}/X_{t-i-1})`. Rows with any missing value are dropped.
pub fn build_frame(
    spec: &FrameSpec,
    target: &DataColumn,
    regressors: &[(String, &DataColumn)],
) -> Result<RegressionFrame> {
    let required = spec.lags + spec.horizon + 2;
    let target_periods = target.periods();
    let (Some(&first), Some(&last)) = (target_periods.first(), target_periods.last()) else {
        return Err(Error::InsufficientOverlap { column: spec.target.clone(), available: 0, required });
    };
    let span = target.entities().iter().map(|e| target.series(e).len()).max().unwrap_or(0);
    if span < required {
        return Err(Error::InsufficientOverlap { column: spec.target.clone(), available: span, required });
    }
    for (name, col) in regressors {
        let overlap = col.periods().range(first..=last).count();
        if overlap < required {
            return Err(Error::InsufficientOverlap { column: name.clone(), available: overlap, required });
        }
    }

    let n = spec.horizon as i64;
    let mut frame = RegressionFrame {
        dependent: format!("{}_h{}", spec.target, spec.horizon),
        y: vec![],
        regressors: regressors.iter().map(|(n, _)| n.clone()).collect(),
        x: vec![],
        periods: vec![],
        entities: vec![],
        horizon: spec.horizon,
        lags: spec.lags,
        level: spec.level,
    };
    frame.regressors.extend((1..=spec.lags).map(|i| lag_name(&spec.target, i)));

    for entity in target.entities() {
        let levels = target.series(&entity);
        let dep = log_growth(&levels, -1, n)?;
        let one_step = log_growth(&levels, -1, 0)?;
        'rows: for (&t, &y) in &dep {
            let mut row = Vec::with_capacity(frame.regressors.len());
            for (_, col) in regressors {
                match col.get(&entity, t) {
                    Some(v) => row.push(v),
                    None => continue 'rows,
                }
            }
            for i in 1..=spec.lags as i64 {
                match one_step.get(&t.offset(-i)) {
                    Some(&g) => row.push(g),
                    None => continue 'rows,
                }
            }
            frame.y.push(y);
            frame.x.push(row);
            frame.periods.push(t);
            frame.entities.push(entity.clone());
        }
    }
    if frame.y.is_empty() {
        return Err(Error::Missing(format!("no complete rows for target `{}`", spec.target)));
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(y: i32, n: u8) -> Quarter {
        Quarter::new(y, n).unwrap()
    }

    fn fq(firm: &str, quarter: Quarter, score: f64) -> FirmQuarterScore {
        FirmQuarterScore {
            firm_id: firm.into(),
            quarter,
            question: QuestionId::EconomyUs,
            score,
            n_chunks: 1,
            n_malformed: 0,
        }
    }

    #[test]
    fn national_mean() {
        let scores = vec![fq("A", q(2010, 1), 0.5), fq("B", q(2010, 1), -0.5)];
        let p = aggregate_scores(&scores, &HashMap::new(), Level::National, QuestionId::EconomyUs).unwrap();
        let cell = p.cells[&(NATIONAL.to_string(), Period::Quarter(q(2010, 1)))];
        assert_eq!((cell.score, cell.n_firms), (0.0, 2));
    }

    #[test]
    fn single_firm_identity_and_absent_quarters() {
        let scores = vec![fq("A", q(2010, 1), 0.25), fq("A", q(2010, 3), -0.75)];
        let p = aggregate_scores(&scores, &HashMap::new(), Level::National, QuestionId::EconomyUs).unwrap();
        assert_eq!(p.cells.len(), 2);
        assert_eq!(p.cells[&(NATIONAL.to_string(), Period::Quarter(q(2010, 3)))].score, -0.75);
        let other = aggregate_scores(&scores, &HashMap::new(), Level::National, QuestionId::Wages).unwrap();
        assert!(other.cells.is_empty());
    }

    #[test]
    fn industry_needs_sector() {
        let scores = vec![fq("A", q(2010, 1), 0.5)];
        assert!(aggregate_scores(&scores, &HashMap::new(), Level::Industry, QuestionId::EconomyUs).is_err());
    }

    fn panel_of(values: &[(Quarter, f64)]) -> ScorePanel {
        ScorePanel {
            level: Level::National,
            frequency: Frequency::Quarterly,
            question: QuestionId::EconomyUs,
            cells: values
                .iter()
                .map(|&(qq, s)| ((NATIONAL.to_string(), Period::Quarter(qq)), PanelCell { score: s, n_firms: 1 }))
                .collect(),
        }
    }

    #[test]
    fn annual_means() {
        let constant = panel_of(&[(q(2010, 1), 0.2), (q(2010, 2), 0.2), (q(2010, 3), 0.2), (q(2010, 4), 0.2)]);
        let a = annualize(&constant).unwrap();
        assert!((a.cells[&(NATIONAL.to_string(), Period::Year(2010))].score - 0.2).abs() < 1e-15);
        let bump = panel_of(&[(q(2011, 1), 0.0), (q(2011, 2), 0.0), (q(2011, 3), 0.0), (q(2011, 4), 0.4)]);
        assert!(
            (annualize(&bump).unwrap().cells[&(NATIONAL.to_string(), Period::Year(2011))].score - 0.1).abs() < 1e-15
        );
        let three = panel_of(&[(q(2012, 1), 0.3), (q(2012, 2), 0.6), (q(2012, 4), 0.0)]);
        assert!(
            (annualize(&three).unwrap().cells[&(NATIONAL.to_string(), Period::Year(2012))].score - 0.3).abs() < 1e-15
        );
        assert!(annualize(&annualize(&three).unwrap()).is_err());
    }

    fn levels(values: &[f64]) -> BTreeMap<Period, f64> {
        values.iter().enumerate().map(|(i, &v)| (Period::Quarter(q(2000, 1).offset(i as i64)), v)).collect()
    }

    #[test]
    fn log_growth_examples() {
        let flat = log_growth(&levels(&[5.0, 7.0, 5.0]), -1, 1).unwrap();
        assert_eq!(flat[&Period::Quarter(q(2000, 2))], 0.0);
        let e = log_growth(&levels(&[2.0, 3.0, 2.0 * std::f64::consts::E]), -1, 1).unwrap();
        assert!((e[&Period::Quarter(q(2000, 2))] - 1.0).abs() < 1e-15);
        let g = log_growth(&levels(&[100.0, 102.0, 105.0]), -1, 1).unwrap();
        assert!((g[&Period::Quarter(q(2000, 2))] - 0.048790164169432).abs() < 1e-12);
        match log_growth(&levels(&[100.0, 0.0, 105.0]), -1, 0) {
            Err(Error::NonPositiveLevel { period, .. }) => assert_eq!(period, "2000Q2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn monthly_averages() {
        let m: MonthlySeries = [((2010, 1), 1.0), ((2010, 2), 2.0), ((2010, 3), 3.0)].into_iter().collect();
        assert_eq!(quarterly_average(&m).unwrap()[&q(2010, 1)], 2.0);
        let c: MonthlySeries = (4..=6).map(|mo| ((2010, mo), 0.7)).collect();
        assert!((quarterly_average(&c).unwrap()[&q(2010, 2)] - 0.7).abs() < 1e-15);
        let gap: MonthlySeries = [((2010, 1), 1.0), ((2010, 3), 3.0)].into_iter().collect();
        assert!(quarterly_average(&gap).is_err());
        let year: MonthlySeries = (1..=12).map(|mo| ((2011, mo), f64::from(mo))).collect();
        assert_eq!(annual_average(&year).unwrap()[&2011], 6.5);
    }

    #[test]
    fn spf_examples() {
        assert_eq!(spf_growth(20_000.0, 20_000.0).unwrap(), 0.0);
        assert!((spf_growth(1.02 * 300.0, 300.0).unwrap() - 0.02).abs() < 1e-15);
        assert!((spf_growth(20_604.0, 20_000.0).unwrap() - 0.0302).abs() < 1e-15);
        assert!(spf_growth(1.0, 0.0).is_err());
    }

    fn national_fixture(n_levels: usize, n_scores: usize) -> (DataColumn, DataColumn) {
        let start = q(2005, 1);
        let gdp: BTreeMap<Period, f64> = (0..n_levels)
            .map(|i| {
                (
                    Period::Quarter(start.offset(i as i64)),
                    100.0 * (1.0 + 0.005 * i as f64 + 0.001 * ((i * 7) % 5) as f64),
                )
            })
            .collect();
        let score: BTreeMap<Period, f64> = (0..n_scores)
            .map(|i| (Period::Quarter(start.offset((n_levels - n_scores + i) as i64)), ((i % 9) as f64 - 4.0) / 10.0))
            .collect();
        (DataColumn::from_series(NATIONAL, &gdp), DataColumn::from_series(NATIONAL, &score))
    }

    #[test]
    fn frame_lag_columns() {
        let (gdp, score) = national_fixture(30, 30);
        let spec = FrameSpec { target: "real_gdp".into(), horizon: 1, lags: 0, level: Level::National };
        let f = build_frame(&spec, &gdp, &[("ai_score".into(), &score)]).unwrap();
        assert_eq!(f.regressors, vec!["ai_score".to_string()]);
        assert_eq!(f.n_rows(), 28);
        let spec4 = FrameSpec { lags: 4, ..spec };
        let f4 = build_frame(&spec4, &gdp, &[("ai_score".into(), &score)]).unwrap();
        assert_eq!(f4.regressors.len(), 5);
        assert_eq!(f4.n_rows(), 24);
        assert!(f4.periods.windows(2).all(|w| w[0] < w[1]));
        // lag 1 at t equals ln(X_{t-1}/X_{t-2})
        let t = f4.periods[0];
        let lv = gdp.series(NATIONAL);
        let want = (lv[&t.offset(-1)] / lv[&t.offset(-2)]).ln();
        assert!((f4.x[0][1] - want).abs() < 1e-15);
    }

    #[test]
    fn longer_horizon_drops_rows() {
        let (gdp, score) = national_fixture(40, 40);
        let mk = |h| FrameSpec { target: "real_gdp".into(), horizon: h, lags: 4, level: Level::National };
        let r1 = build_frame(&mk(1), &gdp, &[("s".into(), &score)]).unwrap().n_rows();
        let r6 = build_frame(&mk(6), &gdp, &[("s".into(), &score)]).unwrap().n_rows();
        assert_eq!(r1 - r6, 5);
    }

    #[test]
    fn insufficient_overlap_names_column() {
        let (gdp, _) = national_fixture(40, 40);
        let (_, short) = national_fixture(40, 3);
        let spec = FrameSpec { target: "real_gdp".into(), horizon: 1, lags: 4, level: Level::National };
        match build_frame(&spec, &gdp, &[("short".into(), &short)]) {
            Err(Error::InsufficientOverlap { column, .. }) => assert_eq!(column, "short"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn frame_csv_round_trip() {
        let (gdp, score) = national_fixture(20, 20);
        let spec = FrameSpec { target: "real_gdp".into(), horizon: 2, lags: 1, level: Level::National };
        let f = build_frame(&spec, &gdp, &[("s".into(), &score)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        assert_eq!(RegressionFrame::read_csv(&path).unwrap(), f);
    }

    #[test]
    fn macro_csv_parsing() {
        let data = "period,real_gdp,term_spread\n2010Q1,100,0.5\n2010Q2,101,\n";
        let mut r = csv::Reader::from_reader(data.as_bytes());
        let m = MacroSeries::from_reader(&mut r).unwrap();
        let p = Period::Quarter(q(2010, 2));
        assert_eq!(m.column("real_gdp").unwrap().get("any", p), Some(101.0));
        assert_eq!(m.column("term_spread").unwrap().get(NATIONAL, p), None);
        let bad = "period,x\n2010Q1,abc\n";
        let mut r = csv::Reader::from_reader(bad.as_bytes());
        assert!(matches!(MacroSeries::from_reader(&mut r), Err(Error::Record { line: 2, .. })));
    }
}
