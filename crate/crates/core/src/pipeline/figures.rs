//! Long-format CSV series for external plotting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::{Level, ScorePanel};
use crate::period::{Frequency, Period};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    ScoreVsGrowth,
    ScoreByIndustry,
    Irf,
}

impl FigureKind {
    pub fn file_name(self) -> &'static str {
        match self {
            FigureKind::ScoreVsGrowth => "score_vs_growth.csv",
            FigureKind::ScoreByIndustry => "score_by_industry.csv",
            FigureKind::Irf => "irf.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthPoint {
    pub period: Period,
    pub score: f64,
    /// `ln(GDP_{t+1} / GDP_{t−3})`.
    pub growth: f64,
}

/// Pairs the score at `t` with log growth from `t−3` to `t+1`.
pub fn score_vs_growth(score: &BTreeMap<Period, f64>, gdp: &BTreeMap<Period, f64>) -> Result<Vec<GrowthPoint>> {
    let mut missing = BTreeSet::new();
    let mut out = Vec::with_capacity(score.len());
    for (&t, &s) in score {
        let (end, base) = (t.offset(1), t.offset(-3));
        match (gdp.get(&end), gdp.get(&base)) {
            (Some(&e), Some(&b)) => {
                if e <= 0.0 || b <= 0.0 {
                    let (p, v) = if e <= 0.0 { (end, e) } else { (base, b) };
                    return Err(Error::NonPositiveLevel { period: p.to_string(), value: v });
                }
                out.push(GrowthPoint { period: t, score: s, growth: (e / b).ln() });
            }
            (e, b) => {
                if e.is_none() {
                    missing.insert(end);
                }
                if b.is_none() {
                    missing.insert(base);
                }
            }
        }
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(Period::to_string).collect();
        return Err(Error::Missing(format!("GDP level for {}", list.join(", "))));
    }
    Ok(out)
}

pub fn write_score_vs_growth(path: &Path, points: &[GrowthPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["period", "score", "gdp_growth_t-3_t+1"])?;
    for p in points {
        w.write_record([p.period.to_string(), p.score.to_string(), p.growth.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Industry × year grid of annual scores.
pub fn write_score_by_industry(path: &Path, panel: &ScorePanel) -> Result<()> {
    if panel.level != Level::Industry || panel.frequency != Frequency::Annual {
        return Err(Error::invalid("industry heat-map data needs an annual industry panel"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["industry", "year", "score", "n_firms"])?;
    for ((industry, period), cell) in &panel.cells {
        w.write_record([
            industry.clone(),
            period.year().to_string(),
            cell.score.to_string(),
            cell.n_firms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
