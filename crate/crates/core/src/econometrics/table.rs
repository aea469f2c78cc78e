//! Side-by-side regression tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RegressionResult;
use crate::error::{Error, Result};

/// Two-sided p-value cutoffs for one, two and three stars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarThresholds {
    pub one: f64,
    pub two: f64,
    pub three: f64,
}

impl Default for StarThresholds {
    fn default() -> Self {
        Self { one: 0.10, two: 0.05, three: 0.01 }
    }
}

impl StarThresholds {
    pub fn stars(&self, p: f64) -> &'static str {
        if p < self.three {
            "***"
        } else if p < self.two {
            "**"
        } else if p < self.one {
            "*"
        } else {
            ""
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDocument {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// One column per result: coefficient with stars, t-stat in parentheses
/// below, then R² and the observation count. Rows follow first appearance.
pub fn format_table(results: &[RegressionResult], thresholds: &StarThresholds) -> Result<TableDocument> {
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        for name in &r.names {
            if name.trim().is_empty() {
                return Err(Error::invalid(format!("empty coefficient name in `{}`", r.dependent)));
            }
            if !order.contains(&name.as_str()) {
                order.push(name);
            }
        }
    }
    let mut header = vec![String::new()];
    header.extend(results.iter().enumerate().map(|(i, r)| format!("({}) {}", i + 1, r.dependent)));
    let mut rows = Vec::new();
    for name in order {
        let mut coef_row = vec![name.to_string()];
        let mut t_row = vec![String::new()];
        for r in results {
            match r.names.iter().position(|n| n == name) {
                Some(j) => {
                    coef_row.push(format!("{:.3}{}", r.coef[j], thresholds.stars(r.p_values[j])));
                    t_row.push(format!("({:.2})", r.t_stats[j]));
                }
                None => {
                    coef_row.push(String::new());
                    t_row.push(String::new());
                }
            }
        }
        rows.push(coef_row);
        rows.push(t_row);
    }
    let mut r2 = vec!["R2".to_string()];
    r2.extend(results.iter().map(|r| format!("{:.3}", r.r_squared)));
    rows.push(r2);
    let mut nobs = vec!["Observations".to_string()];
    nobs.extend(results.iter().map(|r| r.n_obs.to_string()));
    rows.push(nobs);
    let mut est = vec!["Estimator".to_string()];
    est.extend(results.iter().map(|r| r.estimator.to_string()));
    rows.push(est);
    Ok(TableDocument { header, rows })
}

impl TableDocument {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
        out.push_str(&line(&self.header));
        let _ = writeln!(out, "|{}", "---|".repeat(self.header.len()));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{two_sided_p, Estimator};

    fn result(names: &[&str], t: f64, df: usize) -> RegressionResult {
        let k = names.len();
        RegressionResult {
            dependent: "y".into(),
            names: names.iter().map(|s| s.to_string()).collect(),
            coef: vec![1.0; k],
            cov: vec![vec![0.0; k]; k],
            std_errors: vec![1.0 / t; k],
            t_stats: vec![t; k],
            p_values: vec![two_sided_p(t, df).unwrap(); k],
            r_squared: 0.5,
            n_obs: df + k,
            df_resid: df,
            estimator: Estimator::OlsClassic,
            n_entities: None,
            residuals: vec![],
        }
    }

    #[test]
    fn single_column() {
        let doc = format_table(&[result(&["const", "x"], 2.0, 60)], &StarThresholds::default()).unwrap();
        assert_eq!(doc.header.len(), 2);
        assert!(doc.to_markdown().contains("| x | 1.000* |"));
    }

    #[test]
    fn boundary_at_two_point_five_eight() {
        let doc = format_table(&[result(&["x"], 2.58, 60)], &StarThresholds::default()).unwrap();
        assert_eq!(doc.rows[0][1], "1.000**");
    }

    #[test]
    fn empty_name_rejected() {
        assert!(format_table(&[result(&["x", ""], 2.0, 60)], &StarThresholds::default()).is_err());
    }
}
