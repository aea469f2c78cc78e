//! Least squares with classic, Newey–West and within-entity inference.

pub mod linalg;
mod table;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::panel::RegressionFrame;
use linalg::PivotedQr;

pub use table::{format_table, StarThresholds, TableDocument};

pub const INTERCEPT: &str = "const";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    OlsClassic,
    NwHac { lags: usize },
    FeWithin { clustered: bool },
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::OlsClassic => f.write_str("ols_classic"),
            Estimator::NwHac { lags } => write!(f, "nw_hac({lags})"),
            Estimator::FeWithin { clustered: false } => f.write_str("fe_within"),
            Estimator::FeWithin { clustered: true } => f.write_str("fe_within(cluster=entity)"),
        }
    }
}

/// Lag choice for Newey–West covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NwLags {
    /// `floor(4 (n/100)^(2/9))`.
    Auto,
    Fixed(usize),
}

impl NwLags {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            NwLags::Auto => nw_auto_lags(n),
            NwLags::Fixed(l) => l,
        }
    }
}

pub fn nw_auto_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub dependent: String,
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub estimator: Estimator,
    pub n_entities: Option<usize>,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coef_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coef[i])
    }

    pub fn t_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.t_stats[i])
    }
}

/// Least-squares fit without inference.
#[derive(Debug, Clone)]
pub struct Fit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub xtx_inv: DMatrix<f64>,
}

/// Solves `min ‖y − Xβ‖²` by pivoted QR; rank deficiency names the dependent columns.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<Fit> {
    let (n, k) = x.shape();
    if n != y.len() || k != names.len() {
        return Err(Error::invalid(format!("design is {n}×{k} but y has {} rows and {} names", y.len(), names.len())));
    }
    if n < k + 1 {
        return Err(Error::InsufficientData { have: n, need: k + 1 });
    }
    let qr = PivotedQr::new(x.clone());
    if qr.rank() < k {
        return Err(Error::RankDeficient {
            columns: qr.dependent_columns().into_iter().map(|i| names[i].clone()).collect(),
        });
    }
    let coef = qr.solve(y);
    let residuals = y - x * &coef;
    Ok(Fit { coef, residuals, xtx_inv: qr.xtx_inverse() })
}

fn design(frame: &RegressionFrame, intercept: bool) -> (DMatrix<f64>, Vec<String>) {
    let k = frame.regressors.len() + usize::from(intercept);
    let x = DMatrix::from_fn(frame.n_rows(), k, |i, j| match (intercept, j) {
        (true, 0) => 1.0,
        (true, j) => frame.x[i][j - 1],
        (false, j) => frame.x[i][j],
    });
    let mut names = Vec::with_capacity(k);
    if intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(frame.regressors.iter().cloned());
    (x, names)
}

fn r_squared(y: &DVector<f64>, resid: &DVector<f64>, centered: bool) -> f64 {
    let rss = resid.norm_squared();
    let tss = if centered {
        let m = y.mean();
        y.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    if tss == 0.0 {
        return if rss == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - rss / tss
}

#[allow(clippy::too_many_arguments)]
fn finish(
    dependent: &str,
    names: Vec<String>,
    fit: &Fit,
    cov: DMatrix<f64>,
    r2: f64,
    df_resid: usize,
    estimator: Estimator,
    n_entities: Option<usize>,
) -> Result<RegressionResult> {
    let k = names.len();
    let std_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t_stats: Vec<f64> = (0..k).map(|j| fit.coef[j] / std_errors[j]).collect();
    let p_values = t_stats.iter().map(|&t| two_sided_p(t, df_resid)).collect::<Result<_>>()?;
    Ok(RegressionResult {
        dependent: dependent.to_string(),
        names,
        coef: fit.coef.iter().copied().collect(),
        cov: (0..k).map(|i| (0..k).map(|j| cov[(i, j)]).collect()).collect(),
        std_errors,
        t_stats,
        p_values,
        r_squared: r2,
        n_obs: fit.residuals.len(),
        df_resid,
        estimator,
        n_entities,
        residuals: fit.residuals.iter().copied().collect(),
    })
}

/// Two-sided Student-t p-value.
pub fn two_sided_p(t: f64, df: usize) -> Result<f64> {
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    if df == 0 {
        return Err(Error::InsufficientData { have: 0, need: 1 });
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(2.0 * dist.sf(t.abs()))
}

/// OLS with classic covariance `s²(XᵀX)⁻¹`, `s² = RSS/(n−k)`.
pub fn ols(frame: &RegressionFrame, intercept: bool) -> Result<RegressionResult> {
    let (x, names) = design(frame, intercept);
    let y = DVector::from_column_slice(&frame.y);
    let fit = least_squares(&x, &y, &names)?;
    let df = x.nrows() - x.ncols();
    let s2 = fit.residuals.norm_squared() / df as f64;
    let cov = &fit.xtx_inv * s2;
    let r2 = r_squared(&y, &fit.residuals, intercept);
    finish(&frame.dependent, names, &fit, cov, r2, df, Estimator::OlsClassic, None)
}

/// OLS with Newey–West covariance. Rows must already be in time order.
pub fn ols_nw(frame: &RegressionFrame, intercept: bool, lags: NwLags) -> Result<RegressionResult> {
    let (x, names) = design(frame, intercept);
    let y = DVector::from_column_slice(&frame.y);
    let fit = least_squares(&x, &y, &names)?;
    let l = lags.resolve(x.nrows());
    let cov = hac_sandwich(&x, fit.residuals.as_slice(), l, &fit.xtx_inv)?;
    let r2 = r_squared(&y, &fit.residuals, intercept);
    let df = x.nrows() - x.ncols();
    finish(&frame.dependent, names, &fit, cov, r2, df, Estimator::NwHac { lags: l }, None)
}

/// `(XᵀX)⁻¹ [Γ₀ + Σ_{l≤L} (1 − l/(L+1)) (Γ_l + Γ_lᵀ)] (XᵀX)⁻¹`, no small-sample correction.
pub fn newey_west_cov(x: &DMatrix<f64>, residuals: &[f64], lags: usize) -> Result<DMatrix<f64>> {
    let names: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    let qr = PivotedQr::new(x.clone());
    if qr.rank() < x.ncols() {
        return Err(Error::RankDeficient {
            columns: qr.dependent_columns().into_iter().map(|i| names[i].clone()).collect(),
        });
    }
    hac_sandwich(x, residuals, lags, &qr.xtx_inverse())
}

fn hac_sandwich(x: &DMatrix<f64>, e: &[f64], lags: usize, bread: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = x.shape();
    if e.len() != n {
        return Err(Error::invalid(format!("{} residuals for {n} rows", e.len())));
    }
    if lags >= n {
        return Err(Error::invalid(format!("Newey–West lag {lags} must be below the sample size {n}")));
    }
    // scores u_t = e_t x_t
    let u = DMatrix::from_fn(n, k, |t, j| e[t] * x[(t, j)]);
    let mut meat = u.transpose() * &u;
    for l in 1..=lags {
        let w = 1.0 - l as f64 / (lags as f64 + 1.0);
        let gamma = u.rows(l, n - l).transpose() * u.rows(0, n - l);
        meat += (&gamma + gamma.transpose()) * w;
    }
    let cov = bread * meat * bread;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Fixed-effects within estimator: demean by entity, drop singletons, OLS without intercept.
/// Classic errors use `n − G − k` residual degrees of freedom; clustered errors are
/// entity-clustered with the `G/(G−1)·(n−1)/(n−k)` small-sample factor.
pub fn fe_within(frame: &RegressionFrame, clustered: bool) -> Result<RegressionResult> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in frame.entities.iter().enumerate() {
        groups.entry(e.as_str()).or_default().push(i);
    }
    groups.retain(|_, rows| rows.len() >= 2);
    if groups.is_empty() {
        return Err(Error::InsufficientData { have: 1, need: 2 });
    }
    let k = frame.regressors.len();
    let rows: Vec<(usize, usize)> =
        groups.values().enumerate().flat_map(|(g, idx)| idx.iter().map(move |&i| (g, i))).collect();
    let n = rows.len();
    let n_groups = groups.len();
    let mut y = DVector::zeros(n);
    let mut x = DMatrix::zeros(n, k);
    let mut pos = 0;
    for idx in groups.values() {
        let m = idx.len() as f64;
        let y_mean = idx.iter().map(|&i| frame.y[i]).sum::<f64>() / m;
        let x_mean: Vec<f64> = (0..k).map(|j| idx.iter().map(|&i| frame.x[i][j]).sum::<f64>() / m).collect();
        for &i in idx {
            y[pos] = frame.y[i] - y_mean;
            for j in 0..k {
                x[(pos, j)] = frame.x[i][j] - x_mean[j];
            }
            pos += 1;
        }
    }
    if n <= n_groups + k {
        return Err(Error::InsufficientData { have: n, need: n_groups + k + 1 });
    }
    let fit = least_squares(&x, &y, &frame.regressors)?;
    let df = n - n_groups - k;
    let cov = if clustered {
        let mut meat = DMatrix::zeros(k, k);
        let mut start = 0;
        for idx in groups.values() {
            let len = idx.len();
            let xg = x.rows(start, len);
            let eg = fit.residuals.rows(start, len);
            let s = xg.transpose() * eg;
            meat += &s * s.transpose();
            start += len;
        }
        let g = n_groups as f64;
        let factor = if n_groups > 1 { g / (g - 1.0) * (n as f64 - 1.0) / (n - k) as f64 } else { 1.0 };
        &fit.xtx_inv * meat * &fit.xtx_inv * factor
    } else {
        &fit.xtx_inv * (fit.residuals.norm_squared() / df as f64)
    };
    let r2 = r_squared(&y, &fit.residuals, false);
    let df_ref = if clustered { n_groups.saturating_sub(1).max(1) } else { df };
    finish(
        &frame.dependent,
        frame.regressors.clone(),
        &fit,
        cov,
        r2,
        df_ref,
        Estimator::FeWithin { clustered },
        Some(n_groups),
    )
    .map(|mut r| {
        r.n_obs = n;
        r
    })
}

/// Effect of a one-standard-deviation move in a regressor, in percentage points.
pub fn economic_significance(coef: f64, sd_of_regressor: f64) -> f64 {
    coef * sd_of_regressor * 100.0
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    Some((values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt())
}
