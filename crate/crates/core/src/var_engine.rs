//! Reduced-form VAR, recursive (Cholesky) impulse responses and residual bootstrap bands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::econometrics::linalg::PivotedQr;
use crate::error::{Error, Result};
use crate::panel::{MacroSeries, NATIONAL};
use crate::period::Period;

/// Endogenous variables in recursive order; the first three and the excess
/// return are growth rates whose responses are accumulated.
pub const DEFAULT_ORDER: [&str; 8] = [
    "consumption_growth",
    "investment_growth",
    "gdp_growth",
    "inflation",
    "ai_economy_score",
    "excess_return",
    "treasury_10y",
    "fed_funds",
];

const DEFAULT_ACCUMULATE: [bool; 8] = [true, true, true, false, false, true, false, false];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub order: Vec<String>,
    pub lags: usize,
    pub accumulate: Vec<bool>,
    pub horizon: usize,
}

impl Default for VarSpec {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER.iter().map(|s| s.to_string()).collect(),
            lags: 2,
            accumulate: DEFAULT_ACCUMULATE.to_vec(),
            horizon: 20,
        }
    }
}

impl VarSpec {
    /// Order with accumulate flags taken from the default list by name.
    pub fn with_order(order: Vec<String>, lags: usize, horizon: usize) -> Result<Self> {
        let accumulate = order
            .iter()
            .map(|n| DEFAULT_ORDER.iter().position(|d| d == n).is_some_and(|i| DEFAULT_ACCUMULATE[i]))
            .collect();
        let spec = Self { order, lags, accumulate, horizon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order.is_empty() {
            return Err(Error::invalid("VAR needs at least one variable"));
        }
        if self.lags == 0 || self.horizon == 0 {
            return Err(Error::invalid("VAR lags and horizon must be at least 1"));
        }
        if self.accumulate.len() != self.order.len() {
            return Err(Error::invalid(format!(
                "{} accumulate flags for {} variables",
                self.accumulate.len(),
                self.order.len()
            )));
        }
        for (i, n) in self.order.iter().enumerate() {
            if self.order[..i].contains(n) {
                return Err(Error::invalid(format!("variable `{n}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn shock_index(&self, name: &str) -> Result<usize> {
        self.order
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Missing(format!("shock variable `{name}` not in VAR order")))
    }
}

/// Observations in time order, `values[(t, i)]` for variable `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarData {
    pub names: Vec<String>,
    pub periods: Vec<Period>,
    pub values: DMatrix<f64>,
}

impl VarData {
    /// Rows where every listed variable is present; the rows must be consecutive periods.
    pub fn from_macro(series: &MacroSeries, order: &[String]) -> Result<Self> {
        let cols = order.iter().map(|n| series.column(n)).collect::<Result<Vec<_>>>()?;
        let mut periods: Vec<Period> = cols[0].periods().into_iter().collect();
        periods.retain(|p| cols.iter().all(|c| c.get(NATIONAL, *p).is_some()));
        for w in periods.windows(2) {
            if w[0].distance(w[1]) != Some(1) {
                return Err(Error::Missing(format!("VAR data has a gap between {} and {}", w[0], w[1])));
            }
        }
        let values = DMatrix::from_fn(periods.len(), order.len(), |t, i| {
            cols[i].get(NATIONAL, periods[t]).expect("filtered to complete rows")
        });
        Ok(Self { names: order.to_vec(), periods, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub names: Vec<String>,
    pub intercept: DVector<f64>,
    /// `coefs[l]` is `A_{l+1}`; row = equation, column = regressor variable.
    pub coefs: Vec<DMatrix<f64>>,
    /// Standard errors matching `coefs`.
    pub std_errors: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    /// Lower-triangular `P` with `P Pᵀ = Σ`.
    pub chol: DMatrix<f64>,
    /// Rows `p..T` of the sample.
    pub residuals: DMatrix<f64>,
}

impl VarModel {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }

    pub fn lags(&self) -> usize {
        self.coefs.len()
    }
}

/// Equation-by-equation OLS with intercept; `Σ = EᵀE / (T − p)`.
pub fn estimate_var(data: &DMatrix<f64>, names: &[String], lags: usize) -> Result<VarModel> {
    let (t, k) = data.shape();
    if names.len() != k {
        return Err(Error::invalid(format!("{} names for {k} series", names.len())));
    }
    if lags == 0 {
        return Err(Error::invalid("VAR lag order must be at least 1"));
    }
    let m = 1 + k * lags;
    if t <= k * lags + 1 || t - lags <= m {
        return Err(Error::InsufficientData { have: t, need: (k * lags + 2).max(lags + m + 1) });
    }
    let rows = t - lags;
    let z = DMatrix::from_fn(rows, m, |r, c| {
        if c == 0 {
            1.0
        } else {
            let (l, i) = ((c - 1) / k + 1, (c - 1) % k);
            data[(r + lags - l, i)]
        }
    });
    let qr = PivotedQr::new(z.clone());
    if qr.rank() < m {
        let label = |c: usize| {
            if c == 0 {
                "const".to_string()
            } else {
                format!("{}_lag{}", names[(c - 1) % k], (c - 1) / k + 1)
            }
        };
        return Err(Error::RankDeficient { columns: qr.dependent_columns().into_iter().map(label).collect() });
    }
    let y = data.rows(lags, rows).clone_owned();
    let mut b = DMatrix::zeros(m, k);
    for eq in 0..k {
        b.set_column(eq, &qr.solve(&y.column(eq).clone_owned()));
    }
    let residuals = &y - &z * &b;
    let sigma = {
        let s = residuals.transpose() * &residuals / rows as f64;
        (&s + s.transpose()) * 0.5
    };
    let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or(Error::SingularCovariance)?.l();
    let ztz_inv = qr.xtx_inverse();
    let intercept = b.row(0).transpose();
    let mut coefs = Vec::with_capacity(lags);
    let mut std_errors = Vec::with_capacity(lags);
    for l in 0..lags {
        coefs.push(DMatrix::from_fn(k, k, |eq, i| b[(1 + l * k + i, eq)]));
        std_errors.push(DMatrix::from_fn(k, k, |eq, i| {
            let s2 = residuals.column(eq).norm_squared() / (rows - m) as f64;
            (s2 * ztz_inv[(1 + l * k + i, 1 + l * k + i)]).sqrt()
        }));
    }
    Ok(VarModel { names: names.to_vec(), intercept, coefs, std_errors, sigma, chol, residuals })
}

/// MA coefficients `Φ_0 = I`, `Φ_h = Σ_l A_l Φ_{h−l}`.
pub fn ma_coefficients(model: &VarModel, horizon: usize) -> Vec<DMatrix<f64>> {
    let k = model.k();
    let mut phi = vec![DMatrix::identity(k, k)];
    for h in 1..=horizon {
        let mut acc = DMatrix::zeros(k, k);
        for (l, a) in model.coefs.iter().enumerate().take(h) {
            acc += a * &phi[h - l - 1];
        }
        phi.push(acc);
    }
    phi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfResult {
    pub shock: String,
    pub names: Vec<String>,
    /// `responses[h][i]`, `h = 0..=H`.
    pub responses: Vec<Vec<f64>>,
    pub lower: Option<Vec<Vec<f64>>>,
    pub upper: Option<Vec<Vec<f64>>>,
    pub replications: usize,
    pub coverage: Option<f64>,
    pub seed: Option<u64>,
}

fn irf_matrix(model: &VarModel, shock: usize, horizon: usize, accumulate: &[bool]) -> Vec<Vec<f64>> {
    let impulse = model.chol.column(shock).clone_owned();
    let mut out: Vec<Vec<f64>> =
        ma_coefficients(model, horizon).iter().map(|phi| (phi * &impulse).iter().copied().collect()).collect();
    for (i, _) in accumulate.iter().enumerate().filter(|(_, &a)| a) {
        for h in 1..out.len() {
            out[h][i] += out[h - 1][i];
        }
    }
    out
}

/// Responses to a one-standard-deviation orthogonalized shock in variable `shock`.
pub fn orthogonal_irf(model: &VarModel, shock: usize, spec: &VarSpec) -> Result<IrfResult> {
    if shock >= model.k() {
        return Err(Error::invalid(format!("shock index {shock} out of range for {} variables", model.k())));
    }
    if spec.accumulate.len() != model.k() {
        return Err(Error::invalid("accumulate flags do not match the model"));
    }
    Ok(IrfResult {
        shock: model.names[shock].clone(),
        names: model.names.clone(),
        responses: irf_matrix(model, shock, spec.horizon, &spec.accumulate),
        lower: None,
        upper: None,
        replications: 0,
        coverage: None,
        seed: None,
    })
}

/// Iterates the VAR forward from `init` (the first `p` rows) with the given shocks.
pub fn simulate(model: &VarModel, init: &DMatrix<f64>, shocks: &DMatrix<f64>) -> DMatrix<f64> {
    let p = model.lags();
    let k = model.k();
    let t = p + shocks.nrows();
    let mut y = DMatrix::zeros(t, k);
    y.rows_mut(0, p).copy_from(&init.rows(0, p));
    for s in p..t {
        let mut row = model.intercept.clone() + shocks.row(s - p).transpose();
        for (l, a) in model.coefs.iter().enumerate() {
            row += a * y.row(s - l - 1).transpose();
        }
        y.set_row(s, &row.transpose());
    }
    y
}

/// Per-replication generator: stream `rep` of the ChaCha8 keyed by `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Residual-based recursive bootstrap with percentile bands.
pub fn bootstrap_irf(
    data: &DMatrix<f64>,
    spec: &VarSpec,
    shock: usize,
    replications: usize,
    coverage: f64,
    seed: u64,
) -> Result<IrfResult> {
    spec.validate()?;
    if replications == 0 {
        return Err(Error::invalid("at least one bootstrap replication is required"));
    }
    if !(0.0 < coverage && coverage < 1.0) {
        return Err(Error::invalid(format!("coverage {coverage} outside (0, 1)")));
    }
    let model = estimate_var(data, &spec.order, spec.lags)?;
    let point = orthogonal_irf(&model, shock, spec)?;
    let mut centered = model.residuals.clone();
    for mut col in centered.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let n_res = centered.nrows();
    let cap = 10 * replications;

    let draws: Vec<(usize, Option<Vec<Vec<f64>>>)> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep as u64);
            for attempt in 1..=cap {
                let mut shocks = DMatrix::zeros(n_res, model.k());
                for r in 0..n_res {
                    shocks.set_row(r, &centered.row(rng.random_range(0..n_res)));
                }
                let world = simulate(&model, data, &shocks);
                if let Ok(m) = estimate_var(&world, &spec.order, spec.lags) {
                    return (attempt, Some(irf_matrix(&m, shock, spec.horizon, &spec.accumulate)));
                }
            }
            (cap, None)
        })
        .collect();
    let attempts: usize = draws.iter().map(|(a, _)| a).sum();
    if attempts > cap || draws.iter().any(|(_, d)| d.is_none()) {
        return Err(Error::Numerical(format!(
            "bootstrap needed more than {cap} estimation attempts for {replications} replications"
        )));
    }
    let draws: Vec<Vec<Vec<f64>>> = draws.into_iter().filter_map(|(_, d)| d).collect();

    let (h1, k) = (spec.horizon + 1, model.k());
    let alpha = 1.0 - coverage;
    let mut lower = vec![vec![0.0; k]; h1];
    let mut upper = vec![vec![0.0; k]; h1];
    let mut cell = Vec::with_capacity(replications);
    for h in 0..h1 {
        for i in 0..k {
            cell.clear();
            cell.extend(draws.iter().map(|d| d[h][i]));
            cell.sort_by(f64::total_cmp);
            lower[h][i] = quantile_sorted(&cell, alpha / 2.0);
            upper[h][i] = quantile_sorted(&cell, 1.0 - alpha / 2.0);
        }
    }
    Ok(IrfResult {
        lower: Some(lower),
        upper: Some(upper),
        replications,
        coverage: Some(coverage),
        seed: Some(seed),
        ..point
    })
}

/// Long CSV: horizon, variable, response, lower, upper.
pub fn write_irf_csv(path: &Path, irf: &IrfResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["horizon", "variable", "response", "lower", "upper"])?;
    for (h, row) in irf.responses.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            let band = |b: &Option<Vec<Vec<f64>>>| b.as_ref().map(|b| b[h][i].to_string()).unwrap_or_default();
            w.write_record([h.to_string(), irf.names[i].clone(), v.to_string(), band(&irf.lower), band(&irf.upper)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
