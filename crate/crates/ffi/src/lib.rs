//! C interface to the callsignal scoring and estimation routines.
//!
//! Every fallible function returns a [`CsStatus`]. On failure the message is
//! available from [`cs_last_error_message`] on the same thread until the next
//! failing call. Handles are opaque; free them with their `_free` function.
//! Strings returned through out-parameters are owned by the caller and must be
//! released with [`cs_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;

use callsignal::anonymizer::mask_dates;
use callsignal::econometrics::{fe_within, ols, ols_nw, NwLags, RegressionResult};
use callsignal::error::Error;
use callsignal::panel::{Level, RegressionFrame};
use callsignal::period::{Period, Quarter};
use callsignal::scoring::{parse_response, score_choice, Choice, ParseStatus};
use callsignal::var_engine::{estimate_var, orthogonal_irf, VarModel, VarSpec};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    RankDeficient = 4,
    InsufficientData = 5,
    Numerical = 6,
    Failed = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsChoice {
    DecreaseSubstantially = 0,
    Decrease = 1,
    NoChange = 2,
    Increase = 3,
    IncreaseSubstantially = 4,
    NoInformation = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsParseStatus {
    Ok = 0,
    NoInfo = 1,
    Malformed = 2,
}

/// A fitted regression.
pub struct CsRegression(RegressionResult);

/// A fitted recursive VAR.
pub struct CsVar(VarModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> CsStatus {
    match e {
        Error::RankDeficient { .. } => CsStatus::RankDeficient,
        Error::InsufficientData { .. } | Error::InsufficientOverlap { .. } => CsStatus::InsufficientData,
        Error::SingularCovariance | Error::Numerical(_) => CsStatus::Numerical,
        Error::InvalidArgument(_) | Error::Missing(_) => CsStatus::InvalidArgument,
        _ => CsStatus::Failed,
    }
}

struct Fail(CsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CsStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CsStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(CsStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(CsStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|e| Fail(CsStatus::InvalidUtf8, e.to_string()))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null());
    }
    out.write(value);
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn cs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub unsafe extern "C" fn cs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Numeric score of an answer choice.
#[no_mangle]
pub extern "C" fn cs_score_choice(choice: CsChoice) -> f64 {
    score_choice(match choice {
        CsChoice::DecreaseSubstantially => Choice::DecSubst,
        CsChoice::Decrease => Choice::Dec,
        CsChoice::NoChange => Choice::NoChange,
        CsChoice::Increase => Choice::Inc,
        CsChoice::IncreaseSubstantially => Choice::IncSubst,
        CsChoice::NoInformation => Choice::NoInfo,
    })
}

/// Parses one model reply into its score and status. Malformed replies score 0.
#[no_mangle]
pub unsafe extern "C" fn cs_parse_response(
    text: *const c_char,
    score_out: *mut f64,
    status_out: *mut CsParseStatus,
) -> CsStatus {
    guard(|| {
        let parsed = parse_response(str_arg(text)?);
        let status = match parsed.status {
            ParseStatus::Ok => CsParseStatus::Ok,
            ParseStatus::NoInfo => CsParseStatus::NoInfo,
            ParseStatus::Malformed => CsParseStatus::Malformed,
        };
        put(score_out, parsed.score())?;
        put(status_out, status)
    })
}

/// Replaces years and month names with `###`. Free the result with `cs_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cs_mask_dates(text: *const c_char, out: *mut *mut c_char) -> CsStatus {
    guard(|| {
        let (masked, _) = mask_dates(str_arg(text)?);
        let c = CString::new(masked).map_err(|e| invalid(e.to_string()))?;
        put(out, c.into_raw())
    })
}

unsafe fn frame(
    x: *const f64,
    y: *const f64,
    n: usize,
    k: usize,
    entities: Vec<String>,
) -> Result<RegressionFrame, Fail> {
    let len = n.checked_mul(k).ok_or_else(|| invalid("n * k overflows"))?;
    let x = slice_arg(x, len)?;
    let y = slice_arg(y, n)?;
    let base = Quarter::new(2000, 1).expect("valid quarter");
    Ok(RegressionFrame {
        dependent: "y".into(),
        y: y.to_vec(),
        regressors: (1..=k).map(|j| format!("x{j}")).collect(),
        x: if k == 0 { vec![vec![]; n] } else { x.chunks(k).map(<[f64]>::to_vec).collect() },
        periods: (0..n).map(|i| Period::Quarter(base.offset(i as i64))).collect(),
        entities,
        horizon: 0,
        lags: 0,
        level: Level::National,
    })
}

/// Least squares of `y` (length `n`) on the row-major `n × k` matrix `x`.
/// `nw_lags < 0` gives classic errors; otherwise Newey–West with that many lags.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_fit(
    x: *const f64,
    y: *const f64,
    n: usize,
    k: usize,
    intercept: bool,
    nw_lags: i32,
    out: *mut *mut CsRegression,
) -> CsStatus {
    guard(|| {
        let f = frame(x, y, n, k, vec![String::new(); n])?;
        let result =
            if nw_lags < 0 { ols(&f, intercept)? } else { ols_nw(&f, intercept, NwLags::Fixed(nw_lags as usize))? };
        put(out, Box::into_raw(Box::new(CsRegression(result))))
    })
}

/// Fixed-effects within regression; `entity[i]` labels row `i`.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_fit_fe(
    x: *const f64,
    y: *const f64,
    entity: *const u64,
    n: usize,
    k: usize,
    clustered: bool,
    out: *mut *mut CsRegression,
) -> CsStatus {
    guard(|| {
        let ids = slice_arg(entity, n)?.iter().map(u64::to_string).collect();
        let f = frame(x, y, n, k, ids)?;
        put(out, Box::into_raw(Box::new(CsRegression(fe_within(&f, clustered)?))))
    })
}

/// Number of coefficients, intercept first when present. 0 for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_n_coef(h: *const CsRegression) -> usize {
    h.as_ref().map_or(0, |r| r.0.coef.len())
}

/// Coefficient `i` with its standard error, t statistic and two-sided p-value.
/// Any of the out-pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_coef(
    h: *const CsRegression,
    i: usize,
    coef: *mut f64,
    std_error: *mut f64,
    t_stat: *mut f64,
    p_value: *mut f64,
) -> CsStatus {
    guard(|| {
        let r = &h.as_ref().ok_or_else(null)?.0;
        if i >= r.coef.len() {
            return Err(invalid(format!("coefficient {i} out of range for {}", r.coef.len())));
        }
        for (p, v) in
            [(coef, r.coef[i]), (std_error, r.std_errors[i]), (t_stat, r.t_stats[i]), (p_value, r.p_values[i])]
        {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// R² of the fit, NaN for a NULL handle.
#[no_mangle]
pub unsafe extern "C" fn cs_regression_r_squared(h: *const CsRegression) -> f64 {
    h.as_ref().map_or(f64::NAN, |r| r.0.r_squared)
}

#[no_mangle]
pub unsafe extern "C" fn cs_regression_n_obs(h: *const CsRegression) -> usize {
    h.as_ref().map_or(0, |r| r.0.n_obs)
}

#[no_mangle]
pub unsafe extern "C" fn cs_regression_free(h: *mut CsRegression) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Fits a VAR(`lags`) with intercept to the row-major `t × k` data, variables in recursive order.
#[no_mangle]
pub unsafe extern "C" fn cs_var_fit(
    data: *const f64,
    t: usize,
    k: usize,
    lags: usize,
    out: *mut *mut CsVar,
) -> CsStatus {
    guard(|| {
        let len = t.checked_mul(k).ok_or_else(|| invalid("t * k overflows"))?;
        let m = DMatrix::from_row_slice(t, k, slice_arg(data, len)?);
        let names: Vec<String> = (1..=k).map(|i| format!("v{i}")).collect();
        put(out, Box::into_raw(Box::new(CsVar(estimate_var(&m, &names, lags)?))))
    })
}

#[no_mangle]
pub unsafe extern "C" fn cs_var_n_vars(h: *const CsVar) -> usize {
    h.as_ref().map_or(0, |v| v.0.k())
}

/// Orthogonalized responses to a one-standard-deviation shock in variable `shock`.
/// Writes `(horizon + 1) * k` values to `out`, row `h` holding all `k` responses at
/// horizon `h`. `accumulate` is NULL or `k` flags selecting cumulated responses.
#[no_mangle]
pub unsafe extern "C" fn cs_var_irf(
    h: *const CsVar,
    shock: usize,
    horizon: usize,
    accumulate: *const bool,
    out: *mut f64,
    out_len: usize,
) -> CsStatus {
    guard(|| {
        let model = &h.as_ref().ok_or_else(null)?.0;
        let k = model.k();
        let acc = if accumulate.is_null() { vec![false; k] } else { slice_arg(accumulate, k)?.to_vec() };
        let need = (horizon + 1) * k;
        if out_len < need {
            return Err(invalid(format!("output buffer holds {out_len} values, {need} needed")));
        }
        if out.is_null() {
            return Err(null());
        }
        let spec = VarSpec { order: model.names.clone(), lags: model.lags(), accumulate: acc, horizon };
        let irf = orthogonal_irf(model, shock, &spec)?;
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (row, values) in dst.chunks_mut(k).zip(&irf.responses) {
            row.copy_from_slice(values);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn cs_var_free(h: *mut CsVar) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
