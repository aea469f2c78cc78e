#ifndef CALLSIGNAL_H
#define CALLSIGNAL_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum {
  CS_CHOICE_DECREASE_SUBSTANTIALLY = 0,
  CS_CHOICE_DECREASE = 1,
  CS_CHOICE_NO_CHANGE = 2,
  CS_CHOICE_INCREASE = 3,
  CS_CHOICE_INCREASE_SUBSTANTIALLY = 4,
  CS_CHOICE_NO_INFORMATION = 5,
} CsChoice;

typedef enum {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_INVALID_ARGUMENT = 3,
  CS_STATUS_RANK_DEFICIENT = 4,
  CS_STATUS_INSUFFICIENT_DATA = 5,
  CS_STATUS_NUMERICAL = 6,
  CS_STATUS_FAILED = 7,
  CS_STATUS_PANIC = 99,
} CsStatus;

typedef enum {
  CS_PARSE_STATUS_OK = 0,
  CS_PARSE_STATUS_NO_INFO = 1,
  CS_PARSE_STATUS_MALFORMED = 2,
} CsParseStatus;

/**
 * A fitted regression.
 */
typedef struct CsRegression CsRegression;

/**
 * A fitted recursive VAR.
 */
typedef struct CsVar CsVar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Message for the last failure on this thread, or NULL. Valid until the next failing call.
 */
const char *cs_last_error_message(void);

void cs_string_free(char *s);

/**
 * Numeric score of an answer choice.
 */
double cs_score_choice(CsChoice choice);

/**
 * Parses one model reply into its score and status. Malformed replies score 0.
 */
CsStatus cs_parse_response(const char *text, double *score_out, CsParseStatus *status_out);

/**
 * Replaces years and month names with `###`. Free the result with `cs_string_free`.
 */
CsStatus cs_mask_dates(const char *text, char **out);

/**
 * Least squares of `y` (length `n`) on the row-major `n × k` matrix `x`.
 * `nw_lags < 0` gives classic errors; otherwise Newey–West with that many lags.
 */
CsStatus cs_regression_fit(const double *x,
                           const double *y,
                           size_t n,
                           size_t k,
                           bool intercept,
                           int32_t nw_lags,
                           CsRegression **out);

/**
 * Fixed-effects within regression; `entity[i]` labels row `i`.
 */
CsStatus cs_regression_fit_fe(const double *x,
                              const double *y,
                              const uint64_t *entity,
                              size_t n,
                              size_t k,
                              bool clustered,
                              CsRegression **out);

/**
 * Number of coefficients, intercept first when present. 0 for a NULL handle.
 */
size_t cs_regression_n_coef(const CsRegression *h);

/**
 * Coefficient `i` with its standard error, t statistic and two-sided p-value.
 * Any of the out-pointers may be NULL.
 */
CsStatus cs_regression_coef(const CsRegression *h,
                            size_t i,
                            double *coef,
                            double *std_error,
                            double *t_stat,
                            double *p_value);

/**
 * R² of the fit, NaN for a NULL handle.
 */
double cs_regression_r_squared(const CsRegression *h);

size_t cs_regression_n_obs(const CsRegression *h);

void cs_regression_free(CsRegression *h);

/**
 * Fits a VAR(`lags`) with intercept to the row-major `t × k` data, variables in recursive order.
 */
CsStatus cs_var_fit(const double *data, size_t t, size_t k, size_t lags, CsVar **out);

size_t cs_var_n_vars(const CsVar *h);

/**
 * Orthogonalized responses to a one-standard-deviation shock in variable `shock`.
 * Writes `(horizon + 1) * k` values to `out`, row `h` holding all `k` responses at
 * horizon `h`. `accumulate` is NULL or `k` flags selecting cumulated responses.
 */
CsStatus cs_var_irf(const CsVar *h,
                    size_t shock,
                    size_t horizon,
                    const bool *accumulate,
                    double *out,
                    size_t out_len);

void cs_var_free(CsVar *h);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CALLSIGNAL_H */
