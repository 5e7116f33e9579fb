//! Coefficient significance, Type II ANOVA and residual diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, INTERCEPT};
use crate::regression::{ols_fit, FitResult};
use crate::scalar::Real;
use crate::special::{chi2_sf, f_sf, student_t_two_sided};

/// Wald t-test of one coefficient against zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CoefficientTest<T: Real> {
    pub label: String,
    pub estimate: T,
    pub std_error: T,
    pub t_value: T,
    /// Two-sided.
    pub p_value: T,
}

/// `t = β̂ / SE` with a two-sided Student t p-value on `df_resid` degrees of
/// freedom. A zero standard error yields an infinite `t` and `p = 0`.
pub fn coefficient_t_tests<T: Real>(fit: &FitResult<T>) -> Vec<CoefficientTest<T>> {
    let df = T::count(fit.df_resid);
    fit.coefficients
        .iter()
        .zip(&fit.standard_errors.values)
        .map(|((label, estimate), &se)| {
            let (t, p) = if se > T::zero() {
                let t = estimate / se;
                (t, student_t_two_sided(t, df))
            } else {
                log::warn!("coefficient '{label}' has zero standard error");
                let t = if estimate < T::zero() {
                    T::neg_infinity()
                } else {
                    T::infinity()
                };
                (t, T::zero())
            };
            CoefficientTest {
                label: label.to_string(),
                estimate,
                std_error: se,
                t_value: t,
                p_value: p,
            }
        })
        .collect()
}

/// A group of design columns tested together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    pub columns: Vec<String>,
}

impl Term {
    pub fn single(column: &str) -> Self {
        Self {
            label: column.to_string(),
            columns: vec![column.to_string()],
        }
    }
}

/// One term per non-intercept column.
pub fn single_column_terms<T: Real>(design: &DesignMatrix<T>) -> Vec<Term> {
    design
        .columns
        .iter()
        .filter(|c| c.as_str() != INTERCEPT)
        .map(|c| Term::single(c))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AnovaRow<T: Real> {
    pub label: String,
    pub sum_sq: T,
    pub df_num: usize,
    pub df_den: usize,
    pub f_statistic: T,
    pub p_value_f: T,
    /// Present for single-column terms.
    pub t_value: Option<T>,
    pub p_value_t: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AnovaTable<T: Real> {
    pub rss_full: T,
    pub df_resid: usize,
    pub rows: Vec<AnovaRow<T>>,
}

/// Type II ANOVA: each term is compared against the full model refitted
/// without it, every other term retained.
///
/// `F = ((RSS_reduced − RSS_full) / df_term) / (RSS_full / df_resid)`.
pub fn anova_type2<T: Real>(design: &DesignMatrix<T>, terms: &[Term]) -> Result<AnovaTable<T>> {
    let full = ols_fit(design)?;
    let tests = coefficient_t_tests(&full);
    let df_den = full.df_resid;
    let mse = full.rss / T::count(df_den);
    let mut rows = Vec::with_capacity(terms.len());
    for term in terms {
        if term.columns.is_empty() {
            return Err(Error::invalid("terms", format!("term '{}' has no columns", term.label)));
        }
        let drop: Vec<&str> = term.columns.iter().map(String::as_str).collect();
        let reduced = ols_fit(&design.without_columns(&drop)?)?;
        let df_num = term.columns.len();
        let sum_sq = (reduced.rss - full.rss).max(T::zero());
        let f = if mse > T::zero() {
            sum_sq / T::count(df_num) / mse
        } else {
            T::infinity()
        };
        let single = (df_num == 1)
            .then(|| tests.iter().find(|t| t.label == term.columns[0]))
            .flatten();
        rows.push(AnovaRow {
            label: term.label.clone(),
            sum_sq,
            df_num,
            df_den,
            f_statistic: f,
            p_value_f: f_sf(f, T::count(df_num), T::count(df_den)),
            t_value: single.map(|t| t.t_value),
            p_value_t: single.map(|t| t.p_value),
        });
    }
    Ok(AnovaTable {
        rss_full: full.rss,
        df_resid: df_den,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TestStatistic<T: Real> {
    pub statistic: T,
    pub p_value: T,
}

/// Shape, normality and autocorrelation summary of a residual series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ResidualDiagnostics<T: Real> {
    pub n: usize,
    pub mean: T,
    pub skewness: T,
    /// Raw (Pearson) kurtosis; 3 for a normal distribution.
    pub kurtosis: T,
    pub excess_kurtosis: T,
    pub jarque_bera: TestStatistic<T>,
    /// D'Agostino–Pearson K².
    pub omnibus: TestStatistic<T>,
    /// Over the residuals in the order given.
    pub durbin_watson: T,
}

/// Population (biased) moments: `(mean, m2, skewness, raw kurtosis)`.
pub fn sample_moments<T: Real>(x: &[T]) -> (T, T, T, T) {
    let n = T::count(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    let (mut m2, mut m3, mut m4) = (T::zero(), T::zero(), T::zero());
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (mean, m2, m3 / m2.powf(T::lit(1.5)), m4 / (m2 * m2))
}

/// z-score of the sample skewness (D'Agostino 1970).
fn skew_z<T: Real>(skew: T, n: T) -> T {
    let (one, two, three) = (T::one(), T::lit(2.0), T::lit(3.0));
    let y = skew * ((n + one) * (n + three) / (T::lit(6.0) * (n - two))).sqrt();
    let beta2 = three * (n * n + T::lit(27.0) * n - T::lit(70.0)) * (n + one) * (n + three)
        / ((n - two) * (n + T::lit(5.0)) * (n + T::lit(7.0)) * (n + T::lit(9.0)));
    let w2 = -one + (two * (beta2 - one)).sqrt();
    let delta = one / (T::lit(0.5) * w2.ln()).sqrt();
    let alpha = (two / (w2 - one)).sqrt();
    let ya = y / alpha;
    delta * (ya + (ya * ya + one).sqrt()).ln()
}

/// z-score of the sample kurtosis (Anscombe & Glynn 1983).
fn kurtosis_z<T: Real>(kurt: T, n: T) -> T {
    let (one, two, three) = (T::one(), T::lit(2.0), T::lit(3.0));
    let e = three * (n - one) / (n + one);
    let var = T::lit(24.0) * n * (n - two) * (n - three)
        / ((n + one) * (n + one) * (n + three) * (n + T::lit(5.0)));
    let x = (kurt - e) / var.sqrt();
    let sqrt_beta1 = T::lit(6.0) * (n * n - T::lit(5.0) * n + two)
        / ((n + T::lit(7.0)) * (n + T::lit(9.0)))
        * (T::lit(6.0) * (n + three) * (n + T::lit(5.0)) / (n * (n - two) * (n - three))).sqrt();
    let a = T::lit(6.0)
        + T::lit(8.0) / sqrt_beta1 * (two / sqrt_beta1 + (one + T::lit(4.0) / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = one - two / (T::lit(9.0) * a);
    let denom = one + x * (two / (a - T::lit(4.0))).sqrt();
    let ratio = (one - two / a) / denom.abs();
    let term2 = if denom < T::zero() {
        -ratio.cbrt()
    } else {
        ratio.cbrt()
    };
    (term1 - term2) / (two / (T::lit(9.0) * a)).sqrt()
}

/// Moments, Jarque–Bera, omnibus K² and Durbin–Watson of a residual series.
pub fn residual_diagnostics<T: Real>(residuals: &[T]) -> Result<ResidualDiagnostics<T>> {
    if residuals.len() < 8 {
        return Err(Error::invalid(
            "residuals",
            format!("need at least 8 values, got {}", residuals.len()),
        ));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("residuals", "non-finite value"));
    }
    let (mean, m2, skewness, kurtosis) = sample_moments(residuals);
    if !(m2 > T::zero()) {
        return Err(Error::Degenerate("residuals have zero variance".into()));
    }
    let n = T::count(residuals.len());
    let two = T::lit(2.0);
    let excess = kurtosis - T::lit(3.0);
    let jb = n / T::lit(6.0) * (skewness * skewness + excess * excess / T::lit(4.0));
    let zs = skew_z(skewness, n);
    let zk = kurtosis_z(kurtosis, n);
    let k2 = zs * zs + zk * zk;

    let num: T = residuals
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum();
    let den: T = residuals.iter().map(|&r| r * r).sum();

    Ok(ResidualDiagnostics {
        n: residuals.len(),
        mean,
        skewness,
        kurtosis,
        excess_kurtosis: excess,
        jarque_bera: TestStatistic {
            statistic: jb,
            p_value: chi2_sf(jb, two),
        },
        omnibus: TestStatistic {
            statistic: k2,
            p_value: chi2_sf(k2, two),
        },
        durbin_watson: num / den,
    })
}
