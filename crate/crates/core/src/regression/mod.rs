//! Linear path loss model fitting.
//!
//! [`ols_fit`] solves the least-squares problem by Householder QR;
//! [`lm_fit`] reaches the same optimum by damped Gauss–Newton iterations
//! from a user-supplied starting point. Both produce a [`FitResult`].

mod lm;
mod validation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DesignMatrix, LabeledVector};
use crate::linalg::{qr_least_squares, QrSolve};
use crate::scalar::{compensated_sum, Real};

pub use lm::{default_initial, lm_fit, LmOptions, LmTrace};
pub use validation::{
    evaluate, kfold_cv, split_indices, train_test_split, unexplained_variance_reduction, CvReport,
    FoldMetrics, Metrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Ols,
    Lm,
}

/// How to fit a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum Solver<T: Real> {
    Ols,
    /// Levenberg–Marquardt from the given start (or [`default_initial`]).
    Lm {
        options: LmOptions<T>,
        initial: Option<LabeledVector<T>>,
    },
}

impl<T: Real> Solver<T> {
    pub fn kind(&self) -> SolverKind {
        match self {
            Solver::Ols => SolverKind::Ols,
            Solver::Lm { .. } => SolverKind::Lm,
        }
    }

    pub fn fit(&self, design: &DesignMatrix<T>) -> Result<FitResult<T>> {
        match self {
            Solver::Ols => ols_fit(design),
            Solver::Lm { options, initial } => {
                let start = initial
                    .clone()
                    .unwrap_or_else(|| default_initial(&design.columns));
                lm_fit(design, &start, options)
            }
        }
    }
}

/// Fitted coefficients with their uncertainty and goodness of fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitResult<T: Real> {
    pub solver: SolverKind,
    pub coefficients: LabeledVector<T>,
    pub standard_errors: LabeledVector<T>,
    /// `sigma2 · (XᵀX)⁻¹`, rows in coefficient order.
    pub covariance: Vec<Vec<T>>,
    /// `y − Xβ̂` in dB, in design-row order.
    pub residuals: Vec<T>,
    /// `RSS / df_resid`
    pub sigma2: T,
    pub rss: T,
    pub r2: T,
    pub rmse: T,
    pub n_obs: usize,
    pub df_resid: usize,
    /// `20·log10(f)` removed from the response before fitting.
    pub frequency_offset: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<LmTrace<T>>,
}

impl<T: Real> FitResult<T> {
    pub fn labels(&self) -> &[String] {
        &self.coefficients.labels
    }

    pub fn p(&self) -> usize {
        self.coefficients.len()
    }

    /// `x̂ᵀβ̂` for one regressor row, without the frequency offset.
    pub fn linear_predictor(&self, row: &[T]) -> T {
        row.iter()
            .zip(&self.coefficients.values)
            .map(|(&x, &b)| x * b)
            .sum()
    }
}

/// Predicted path loss in dB, `xᵀβ̂ + 20·log10(f)`.
pub fn predict<T: Real>(fit: &FitResult<T>, features: &LabeledVector<T>) -> Result<T> {
    features.check_labels(fit.labels())?;
    Ok(fit.linear_predictor(&features.values) + fit.frequency_offset)
}

fn check_shape<T: Real>(design: &DesignMatrix<T>) -> Result<()> {
    if design.p() == 0 {
        return Err(Error::invalid("design", "no columns"));
    }
    if design.n() <= design.p() {
        return Err(Error::invalid(
            "design",
            format!("need more rows ({}) than columns ({})", design.n(), design.p()),
        ));
    }
    Ok(())
}

pub(crate) fn factorize<T: Real>(design: &DesignMatrix<T>) -> Result<QrSolve<T>> {
    check_shape(design)?;
    let qr = qr_least_squares(&design.x, &design.y);
    if !qr.dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: qr
                .dependent
                .iter()
                .map(|&j| design.columns[j].clone())
                .collect(),
        });
    }
    Ok(qr)
}

/// Ordinary least squares via Householder QR.
pub fn ols_fit<T: Real>(design: &DesignMatrix<T>) -> Result<FitResult<T>> {
    let qr = factorize(design)?;
    Ok(assemble(design, qr.coefficients.clone(), &qr, SolverKind::Ols, None))
}

/// `1 − RSS/TSS`; zero when the response has no spread.
pub(crate) fn r_squared<T: Real>(rss: T, y: &[T]) -> T {
    let n = T::count(y.len());
    let mean = compensated_sum(y.iter().copied()) / n;
    let tss = compensated_sum(y.iter().map(|&v| (v - mean) * (v - mean)));
    let scale = y.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let floor = n * T::epsilon() * scale;
    if tss <= floor * floor {
        T::zero()
    } else {
        T::one() - rss / tss
    }
}

pub(crate) fn assemble<T: Real>(
    design: &DesignMatrix<T>,
    coefficients: Vec<T>,
    qr: &QrSolve<T>,
    solver: SolverKind,
    optimizer: Option<LmTrace<T>>,
) -> FitResult<T> {
    let n = design.n();
    let p = design.p();
    let fitted = design.x.mul_vec(&coefficients);
    let residuals: Vec<T> = design.y.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    let rss = compensated_sum(residuals.iter().map(|&r| r * r));
    let df_resid = n - p;
    let sigma2 = rss / T::count(df_resid);
    let gram_inv = qr.gram_inverse();
    let covariance: Vec<Vec<T>> = (0..p)
        .map(|i| (0..p).map(|j| sigma2 * gram_inv[i * p + j]).collect())
        .collect();
    let se = (0..p).map(|i| covariance[i][i].max(T::zero()).sqrt()).collect();
    FitResult {
        solver,
        coefficients: LabeledVector::new(design.columns.clone(), coefficients),
        standard_errors: LabeledVector::new(design.columns.clone(), se),
        covariance,
        r2: r_squared(rss, &design.y),
        rmse: (rss / T::count(n)).sqrt(),
        residuals,
        sigma2,
        rss,
        n_obs: n,
        df_resid,
        frequency_offset: design.frequency_offset,
        optimizer,
    }
}
