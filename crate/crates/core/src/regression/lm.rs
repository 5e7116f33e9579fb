use serde::{Deserialize, Serialize};

use super::{assemble, factorize, FitResult, SolverKind};
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, LabeledVector, BRICK_WALLS, LOG_DISTANCE, WOOD_WALLS};
use crate::linalg::{qr_least_squares, Matrix};
use crate::scalar::{compensated_sum, Real};

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LmOptions<T: Real> {
    pub max_iter: usize,
    pub lambda0: T,
    /// Relative RSS change treated as converged.
    pub tol: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            lambda0: T::lit(1e-3),
            tol: T::lit(1e-10),
        }
    }
}

/// What the optimizer did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LmTrace<T: Real> {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub final_lambda: T,
    /// RSS at the start and after every accepted step.
    pub rss_history: Vec<T>,
}

/// Physically motivated starting point: free-space exponent, typical wall
/// losses, zero for everything else.
pub fn default_initial<T: Real>(labels: &[String]) -> LabeledVector<T> {
    let values = labels
        .iter()
        .map(|l| match l.as_str() {
            LOG_DISTANCE => T::lit(2.0),
            BRICK_WALLS => T::lit(6.0),
            WOOD_WALLS => T::lit(3.0),
            _ => T::zero(),
        })
        .collect();
    LabeledVector::new(labels.to_vec(), values)
}

fn residuals<T: Real>(design: &DesignMatrix<T>, beta: &[T]) -> (Vec<T>, T) {
    let fitted = design.x.mul_vec(beta);
    let r: Vec<T> = design.y.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    let rss = compensated_sum(r.iter().map(|&v| v * v));
    (r, rss)
}

/// Largest cosine between the residual and any regressor column.
fn gradient_cosine<T: Real>(x: &Matrix<T>, norms: &[T], r: &[T]) -> T {
    let rn = crate::linalg::norm2(r);
    if rn == T::zero() {
        return T::zero();
    }
    x.tr_mul_vec(r)
        .iter()
        .zip(norms)
        .map(|(&g, &cn)| if cn > T::zero() { (g / (cn * rn)).abs() } else { T::zero() })
        .fold(T::zero(), T::max)
}

/// Levenberg–Marquardt minimization of the residual sum of squares.
///
/// Each trial step solves the Marquardt-scaled damped system
/// `(XᵀX + λ·diag(‖x_j‖²)) δ = Xᵀr` as the augmented least-squares problem
/// `[X; √λ·D] δ ≈ [r; 0]`. Accepted steps divide `λ` by 10, rejected ones
/// multiply it by 10. Iteration stops once the residual is orthogonal to
/// every column to working precision, or an accepted step changes the RSS
/// by less than `tol` (relative) while `λ ≤ min(λ0, 1)`.
pub fn lm_fit<T: Real>(
    design: &DesignMatrix<T>,
    initial: &LabeledVector<T>,
    options: &LmOptions<T>,
) -> Result<FitResult<T>> {
    initial.check_labels(&design.columns)?;
    if !(options.tol > T::zero()) {
        return Err(Error::invalid("tol", "must be positive"));
    }
    if !(options.lambda0 > T::zero()) {
        return Err(Error::invalid("lambda0", "must be positive"));
    }
    let qr = factorize(design)?;

    let p = design.p();
    let n = design.n();
    let norms: Vec<T> = design
        .x
        .column_norms()
        .into_iter()
        .map(|c| if c > T::zero() { c } else { T::one() })
        .collect();
    let gtol = T::epsilon().sqrt() * T::lit(1e-2);
    let ten = T::lit(10.0);
    let lambda_ceiling = options.lambda0.min(T::one());

    let mut beta = initial.values.clone();
    let (mut r, mut rss) = residuals(design, &beta);
    let mut lambda = options.lambda0;
    let mut history = vec![rss];
    let mut accepted = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    // augmented system buffer: X on top, sqrt(λ)·D below
    let mut aug_cols: Vec<Vec<T>> = (0..p)
        .map(|j| {
            let mut c = design.x.column(j).to_vec();
            c.resize(n + p, T::zero());
            c
        })
        .collect();
    let mut rhs = vec![T::zero(); n + p];

    while iterations < options.max_iter {
        if gradient_cosine(&design.x, &norms, &r) <= gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let sl = lambda.sqrt();
        for (j, col) in aug_cols.iter_mut().enumerate() {
            col[n + j] = sl * norms[j];
        }
        rhs[..n].copy_from_slice(&r);
        let aug = Matrix::from_columns(aug_cols.clone());
        let step = qr_least_squares(&aug, &rhs).coefficients;
        let trial: Vec<T> = beta.iter().zip(&step).map(|(&b, &d)| b + d).collect();
        let (trial_r, trial_rss) = residuals(design, &trial);
        let scale = rss.max(T::min_positive_value());
        let rel = (rss - trial_rss).abs() / scale;

        if trial_rss <= rss && trial_rss.is_finite() {
            beta = trial;
            r = trial_r;
            rss = trial_rss;
            accepted += 1;
            history.push(rss);
            let settled = lambda <= lambda_ceiling;
            lambda = lambda / ten;
            if rel < options.tol && settled {
                converged = true;
                break;
            }
        } else {
            if rel < options.tol && lambda <= lambda_ceiling {
                converged = true;
                break;
            }
            lambda = lambda * ten;
        }
    }

    if !converged {
        return Err(Error::NotConverged {
            solver: "levenberg-marquardt",
            iterations,
            best_objective: rss.as_f64(),
            best_params: beta.iter().map(|b| b.as_f64()).collect(),
        });
    }
    let trace = LmTrace {
        iterations,
        accepted_steps: accepted,
        final_lambda: lambda,
        rss_history: history,
    };
    Ok(assemble(design, beta, &qr, SolverKind::Lm, Some(trace)))
}
