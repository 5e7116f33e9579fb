use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Solver;
use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::scalar::{compensated_sum, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Metrics<T: Real> {
    pub rmse: T,
    pub r2: T,
}

/// RMSE and `R² = 1 − RSS/TSS` (TSS about the mean of `truth`).
pub fn evaluate<T: Real>(predictions: &[T], truth: &[T]) -> Result<Metrics<T>> {
    if predictions.len() != truth.len() {
        return Err(Error::invalid(
            "predictions",
            format!("{} predictions for {} targets", predictions.len(), truth.len()),
        ));
    }
    if truth.len() < 2 {
        return Err(Error::invalid("truth", "need at least two observations"));
    }
    let n = T::count(truth.len());
    let rss = compensated_sum(
        predictions
            .iter()
            .zip(truth)
            .map(|(&p, &t)| (t - p) * (t - p)),
    );
    let mean = compensated_sum(truth.iter().copied()) / n;
    let tss = compensated_sum(truth.iter().map(|&t| (t - mean) * (t - mean)));
    if tss == T::zero() {
        return Err(Error::Degenerate(
            "R² is undefined for a constant target".into(),
        ));
    }
    Ok(Metrics {
        rmse: (rss / n).sqrt(),
        r2: T::one() - rss / tss,
    })
}

/// Fraction of the baseline's unexplained variance removed by a richer model:
/// `((1 − R²_base) − (1 − R²_full)) / (1 − R²_base)`.
pub fn unexplained_variance_reduction<T: Real>(r2_baseline: T, r2_full: T) -> T {
    let base = T::one() - r2_baseline;
    (base - (T::one() - r2_full)) / base
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Seeded partition of `0..n`: the first `⌊ratio·n⌋` shuffled indices train.
/// Both halves come back in ascending (record) order.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("ratio", format!("{ratio} is outside (0, 1)")));
    }
    let idx = shuffled(n, seed);
    let cut = (ratio * n as f64).floor() as usize;
    let mut train = idx[..cut].to_vec();
    let mut test = idx[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits items into train and test sets; see [`split_indices`].
pub fn train_test_split<S: Clone>(items: &[S], ratio: f64, seed: u64) -> Result<(Vec<S>, Vec<S>)> {
    let (train, test) = split_indices(items.len(), ratio, seed)?;
    Ok((
        train.iter().map(|&i| items[i].clone()).collect(),
        test.iter().map(|&i| items[i].clone()).collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FoldMetrics<T: Real> {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub rmse: T,
    pub r2: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CvReport<T: Real> {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldMetrics<T>>,
    pub mean_rmse: T,
    /// Sample standard deviation over folds.
    pub std_rmse: T,
    pub mean_r2: T,
    pub std_r2: T,
}

fn mean_std<T: Real>(values: &[T]) -> (T, T) {
    let n = T::count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    if values.len() < 2 {
        return (mean, T::zero());
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Seeded k-fold cross-validation.
///
/// The shuffled rows are cut into `k` contiguous folds whose sizes differ
/// by at most one. Folds are fitted in parallel; the assignment is fixed
/// before dispatch so results do not depend on scheduling.
pub fn kfold_cv<T: Real>(
    design: &DesignMatrix<T>,
    k: usize,
    seed: u64,
    solver: &Solver<T>,
) -> Result<CvReport<T>> {
    let n = design.n();
    if k < 2 {
        return Err(Error::invalid("k", "need at least two folds"));
    }
    if n < k {
        return Err(Error::invalid("k", format!("{k} folds for {n} rows")));
    }
    let order = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut bounds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        bounds.push((start, start + len));
        start += len;
    }
    if n - (base + usize::from(extra > 0)) <= design.p() {
        return Err(Error::invalid(
            "k",
            format!(
                "training folds of {} rows cannot fit {} coefficients",
                n - base - usize::from(extra > 0),
                design.p()
            ),
        ));
    }

    let folds = bounds
        .par_iter()
        .enumerate()
        .map(|(f, &(lo, hi))| -> Result<FoldMetrics<T>> {
            let mut test: Vec<usize> = order[lo..hi].to_vec();
            let mut train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            test.sort_unstable();
            train.sort_unstable();
            let fit = solver.fit(&design.select_rows(&train))?;
            let test_design = design.select_rows(&test);
            let pred: Vec<T> = (0..test.len())
                .map(|i| fit.linear_predictor(&test_design.x.row(i)))
                .collect();
            let m = evaluate(&pred, &test_design.y)?;
            Ok(FoldMetrics {
                fold: f,
                n_train: train.len(),
                n_test: test.len(),
                rmse: m.rmse,
                r2: m.r2,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rmse: Vec<T> = folds.iter().map(|f| f.rmse).collect();
    let r2: Vec<T> = folds.iter().map(|f| f.r2).collect();
    let (mean_rmse, std_rmse) = mean_std(&rmse);
    let (mean_r2, std_r2) = mean_std(&r2);
    Ok(CvReport {
        k,
        seed,
        folds,
        mean_rmse,
        std_rmse,
        mean_r2,
        std_r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn perfect_and_null_predictions() {
        let truth = [1.0, 2.0, 4.0, 8.0];
        let m = evaluate(&truth, &truth).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.r2, 1.0);
        let mean = truth.iter().sum::<f64>() / 4.0;
        let m = evaluate(&[mean; 4], &truth).unwrap();
        assert!(m.r2.abs() < 1e-15);
    }

    #[test]
    fn evaluate_errors() {
        assert!(evaluate(&[1.0], &[1.0]).is_err());
        assert!(evaluate(&[1.0, 2.0], &[1.0]).is_err());
        assert!(matches!(
            evaluate(&[1.0, 2.0], &[3.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn variance_reduction_identity() {
        let r: f64 = unexplained_variance_reduction(0.6917, 0.8222);
        assert!((r - 0.423_289_004_216_672_26).abs() < 1e-12);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let items: Vec<usize> = (0..100).collect();
        let (train, test) = train_test_split(&items, 0.8, 42).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let (train2, _) = train_test_split(&items, 0.8, 42).unwrap();
        assert_eq!(train, train2);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);

        let (a, b) = train_test_split(&[1, 2, 3], 0.5, 0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 2));
        assert!(split_indices(10, 1.0, 0).is_err());
        assert!(split_indices(10, 0.0, 0).is_err());
    }

    fn noiseless_design(n: usize) -> DesignMatrix<f64> {
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 5.0).collect();
        let zs: Vec<f64> = (0..n).map(|i| (i % 7) as f64).collect();
        let y = xs
            .iter()
            .zip(&zs)
            .map(|(x, z)| 1.0 + 2.0 * x - 0.5 * z)
            .collect();
        DesignMatrix {
            columns: vec!["intercept".into(), "x".into(), "z".into()],
            x: Matrix::from_columns(vec![vec![1.0; n], xs, zs]),
            y,
            frequency_offset: 0.0,
        }
    }

    #[test]
    fn folds_are_equal_and_exact() {
        let design = noiseless_design(100);
        let cv = kfold_cv(&design, 5, 42, &Solver::Ols).unwrap();
        assert_eq!(cv.folds.len(), 5);
        for f in &cv.folds {
            assert_eq!(f.n_test, 20);
            assert_eq!(f.n_train, 80);
            assert!(f.rmse < 1e-10);
        }
    }

    #[test]
    fn uneven_folds_differ_by_one() {
        let design = noiseless_design(23);
        let cv = kfold_cv(&design, 5, 1, &Solver::Ols).unwrap();
        let sizes: Vec<usize> = cv.folds.iter().map(|f| f.n_test).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn cv_argument_checks() {
        let design = noiseless_design(10);
        assert!(kfold_cv(&design, 1, 0, &Solver::Ols).is_err());
        assert!(kfold_cv(&design, 11, 0, &Solver::Ols).is_err());
        // smallest training fold has 2 rows for 3 coefficients
        assert!(kfold_cv(&noiseless_design(5), 2, 0, &Solver::Ols).is_err());
    }
}
