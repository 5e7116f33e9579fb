//! Dense column-major matrices and a Householder QR least-squares solver.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Dense matrix stored column by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Matrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from its columns. All columns must share one length.
    pub fn from_columns(columns: Vec<Vec<T>>) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        assert!(
            columns.iter().all(|c| c.len() == rows),
            "ragged columns in Matrix::from_columns"
        );
        Self {
            rows,
            cols,
            data: columns.into_iter().flatten().collect(),
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, values: &[T]) -> Self {
        assert_eq!(values.len(), rows * cols, "row-major data has wrong length");
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[j * rows + i] = values[i * cols + j];
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn select_columns(&self, keep: &[usize]) -> Self {
        Self::from_columns(keep.iter().map(|&j| self.column(j).to_vec()).collect())
    }

    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self::from_columns(
            (0..self.cols)
                .map(|j| {
                    let col = self.column(j);
                    keep.iter().map(|&i| col[i]).collect()
                })
                .collect(),
        )
    }

    /// `X v`
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (j, &vj) in v.iter().enumerate() {
            if vj == T::zero() {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(self.column(j)) {
                *o += x * vj;
            }
        }
        out
    }

    /// `Xᵀ v`
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.rows);
        (0..self.cols)
            .map(|j| self.column(j).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn column_norms(&self) -> Vec<T> {
        (0..self.cols).map(|j| norm2(self.column(j))).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}

/// Euclidean norm with scaling against overflow.
pub fn norm2<T: Real>(v: &[T]) -> T {
    let scale = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let ss: T = v.iter().map(|&x| (x / scale) * (x / scale)).sum();
    scale * ss.sqrt()
}

/// Least-squares solution from a thin QR factorization.
#[derive(Debug, Clone)]
pub struct QrSolve<T: Real> {
    pub coefficients: Vec<T>,
    /// Upper-triangular factor, `p × p` row-major.
    pub r: Vec<T>,
    /// Columns whose component orthogonal to the preceding columns is negligible.
    pub dependent: Vec<usize>,
}

impl<T: Real> QrSolve<T> {
    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`, row-major `p × p`.
    pub fn gram_inverse(&self) -> Vec<T> {
        let p = self.coefficients.len();
        let rinv = upper_triangular_inverse(&self.r, p);
        let mut out = vec![T::zero(); p * p];
        for i in 0..p {
            for j in i..p {
                let mut s = T::zero();
                for k in j..p {
                    s += rinv[i * p + k] * rinv[j * p + k];
                }
                out[i * p + j] = s;
                out[j * p + i] = s;
            }
        }
        out
    }
}

/// Relative threshold below which a column counts as linearly dependent.
pub fn rank_tolerance<T: Real>(rows: usize, cols: usize) -> T {
    T::count(rows.max(cols)).sqrt() * T::epsilon() * T::lit(1.0e3)
}

/// Solves `min ‖y − X b‖` by Householder QR without pivoting.
///
/// Column `j` is reported dependent when `|R_jj|` is below
/// [`rank_tolerance`] times the norm of column `j`; its coefficient is
/// then set to zero.
pub fn qr_least_squares<T: Real>(x: &Matrix<T>, y: &[T]) -> QrSolve<T> {
    let (n, p) = (x.rows(), x.cols());
    assert_eq!(y.len(), n);
    let norms = x.column_norms();
    let tol = rank_tolerance::<T>(n, p);
    let mut a = x.data.clone();
    let mut qty = y.to_vec();
    let mut r = vec![T::zero(); p * p];
    let mut dependent = Vec::new();
    let mut v = vec![T::zero(); n];

    for k in 0..p.min(n) {
        let col = &a[k * n + k..(k + 1) * n];
        let alpha_norm = norm2(col);
        if alpha_norm == T::zero() {
            for j in k..p {
                r[k * p + j] = a[j * n + k];
            }
            continue;
        }
        let alpha = if col[0] > T::zero() {
            -alpha_norm
        } else {
            alpha_norm
        };
        let len = n - k;
        v[..len].copy_from_slice(col);
        v[0] -= alpha;
        let vnorm2: T = v[..len].iter().map(|&t| t * t).sum();
        if vnorm2 > T::zero() {
            let tau = T::lit(2.0) / vnorm2;
            for j in k + 1..p {
                let cj = &mut a[j * n + k..(j + 1) * n];
                let s: T = v[..len].iter().zip(cj.iter()).map(|(&vi, &ci)| vi * ci).sum();
                let f = s * tau;
                for (c, &vi) in cj.iter_mut().zip(&v[..len]) {
                    *c -= f * vi;
                }
            }
            let tail = &mut qty[k..];
            let s: T = v[..len].iter().zip(tail.iter()).map(|(&vi, &ci)| vi * ci).sum();
            let f = s * tau;
            for (c, &vi) in tail.iter_mut().zip(&v[..len]) {
                *c -= f * vi;
            }
        }
        r[k * p + k] = alpha;
        for j in k + 1..p {
            r[k * p + j] = a[j * n + k];
        }
    }

    for k in 0..p {
        let rkk = if k < n { r[k * p + k].abs() } else { T::zero() };
        if rkk <= tol * norms[k] || norms[k] == T::zero() {
            dependent.push(k);
        }
    }

    let mut coefficients = vec![T::zero(); p];
    for k in (0..p.min(n)).rev() {
        if dependent.contains(&k) {
            continue;
        }
        let mut s = qty[k];
        for j in k + 1..p {
            s -= r[k * p + j] * coefficients[j];
        }
        coefficients[k] = s / r[k * p + k];
    }

    QrSolve {
        coefficients,
        r,
        dependent,
    }
}

/// Inverse of a non-singular upper-triangular `p × p` row-major matrix.
pub fn upper_triangular_inverse<T: Real>(r: &[T], p: usize) -> Vec<T> {
    let mut inv = vec![T::zero(); p * p];
    for j in 0..p {
        inv[j * p + j] = r[j * p + j].recip();
        for i in (0..j).rev() {
            let mut s = T::zero();
            for k in i + 1..=j {
                s += r[i * p + k] * inv[k * p + j];
            }
            inv[i * p + j] = -s / r[i * p + i];
        }
    }
    inv
}
