//! Small dense solvers for the per-entity ridge systems, the Newton steps of
//! the logistic fit, and least squares.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `scale * x x^T`.
    pub fn add_outer(&mut self, x: &[T], scale: T) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let xi = x[i] * scale;
            let row = &mut self.data[i * self.n..(i + 1) * self.n];
            for (r, &xj) in row.iter_mut().zip(x) {
                *r += xi * xj;
            }
        }
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
    /// Returns `None` when a pivot is not strictly positive.
    pub fn cholesky_solve(&self, b: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = self.data[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = self.data[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let t = l[i * n + k] * y[k];
                y[i] -= t;
            }
            y[i] /= l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = l[k * n + i] * y[k];
                y[i] -= t;
            }
            y[i] /= l[i * n + i];
        }
        Some(y)
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Least squares `min ||X b - y||` by Householder QR. `rows` are the rows of X.
pub fn least_squares<T: Scalar>(rows: &[Vec<T>], y: &[T]) -> Result<Vec<T>> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::Empty("least squares design"));
    }
    if y.len() != m {
        return Err(Error::LengthMismatch {
            left: m,
            right: y.len(),
        });
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("ragged design matrix".into()));
    }
    if m <= n {
        return Err(Error::InvalidArgument(format!(
            "need more rows than columns ({m} rows, {n} columns)"
        )));
    }
    // column-major copy
    let mut a: Vec<Vec<T>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut rhs = y.to_vec();
    let scale = a
        .iter()
        .flat_map(|c| c.iter())
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tol = T::epsilon() * T::of_usize(m.max(n)) * T::of(100.0) * scale.max(T::one());

    for k in 0..n {
        let norm = a[k][k..].iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        if norm <= tol {
            return Err(Error::RankDeficient { column: k });
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = v.iter().fold(T::zero(), |acc, &x| acc + x * x);
        if vnorm2 > T::zero() {
            for col in a.iter_mut().skip(k) {
                let dot = v
                    .iter()
                    .zip(&col[k..])
                    .fold(T::zero(), |acc, (&vi, &ci)| acc + vi * ci);
                let f = T::of(2.0) * dot / vnorm2;
                for (c, &vi) in col[k..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot = v
                .iter()
                .zip(&rhs[k..])
                .fold(T::zero(), |acc, (&vi, &ci)| acc + vi * ci);
            let f = T::of(2.0) * dot / vnorm2;
            for (c, &vi) in rhs[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        if a[k][k].abs() <= tol {
            return Err(Error::RankDeficient { column: k });
        }
    }
    let mut b = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= a[j][i] * b[j];
        }
        b[i] = s / a[i][i];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_hand_solution() {
        let mut a = SquareMatrix::<f64>::zeros(2);
        a[(0, 0)] = 4.0;
        a[(0, 1)] = 2.0;
        a[(1, 0)] = 2.0;
        a[(1, 1)] = 3.0;
        let x = a.cholesky_solve(&[2.0, 1.0]).unwrap();
        // det = 8; inverse = [[3,-2],[-2,4]]/8
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!(x[1].abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SquareMatrix::<f64>::identity(2);
        a[(1, 1)] = -1.0;
        assert!(a.cholesky_solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn least_squares_detects_collinear_columns() {
        let rows = vec![
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
            vec![4.0, 8.0],
        ];
        let err = least_squares(&rows, &[1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }
}
