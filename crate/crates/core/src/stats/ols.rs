use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OlsFit<T> {
    pub intercept: T,
    pub weights: Vec<T>,
    pub r_squared: T,
}

/// Ordinary least squares with an intercept; `R^2 = 1 - SSR / SST`.
pub fn fit_ols_r2<T: Scalar>(features: &[Vec<T>], target: &[T]) -> Result<OlsFit<T>> {
    if features.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: target.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::Empty("ols target"));
    }
    let design: Vec<Vec<T>> = features
        .iter()
        .map(|r| std::iter::once(T::one()).chain(r.iter().copied()).collect())
        .collect();
    let beta = least_squares(&design, target)?;
    let n = T::of_usize(target.len());
    let mean = target.iter().copied().sum::<T>() / n;
    let (mut ssr, mut sst) = (T::zero(), T::zero());
    for (row, &y) in design.iter().zip(target) {
        let fit: T = row.iter().zip(&beta).map(|(&a, &b)| a * b).sum();
        ssr += (y - fit) * (y - fit);
        sst += (y - mean) * (y - mean);
    }
    if sst <= T::zero() {
        return Err(Error::Degenerate("ols target is constant".into()));
    }
    Ok(OlsFit {
        intercept: beta[0],
        weights: beta[1..].to_vec(),
        r_squared: T::one() - ssr / sst,
    })
}
