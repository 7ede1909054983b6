use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::fit_ols_r2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceDecomposition<T> {
    pub r2_structural: T,
    pub r2_contextual: T,
    /// `None` when neither group explains any variance.
    pub structural_fraction: Option<T>,
}

/// Share of explained confidence variance attributable to structural
/// features, from two separate least-squares fits.
pub fn variance_decomposition<T: Scalar>(
    confidence: &[T],
    structural: &[Vec<T>],
    contextual: &[Vec<T>],
) -> Result<VarianceDecomposition<T>> {
    if structural.first().is_none_or(|r| r.is_empty()) || contextual.first().is_none_or(|r| r.is_empty()) {
        return Err(Error::InvalidArgument("feature groups must be nonempty".into()));
    }
    let rs = fit_ols_r2(structural, confidence)?.r_squared;
    let rc = fit_ols_r2(contextual, confidence)?.r_squared;
    let total = rs + rc;
    Ok(VarianceDecomposition {
        r2_structural: rs,
        r2_contextual: rc,
        structural_fraction: (total > T::of(1e-12)).then(|| rs / total),
    })
}
