use statrs::distribution::{ChiSquared as ChiSquaredDist, ContinuousCDF};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ChiSquared<T> {
    pub statistic: T,
    pub p_value: T,
    pub dof: usize,
}

/// Pearson chi-squared test of independence on an r x c count table.
pub fn chi_squared_independence<T: Scalar>(table: &[Vec<T>]) -> Result<ChiSquared<T>> {
    let rows = table.len();
    if rows < 2 {
        return Err(Error::InvalidArgument("chi-squared needs at least 2 rows".into()));
    }
    let cols = table[0].len();
    if cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument(
            "chi-squared needs a rectangular table with at least 2 columns".into(),
        ));
    }
    if table.iter().flatten().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidArgument("counts must be finite and >= 0".into()));
    }
    let row_tot: Vec<T> = table.iter().map(|r| r.iter().copied().sum()).collect();
    let col_tot: Vec<T> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    if let Some(i) = row_tot.iter().position(|v| *v <= T::zero()) {
        return Err(Error::Degenerate(format!("row {i} has zero marginal")));
    }
    if let Some(j) = col_tot.iter().position(|v| *v <= T::zero()) {
        return Err(Error::Degenerate(format!("column {j} has zero marginal")));
    }
    let total: T = row_tot.iter().copied().sum();
    let mut stat = T::zero();
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_tot[i] * col_tot[j] / total;
            let d = obs - expected;
            stat += d * d / expected;
        }
    }
    let dof = (rows - 1) * (cols - 1);
    let dist = ChiSquaredDist::new(dof as f64).expect("positive degrees of freedom");
    let p = dist.sf(stat.f64().max(0.0));
    Ok(ChiSquared {
        statistic: stat,
        p_value: T::of(p),
        dof,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_independence() {
        let r = chi_squared_independence::<f64>(&[vec![10.0, 10.0], vec![10.0, 10.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_association_hand_computed() {
        // expected 50 in each cell: 4 * 50^2 / 50 = 200
        let r = chi_squared_independence::<f64>(&[vec![100.0, 0.0], vec![0.0, 100.0]]).unwrap();
        assert!((r.statistic - 200.0).abs() < 1e-9);
        assert_eq!(r.dof, 1);
    }

    #[test]
    fn proportional_rows_give_zero() {
        let r = chi_squared_independence::<f64>(&[vec![2.0, 6.0, 4.0], vec![5.0, 15.0, 10.0]]).unwrap();
        assert!(r.statistic.abs() < 1e-12);
    }

    #[test]
    fn zero_marginal_is_defined_failure() {
        let err = chi_squared_independence(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }
}
