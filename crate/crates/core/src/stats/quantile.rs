use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Quantile by linear interpolation between order statistics
/// (`h = (n - 1) p`).
pub fn quantile_linear<T: Scalar>(values: &[T], p: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::of(h - lo as f64);
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoints() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile_linear(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile_linear(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile_linear(&v, 0.5).unwrap(), 2.5);
    }
}
