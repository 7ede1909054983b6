use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const SERIES_TERMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KsTest<T> {
    pub statistic: T,
    pub p_value: T,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small lambda.
        let k = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let mut cdf = 0.0;
        for j in 1..=SERIES_TERMS {
            let m = (2 * j - 1) as f64;
            let term = k.powf(m * m);
            cdf += term;
            if term < 1e-300 {
                break;
            }
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut q = 0.0;
        for j in 1..=SERIES_TERMS {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * lambda * lambda).exp();
            q += if j % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * q).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample<T: Scalar>(a: &[T], b: &[T]) -> Result<KsTest<T>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("ks_two_sample sample"));
    }
    let cmp = |x: &T, y: &T| x.partial_cmp(y).unwrap_or(Ordering::Equal);
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(cmp);
    xb.sort_by(cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let v = if xa[i] <= xb[j] { xa[i] } else { xb[j] };
        while i < na && xa[i] <= v {
            i += 1;
        }
        while j < nb && xb[j] <= v {
            j += 1;
        }
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        d = d.max(diff);
    }
    // one side exhausted: the other CDF is still < 1 only where it has mass left
    if i < na || j < nb {
        let diff = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        d = d.max(diff);
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let p = kolmogorov_survival(ne.sqrt() * d);
    Ok(KsTest {
        statistic: T::of(d),
        p_value: T::of(p),
    })
}
