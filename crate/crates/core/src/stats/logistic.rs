use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// L2 penalty on the standardized weights (intercept unpenalized).
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient. The fit also
    /// stops once a Newton step can no longer change the objective.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

/// Z-score parameters fitted on the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(rows: &[Vec<T>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = T::of_usize(rows.len().max(1));
        let mut mean = vec![T::zero(); d];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for r in rows {
            for ((s, &v), &m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // zero-variance columns map to 0 after centering
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::zero() {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel<T> {
    pub standardizer: Standardizer<T>,
    /// Weights in standardized feature space.
    pub weights: Vec<T>,
    pub intercept: T,
    pub iterations: usize,
    pub grad_norm: f64,
    /// Penalized log-likelihood after each accepted step, starting at the zero vector.
    pub objective_trace: Vec<f64>,
}

impl<T: Scalar> LogisticModel<T> {
    pub fn decision(&self, row: &[T]) -> T {
        let z = self.standardizer.transform(row);
        self.intercept
            + z.iter()
                .zip(&self.weights)
                .map(|(&a, &b)| a * b)
                .sum::<T>()
    }

    pub fn probability(&self, row: &[T]) -> T {
        sigmoid(self.decision(row))
    }

    /// Coefficients mapped back to the raw feature scale: `(weights, intercept)`.
    pub fn raw_coefficients(&self) -> (Vec<T>, T) {
        let w: Vec<T> = self
            .weights
            .iter()
            .zip(&self.standardizer.scale)
            .map(|(&w, &s)| w / s)
            .collect();
        let b = self.intercept
            - w.iter()
                .zip(&self.standardizer.mean)
                .map(|(&w, &m)| w * m)
                .sum::<T>();
        (w, b)
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    /// standardized rows with a trailing 1.0 for the intercept
    x: &'a [Vec<f64>],
    y: &'a [bool],
    l2: f64,
}

impl Problem<'_> {
    fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn objective(&self, beta: &[f64]) -> f64 {
        let d = self.dim();
        let mut ll = 0.0;
        for (row, &yi) in self.x.iter().zip(self.y) {
            let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            ll += if yi { -softplus(-z) } else { -softplus(z) };
        }
        let pen: f64 = beta[..d - 1].iter().map(|w| w * w).sum();
        ll - 0.5 * self.l2 * pen
    }

    fn gradient_hessian(&self, beta: &[f64]) -> (Vec<f64>, SquareMatrix<f64>) {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut h = SquareMatrix::zeros(d);
        for (row, &yi) in self.x.iter().zip(self.y) {
            let z: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(z);
            let r = if yi { 1.0 - p } else { -p };
            for (gj, &xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            h.add_outer(row, p * (1.0 - p));
        }
        for j in 0..d - 1 {
            g[j] -= self.l2 * beta[j];
            h[(j, j)] += self.l2;
        }
        (g, h)
    }
}

/// L2-penalized logistic regression by damped Newton (IRLS).
///
/// Features are z-scored internally and the fit starts from the zero vector,
/// so the result is a deterministic function of the inputs. Each accepted step
/// does not decrease the penalized log-likelihood; when the Newton system is
/// not positive definite or not finite the step falls back to the gradient.
pub fn fit_logistic<T: Scalar>(
    features: &[Vec<T>],
    labels: &[bool],
    opts: &LogisticOptions,
) -> Result<LogisticModel<T>> {
    if features.is_empty() {
        return Err(Error::Empty("logistic regression features"));
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("ragged feature matrix".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("features must be finite".into()));
    }
    if !(opts.l2 >= 0.0) {
        return Err(Error::InvalidArgument("l2 must be >= 0".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Degenerate(
            "logistic regression labels are all equal".into(),
        ));
    }

    let standardizer = Standardizer::fit(features);
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|r| {
            let mut z: Vec<f64> = standardizer.transform(r).into_iter().map(Scalar::f64).collect();
            z.push(1.0);
            z
        })
        .collect();
    let problem = Problem {
        x: &x,
        y: labels,
        l2: opts.l2,
    };
    let n = labels.len() as f64;
    let mut beta = vec![0.0; d + 1];
    let mut obj = problem.objective(&beta);
    let mut trace = vec![obj];
    let mut grad_norm = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let (g, h) = problem.gradient_hessian(&beta);
        grad_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if grad_norm < opts.tol {
            return Ok(finish(standardizer, beta, iter, grad_norm, trace));
        }
        let newton = if h.is_finite() {
            h.cholesky_solve(&g).filter(|s| s.iter().all(|v| v.is_finite()))
        } else {
            None
        };
        if let Some(s) = &newton {
            // predicted gain below the rounding level of the objective
            let decrement: f64 = g.iter().zip(s).map(|(a, b)| a * b).sum();
            if decrement <= 4.0 * f64::EPSILON * obj.abs().max(1.0) {
                let cand: Vec<f64> = beta.iter().zip(s).map(|(b, d)| b + d).collect();
                if problem.objective(&cand) >= obj {
                    beta = cand;
                }
                return Ok(finish(standardizer, beta, iter + 1, grad_norm, trace));
            }
        }
        let (dir, mut step) = match newton {
            Some(s) => (s, 1.0),
            // bound on the Hessian of standardized data: n/4 per coordinate
            None => (g.clone(), 4.0 / (n * (d + 1) as f64 + opts.l2)),
        };
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, s)| b + step * s).collect();
            let cand_obj = problem.objective(&cand);
            if cand_obj.is_finite() && cand_obj >= obj {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at machine precision
            break;
        }
        trace.push(obj);
    }
    let (g, _) = problem.gradient_hessian(&beta);
    grad_norm = grad_norm.min(g.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if grad_norm < opts.tol.max(1e-10) * 100.0 && beta.iter().all(|v| v.is_finite()) {
        // stalled line search at a numerically stationary point
        let iters = trace.len() - 1;
        return Ok(finish(standardizer, beta, iters, grad_norm, trace));
    }
    Err(Error::NonConvergence {
        iterations: trace.len() - 1,
        grad_norm,
        last_weights: beta,
    })
}

fn finish<T: Scalar>(
    standardizer: Standardizer<T>,
    beta: Vec<f64>,
    iterations: usize,
    grad_norm: f64,
    objective_trace: Vec<f64>,
) -> LogisticModel<T> {
    let d = beta.len() - 1;
    LogisticModel {
        standardizer,
        weights: beta[..d].iter().map(|&v| T::of(v)).collect(),
        intercept: T::of(beta[d]),
        iterations,
        grad_norm,
        objective_trace,
    }
}
