//! Maximum-likelihood logistic regression by iteratively reweighted least
//! squares, with explicit separation and singular-design failure modes.

use super::PropensityError;

/// Fitted logit coefficients; the intercept comes first.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

impl LogisticFit {
    /// Fitted probabilities for predictor columns laid out as in the fit.
    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, |c| c.len());
        (0..n)
            .map(|i| {
                let mut eta = self.coefficients[0];
                for (j, col) in columns.iter().enumerate() {
                    eta += self.coefficients[j + 1] * col[i];
                }
                logistic(eta)
            })
            .collect()
    }
}

pub fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 50;
const SEPARATION_BOUND: f64 = 30.0;

/// Fit response ~ intercept + columns by IRLS. Converged when the largest
/// score component falls below 1e-8, capped at 50 iterations.
pub fn fit_logistic(columns: &[Vec<f64>], r: &[u8]) -> Result<LogisticFit, PropensityError> {
    let n = r.len();
    if n == 0 {
        return Err(PropensityError::EmptyInput);
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(PropensityError::LengthMismatch);
    }
    let ones = r.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(PropensityError::SingleClass);
    }
    let p = columns.len() + 1;
    let x = |i: usize, j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            columns[j - 1][i]
        }
    };

    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    for iter in 1..=MAX_ITER {
        iterations = iter;
        let mut score = vec![0.0; p];
        let mut hessian = vec![0.0; p * p];
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..p {
                eta += beta[j] * x(i, j);
            }
            let pi = logistic(eta);
            let w = (pi * (1.0 - pi)).max(1e-10);
            let resid = r[i] as f64 - pi;
            for j in 0..p {
                let xij = x(i, j);
                score[j] += resid * xij;
                for k in j..p {
                    hessian[j * p + k] += w * xij * x(i, k);
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hessian[j * p + k] = hessian[k * p + j];
            }
        }
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_score < SCORE_TOL {
            return Ok(LogisticFit { coefficients: beta, iterations });
        }
        let step = cholesky_solve(&mut hessian, &score, p)
            .ok_or(PropensityError::SingularDesign)?;
        for j in 0..p {
            beta[j] += step[j];
        }
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            return Err(PropensityError::Separation);
        }
    }
    Ok(LogisticFit { coefficients: beta, iterations })
}

/// Solve a symmetric positive-definite system in place; None if singular.
pub(crate) fn cholesky_solve(a: &mut [f64], b: &[f64], p: usize) -> Option<Vec<f64>> {
    let max_diag = (0..p).fold(0.0f64, |m, j| m.max(a[j * p + j].abs())).max(1e-300);
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if d <= 1e-12 * max_diag {
            return None;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in (j + 1)..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / d;
        }
    }
    // forward then back substitution
    let mut y = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            let t = a[i * p + k] * y[k];
            y[i] -= t;
        }
        y[i] /= a[i * p + i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            let t = a[k * p + i] * y[k];
            y[i] -= t;
        }
        y[i] /= a[i * p + i];
    }
    Some(y)
}
