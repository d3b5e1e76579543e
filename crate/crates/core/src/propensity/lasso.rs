//! L1-penalized logistic regression by coordinate descent on the IRLS
//! quadratic approximation, with cross-validated lambda selection over a
//! 50-point log-spaced grid. Used to screen response-related covariates
//! before the logistic and CHAID adjustments.

use rand::seq::SliceRandom;
use rand::Rng;

use super::logistic::logistic;
use super::PropensityError;

const GRID_POINTS: usize = 50;
const GRID_RATIO: f64 = 1e-3;
const CD_TOL: f64 = 1e-7;

struct Standardized {
    cols: Vec<Vec<f64>>,
    kept: Vec<usize>,
}

fn standardize(columns: &[Vec<f64>], rows: &[usize]) -> Standardized {
    let n = rows.len() as f64;
    let mut cols = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let mean = rows.iter().map(|&i| col[i]).sum::<f64>() / n;
        let var = rows.iter().map(|&i| (col[i] - mean) * (col[i] - mean)).sum::<f64>() / n;
        if var <= 1e-12 {
            continue;
        }
        let sd = var.sqrt();
        cols.push(rows.iter().map(|&i| (col[i] - mean) / sd).collect());
        kept.push(j);
    }
    Standardized { cols, kept }
}

/// Smallest lambda at which every penalized coefficient is zero.
pub fn lasso_lambda_max(columns: &[Vec<f64>], r: &[u8]) -> f64 {
    let rows: Vec<usize> = (0..r.len()).collect();
    let std = standardize(columns, &rows);
    lambda_max_standardized(&std.cols, r, &rows)
}

fn lambda_max_standardized(cols: &[Vec<f64>], r: &[u8], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let rbar = rows.iter().map(|&i| r[i] as f64).sum::<f64>() / n;
    let mut max = 0.0f64;
    for col in cols {
        let g: f64 = rows
            .iter()
            .enumerate()
            .map(|(k, &i)| col[k] * (r[i] as f64 - rbar))
            .sum::<f64>()
            / n;
        max = max.max(g.abs());
    }
    max.max(1e-12)
}

/// Penalized IRLS + coordinate descent at one lambda on standardized
/// columns restricted to `rows`. Returns (intercept, coefficients).
fn fit_at_lambda(
    cols: &[Vec<f64>],
    r: &[u8],
    rows: &[usize],
    lambda: f64,
    beta0: &mut f64,
    beta: &mut [f64],
) {
    let n = rows.len() as f64;
    for _outer in 0..40 {
        // quadratic approximation at the current coefficients
        let mut eta: Vec<f64> = vec![*beta0; rows.len()];
        for (j, col) in cols.iter().enumerate() {
            if beta[j] != 0.0 {
                for (k, e) in eta.iter_mut().enumerate() {
                    *e += beta[j] * col[k];
                }
            }
        }
        let mut w = Vec::with_capacity(rows.len());
        let mut res = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            let pi = logistic(eta[k]);
            let wi = (pi * (1.0 - pi)).max(1e-5);
            w.push(wi);
            // working residual z - eta where z = eta + (r - pi)/w
            res.push((r[i] as f64 - pi) / wi);
        }
        let sw: Vec<f64> = cols
            .iter()
            .map(|col| col.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / n)
            .collect();
        let w_total: f64 = w.iter().sum();

        let mut max_delta: f64 = 0.0;
        for _inner in 0..1000 {
            max_delta = 0.0;
            // intercept, unpenalized
            let d0: f64 = res.iter().zip(&w).map(|(e, wi)| wi * e).sum::<f64>() / w_total;
            if d0.abs() > 0.0 {
                *beta0 += d0;
                for e in res.iter_mut() {
                    *e -= d0;
                }
                max_delta = max_delta.max(d0.abs());
            }
            for (j, col) in cols.iter().enumerate() {
                let grad: f64 =
                    col.iter().zip(res.iter().zip(&w)).map(|(x, (e, wi))| wi * x * e).sum::<f64>()
                        / n;
                let num = grad + sw[j] * beta[j];
                let new = soft_threshold(num, lambda) / sw[j];
                let delta = new - beta[j];
                if delta != 0.0 {
                    for (k, x) in col.iter().enumerate() {
                        res[k] -= delta * x;
                    }
                    beta[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < CD_TOL {
                break;
            }
        }
        if max_delta < CD_TOL {
            break;
        }
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

fn deviance(cols: &[Vec<f64>], r: &[u8], rows: &[usize], beta0: f64, beta: &[f64]) -> f64 {
    let mut dev = 0.0;
    for (k, &i) in rows.iter().enumerate() {
        let mut eta = beta0;
        for (j, col) in cols.iter().enumerate() {
            eta += beta[j] * col[k];
        }
        let pi = logistic(eta).clamp(1e-12, 1.0 - 1e-12);
        dev -= 2.0 * if r[i] == 1 { pi.ln() } else { (1.0 - pi).ln() };
    }
    dev
}

/// Coefficients at one lambda on the full data, in original column order
/// (zero for constant columns). Returns (intercept, coefficients) on the
/// standardized scale.
pub fn lasso_logistic_at(
    columns: &[Vec<f64>],
    r: &[u8],
    lambda: f64,
) -> Result<(f64, Vec<f64>), PropensityError> {
    check_input(columns, r)?;
    let rows: Vec<usize> = (0..r.len()).collect();
    let std = standardize(columns, &rows);
    let rbar = r.iter().map(|&v| v as f64).sum::<f64>() / r.len() as f64;
    let mut beta0 = (rbar / (1.0 - rbar)).ln();
    let mut beta = vec![0.0; std.cols.len()];
    fit_at_lambda(&std.cols, r, &rows, lambda, &mut beta0, &mut beta);
    let mut out = vec![0.0; columns.len()];
    for (slot, b) in std.kept.iter().zip(&beta) {
        out[*slot] = *b;
    }
    Ok((beta0, out))
}

/// Cross-validation summary of one lasso path.
#[derive(Debug, Clone)]
pub struct LassoCv {
    pub lambdas: Vec<f64>,
    pub mean_deviance: Vec<f64>,
    pub chosen: usize,
    /// Columns with nonzero coefficients at the chosen lambda (full-data
    /// refit), as indices into the input columns.
    pub selected: Vec<usize>,
}

fn check_input(columns: &[Vec<f64>], r: &[u8]) -> Result<(), PropensityError> {
    if r.is_empty() {
        return Err(PropensityError::EmptyInput);
    }
    if columns.iter().any(|c| c.len() != r.len()) {
        return Err(PropensityError::LengthMismatch);
    }
    let ones = r.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == r.len() {
        return Err(PropensityError::SingleClass);
    }
    Ok(())
}

/// Fit the CV path and pick lambda by minimum mean validation deviance.
pub fn lasso_logistic_cv(
    columns: &[Vec<f64>],
    r: &[u8],
    n_folds: usize,
    rng: &mut impl Rng,
) -> Result<LassoCv, PropensityError> {
    check_input(columns, r)?;
    if n_folds < 2 {
        return Err(PropensityError::InvalidParameter("need at least 2 folds".into()));
    }
    let n = r.len();
    let all_rows: Vec<usize> = (0..n).collect();
    let std = standardize(columns, &all_rows);
    let lambda_max = lambda_max_standardized(&std.cols, r, &all_rows);
    let lambdas: Vec<f64> = (0..GRID_POINTS)
        .map(|k| lambda_max * GRID_RATIO.powf(k as f64 / (GRID_POINTS - 1) as f64))
        .collect();

    let mut order = all_rows.clone();
    order.shuffle(rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0usize; n];
        for (pos, &row) in order.iter().enumerate() {
            f[row] = pos % n_folds;
        }
        f
    };

    let mut dev_sum = vec![0.0; lambdas.len()];
    for fold in 0..n_folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        if test.is_empty() {
            continue;
        }
        // standardized column views restricted to the folds
        let train_cols: Vec<Vec<f64>> = std
            .cols
            .iter()
            .map(|c| train.iter().map(|&i| c[i]).collect())
            .collect();
        let test_cols: Vec<Vec<f64>> =
            std.cols.iter().map(|c| test.iter().map(|&i| c[i]).collect()).collect();
        let rbar = train.iter().map(|&i| r[i] as f64).sum::<f64>() / train.len() as f64;
        let rbar = rbar.clamp(1e-6, 1.0 - 1e-6);
        let mut beta0 = (rbar / (1.0 - rbar)).ln();
        let mut beta = vec![0.0; std.cols.len()];
        let train_idx: Vec<usize> = train.clone();
        for (k, &lambda) in lambdas.iter().enumerate() {
            fit_at_lambda(&train_cols, r, &train_idx, lambda, &mut beta0, &mut beta);
            dev_sum[k] += deviance(&test_cols, r, &test, beta0, &beta) / test.len() as f64;
        }
    }
    let mean_deviance: Vec<f64> = dev_sum.iter().map(|d| d / n_folds as f64).collect();
    let chosen = mean_deviance
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(k, _)| k)
        .unwrap();

    // full-data refit at the chosen lambda, walking the path for warm starts
    let rbar = (r.iter().map(|&v| v as f64).sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let mut beta0 = (rbar / (1.0 - rbar)).ln();
    let mut beta = vec![0.0; std.cols.len()];
    for &lambda in lambdas.iter().take(chosen + 1) {
        fit_at_lambda(&std.cols, r, &all_rows, lambda, &mut beta0, &mut beta);
    }
    let selected: Vec<usize> = std
        .kept
        .iter()
        .zip(&beta)
        .filter(|(_, b)| b.abs() > 1e-12)
        .map(|(j, _)| *j)
        .collect();

    Ok(LassoCv { lambdas, mean_deviance, chosen, selected })
}

/// Columns with nonzero coefficients at the CV-chosen lambda.
pub fn lasso_logistic_select(
    columns: &[Vec<f64>],
    r: &[u8],
    n_folds: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, PropensityError> {
    Ok(lasso_logistic_cv(columns, r, n_folds, rng)?.selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stage_rng;
    use crate::sampling::logit_inv;
    use rand_distr::{Distribution, StandardNormal};

    fn s2_style_data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = stage_rng(seed, "lasso-s2");
        let mut xs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 10];
        let mut zs: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 10];
        let mut r = Vec::with_capacity(n);
        for _ in 0..n {
            for x in xs.iter_mut() {
                x.push(StandardNormal.sample(&mut rng));
            }
            for z in zs.iter_mut() {
                z.push((rng.random::<f64>() < 0.5) as u8 as f64);
            }
            let i = r.len();
            let eta = 1.0 + 2.0 * xs[0][i] + 1.5 * xs[1][i] * xs[1][i] + 2.0 * zs[0][i]
                + zs[1][i]
                - 2.0 * zs[2][i]
                - xs[0][i] * zs[0][i];
            r.push((rng.random::<f64>() < logit_inv(eta)) as u8);
        }
        let mut cols = xs;
        cols.extend(zs);
        (cols, r)
    }

    #[test]
    fn lambda_max_shrinks_everything() {
        let (cols, r) = s2_style_data(1, 800);
        let lmax = lasso_lambda_max(&cols, &r);
        let (_, beta) = lasso_logistic_at(&cols, &r, lmax).unwrap();
        assert!(beta.iter().all(|b| b.abs() < 1e-12), "{beta:?}");
    }

    #[test]
    fn recovers_strong_signals_across_runs() {
        let mut hits = 0;
        for seed in 0..50u64 {
            let (cols, r) = s2_style_data(seed, 1500);
            let mut rng = stage_rng(seed, "lasso-cv");
            let selected = lasso_logistic_select(&cols, &r, 10, &mut rng).unwrap();
            // x1 is column 0, z1 is column 10
            if selected.contains(&0) && selected.contains(&10) {
                hits += 1;
            }
        }
        assert!(hits >= 45, "x1 and z1 recovered in only {hits}/50 runs");
    }

    #[test]
    fn duplicated_column_picks_at_most_one() {
        let mut rng = stage_rng(9, "lasso-dup");
        let n = 600;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r: Vec<u8> =
            x.iter().map(|&v| (rng.random::<f64>() < logit_inv(2.0 * v)) as u8).collect();
        let cols = vec![x.clone(), x, noise];
        let lmax = lasso_lambda_max(&cols, &r);
        let (_, beta) = lasso_logistic_at(&cols, &r, 0.5 * lmax).unwrap();
        let dup_nonzero = [beta[0], beta[1]].iter().filter(|b| b.abs() > 1e-12).count();
        assert!(dup_nonzero <= 1, "both duplicates selected: {beta:?}");
    }

    #[test]
    fn chosen_lambda_beats_full_shrinkage_deviance() {
        let (cols, r) = s2_style_data(3, 1000);
        let mut rng = stage_rng(3, "lasso-dev");
        let cv = lasso_logistic_cv(&cols, &r, 10, &mut rng).unwrap();
        assert!(cv.mean_deviance[cv.chosen] <= cv.mean_deviance[0]);
        assert!(!cv.selected.is_empty());
    }

    #[test]
    fn single_class_and_bad_folds_error() {
        let cols = vec![vec![0.0, 1.0, 2.0]];
        assert!(matches!(
            lasso_logistic_select(&cols, &[1, 1, 1], 2, &mut stage_rng(0, "x")),
            Err(PropensityError::SingleClass)
        ));
        assert!(matches!(
            lasso_logistic_select(&cols, &[1, 0, 1], 1, &mut stage_rng(0, "x")),
            Err(PropensityError::InvalidParameter(_))
        ));
    }
}
