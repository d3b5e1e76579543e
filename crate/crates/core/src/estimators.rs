//! Design-based point and variance estimation: weighted (Hajek) means and
//! Taylor-linearization variance for stratified cluster samples.
//!
//! The variance is the with-replacement first-stage approximation: with
//! linearized values u_i = w_i (y_i - Q) / sum(w) aggregated to cluster
//! totals U_hj, it returns sum_h n_h/(n_h-1) sum_j (U_hj - Ubar_h)^2.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::special::t_quantile;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-positive weight at position {0}")]
    NonPositiveWeight(usize),
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("non-finite value at position {0}")]
    NonFiniteValue(usize),
    #[error("stratum {0} has a single sampled cluster")]
    SingletonStratumCluster(i64),
    #[error("design degrees of freedom are not positive")]
    NonPositiveDf,
    #[error("confidence level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
}

/// A point estimate with its design-based variance and degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub estimate: f64,
    pub variance: f64,
    pub df: f64,
}

fn check_inputs(y: &[f64], w: &[f64]) -> Result<(), EstimatorError> {
    if y.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    if y.len() != w.len() {
        return Err(EstimatorError::LengthMismatch);
    }
    for (i, (&yi, &wi)) in y.iter().zip(w).enumerate() {
        if !(wi > 0.0 && wi.is_finite()) {
            return Err(EstimatorError::NonPositiveWeight(i));
        }
        if !yi.is_finite() {
            return Err(EstimatorError::NonFiniteValue(i));
        }
    }
    Ok(())
}

/// Hajek estimator: sum(w y) / sum(w).
pub fn weighted_mean(y: &[f64], w: &[f64]) -> Result<f64, EstimatorError> {
    check_inputs(y, w)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (yi, wi) in y.iter().zip(w) {
        num += wi * yi;
        den += wi;
    }
    Ok(num / den)
}

/// Taylor-linearization variance of the weighted mean for a stratified
/// cluster sample. Errors on strata with one sampled cluster.
pub fn taylor_variance(
    y: &[f64],
    w: &[f64],
    strata: &[i64],
    clusters: &[i64],
) -> Result<f64, EstimatorError> {
    taylor_variance_opts(y, w, strata, clusters, false)
}

/// As [`taylor_variance`], optionally collapsing singleton-cluster strata
/// into the adjacent stratum (by sorted stratum id) instead of erroring.
pub fn taylor_variance_opts(
    y: &[f64],
    w: &[f64],
    strata: &[i64],
    clusters: &[i64],
    collapse_singletons: bool,
) -> Result<f64, EstimatorError> {
    check_inputs(y, w)?;
    if strata.len() != y.len() || clusters.len() != y.len() {
        return Err(EstimatorError::LengthMismatch);
    }
    let q = weighted_mean(y, w)?;
    let sum_w: f64 = w.iter().sum();

    // cluster totals of the linearized values, grouped by stratum
    let mut totals: BTreeMap<i64, BTreeMap<i64, f64>> = BTreeMap::new();
    for i in 0..y.len() {
        let u = w[i] * (y[i] - q) / sum_w;
        *totals.entry(strata[i]).or_default().entry(clusters[i]).or_insert(0.0) += u;
    }

    let mut groups: Vec<(i64, Vec<f64>)> =
        totals.into_iter().map(|(h, m)| (h, m.into_values().collect())).collect();

    if collapse_singletons {
        groups = collapse(groups);
    }

    let mut variance = 0.0;
    for (h, us) in &groups {
        let n_h = us.len();
        if n_h < 2 {
            if groups.len() == 1 {
                return Err(EstimatorError::SingletonStratumCluster(*h));
            }
            return Err(EstimatorError::SingletonStratumCluster(*h));
        }
        let mean = us.iter().sum::<f64>() / n_h as f64;
        let ss: f64 = us.iter().map(|u| (u - mean) * (u - mean)).sum();
        variance += n_h as f64 / (n_h as f64 - 1.0) * ss;
    }
    Ok(variance)
}

fn collapse(groups: Vec<(i64, Vec<f64>)>) -> Vec<(i64, Vec<f64>)> {
    let mut out: Vec<(i64, Vec<f64>)> = Vec::new();
    for (h, us) in groups {
        out.push((h, us));
        // merge a completed singleton into its predecessor as we go
        while out.len() >= 2 && out[out.len() - 2].1.len() < 2 {
            let (_, us) = out.remove(out.len() - 2);
            out.last_mut().unwrap().1.extend(us);
        }
    }
    // the final group may still be a singleton
    while out.len() >= 2 && out.last().unwrap().1.len() < 2 {
        let (_, us) = out.pop().unwrap();
        out.last_mut().unwrap().1.extend(us);
    }
    out
}

/// Standard design degrees of freedom: sampled clusters minus strata.
pub fn design_df(strata: &[i64], clusters: &[i64]) -> Result<f64, EstimatorError> {
    if strata.is_empty() || strata.len() != clusters.len() {
        return Err(if strata.is_empty() {
            EstimatorError::EmptyInput
        } else {
            EstimatorError::LengthMismatch
        });
    }
    let n_strata = strata.iter().collect::<std::collections::BTreeSet<_>>().len();
    let n_clusters = clusters.iter().collect::<std::collections::BTreeSet<_>>().len();
    let df = n_clusters as f64 - n_strata as f64;
    if df <= 0.0 {
        return Err(EstimatorError::NonPositiveDf);
    }
    Ok(df)
}

/// t-based confidence interval around a point estimate.
pub fn ci_from(est: &PointEstimate, level: f64) -> Result<(f64, f64), EstimatorError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimatorError::InvalidLevel(level));
    }
    if est.variance == 0.0 {
        return Ok((est.estimate, est.estimate));
    }
    let t = t_quantile((1.0 + level) / 2.0, est.df);
    let half = t * est.variance.sqrt();
    Ok((est.estimate - half, est.estimate + half))
}

/// Convenience: weighted mean, Taylor variance, and design df in one struct.
pub fn point_estimate(
    y: &[f64],
    w: &[f64],
    strata: &[i64],
    clusters: &[i64],
) -> Result<PointEstimate, EstimatorError> {
    Ok(PointEstimate {
        estimate: weighted_mean(y, w)?,
        variance: taylor_variance(y, w, strata, clusters)?,
        df: design_df(strata, clusters)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    #[test]
    fn weighted_mean_basics() {
        assert_abs_diff_eq!(weighted_mean(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_abs_diff_eq!(weighted_mean(&[0.0, 3.0], &[1.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(weighted_mean(&[], &[]), Err(EstimatorError::EmptyInput)));
        assert!(matches!(
            weighted_mean(&[1.0], &[0.0]),
            Err(EstimatorError::NonPositiveWeight(0))
        ));
    }

    #[test]
    fn weighted_mean_scale_invariant_in_weights() {
        let y = [1.0, 4.0, -2.0, 0.5];
        let w = [0.5, 1.5, 2.0, 1.0];
        let w7: Vec<f64> = w.iter().map(|v| v * 7.0).collect();
        assert_abs_diff_eq!(
            weighted_mean(&y, &w).unwrap(),
            weighted_mean(&y, &w7).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn srs_case_reduces_to_s2_over_n() {
        // one stratum, each unit its own cluster, equal weights
        let y = [1.0, 2.0, 3.0];
        let w = [1.0, 1.0, 1.0];
        let strata = [1, 1, 1];
        let clusters = [1, 2, 3];
        let v = taylor_variance(&y, &w, &strata, &clusters).unwrap();
        // s^2/n with s^2 = 1 and n = 3
        assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_outcome_has_zero_variance() {
        let y = [5.0; 6];
        let w = [2.0; 6];
        let strata = [1, 1, 1, 2, 2, 2];
        let clusters = [1, 2, 3, 4, 5, 6];
        assert_abs_diff_eq!(taylor_variance(&y, &w, &strata, &clusters).unwrap(), 0.0);
    }

    #[test]
    fn identical_cluster_totals_give_zero() {
        // two strata, two clusters each, identical per-cluster totals
        let y = [1.0, 3.0, 2.0, 2.0, 4.0, 0.0, 1.0, 3.0];
        let w = [1.0; 8];
        let strata = [1, 1, 1, 1, 2, 2, 2, 2];
        let clusters = [1, 1, 2, 2, 3, 3, 4, 4];
        let v = taylor_variance(&y, &w, &strata, &clusters).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-25);
    }

    #[test]
    fn singleton_stratum_errors_unless_collapsed() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0; 4];
        let strata = [1, 2, 2, 3];
        let clusters = [1, 2, 3, 4];
        assert!(matches!(
            taylor_variance(&y, &w, &strata, &clusters),
            Err(EstimatorError::SingletonStratumCluster(_))
        ));
        let v = taylor_variance_opts(&y, &w, &strata, &clusters, true).unwrap();
        assert!(v > 0.0);
    }

    #[test]
    fn design_df_cases() {
        let strata: Vec<i64> = (0..28).map(|i| i / 7).collect();
        let clusters: Vec<i64> = (0..28).collect();
        assert_abs_diff_eq!(design_df(&strata, &clusters).unwrap(), 24.0);
        assert_abs_diff_eq!(design_df(&[1, 1], &[1, 2]).unwrap(), 1.0);
        assert!(matches!(
            design_df(&[1, 2, 3, 4], &[1, 2, 3, 4]),
            Err(EstimatorError::NonPositiveDf)
        ));
    }

    #[test]
    fn ci_reference_quantiles() {
        let est = PointEstimate { estimate: 0.0, variance: 1.0, df: 1e9 };
        let (lo, hi) = ci_from(&est, 0.95).unwrap();
        assert_abs_diff_eq!(hi, 1.959964, epsilon = 1e-4);
        assert_abs_diff_eq!(lo, -1.959964, epsilon = 1e-4);

        let est10 = PointEstimate { estimate: 2.0, variance: 4.0, df: 10.0 };
        let (lo, hi) = ci_from(&est10, 0.95).unwrap();
        assert_abs_diff_eq!(hi - 2.0, 2.0 * 2.228139, epsilon = 1e-3);
        assert_abs_diff_eq!(2.0 - lo, 2.0 * 2.228139, epsilon = 1e-3);

        let degenerate = PointEstimate { estimate: 1.5, variance: 0.0, df: 5.0 };
        assert_eq!(ci_from(&degenerate, 0.95).unwrap(), (1.5, 1.5));
        assert!(matches!(ci_from(&est, 1.2), Err(EstimatorError::InvalidLevel(_))));
    }

    /// Rao-Wu rescaled cluster bootstrap of the weighted mean; the
    /// independent oracle for the Taylor variance.
    fn bootstrap_variance(
        y: &[f64],
        w: &[f64],
        strata: &[i64],
        clusters: &[i64],
        n_resamples: usize,
        rng: &mut impl Rng,
    ) -> f64 {
        let mut by_stratum: BTreeMap<i64, Vec<i64>> = BTreeMap::new();
        for (h, c) in strata.iter().zip(clusters) {
            let cs = by_stratum.entry(*h).or_default();
            if !cs.contains(c) {
                cs.push(*c);
            }
        }
        let mut estimates = Vec::with_capacity(n_resamples);
        for _ in 0..n_resamples {
            let mut mult: BTreeMap<i64, f64> = BTreeMap::new();
            for cs in by_stratum.values() {
                let n_h = cs.len();
                let m = n_h - 1;
                let factor = n_h as f64 / m as f64;
                for _ in 0..m {
                    let j = rng.random_range(0..n_h);
                    *mult.entry(cs[j]).or_insert(0.0) += factor;
                }
            }
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..y.len() {
                let f = mult.get(&clusters[i]).copied().unwrap_or(0.0);
                num += f * w[i] * y[i];
                den += f * w[i];
            }
            if den > 0.0 {
                estimates.push(num / den);
            }
        }
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n
    }

    #[test]
    fn taylor_matches_cluster_bootstrap_on_small_designs() {
        let mut rng = crate::rng::stage_rng(20240601, "taylor-bootstrap-oracle");
        for _design in 0..50 {
            let n_strata = rng.random_range(2..=3usize);
            let cluster_counts: Vec<usize> =
                (0..n_strata).map(|_| rng.random_range(2..=4usize)).collect();
            let total_clusters: usize = cluster_counts.iter().sum();
            // keep the whole design at <= 30 units
            let size = if total_clusters > 10 { 2 } else { 3 };
            let mut y = Vec::new();
            let mut w = Vec::new();
            let mut strata = Vec::new();
            let mut clusters = Vec::new();
            let mut cluster_id = 0i64;
            for (h, &n_clusters) in cluster_counts.iter().enumerate() {
                for _ in 0..n_clusters {
                    cluster_id += 1;
                    for _ in 0..size {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        y.push(z);
                        w.push(Uniform::new(0.8, 1.25).unwrap().sample(&mut rng));
                        strata.push(h as i64);
                        clusters.push(cluster_id);
                    }
                }
            }
            assert!(y.len() <= 30);
            let taylor = taylor_variance(&y, &w, &strata, &clusters).unwrap();
            let boot = bootstrap_variance(&y, &w, &strata, &clusters, 20_000, &mut rng);
            let rel = (taylor - boot).abs() / boot;
            assert!(
                rel <= 0.10,
                "design {_design}: taylor {taylor:.6e} vs bootstrap {boot:.6e} (rel {rel:.3})"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // shifting y by c moves the mean by c and leaves the variance alone;
        // scaling y by c scales the variance by c^2
        #[test]
        fn location_scale_equivariance(
            ys in proptest::collection::vec(-10.0f64..10.0, 8..24),
            c in -5.0f64..5.0,
        ) {
            let n = ys.len();
            let w: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
            let strata: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();
            let clusters: Vec<i64> = (0..n).map(|i| (i % 8) as i64).collect();
            let shifted: Vec<f64> = ys.iter().map(|y| y + c).collect();
            let scaled: Vec<f64> = ys.iter().map(|y| y * c).collect();

            let m0 = weighted_mean(&ys, &w).unwrap();
            let m1 = weighted_mean(&shifted, &w).unwrap();
            prop_assert!((m1 - (m0 + c)).abs() < 1e-9);

            let v0 = taylor_variance(&ys, &w, &strata, &clusters).unwrap();
            let v1 = taylor_variance(&shifted, &w, &strata, &clusters).unwrap();
            let v2 = taylor_variance(&scaled, &w, &strata, &clusters).unwrap();
            prop_assert!((v1 - v0).abs() <= 1e-9 * v0.max(1.0));
            prop_assert!((v2 - c * c * v0).abs() <= 1e-9 * (c * c * v0).max(1.0));
        }
    }
}
