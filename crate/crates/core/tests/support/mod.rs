//! Shared helpers for the integration suites: KS test, cluster bootstrap,
//! and the exact tree-depth prior recursion.

use rand::Rng;
use std::collections::BTreeMap;

/// Two-sided one-sample Kolmogorov-Smirnov test p-value (asymptotic).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        let f = cdf(*v);
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    let t = d * (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    kolmogorov_sf(t)
}

fn kolmogorov_sf(t: f64) -> f64 {
    if t < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Rao-Wu rescaled cluster bootstrap variance of the weighted mean.
pub fn cluster_bootstrap_variance(
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

/// Exact pmf of the maximum leaf depth of a tree drawn from the structural
/// prior with p_split(d) = alpha (1+d)^-beta, when splits partition a node
/// of L distinct covariate values uniformly into (l, L-l), l = 1..L-1.
/// Nodes with fewer than 2 values are terminal with probability 1.
pub fn exact_depth_prior(n: usize, alpha: f64, beta: f64, max_depth: usize) -> Vec<f64> {
    // memo[(len, depth)] -> pmf over (max leaf depth - depth)
    let mut memo: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let pmf = rel_depth_pmf(n, 0, alpha, beta, max_depth, &mut memo);
    pmf
}

fn rel_depth_pmf(
    len: usize,
    depth: usize,
    alpha: f64,
    beta: f64,
    max_depth: usize,
    memo: &mut BTreeMap<(usize, usize), Vec<f64>>,
) -> Vec<f64> {
    if let Some(hit) = memo.get(&(len, depth)) {
        return hit.clone();
    }
    let levels = max_depth - depth + 1;
    let mut pmf = vec![0.0; levels];
    if len < 2 || depth == max_depth {
        pmf[0] = 1.0;
        memo.insert((len, depth), pmf.clone());
        return pmf;
    }
    let p_split = alpha * (1.0 + depth as f64).powf(-beta);
    pmf[0] = 1.0 - p_split;
    let n_cuts = (len - 1) as f64;
    for l in 1..len {
        let left = rel_depth_pmf(l, depth + 1, alpha, beta, max_depth, memo);
        let right = rel_depth_pmf(len - l, depth + 1, alpha, beta, max_depth, memo);
        // P(max(A,B) = m) via cdf products
        let child_levels = levels - 1;
        let mut cdf_l = vec![0.0; child_levels];
        let mut cdf_r = vec![0.0; child_levels];
        let mut acc = 0.0;
        for m in 0..child_levels {
            acc += left.get(m).copied().unwrap_or(0.0);
            cdf_l[m] = acc;
        }
        acc = 0.0;
        for m in 0..child_levels {
            acc += right.get(m).copied().unwrap_or(0.0);
            cdf_r[m] = acc;
        }
        for m in 0..child_levels {
            let prev = if m == 0 { 0.0 } else { cdf_l[m - 1] * cdf_r[m - 1] };
            let p_max = cdf_l[m] * cdf_r[m] - prev;
            pmf[m + 1] += p_split / n_cuts * p_max;
        }
    }
    memo.insert((len, depth), pmf.clone());
    pmf
}

/// Chi-square statistic of observed depths against an exact pmf, merging
/// the tail so every bin expects at least 5 observations.
pub fn depth_chi_square(depths: &[usize], pmf: &[f64]) -> (f64, usize, usize) {
    let n = depths.len() as f64;
    // merge tail bins with expected < 5
    let mut edges = Vec::new();
    let mut acc = 0.0;
    for (d, &p) in pmf.iter().enumerate() {
        acc += p * n;
        if acc >= 5.0 {
            edges.push(d);
            acc = 0.0;
        }
    }
    if edges.is_empty() {
        edges.push(pmf.len() - 1);
    }
    *edges.last_mut().unwrap() = pmf.len() - 1;
    let n_bins = edges.len();
    let mut expected = vec![0.0; n_bins];
    let mut observed = vec![0.0; n_bins];
    for (d, &p) in pmf.iter().enumerate() {
        let bin = edges.iter().position(|&e| d <= e).unwrap();
        expected[bin] += p * n;
    }
    for &d in depths {
        let bin = edges.iter().position(|&e| d <= e).unwrap_or(n_bins - 1);
        observed[bin] += 1.0;
    }
    let chi2: f64 = expected
        .iter()
        .zip(&observed)
        .filter(|(e, _)| **e > 0.0)
        .map(|(e, o)| (o - e) * (o - e) / e)
        .sum();
    (chi2, n_bins.saturating_sub(1).max(1), n_bins)
}
