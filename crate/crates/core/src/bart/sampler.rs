//! Backfitting MCMC over the tree ensemble.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::special::chi_square_quantile;

use super::data::{FeatureColumn, Features};
use super::tree::{SplitRule, TreeNode};
use super::{
    BartError, BartOptions, InterceptDraw, ModelKind, PosteriorChain, ResponseScaling,
    TreeEnsembleDraw,
};

/// Fit continuous BART.
pub fn fit_bart(
    x: &Features,
    y: &[f64],
    opts: &BartOptions,
    rng: &mut impl Rng,
) -> Result<PosteriorChain, BartError> {
    Sampler::build(x, Target::Continuous(y), None, opts)?.run(rng)
}

/// Fit continuous BART with cluster random intercepts. `groups` labels each
/// row; the group label must not also appear as a covariate column.
pub fn fit_rbart(
    x: &Features,
    y: &[f64],
    groups: &[i64],
    opts: &BartOptions,
    rng: &mut impl Rng,
) -> Result<PosteriorChain, BartError> {
    Sampler::build(x, Target::Continuous(y), Some(groups), opts)?.run(rng)
}

/// Fit probit BART to a 0/1 response by truncated-normal latent
/// augmentation with the error scale fixed at one.
pub fn fit_bart_probit(
    x: &Features,
    r: &[u8],
    opts: &BartOptions,
    rng: &mut impl Rng,
) -> Result<PosteriorChain, BartError> {
    Sampler::build(x, Target::Probit(r), None, opts)?.run(rng)
}

/// Probit BART with cluster random intercepts in the latent model.
pub fn fit_rbart_probit(
    x: &Features,
    r: &[u8],
    groups: &[i64],
    opts: &BartOptions,
    rng: &mut impl Rng,
) -> Result<PosteriorChain, BartError> {
    Sampler::build(x, Target::Probit(r), Some(groups), opts)?.run(rng)
}

enum Target<'a> {
    Continuous(&'a [f64]),
    Probit(&'a [u8]),
}

/// Routing-optimized copy of one tree.
struct FlatTree {
    nodes: Vec<FlatNode>,
    leaf_depth: Vec<u32>,
}

enum FlatNode {
    Leaf { idx: u32 },
    Split { rule: SplitRule, left: u32, right: u32 },
}

impl FlatTree {
    fn build(tree: &TreeNode) -> FlatTree {
        let mut flat = FlatTree { nodes: Vec::new(), leaf_depth: Vec::new() };
        flat.push(tree, 0);
        flat
    }

    fn push(&mut self, node: &TreeNode, depth: u32) -> u32 {
        let slot = self.nodes.len() as u32;
        match node {
            TreeNode::Leaf { .. } => {
                let idx = self.leaf_depth.len() as u32;
                self.leaf_depth.push(depth);
                self.nodes.push(FlatNode::Leaf { idx });
            }
            TreeNode::Internal { rule, left, right } => {
                self.nodes.push(FlatNode::Split { rule: rule.clone(), left: 0, right: 0 });
                let l = self.push(left, depth + 1);
                let r = self.push(right, depth + 1);
                if let FlatNode::Split { left, right, .. } = &mut self.nodes[slot as usize] {
                    *left = l;
                    *right = r;
                }
            }
        }
        slot
    }

    fn n_leaves(&self) -> usize {
        self.leaf_depth.len()
    }

    fn route(&self, x: &Features, row: usize) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                FlatNode::Leaf { idx } => return *idx as usize,
                FlatNode::Split { rule, left, right } => {
                    at = if rule.goes_left(x, row) { *left as usize } else { *right as usize };
                }
            }
        }
    }
}

struct TreeState {
    tree: TreeNode,
    flat: FlatTree,
    fit: Vec<f64>,
}

struct GroupState {
    /// Group code per row.
    codes: Vec<u32>,
    /// Original label per group code.
    ids: Vec<i64>,
    deltas: Vec<f64>,
    tau2: f64,
    lambda_tau: f64,
}

struct Sampler<'a> {
    x: &'a Features,
    opts: &'a BartOptions,
    kind: ModelKind,
    scaling: ResponseScaling,
    /// 0/1 response for probit models.
    binary: Option<Vec<u8>>,
    /// Internal-scale response (continuous) or current latents (probit).
    target: Vec<f64>,
    /// target - ensemble fit - intercepts.
    resid: Vec<f64>,
    trees: Vec<TreeState>,
    groups: Option<GroupState>,
    sigma2: f64,
    sigma_mu2: f64,
    nu_lambda: f64,
    n: usize,
}

struct LeafStats {
    units: Vec<Vec<u32>>,
    n: Vec<f64>,
    sum: Vec<f64>,
    assign: Vec<u32>,
}

impl LeafStats {
    fn with_capacity(n: usize) -> LeafStats {
        LeafStats { units: Vec::new(), n: Vec::new(), sum: Vec::new(), assign: vec![0; n] }
    }

    fn reset(&mut self, n_leaves: usize) {
        for u in self.units.iter_mut() {
            u.clear();
        }
        while self.units.len() < n_leaves {
            self.units.push(Vec::new());
        }
        self.n.clear();
        self.n.resize(n_leaves, 0.0);
        self.sum.clear();
        self.sum.resize(n_leaves, 0.0);
    }
}

impl<'a> Sampler<'a> {
    fn build(
        x: &'a Features,
        target: Target<'_>,
        groups: Option<&[i64]>,
        opts: &'a BartOptions,
    ) -> Result<Sampler<'a>, BartError> {
        opts.validate()?;
        let n = x.n_rows();
        if n < 10 {
            return Err(BartError::TooFewRows(n));
        }

        let (scaling, binary, internal, sigma_hat) = match target {
            Target::Continuous(y) => {
                if y.len() != n {
                    return Err(BartError::LengthMismatch);
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(BartError::NonFiniteInput("response".into()));
                }
                let (min, max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
                let scaling = ResponseScaling::from_bounds(min, max);
                let internal: Vec<f64> = y.iter().map(|&v| scaling.to_internal(v)).collect();
                let mean = internal.iter().sum::<f64>() / n as f64;
                let var = internal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n as f64 - 1.0);
                (scaling, None, internal, var.sqrt())
            }
            Target::Probit(r) => {
                if r.len() != n {
                    return Err(BartError::LengthMismatch);
                }
                let ones = r.iter().filter(|&&v| v == 1).count();
                if ones == 0 || ones == n {
                    return Err(BartError::SingleClass);
                }
                (ResponseScaling::identity(), Some(r.to_vec()), vec![0.0; n], 1.0)
            }
        };
        let is_probit = binary.is_some();

        let group_state = match groups {
            Some(labels) => {
                if labels.len() != n {
                    return Err(BartError::LengthMismatch);
                }
                let mut ids: Vec<i64> = labels.to_vec();
                ids.sort_unstable();
                ids.dedup();
                if ids.len() < 2 {
                    return Err(BartError::SingleGroup);
                }
                let codes: Vec<u32> = labels
                    .iter()
                    .map(|l| ids.binary_search(l).expect("label present") as u32)
                    .collect();
                // prior scale for tau^2 from the spread of group means
                let mut sums = vec![0.0f64; ids.len()];
                let mut counts = vec![0.0f64; ids.len()];
                for (i, &c) in codes.iter().enumerate() {
                    sums[c as usize] += internal[i];
                    counts[c as usize] += 1.0;
                }
                let means: Vec<f64> =
                    sums.iter().zip(&counts).map(|(s, c)| s / c.max(1.0)).collect();
                let gm = means.iter().sum::<f64>() / means.len() as f64;
                let var = means.iter().map(|m| (m - gm) * (m - gm)).sum::<f64>()
                    / (means.len() as f64 - 1.0);
                let lambda_tau = var.max(1e-8);
                Some(GroupState {
                    codes,
                    ids,
                    deltas: vec![0.0; means.len()],
                    tau2: lambda_tau,
                    lambda_tau,
                })
            }
            None => None,
        };

        let kind = match (is_probit, group_state.is_some()) {
            (false, false) => ModelKind::Continuous,
            (false, true) => ModelKind::ContinuousRandomIntercept,
            (true, false) => ModelKind::Probit,
            (true, true) => ModelKind::ProbitRandomIntercept,
        };

        let b = opts.n_trees as f64;
        let sigma_mu = if is_probit { 3.0 / (opts.k * b.sqrt()) } else { 0.5 / (opts.k * b.sqrt()) };

        // calibrate the sigma prior so Pr(sigma < sigma_hat) = q
        let lambda = if is_probit {
            1.0
        } else {
            (sigma_hat * sigma_hat * chi_square_quantile(1.0 - opts.q, opts.nu) / opts.nu)
                .max(1e-8)
        };

        let sigma2 = match opts.hooks.fixed_sigma {
            Some(s) => s * s,
            None if is_probit => 1.0,
            None => (sigma_hat * sigma_hat).max(1e-8),
        };

        let trees = (0..opts.n_trees)
            .map(|_| {
                let tree = TreeNode::leaf();
                let flat = FlatTree::build(&tree);
                TreeState { tree, flat, fit: vec![0.0; n] }
            })
            .collect();

        let resid = internal.clone();
        Ok(Sampler {
            x,
            opts,
            kind,
            scaling,
            binary,
            target: internal,
            resid,
            trees,
            groups: group_state,
            sigma2,
            sigma_mu2: sigma_mu * sigma_mu,
            nu_lambda: opts.nu * lambda,
            n,
        })
    }

    fn run(mut self, rng: &mut impl Rng) -> Result<PosteriorChain, BartError> {
        let total = self.opts.n_burn + self.opts.n_keep * self.opts.thin;
        let mut draws = Vec::with_capacity(self.opts.n_keep);
        let mut stats = LeafStats::with_capacity(self.n);
        let mut r_partial = vec![0.0; self.n];

        for iter in 1..=total {
            if self.binary.is_some() {
                self.refresh_latents(rng);
            }
            for b in 0..self.trees.len() {
                self.tree_step(b, &mut stats, &mut r_partial, rng);
            }
            if !self.opts.hooks.flatten_likelihood {
                self.intercept_step(rng);
                self.sigma_step(rng);
            }
            if iter > self.opts.n_burn && (iter - self.opts.n_burn) % self.opts.thin == 0 {
                draws.push(self.snapshot());
            }
        }
        Ok(PosteriorChain::new(draws, self.kind, self.x.signature()))
    }

    fn snapshot(&self) -> TreeEnsembleDraw {
        TreeEnsembleDraw {
            trees: self.trees.iter().map(|t| t.tree.clone()).collect(),
            sigma_internal: self.sigma2.sqrt(),
            intercepts: self.groups.as_ref().map(|g| InterceptDraw {
                deltas: g.ids.iter().copied().zip(g.deltas.iter().copied()).collect(),
                tau2: g.tau2,
            }),
            scaling: self.scaling,
        }
    }

    /// Draw probit latents around the current ensemble value and update the
    /// residuals in place.
    fn refresh_latents(&mut self, rng: &mut impl Rng) {
        let r = self.binary.as_ref().expect("probit target");
        for i in 0..self.n {
            let center = self.target[i] - self.resid[i];
            let w = if r[i] == 1 {
                truncated_normal_above(center, 0.0, rng)
            } else {
                -truncated_normal_above(-center, 0.0, rng)
            };
            self.resid[i] = w - center;
            self.target[i] = w;
        }
    }

    fn intercept_step(&mut self, rng: &mut impl Rng) {
        let Some(groups) = self.groups.as_mut() else { return };
        let j = groups.deltas.len();
        let mut sums = vec![0.0f64; j];
        let mut counts = vec![0.0f64; j];
        for (i, &c) in groups.codes.iter().enumerate() {
            sums[c as usize] += self.resid[i] + groups.deltas[c as usize];
            counts[c as usize] += 1.0;
        }
        let mut new_deltas = vec![0.0f64; j];
        let mut sum_sq = 0.0;
        for g in 0..j {
            let prec = 1.0 / groups.tau2 + counts[g] / self.sigma2;
            let mean = (sums[g] / self.sigma2) / prec;
            let z: f64 = StandardNormal.sample(rng);
            let d = mean + z / prec.sqrt();
            sum_sq += d * d;
            new_deltas[g] = d;
        }
        for (i, &c) in groups.codes.iter().enumerate() {
            self.resid[i] += groups.deltas[c as usize] - new_deltas[c as usize];
        }
        groups.deltas = new_deltas;
        // tau^2 | deltas ~ scaled inverse chi-square
        let shape = (self.opts.nu_tau + j as f64) / 2.0;
        let chi: f64 = Gamma::new(shape, 2.0).expect("gamma params").sample(rng);
        groups.tau2 = (self.opts.nu_tau * groups.lambda_tau + sum_sq) / chi.max(1e-300);
    }

    fn sigma_step(&mut self, rng: &mut impl Rng) {
        if self.opts.hooks.fixed_sigma.is_some() || self.binary.is_some() {
            return;
        }
        let sse: f64 = self.resid.iter().map(|r| r * r).sum();
        let shape = (self.opts.nu + self.n as f64) / 2.0;
        let chi: f64 = Gamma::new(shape, 2.0).expect("gamma params").sample(rng);
        self.sigma2 = (self.nu_lambda + sse) / chi.max(1e-300);
    }

    fn tree_step(
        &mut self,
        b: usize,
        stats: &mut LeafStats,
        r_partial: &mut [f64],
        rng: &mut impl Rng,
    ) {
        for i in 0..self.n {
            r_partial[i] = self.resid[i] + self.trees[b].fit[i];
        }
        self.route(b, stats, r_partial);

        if !self.opts.hooks.freeze_structure {
            let u: f64 = rng.random();
            let accepted = if u < self.opts.move_probs[0] {
                self.try_grow(b, stats, rng)
            } else if u < self.opts.move_probs[0] + self.opts.move_probs[1] {
                self.try_prune(b, stats, rng)
            } else {
                self.try_change(b, stats, rng)
            };
            if accepted {
                self.trees[b].flat = FlatTree::build(&self.trees[b].tree);
                self.route(b, stats, r_partial);
            }
        }

        // conjugate leaf draws
        let n_leaves = self.trees[b].flat.n_leaves();
        let mut mus = Vec::with_capacity(n_leaves);
        if self.opts.hooks.freeze_leaves {
            mus = self.trees[b].tree.leaf_values();
        } else {
            for l in 0..n_leaves {
                let (ln, ls) = if self.opts.hooks.flatten_likelihood {
                    (0.0, 0.0)
                } else {
                    (stats.n[l], stats.sum[l])
                };
                let prec = 1.0 / self.sigma_mu2 + ln / self.sigma2;
                let mean = (ls / self.sigma2) / prec;
                let z: f64 = StandardNormal.sample(rng);
                mus.push(mean + z / prec.sqrt());
            }
            self.trees[b].tree.set_leaf_values(&mus);
        }
        for i in 0..self.n {
            let fit = mus[stats.assign[i] as usize];
            self.trees[b].fit[i] = fit;
            self.resid[i] = r_partial[i] - fit;
        }
    }

    fn route(&self, b: usize, stats: &mut LeafStats, r_partial: &[f64]) {
        let flat = &self.trees[b].flat;
        stats.reset(flat.n_leaves());
        for i in 0..self.n {
            let l = flat.route(self.x, i);
            stats.assign[i] = l as u32;
            stats.units[l].push(i as u32);
            stats.n[l] += 1.0;
            stats.sum[l] += r_partial[i];
        }
    }

    fn p_split(&self, depth: u32) -> f64 {
        self.opts.alpha * (1.0 + depth as f64).powf(-self.opts.beta)
    }

    fn leaf_score(&self, n: f64, sum: f64) -> f64 {
        if self.opts.hooks.flatten_likelihood {
            return 0.0;
        }
        let s2 = self.sigma2;
        let m2 = self.sigma_mu2;
        -0.5 * (1.0 + n * m2 / s2).ln() + m2 * sum * sum / (2.0 * s2 * (s2 + n * m2))
    }

    /// ln of the prior terminal factor of a would-be child: 1 - p_split if
    /// it could still split, 1 if no valid split exists in its units.
    fn child_terminal_ln(&self, units: &[u32], depth: u32) -> f64 {
        if self.has_valid_split(units) {
            (1.0 - self.p_split(depth)).ln()
        } else {
            0.0
        }
    }

    fn has_valid_split(&self, units: &[u32]) -> bool {
        (0..self.x.n_cols()).any(|v| self.var_valid(v, units))
    }

    fn var_valid(&self, var: usize, units: &[u32]) -> bool {
        if units.len() < 2 {
            return false;
        }
        match self.x.column(var) {
            FeatureColumn::Continuous { values, .. } => {
                let first = values[units[0] as usize];
                units.iter().any(|&u| values[u as usize] != first)
            }
            FeatureColumn::Categorical { codes, .. } => {
                let first = codes[units[0] as usize];
                units.iter().any(|&u| codes[u as usize] != first)
            }
        }
    }

    /// Rule distribution shared by the prior and the proposals: variable
    /// uniform over those with a valid split in the node, then a threshold
    /// drawn as a random unit value above the node minimum (continuous) or a
    /// uniform nonempty proper subset of the levels present (categorical).
    fn draw_rule(&self, units: &[u32], rng: &mut impl Rng) -> Option<SplitRule> {
        let p = self.x.n_cols();
        let mut var = None;
        for _ in 0..(4 * p + 8) {
            let v = rng.random_range(0..p);
            if self.var_valid(v, units) {
                var = Some(v);
                break;
            }
        }
        let var = match var {
            Some(v) => v,
            None => {
                let valid: Vec<usize> = (0..p).filter(|&v| self.var_valid(v, units)).collect();
                if valid.is_empty() {
                    return None;
                }
                valid[rng.random_range(0..valid.len())]
            }
        };
        match self.x.column(var) {
            FeatureColumn::Continuous { values, .. } => {
                let min =
                    units.iter().map(|&u| values[u as usize]).fold(f64::INFINITY, f64::min);
                for _ in 0..1024 {
                    let u = units[rng.random_range(0..units.len())];
                    let t = values[u as usize];
                    if t > min {
                        return Some(SplitRule::Threshold { var, value: t });
                    }
                }
                let above: Vec<f64> = units
                    .iter()
                    .map(|&u| values[u as usize])
                    .filter(|&t| t > min)
                    .collect();
                Some(SplitRule::Threshold { var, value: above[rng.random_range(0..above.len())] })
            }
            FeatureColumn::Categorical { codes, .. } => {
                let mut present: Vec<u32> = units.iter().map(|&u| codes[u as usize]).collect();
                present.sort_unstable();
                present.dedup();
                for _ in 0..64 {
                    let chosen: Vec<u32> =
                        present.iter().copied().filter(|_| rng.random::<bool>()).collect();
                    if !chosen.is_empty() && chosen.len() < present.len() {
                        return Some(SplitRule::Subset { var, levels: chosen });
                    }
                }
                Some(SplitRule::Subset { var, levels: vec![present[0]] })
            }
        }
    }

    fn partition(&self, units: &[u32], rule: &SplitRule) -> (Vec<u32>, Vec<u32>) {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for &u in units {
            if rule.goes_left(self.x, u as usize) {
                left.push(u);
            } else {
                right.push(u);
            }
        }
        (left, right)
    }

    fn try_grow(&mut self, b: usize, stats: &LeafStats, rng: &mut impl Rng) -> bool {
        let n_leaves = self.trees[b].flat.n_leaves();
        let leaf = rng.random_range(0..n_leaves);
        let units = &stats.units[leaf];
        if units.len() < 2 * self.opts.min_leaf {
            return false;
        }
        let Some(rule) = self.draw_rule(units, rng) else { return false };
        let (left, right) = self.partition(units, &rule);
        if left.len() < self.opts.min_leaf || right.len() < self.opts.min_leaf {
            return false;
        }
        let depth = self.trees[b].flat.leaf_depth[leaf];
        let sum_left: f64 = {
            let fit = &self.trees[b].fit;
            left.iter().map(|&u| self.resid[u as usize] + fit[u as usize]).sum()
        };
        let sum_all = stats.sum[leaf];
        let sum_right = sum_all - sum_left;

        let delta = self.leaf_score(left.len() as f64, sum_left)
            + self.leaf_score(right.len() as f64, sum_right)
            - self.leaf_score(stats.n[leaf], sum_all);

        let p_split = self.p_split(depth);
        let prior_ln = p_split.ln() - (1.0 - p_split).ln()
            + self.child_terminal_ln(&left, depth + 1)
            + self.child_terminal_ln(&right, depth + 1);

        // transition: grow picked one of n_leaves leaves; the reverse prune
        // picks one prunable node of the grown tree
        let paths = self.trees[b].tree.leaf_paths();
        let path = &paths[leaf];
        let nog_after = {
            let nogs = self.trees[b].tree.prunable_paths().len();
            let parent_was_nog = !path.is_empty()
                && self.trees[b].tree.node(&path[..path.len() - 1]).is_prunable();
            nogs + 1 - parent_was_nog as usize
        };
        let move_ln = (self.opts.move_probs[1] * n_leaves as f64).ln()
            - (self.opts.move_probs[0] * nog_after as f64).ln();

        if accept(delta + prior_ln + move_ln, rng) {
            *self.trees[b].tree.node_mut(path) = TreeNode::Internal {
                rule,
                left: Box::new(TreeNode::leaf()),
                right: Box::new(TreeNode::leaf()),
            };
            true
        } else {
            false
        }
    }

    fn try_prune(&mut self, b: usize, stats: &LeafStats, rng: &mut impl Rng) -> bool {
        let nogs = self.trees[b].tree.prunable_paths();
        if nogs.is_empty() {
            return false;
        }
        let pick = rng.random_range(0..nogs.len());
        let path = &nogs[pick];
        let depth = path.len() as u32;
        let leaf_paths = self.trees[b].tree.leaf_paths();
        let left_idx = leaf_index(&leaf_paths, path, false);
        let right_idx = leaf_index(&leaf_paths, path, true);
        let (nl, sl) = (stats.n[left_idx], stats.sum[left_idx]);
        let (nr, sr) = (stats.n[right_idx], stats.sum[right_idx]);

        let delta =
            self.leaf_score(nl + nr, sl + sr) - self.leaf_score(nl, sl) - self.leaf_score(nr, sr);

        let p_split = self.p_split(depth);
        let prior_ln = (1.0 - p_split).ln() - p_split.ln()
            - self.child_terminal_ln(&stats.units[left_idx], depth + 1)
            - self.child_terminal_ln(&stats.units[right_idx], depth + 1);

        let n_leaves_after = self.trees[b].flat.n_leaves() - 1;
        let move_ln = (self.opts.move_probs[0] * nogs.len() as f64).ln()
            - (self.opts.move_probs[1] * n_leaves_after as f64).ln();

        if accept(delta + prior_ln + move_ln, rng) {
            *self.trees[b].tree.node_mut(path) = TreeNode::leaf();
            true
        } else {
            false
        }
    }

    fn try_change(&mut self, b: usize, stats: &LeafStats, rng: &mut impl Rng) -> bool {
        let nogs = self.trees[b].tree.prunable_paths();
        if nogs.is_empty() {
            return false;
        }
        let pick = rng.random_range(0..nogs.len());
        let path = &nogs[pick];
        let depth = path.len() as u32;
        let leaf_paths = self.trees[b].tree.leaf_paths();
        let left_idx = leaf_index(&leaf_paths, path, false);
        let right_idx = leaf_index(&leaf_paths, path, true);

        let mut units = stats.units[left_idx].clone();
        units.extend_from_slice(&stats.units[right_idx]);
        let Some(rule) = self.draw_rule(&units, rng) else { return false };
        let (left, right) = self.partition(&units, &rule);
        if left.len() < self.opts.min_leaf || right.len() < self.opts.min_leaf {
            return false;
        }
        let fit = &self.trees[b].fit;
        let sum_left: f64 = left.iter().map(|&u| self.resid[u as usize] + fit[u as usize]).sum();
        let sum_total = stats.sum[left_idx] + stats.sum[right_idx];
        let sum_right = sum_total - sum_left;

        let delta = self.leaf_score(left.len() as f64, sum_left)
            + self.leaf_score(right.len() as f64, sum_right)
            - self.leaf_score(stats.n[left_idx], stats.sum[left_idx])
            - self.leaf_score(stats.n[right_idx], stats.sum[right_idx]);

        let prior_ln = self.child_terminal_ln(&left, depth + 1)
            + self.child_terminal_ln(&right, depth + 1)
            - self.child_terminal_ln(&stats.units[left_idx], depth + 1)
            - self.child_terminal_ln(&stats.units[right_idx], depth + 1);

        if accept(delta + prior_ln, rng) {
            if let TreeNode::Internal { rule: r, .. } = self.trees[b].tree.node_mut(path) {
                *r = rule;
            }
            true
        } else {
            false
        }
    }
}

fn leaf_index(leaf_paths: &[Vec<bool>], parent: &[bool], side: bool) -> usize {
    let mut want = parent.to_vec();
    want.push(side);
    leaf_paths
        .iter()
        .position(|p| *p == want)
        .expect("child of a prunable node is a leaf")
}

fn accept(ln_ratio: f64, rng: &mut impl Rng) -> bool {
    ln_ratio >= 0.0 || rng.random::<f64>() < ln_ratio.exp()
}

/// Sample X ~ N(mu, 1) conditional on X > bound: plain rejection when the
/// acceptance region is likely, Robert's exponential envelope in the tail.
pub(crate) fn truncated_normal_above(mu: f64, bound: f64, rng: &mut impl Rng) -> f64 {
    let alpha = bound - mu;
    if alpha <= 0.45 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z > alpha {
                return mu + z;
            }
        }
    } else {
        let lambda = (alpha + (alpha * alpha + 4.0).sqrt()) / 2.0;
        loop {
            let e: f64 = Exp1.sample(rng);
            let z = alpha + e / lambda;
            let d = z - lambda;
            if rng.random::<f64>() < (-0.5 * d * d).exp() {
                return mu + z;
            }
        }
    }
}
