//! CHAID adjustment cells: chi-square driven category merging per predictor,
//! Bonferroni-adjusted split selection, and recursive partitioning. Leaves
//! define the cells; cells without respondents are merged into the sibling
//! cell with the closest response rate.

use crate::special::chi_square_sf;

#[derive(Debug, Clone)]
pub struct ChaidParams {
    pub alpha_merge: f64,
    pub alpha_split: f64,
    pub min_node: usize,
    pub min_child: usize,
}

impl Default for ChaidParams {
    fn default() -> Self {
        ChaidParams { alpha_merge: 0.05, alpha_split: 0.05, min_node: 50, min_child: 25 }
    }
}

/// Partition of the input units into adjustment cells.
#[derive(Debug, Clone)]
pub struct CellPartition {
    pub cell_id: Vec<u32>,
    pub n_cells: usize,
    pub cell_sizes: Vec<usize>,
    pub cell_respondents: Vec<usize>,
}

impl CellPartition {
    /// Response rate of each cell.
    pub fn rates(&self) -> Vec<f64> {
        self.cell_sizes
            .iter()
            .zip(&self.cell_respondents)
            .map(|(&n, &r)| r as f64 / n as f64)
            .collect()
    }
}

struct Cell {
    units: Vec<usize>,
    respondents: usize,
}

/// Build adjustment cells from all-categorical predictors (`columns[j][i]`
/// is the level code of unit i on predictor j). Always returns at least one
/// cell; ties break by column order, then category order.
pub fn chaid_cells(columns: &[Vec<u32>], r: &[u8], params: &ChaidParams) -> CellPartition {
    let n = r.len();
    let units: Vec<usize> = (0..n).collect();
    let cells = split_node(&units, columns, r, params);
    let cells = merge_empty(cells, r);

    let mut cell_id = vec![0u32; n];
    let mut cell_sizes = Vec::new();
    let mut cell_respondents = Vec::new();
    // order cells by their first unit for a stable numbering
    let mut ordered: Vec<&Cell> = cells.iter().collect();
    ordered.sort_by_key(|c| c.units.iter().copied().min().unwrap_or(usize::MAX));
    for (k, cell) in ordered.iter().enumerate() {
        for &u in &cell.units {
            cell_id[u] = k as u32;
        }
        cell_sizes.push(cell.units.len());
        cell_respondents.push(cell.respondents);
    }
    CellPartition { cell_id, n_cells: ordered.len(), cell_sizes, cell_respondents }
}

fn count_respondents(units: &[usize], r: &[u8]) -> usize {
    units.iter().filter(|&&u| r[u] == 1).count()
}

fn split_node(units: &[usize], columns: &[Vec<u32>], r: &[u8], params: &ChaidParams) -> Vec<Cell> {
    let leaf = || vec![Cell { units: units.to_vec(), respondents: count_respondents(units, r) }];
    if units.len() < params.min_node {
        return leaf();
    }
    let mut best: Option<(f64, usize, Vec<Vec<u32>>)> = None;
    for (j, col) in columns.iter().enumerate() {
        let Some((p_adj, groups)) = best_split_for(col, units, r, params) else { continue };
        if p_adj < params.alpha_split && best.as_ref().map_or(true, |(bp, _, _)| p_adj < *bp) {
            best = Some((p_adj, j, groups));
        }
    }
    let Some((_, var, groups)) = best else { return leaf() };
    let mut cells = Vec::new();
    for group in &groups {
        let child: Vec<usize> =
            units.iter().copied().filter(|&u| group.contains(&columns[var][u])).collect();
        cells.extend(split_node(&child, columns, r, params));
    }
    merge_empty(cells, r)
}

/// Merge the categories of one predictor, then evaluate its best split.
/// Returns the Bonferroni-adjusted p-value and the merged category groups,
/// or None when the predictor cannot split this node.
fn best_split_for(
    col: &[u32],
    units: &[usize],
    r: &[u8],
    params: &ChaidParams,
) -> Option<(f64, Vec<Vec<u32>>)> {
    // (respondents, total) per present category
    let mut present: Vec<u32> = units.iter().map(|&u| col[u]).collect();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return None;
    }
    let c_original = present.len();
    let mut groups: Vec<Vec<u32>> = present.iter().map(|&l| vec![l]).collect();
    let counts = |group: &[u32]| -> (f64, f64) {
        let mut resp = 0.0;
        let mut total = 0.0;
        for &u in units {
            if group.contains(&col[u]) {
                total += 1.0;
                resp += (r[u] == 1) as u8 as f64;
            }
        }
        (resp, total)
    };

    // merge the pair with the largest pairwise p-value until all pairs differ
    while groups.len() > 1 {
        let mut worst: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in (a + 1)..groups.len() {
                let (ra, ta) = counts(&groups[a]);
                let (rb, tb) = counts(&groups[b]);
                let p = two_by_two_p(ra, ta, rb, tb);
                if worst.as_ref().map_or(true, |(wp, _, _)| p > *wp) {
                    worst = Some((p, a, b));
                }
            }
        }
        let (p, a, b) = worst.expect("at least one pair");
        if p < params.alpha_merge {
            break;
        }
        let moved = groups.remove(b);
        groups[a].extend(moved);
        groups[a].sort_unstable();
    }
    if groups.len() < 2 {
        return None;
    }
    // child size constraint
    let sizes: Vec<f64> = groups.iter().map(|g| counts(g).1).collect();
    if sizes.iter().any(|&s| (s as usize) < params.min_child) {
        return None;
    }
    // k x 2 test across merged groups, Bonferroni-adjusted for the number
    // of ways to merge c categories into k groups
    let (chi2, df) = k_by_two_chi2(&groups, &counts);
    let p = chi_square_sf(chi2, df.max(1.0));
    let adj = (p * kass_multiplier(c_original, groups.len())).min(1.0);
    Some((adj, groups))
}

fn two_by_two_p(ra: f64, ta: f64, rb: f64, tb: f64) -> f64 {
    let total = ta + tb;
    let resp = ra + rb;
    let non = total - resp;
    if resp == 0.0 || non == 0.0 || ta == 0.0 || tb == 0.0 {
        return 1.0;
    }
    let mut chi2 = 0.0;
    for (obs_r, obs_n, t) in [(ra, ta - ra, ta), (rb, tb - rb, tb)] {
        let e_r = t * resp / total;
        let e_n = t * non / total;
        chi2 += (obs_r - e_r) * (obs_r - e_r) / e_r + (obs_n - e_n) * (obs_n - e_n) / e_n;
    }
    chi_square_sf(chi2, 1.0)
}

fn k_by_two_chi2(groups: &[Vec<u32>], counts: &impl Fn(&[u32]) -> (f64, f64)) -> (f64, f64) {
    let stats: Vec<(f64, f64)> = groups.iter().map(|g| counts(g)).collect();
    let total: f64 = stats.iter().map(|(_, t)| t).sum();
    let resp: f64 = stats.iter().map(|(r, _)| r).sum();
    let non = total - resp;
    if resp == 0.0 || non == 0.0 {
        return (0.0, (groups.len() - 1) as f64);
    }
    let mut chi2 = 0.0;
    for (r_g, t_g) in &stats {
        let e_r = t_g * resp / total;
        let e_n = t_g * non / total;
        if e_r > 0.0 {
            chi2 += (r_g - e_r) * (r_g - e_r) / e_r;
        }
        if e_n > 0.0 {
            let n_g = t_g - r_g;
            chi2 += (n_g - e_n) * (n_g - e_n) / e_n;
        }
    }
    (chi2, (groups.len() - 1) as f64)
}

/// Kass's Bonferroni multiplier: the number of ways to partition c free
/// categories into k nonempty groups.
fn kass_multiplier(c: usize, k: usize) -> f64 {
    let mut b = 0.0;
    for i in 0..k {
        let term = ((k - i) as f64).powi(c as i32)
            / (factorial(i) * factorial(k - i));
        b += if i % 2 == 0 { term } else { -term };
    }
    b.max(1.0)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product::<f64>().max(1.0)
}

/// Merge cells without respondents into the sibling cell with the closest
/// response rate.
fn merge_empty(mut cells: Vec<Cell>, r: &[u8]) -> Vec<Cell> {
    loop {
        let Some(empty) = cells.iter().position(|c| c.respondents == 0) else { break };
        if cells.len() == 1 {
            break;
        }
        let orphan = cells.remove(empty);
        let target = cells
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let ra = a.respondents as f64 / a.units.len() as f64;
                let rb = b.respondents as f64 / b.units.len() as f64;
                ra.partial_cmp(&rb).unwrap()
            })
            .map(|(i, _)| i)
            .expect("nonempty");
        cells[target].units.extend(orphan.units);
        cells[target].respondents = count_respondents(&cells[target].units, r);
    }
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_params() -> ChaidParams {
        ChaidParams { min_node: 20, min_child: 10, ..Default::default() }
    }

    #[test]
    fn strong_binary_signal_gives_two_cells() {
        // response rates 0.9 vs 0.1 with 500 units per level
        let mut col = Vec::new();
        let mut r = Vec::new();
        for i in 0..1000usize {
            let level = (i >= 500) as u32;
            col.push(level);
            let rate = if level == 0 { 0.9 } else { 0.1 };
            r.push(((i % 500) as f64 / 500.0 < rate) as u8);
        }
        let part = chaid_cells(&[col], &r, &ChaidParams::default());
        assert_eq!(part.n_cells, 2);
        let rates = part.rates();
        assert!((rates[0] - 0.9).abs() < 0.01 && (rates[1] - 0.1).abs() < 0.01);
    }

    #[test]
    fn independent_predictor_gives_one_cell() {
        // identical rates in both levels
        let mut col = Vec::new();
        let mut r = Vec::new();
        for i in 0..400usize {
            col.push((i % 2) as u32);
            r.push((i % 4 < 2) as u8);
        }
        let part = chaid_cells(&[col], &r, &ChaidParams::default());
        assert_eq!(part.n_cells, 1);
    }

    #[test]
    fn small_node_never_splits() {
        let col: Vec<u32> = (0..30).map(|i| (i % 2) as u32).collect();
        let r: Vec<u8> = col.iter().map(|&l| l as u8).collect();
        let params = ChaidParams { min_node: 50, ..Default::default() };
        let part = chaid_cells(&[col], &r, &params);
        assert_eq!(part.n_cells, 1);
    }

    #[test]
    fn partition_is_deterministic() {
        let mut cols = vec![Vec::new(), Vec::new()];
        let mut r = Vec::new();
        let mut state = 123456789u64;
        for i in 0..600usize {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            cols[0].push(((state >> 33) % 4) as u32);
            cols[1].push((i % 3) as u32);
            r.push((((state >> 17) & 0xff) as f64 / 256.0 < 0.3 + 0.4 * ((cols[0][i] == 2) as u8 as f64)) as u8);
        }
        let a = chaid_cells(&cols, &r, &fast_params());
        let b = chaid_cells(&cols, &r, &fast_params());
        assert_eq!(a.cell_id, b.cell_id);
        assert_eq!(a.n_cells, b.n_cells);
    }

    #[test]
    fn every_cell_has_a_respondent() {
        // level 3 never responds; it must be absorbed into a sibling
        let mut col = Vec::new();
        let mut r = Vec::new();
        for i in 0..900usize {
            let level = (i % 3) as u32;
            col.push(level);
            let rate = match level {
                0 => 0.8,
                1 => 0.3,
                _ => 0.0,
            };
            r.push(((i / 3 % 300) as f64 / 300.0 < rate) as u8);
        }
        let part = chaid_cells(&[col], &r, &fast_params());
        assert!(part.cell_respondents.iter().all(|&c| c > 0), "{:?}", part.cell_respondents);
    }

    #[test]
    fn kass_multiplier_reference_values() {
        // merging 2 categories into 2 groups has a single arrangement
        assert_eq!(kass_multiplier(2, 2), 1.0);
        // 3 categories into 2 groups: 2^3/2 - 1/... = 3 arrangements
        assert_eq!(kass_multiplier(3, 2), 3.0);
        // Stirling numbers of the second kind: S(4,2) = 7, S(4,3) = 6
        assert_eq!(kass_multiplier(4, 2), 7.0);
        assert_eq!(kass_multiplier(4, 3), 6.0);
    }
}
