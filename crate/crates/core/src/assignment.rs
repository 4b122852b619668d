//! Optimal query-to-target assignment.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::math::ln;
use crate::scene::Mask;

/// Dense cost matrix: rows are queries, columns are targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(input("cost matrix data length does not match shape"));
        }
        if rows < cols {
            return Err(input(alloc::format!(
                "cost matrix needs rows >= cols, got {rows}x{cols}"
            )));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(input("cost matrix contains a non-finite entry"));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(input("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Sum of `cost[assign[c]][c]` over targets.
    pub fn total(&self, assign: &[usize]) -> f64 {
        assign.iter().enumerate().map(|(c, &r)| self.get(r, c)).sum()
    }
}

/// Cost ordered by the real cost first and a lexicographic rank second.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LexCost {
    cost: f64,
    rank: i128,
}

impl LexCost {
    const ZERO: LexCost = LexCost { cost: 0.0, rank: 0 };
    const INF: LexCost = LexCost {
        cost: f64::INFINITY,
        rank: 0,
    };
}

impl PartialOrd for LexCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.cost.partial_cmp(&other.cost)? {
            Ordering::Equal => Some(self.rank.cmp(&other.rank)),
            o => Some(o),
        }
    }
}

impl Add for LexCost {
    type Output = LexCost;
    fn add(self, o: LexCost) -> LexCost {
        LexCost {
            cost: self.cost + o.cost,
            rank: self.rank + o.rank,
        }
    }
}

impl Sub for LexCost {
    type Output = LexCost;
    fn sub(self, o: LexCost) -> LexCost {
        LexCost {
            cost: self.cost - o.cost,
            rank: self.rank - o.rank,
        }
    }
}

impl AddAssign for LexCost {
    fn add_assign(&mut self, o: LexCost) {
        *self = *self + o;
    }
}

impl SubAssign for LexCost {
    fn sub_assign(&mut self, o: LexCost) {
        *self = *self - o;
    }
}

/// Minimum-cost injection of targets (columns) into queries (rows).
///
/// Returns, for each target, the query it is assigned to. Among optimal
/// assignments the lexicographically smallest vector is returned: each
/// entry `target -> query` carries a secondary rank `query * rows^(cols-1-target)`
/// which is compared only when real costs tie exactly.
pub fn hungarian(cost: &CostMatrix) -> Result<Vec<usize>> {
    let (n, m) = (cost.cols, cost.rows);
    if n == 0 {
        return Ok(Vec::new());
    }
    let base = m as i128;
    let mut place = vec![0i128; n];
    let mut acc: i128 = 1;
    for k in (0..n).rev() {
        place[k] = acc;
        acc = acc
            .checked_mul(base)
            .ok_or_else(|| input("assignment too large for exact tie-breaking"))?;
    }
    // Dual potentials accumulate up to `n` ranks.
    acc.checked_mul(n as i128 + 1)
        .ok_or_else(|| input("assignment too large for exact tie-breaking"))?;
    let a = |target: usize, query: usize| LexCost {
        cost: cost.get(query, target),
        rank: query as i128 * place[target],
    };

    // Shortest augmenting path over potentials; 1-based with sentinel 0.
    let mut u = vec![LexCost::ZERO; n + 1];
    let mut v = vec![LexCost::ZERO; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![LexCost::INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = LexCost::INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    debug_assert!(out.iter().all(|&q| q != usize::MAX));
    Ok(out)
}

/// Weights of the three matching cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchWeights {
    pub cls: f64,
    pub bce: f64,
    pub dice: f64,
}

impl Default for MatchWeights {
    fn default() -> Self {
        MatchWeights {
            cls: 2.0,
            bce: 5.0,
            dice: 5.0,
        }
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy of `heat` against `mask`.
pub fn mean_bce(heat: &[f64], mask: &Mask) -> f64 {
    let n = heat.len().max(1) as f64;
    let mut s = 0.0;
    for (&h, &y) in heat.iter().zip(mask.bits()) {
        let p = clamp_prob(h);
        s -= if y { ln(p) } else { ln(1.0 - p) };
    }
    s / n
}

/// Soft dice loss `1 - 2 sum(h*y) / (sum h + sum y)`.
pub fn dice_loss(heat: &[f64], mask: &Mask) -> f64 {
    let mut inter = 0.0;
    let mut sh = 0.0;
    let mut sy = 0.0;
    for (&h, &y) in heat.iter().zip(mask.bits()) {
        sh += h;
        if y {
            inter += h;
            sy += 1.0;
        }
    }
    let denom = sh + sy;
    if denom == 0.0 {
        0.0
    } else {
        1.0 - 2.0 * inter / denom
    }
}

/// Matching cost between one prediction and one target.
pub fn assignment_cost(
    probs: &[f64],
    heat: &[f64],
    target_class: usize,
    target_mask: &Mask,
    w: &MatchWeights,
) -> f64 {
    let mut c = 0.0;
    if w.cls != 0.0 {
        c -= w.cls * probs[target_class];
    }
    if w.bce != 0.0 {
        c += w.bce * mean_bce(heat, target_mask);
    }
    if w.dice != 0.0 {
        c += w.dice * dice_loss(heat, target_mask);
    }
    c
}

/// Supervision target: a mask and a class-head index.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub mask: Mask,
    /// Index into the class head (0 = unknown).
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(query, target)` pairs, ordered by target.
    pub pairs: Vec<(usize, usize)>,
    /// Queries left without a target (supervised as no-object).
    pub unmatched: Vec<usize>,
}

/// Build the cost matrix for `(probs, heatmap)` predictions against targets.
pub fn cost_matrix<'a, I>(preds: I, n_queries: usize, targets: &[Target], w: &MatchWeights) -> Result<CostMatrix>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut data = Vec::with_capacity(n_queries * targets.len());
    for (probs, heat) in preds {
        for t in targets {
            data.push(assignment_cost(probs, heat, t.class_index, &t.mask, w));
        }
    }
    CostMatrix::new(n_queries, targets.len(), data)
}

/// Hungarian-match queries to targets.
pub fn assign_targets<'a, I>(
    preds: I,
    n_queries: usize,
    targets: &[Target],
    w: &MatchWeights,
) -> Result<Matching>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    if targets.len() > n_queries {
        return Err(input(alloc::format!(
            "{} targets exceed {} queries",
            targets.len(),
            n_queries
        )));
    }
    let cm = cost_matrix(preds, n_queries, targets, w)?;
    let assign = hungarian(&cm)?;
    let mut taken = vec![false; n_queries];
    let pairs: Vec<_> = assign
        .iter()
        .enumerate()
        .map(|(t, &q)| {
            taken[q] = true;
            (q, t)
        })
        .collect();
    let unmatched = (0..n_queries).filter(|&q| !taken[q]).collect();
    Ok(Matching { pairs, unmatched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// All injections of `cols` targets into `rows` queries, in lexicographic order.
    fn injections(rows: usize, cols: usize) -> Vec<Vec<usize>> {
        fn rec(rows: usize, cols: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if cur.len() == cols {
                out.push(cur.clone());
                return;
            }
            for r in 0..rows {
                if !used[r] {
                    used[r] = true;
                    cur.push(r);
                    rec(rows, cols, cur, used, out);
                    cur.pop();
                    used[r] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(rows, cols, &mut Vec::new(), &mut vec![false; rows], &mut out);
        out
    }

    /// Exhaustive optimum; first injection found in lexicographic order wins ties.
    fn brute(cm: &CostMatrix) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        for inj in injections(cm.rows(), cm.cols()) {
            let c = cm.total(&inj);
            if best.as_ref().map_or(true, |(_, b)| c < *b) {
                best = Some((inj, c));
            }
        }
        best.unwrap()
    }

    #[test]
    fn diagonal_zero_identity() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..5).map(|j| if i == j { 0.0 } else { 1.0 + j as f64 }).collect())
            .collect();
        let cm = CostMatrix::from_rows(&rows).unwrap();
        let a = hungarian(&cm).unwrap();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        assert_eq!(cm.total(&a), 0.0);
    }

    #[test]
    fn two_by_two() {
        let cm = CostMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]).unwrap();
        // target 0 -> query 1, target 1 -> query 0
        let a = hungarian(&cm).unwrap();
        assert_eq!(a, vec![1, 0]);
        assert_eq!(cm.total(&a), 3.0);
    }

    #[test]
    fn all_ties_pick_lexicographic_smallest() {
        let cm = CostMatrix::new(4, 3, vec![0.0; 12]).unwrap();
        assert_eq!(hungarian(&cm).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        assert!(CostMatrix::new(1, 2, vec![0.0, 0.0]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::INFINITY]).is_err());
        assert_eq!(hungarian(&CostMatrix::new(3, 0, vec![]).unwrap()).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn random_matches_exhaustive() {
        let mut rng = crate::rng::stream(11, 0);
        for trial in 0..300 {
            let cols = rng.random_range(1..=5);
            let rows = rng.random_range(cols..=6);
            let integer = trial % 2 == 0;
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| {
                    if integer {
                        rng.random_range(0..4) as f64
                    } else {
                        rng.random::<f64>() * 10.0 - 5.0
                    }
                })
                .collect();
            let cm = CostMatrix::new(rows, cols, data).unwrap();
            let (bi, bc) = brute(&cm);
            let a = hungarian(&cm).unwrap();
            assert!((cm.total(&a) - bc).abs() < 1e-9);
            if integer {
                assert_eq!(a, bi, "lexicographic tie-break");
            }
        }
    }

    #[test]
    fn cost_terms() {
        let mask = Mask::new(vec![true, false, true, false]);
        let w = MatchWeights::default();
        let perfect = assignment_cost(&[0.0, 1.0, 0.0], &mask.as_f64(), 1, &mask, &w);
        assert!((perfect + w.cls).abs() < 1e-5);
        let half = [0.5; 4];
        assert!((mean_bce(&half, &mask) - core::f64::consts::LN_2).abs() < 1e-12);
        let zero = MatchWeights {
            cls: 0.0,
            bce: 0.0,
            dice: 0.0,
        };
        assert_eq!(assignment_cost(&[0.3, 0.7], &half, 0, &mask, &zero), 0.0);
    }

    #[test]
    fn assign_targets_cases() {
        let mask = Mask::new(vec![true, true, false, false]);
        let good_p = [0.0, 1.0, 0.0];
        let good_h = mask.as_f64();
        let bad_p = [0.3, 0.3, 0.4];
        let bad_h = [0.1, 0.2, 0.9, 0.9];
        let targets = [Target {
            mask: mask.clone(),
            class_index: 1,
        }];
        let preds = [(&bad_p[..], &bad_h[..]), (&good_p[..], &good_h[..])];
        let m = assign_targets(preds, 2, &targets, &MatchWeights::default()).unwrap();
        assert_eq!(m.pairs, vec![(1, 0)]);
        assert_eq!(m.unmatched, vec![0]);

        let m0 = assign_targets(preds, 2, &[], &MatchWeights::default()).unwrap();
        assert!(m0.pairs.is_empty());
        assert_eq!(m0.unmatched, vec![0, 1]);

        let too_many = vec![targets[0].clone(); 3];
        assert!(assign_targets(preds, 2, &too_many, &MatchWeights::default()).is_err());
    }

    #[test]
    fn three_targets_five_queries_random() {
        let mut rng = crate::rng::stream(5, 1);
        let n = 6;
        for _ in 0..50 {
            let probs: Vec<Vec<f64>> = (0..5)
                .map(|_| {
                    let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / s).collect()
                })
                .collect();
            let heats: Vec<Vec<f64>> = (0..5).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            let targets: Vec<Target> = (0..3)
                .map(|k| Target {
                    mask: Mask::new((0..n).map(|v| v % 3 == k || rng.random_bool(0.2)).collect()),
                    class_index: rng.random_range(0..3),
                })
                .collect();
            let w = MatchWeights::default();
            let preds = probs.iter().zip(&heats).map(|(p, h)| (&p[..], &h[..]));
            let m = assign_targets(preds.clone(), 5, &targets, &w).unwrap();
            let cm = cost_matrix(preds, 5, &targets, &w).unwrap();
            let (_, best) = brute(&cm);
            let got: Vec<usize> = m.pairs.iter().map(|&(q, _)| q).collect();
            assert!((cm.total(&got) - best).abs() < 1e-9);
            assert_eq!(m.unmatched.len(), 2);
        }
    }
}
