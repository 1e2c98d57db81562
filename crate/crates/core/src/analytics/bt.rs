//! Bradley-Terry merits from pairwise "which is more X" judgments, fitted
//! with minorization-maximization updates.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub item_a: String,
    pub item_b: String,
    pub winner: Winner,
}

impl ComparisonRecord {
    pub fn new(item_a: impl Into<String>, item_b: impl Into<String>, winner: Winner) -> Result<Self> {
        let r = Self {
            item_a: item_a.into(),
            item_b: item_b.into(),
            winner,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.item_a == self.item_b {
            return Err(AnalyticsError::SelfComparison(self.item_a.clone()));
        }
        Ok(())
    }

    fn winner_loser(&self) -> (&str, &str) {
        match self.winner {
            Winner::A => (&self.item_a, &self.item_b),
            Winner::B => (&self.item_b, &self.item_a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtOptions {
    pub max_iters: usize,
    /// Stop once the largest relative merit change falls below this.
    pub tol: f64,
    /// Smoothing wins added in each direction per observed comparison.
    pub pseudo_count: f64,
}

impl Default for BtOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            pseudo_count: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtScores {
    /// Item ids in lexicographic order.
    pub items: Vec<String>,
    /// Positive merits summing to 1.
    pub merits: Vec<f64>,
    /// Min-max rescaled merits in `[0, 1]`.
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Smoothed log-likelihood before the first update and after each one.
    pub log_likelihood: Vec<f64>,
    /// Connected components of the comparison graph.
    pub components: usize,
}

impl BtScores {
    pub fn disconnected(&self) -> bool {
        self.components > 1
    }

    pub fn score_of(&self, item: &str) -> Option<f64> {
        self.items
            .binary_search_by(|s| s.as_str().cmp(item))
            .ok()
            .map(|i| self.scores[i])
    }

    pub fn score_map(&self) -> HashMap<String, f64> {
        self.items.iter().cloned().zip(self.scores.iter().copied()).collect()
    }

    /// Largest relative drop between consecutive likelihood values, zero if
    /// the sequence never decreases.
    pub fn worst_likelihood_drop(&self) -> f64 {
        self.log_likelihood
            .windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

struct Graph {
    /// For each item: (opponent, smoothed wins over it, smoothed comparisons with it).
    adj: Vec<Vec<(usize, f64, f64)>>,
    wins: Vec<f64>,
}

fn log_likelihood(g: &Graph, merits: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, nbrs) in g.adj.iter().enumerate() {
        for &(j, w, _) in nbrs {
            ll += w * (merits[i].ln() - (merits[i] + merits[j]).ln());
        }
    }
    ll
}

fn components(adj: &[Vec<(usize, f64, f64)>]) -> Vec<usize> {
    let mut comp = vec![usize::MAX; adj.len()];
    let mut next = 0;
    for start in 0..adj.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = next;
        while let Some(i) = stack.pop() {
            for &(j, _, _) in &adj[i] {
                if comp[j] == usize::MAX {
                    comp[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Fits merits `pi` maximizing the likelihood of `P(a beats b) = pi_a / (pi_a + pi_b)`.
///
/// Each observed comparison adds `pseudo_count` wins in both directions, so
/// undefeated or winless items keep finite merits and duplicating the whole
/// record set leaves the fit unchanged. When the comparison graph is
/// disconnected, merits are only identified within components: each
/// component is normalized to a share of the total proportional to its size
/// and the result is flagged via [`BtScores::components`].
pub fn bt_fit(records: &[ComparisonRecord], opts: &BtOptions) -> Result<BtScores> {
    if records.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    if !(opts.pseudo_count > 0.0 && opts.pseudo_count.is_finite()) || !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(AnalyticsError::Invalid("pseudo_count, tol and max_iters must be positive".into()));
    }
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        r.validate()?;
        index.insert(&r.item_a, 0);
        index.insert(&r.item_b, 0);
    }
    for (k, v) in index.values_mut().enumerate() {
        *v = k;
    }
    let n = index.len();
    let items: Vec<String> = index.keys().map(|s| s.to_string()).collect();

    let mut pair: HashMap<(usize, usize), f64> = HashMap::new();
    for r in records {
        let (w, l) = r.winner_loser();
        let (w, l) = (index[w], index[l]);
        *pair.entry((w, l)).or_default() += 1.0 + opts.pseudo_count;
        *pair.entry((l, w)).or_default() += opts.pseudo_count;
    }
    let mut adj = vec![Vec::new(); n];
    let mut wins = vec![0.0; n];
    let mut keys: Vec<_> = pair.keys().copied().collect();
    keys.sort_unstable();
    for (i, j) in keys {
        let w = pair[&(i, j)];
        adj[i].push((j, w, w + pair[&(j, i)]));
        wins[i] += w;
    }
    let g = Graph { adj, wins };
    let comp = components(&g.adj);
    let n_comp = comp.iter().max().map_or(0, |m| m + 1);
    let mut comp_size = vec![0usize; n_comp];
    comp.iter().for_each(|&c| comp_size[c] += 1);
    if n_comp > 1 {
        log::warn!("comparison graph has {n_comp} components; merits are normalized per component");
    }
    let normalize = |m: &mut [f64]| {
        let mut sums = vec![0.0; n_comp];
        for (i, v) in m.iter().enumerate() {
            sums[comp[i]] += v;
        }
        for (i, v) in m.iter_mut().enumerate() {
            let c = comp[i];
            *v *= comp_size[c] as f64 / n as f64 / sums[c];
        }
    };

    let mut merits = vec![1.0 / n as f64; n];
    let mut trace = vec![log_likelihood(&g, &merits)];
    let mut converged = false;
    let mut iterations = 0;
    let mut next = vec![0.0; n];
    while iterations < opts.max_iters {
        iterations += 1;
        for i in 0..n {
            let denom: f64 = g.adj[i]
                .iter()
                .map(|&(j, _, n_ij)| n_ij / (merits[i] + merits[j]))
                .sum();
            next[i] = g.wins[i] / denom;
        }
        normalize(&mut next);
        let change = merits
            .iter()
            .zip(&next)
            .map(|(old, new)| ((new - old) / old).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut merits, &mut next);
        trace.push(log_likelihood(&g, &merits));
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Bradley-Terry fit stopped after {iterations} iterations without converging");
    }
    let (lo, hi) = merits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &m| (lo.min(m), hi.max(m)));
    let scores = merits
        .iter()
        .map(|&m| if hi > lo { (m - lo) / (hi - lo) } else { 0.5 })
        .collect();
    Ok(BtScores {
        items,
        merits,
        scores,
        iterations,
        converged,
        log_likelihood: trace,
        components: n_comp,
    })
}

/// Records where each of `n_items` items meets its `per_item / 2` successors
/// on a ring, so every item appears in exactly `per_item` comparisons
/// (`per_item` even, `n_items > per_item`). Winners are drawn from
/// `P(a beats b) = pi_a / (pi_a + pi_b)` with the supplied merits.
pub fn ring_design(merits: &[f64], per_item: usize, rng: &mut impl rand::Rng) -> Result<Vec<ComparisonRecord>> {
    let n = merits.len();
    if per_item % 2 != 0 || n <= per_item {
        return Err(AnalyticsError::Invalid("ring design needs an even degree below the item count".into()));
    }
    let mut out = Vec::with_capacity(n * per_item / 2);
    for i in 0..n {
        for d in 1..=per_item / 2 {
            let j = (i + d) % n;
            let p = merits[i] / (merits[i] + merits[j]);
            let winner = if rng.random_bool(p) { Winner::A } else { Winner::B };
            out.push(ComparisonRecord {
                item_a: format!("img{i:05}"),
                item_b: format!("img{j:05}"),
                winner,
            });
        }
    }
    Ok(out)
}

/// `n` comparisons between uniformly chosen distinct items.
pub fn sample_comparisons(merits: &[f64], n: usize, rng: &mut impl rand::Rng) -> Vec<ComparisonRecord> {
    let k = merits.len();
    (0..n)
        .map(|_| {
            let a = rng.random_range(0..k);
            let b = (a + rng.random_range(1..k)) % k;
            let winner = if rng.random_bool(merits[a] / (merits[a] + merits[b])) {
                Winner::A
            } else {
                Winner::B
            };
            ComparisonRecord {
                item_a: format!("item{a}"),
                item_b: format!("item{b}"),
                winner,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(a: &str, b: &str, w: Winner) -> ComparisonRecord {
        ComparisonRecord::new(a, b, w).unwrap()
    }

    #[test]
    fn symmetric_pair() {
        let mut rs = Vec::new();
        for _ in 0..5 {
            rs.push(rec("x", "y", Winner::A));
            rs.push(rec("x", "y", Winner::B));
        }
        let fit = bt_fit(&rs, &BtOptions::default()).unwrap();
        assert!((fit.merits[0] - 0.5).abs() < 1e-12 && (fit.merits[1] - 0.5).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn self_comparison_rejected() {
        assert!(ComparisonRecord::new("a", "a", Winner::A).is_err());
        let bad = ComparisonRecord {
            item_a: "a".into(),
            item_b: "a".into(),
            winner: Winner::B,
        };
        assert!(matches!(bt_fit(&[bad], &BtOptions::default()), Err(AnalyticsError::SelfComparison(_))));
        assert!(bt_fit(&[], &BtOptions::default()).is_err());
    }

    #[test]
    fn undefeated_item_stays_finite() {
        let rs = vec![rec("a", "b", Winner::A), rec("a", "c", Winner::A), rec("b", "c", Winner::A)];
        let fit = bt_fit(&rs, &BtOptions::default()).unwrap();
        assert!(fit.merits.iter().all(|m| m.is_finite() && *m > 0.0));
        assert!(fit.merits[0] > fit.merits[1] && fit.merits[1] > fit.merits[2]);
        assert_eq!(fit.scores, vec![1.0, fit.scores[1], 0.0]);
    }

    #[test]
    fn planted_merits_recovered() {
        let planted = [0.6, 0.3, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rs = sample_comparisons(&planted, 10_000, &mut rng);
        let fit = bt_fit(&rs, &BtOptions::default()).unwrap();
        for (m, p) in fit.merits.iter().zip(planted) {
            assert!((m - p).abs() < 0.03, "{m} vs {p}");
        }
        assert!(fit.worst_likelihood_drop() <= 1e-12);
        assert!((fit.merits.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplication_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rs = sample_comparisons(&[0.5, 0.2, 0.2, 0.1], 200, &mut rng);
        let twice: Vec<_> = rs.iter().chain(&rs).cloned().collect();
        let (a, b) = (bt_fit(&rs, &BtOptions::default()).unwrap(), bt_fit(&twice, &BtOptions::default()).unwrap());
        for (x, y) in a.merits.iter().zip(&b.merits) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn disconnected_graph_is_flagged() {
        let rs = vec![rec("a", "b", Winner::A), rec("c", "d", Winner::B), rec("c", "d", Winner::B)];
        let fit = bt_fit(&rs, &BtOptions::default()).unwrap();
        assert_eq!(fit.components, 2);
        assert!(fit.disconnected());
        assert!((fit.merits[0] + fit.merits[1] - 0.5).abs() < 1e-12);
        assert!((fit.merits.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ring_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rs = ring_design(&vec![1.0; 11_659], 10, &mut rng).unwrap();
        assert_eq!(rs.len(), 58_295);
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for r in &rs {
            *seen.entry(&r.item_a).or_default() += 1;
            *seen.entry(&r.item_b).or_default() += 1;
        }
        assert_eq!(seen.len(), 11_659);
        assert!(seen.values().all(|&c| c == 10));
    }
}
