//! Precomputed instance data shared by the search, the bounds and the
//! incumbent heuristics.
//!
//! For each step `t` and side, the paths lying strictly outside the quantile
//! bound form a *chain*, ordered from the most extreme inwards. The clipped
//! envelope of a kept set at that step is determined by the first kept path
//! on the chain, so the width of any kept set is
//! `naive + max(P, DU) + max(Q, DL)` where `P` (`Q`) sums the excess of the
//! first kept chain entry over all upper (lower) chains and `DU`, `DL` are
//! the aggregate widening terms.

use crate::band::BetaVector;
use crate::pathset::{QuantileBounds, SamplePathSet};

#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub(crate) upper: bool,
    pub(crate) paths: Vec<usize>,
    /// Distance beyond the quantile bound; strictly decreasing along the chain
    /// except for ties.
    pub(crate) excess: Vec<f64>,
}

impl Chain {
    pub(crate) fn len(&self) -> usize {
        self.paths.len()
    }

    #[inline]
    pub(crate) fn excess_at(&self, rank: usize) -> f64 {
        self.excess.get(rank).copied().unwrap_or(0.0)
    }

    /// `excess[j] - excess[j+1]`: what is saved at this step once the first
    /// `j+1` entries are all dropped.
    pub(crate) fn weight(&self, rank: usize) -> f64 {
        self.excess_at(rank) - self.excess_at(rank + 1)
    }
}

pub(crate) struct Problem {
    pub(crate) n: usize,
    pub(crate) k: usize,
    pub(crate) naive: f64,
    pub(crate) du: f64,
    pub(crate) dl: f64,
    pub(crate) chains: Vec<Chain>,
    /// `(chain, rank)` pairs for every path.
    pub(crate) memberships: Vec<Vec<(usize, usize)>>,
}

impl Problem {
    pub(crate) fn new(set: &SamplePathSet, q: &QuantileBounds, beta: &BetaVector, k: usize) -> Self {
        let n = set.n();
        let h = set.horizon();
        let mut chains = Vec::with_capacity(2 * h);
        for t in 0..h {
            for upper in [true, false] {
                let mut entries: Vec<(usize, f64)> = (0..n)
                    .filter_map(|i| {
                        let x = set.value(i, t);
                        let e = if upper { x - q.upper[t] } else { q.lower[t] - x };
                        (e > 0.0).then_some((i, e))
                    })
                    .collect();
                entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                if entries.is_empty() {
                    continue;
                }
                chains.push(Chain {
                    upper,
                    paths: entries.iter().map(|e| e.0).collect(),
                    excess: entries.iter().map(|e| e.1).collect(),
                });
            }
        }
        let mut memberships = vec![Vec::new(); n];
        for (c, chain) in chains.iter().enumerate() {
            for (rank, &i) in chain.paths.iter().enumerate() {
                memberships[i].push((c, rank));
            }
        }
        let naive = q.upper.iter().sum::<f64>() - q.lower.iter().sum::<f64>();
        let du = beta.total_upper();
        let dl = beta.total_lower();
        Self {
            n,
            k,
            naive,
            du,
            dl,
            chains,
            memberships,
        }
    }

    pub(crate) fn exclusions(&self) -> usize {
        self.n - self.k
    }

    #[inline]
    pub(crate) fn combine(&self, p: f64, q: f64) -> f64 {
        self.naive + p.max(self.du) + q.max(self.dl)
    }

    /// Width of the band built on the paths with `kept[i] == true`.
    pub(crate) fn objective_of(&self, kept: &[bool]) -> f64 {
        let (mut p, mut q) = (0.0, 0.0);
        for chain in &self.chains {
            let e = chain
                .paths
                .iter()
                .position(|&i| kept[i])
                .map_or(0.0, |r| chain.excess[r]);
            if chain.upper {
                p += e;
            } else {
                q += e;
            }
        }
        self.combine(p, q)
    }

    pub(crate) fn scale(&self) -> f64 {
        let total: f64 = self.chains.iter().map(|c| c.excess_at(0)).sum();
        (self.naive.abs() + total + self.du + self.dl).max(1e-300)
    }
}

/// Per-path decision state inside the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fix {
    Free,
    Keep,
    Drop,
}

/// Incrementally maintained kept set with per-chain head pointers.
#[derive(Clone)]
pub(crate) struct Evaluator<'p> {
    pub(crate) p: &'p Problem,
    pub(crate) excluded: Vec<bool>,
    head: Vec<usize>,
    pub(crate) n_excluded: usize,
}

impl<'p> Evaluator<'p> {
    pub(crate) fn from_excluded(p: &'p Problem, excluded: Vec<bool>) -> Self {
        let n_excluded = excluded.iter().filter(|&&e| e).count();
        let head = p
            .chains
            .iter()
            .map(|c| c.paths.iter().position(|&i| !excluded[i]).unwrap_or(c.len()))
            .collect();
        Self {
            p,
            excluded,
            head,
            n_excluded,
        }
    }

    pub(crate) fn kept_count(&self) -> usize {
        self.p.n - self.n_excluded
    }

    pub(crate) fn sums(&self) -> (f64, f64) {
        let (mut up, mut lo) = (0.0, 0.0);
        for (chain, &h) in self.p.chains.iter().zip(&self.head) {
            if chain.upper {
                up += chain.excess_at(h);
            } else {
                lo += chain.excess_at(h);
            }
        }
        (up, lo)
    }

    pub(crate) fn objective(&self) -> f64 {
        let (up, lo) = self.sums();
        self.p.combine(up, lo)
    }

    fn advance(&mut self, c: usize) {
        let chain = &self.p.chains[c];
        let mut h = self.head[c];
        while h < chain.len() && self.excluded[chain.paths[h]] {
            h += 1;
        }
        self.head[c] = h;
    }

    pub(crate) fn exclude(&mut self, i: usize) {
        if self.excluded[i] {
            return;
        }
        self.excluded[i] = true;
        self.n_excluded += 1;
        for &(c, rank) in &self.p.memberships[i] {
            if self.head[c] == rank {
                self.advance(c);
            }
        }
    }

    pub(crate) fn include(&mut self, i: usize) {
        if !self.excluded[i] {
            return;
        }
        self.excluded[i] = false;
        self.n_excluded -= 1;
        for &(c, rank) in &self.p.memberships[i] {
            if rank < self.head[c] {
                self.head[c] = rank;
            }
        }
    }

    /// Paths currently defining the envelope at some step.
    pub(crate) fn heads(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .p
            .chains
            .iter()
            .zip(&self.head)
            .filter(|(c, &h)| h < c.len())
            .map(|(c, &h)| c.paths[h])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Decrease in `(P, Q)` if `i` were dropped.
    pub(crate) fn removal_gain(&self, i: usize) -> (f64, f64) {
        let (mut gp, mut gq) = (0.0, 0.0);
        for &(c, rank) in &self.p.memberships[i] {
            if self.head[c] != rank {
                continue;
            }
            let chain = &self.p.chains[c];
            let mut next = rank + 1;
            while next < chain.len() && self.excluded[chain.paths[next]] {
                next += 1;
            }
            let g = chain.excess_at(rank) - chain.excess_at(next);
            if chain.upper {
                gp += g;
            } else {
                gq += g;
            }
        }
        (gp, gq)
    }

    /// Increase in `(P, Q)` if `i` were kept again.
    pub(crate) fn inclusion_cost(&self, i: usize) -> (f64, f64) {
        let (mut cp, mut cq) = (0.0, 0.0);
        for &(c, rank) in &self.p.memberships[i] {
            let h = self.head[c];
            if rank < h {
                let chain = &self.p.chains[c];
                let d = chain.excess_at(rank) - chain.excess_at(h);
                if chain.upper {
                    cp += d;
                } else {
                    cq += d;
                }
            }
        }
        (cp, cq)
    }

    pub(crate) fn kept_indices(&self) -> Vec<usize> {
        (0..self.p.n).filter(|&i| !self.excluded[i]).collect()
    }

    /// Drops paths one at a time, each time the one whose removal lowers the
    /// width most, until `target` remain. Paths with `fix[i] == Keep` stay.
    pub(crate) fn greedy_remove(&mut self, target: usize, fix: &[Fix]) {
        while self.kept_count() > target {
            let (p_sum, q_sum) = self.sums();
            let base = self.p.combine(p_sum, q_sum);
            let mut best: Option<(f64, f64, usize)> = None;
            for i in self.heads() {
                if fix[i] == Fix::Keep {
                    continue;
                }
                let (gp, gq) = self.removal_gain(i);
                let drop = base - self.p.combine(p_sum - gp, q_sum - gq);
                let raw = gp + gq;
                let better = match best {
                    None => true,
                    Some((bd, br, _)) => drop > bd || (drop == bd && raw > br),
                };
                if better {
                    best = Some((drop, raw, i));
                }
            }
            let pick = match best {
                Some((_, _, i)) => i,
                None => match (0..self.p.n).find(|&i| !self.excluded[i] && fix[i] != Fix::Keep) {
                    Some(i) => i,
                    None => return,
                },
            };
            self.exclude(pick);
        }
    }

    /// Restores paths one at a time, cheapest first, until `target` are kept.
    pub(crate) fn greedy_add(&mut self, target: usize, fix: &[Fix]) {
        while self.kept_count() < target {
            let (p_sum, q_sum) = self.sums();
            let base = self.p.combine(p_sum, q_sum);
            let mut best: Option<(f64, f64, usize)> = None;
            for (i, &f) in fix.iter().enumerate().take(self.p.n) {
                if !self.excluded[i] || f == Fix::Drop {
                    continue;
                }
                let (cp, cq) = self.inclusion_cost(i);
                let rise = self.p.combine(p_sum + cp, q_sum + cq) - base;
                let raw = cp + cq;
                let better = match best {
                    None => true,
                    Some((br, braw, _)) => rise < br || (rise == br && raw < braw),
                };
                if better {
                    best = Some((rise, raw, i));
                }
            }
            match best {
                Some((_, _, i)) => self.include(i),
                None => return,
            }
        }
    }

    /// First-improvement search over swaps (restore one dropped path, drop one
    /// envelope-defining path). Keeps the kept count fixed.
    pub(crate) fn swap_search(&mut self, fix: &[Fix], max_moves: usize) {
        let tol = 1e-12 * self.p.scale();
        let mut current = self.objective();
        for _ in 0..max_moves {
            let dropped: Vec<usize> = (0..self.p.n)
                .filter(|&i| self.excluded[i] && fix[i] != Fix::Drop)
                .collect();
            let mut improved = false;
            'outer: for &e in &dropped {
                self.include(e);
                for cand in self.heads() {
                    if cand == e || fix[cand] == Fix::Keep {
                        continue;
                    }
                    self.exclude(cand);
                    let obj = self.objective();
                    if obj < current - tol {
                        current = obj;
                        improved = true;
                        break 'outer;
                    }
                    self.include(cand);
                }
                self.exclude(e);
            }
            if !improved {
                break;
            }
        }
    }
}
