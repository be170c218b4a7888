//! Lagrangian lower bound on the envelope width of a search node.
//!
//! Dualizing the cardinality constraint `|S| >= k` with a multiplier `mu >= 0`
//! leaves `min_S cost(S) - mu (|S| - k)`, where `cost(S)` sums, over the
//! chains, the excess of the first kept entry. Writing that excess as a sum
//! of nested level weights turns the inner minimization into a selection
//! (closure) problem, solved exactly as a minimum cut: keeping path `i`
//! earns `mu` and forces every level containing it to be paid for.
//!
//! Any `mu >= 0` gives a valid bound. The dual function is concave and
//! piecewise linear in `mu`; it is maximized by intersecting supporting
//! lines, starting from a caller-provided multiplier.

use super::flow::{FlowBuilder, FlowNetwork};
use super::problem::{Fix, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Both,
    Upper,
    Lower,
}

impl Side {
    fn includes(self, upper: bool) -> bool {
        match self {
            Side::Both => true,
            Side::Upper => upper,
            Side::Lower => !upper,
        }
    }
}

pub(crate) struct Probe {
    pub(crate) mu: f64,
    /// Certified lower bound on the side cost over completions of the node.
    pub(crate) lower: f64,
    /// Side cost of the minimizing kept set.
    pub(crate) cost: f64,
    pub(crate) size: usize,
    pub(crate) kept: Vec<bool>,
}

pub(crate) struct Maximized {
    pub(crate) lower: f64,
    pub(crate) mu: f64,
    /// Kept sets from the last probes on either side of `k`.
    pub(crate) candidates: Vec<Vec<bool>>,
}

pub(crate) struct LagrangeBound {
    net: FlowNetwork,
    source_edge: Vec<Option<usize>>,
    chains: Vec<usize>,
    total_weight: f64,
    eps: f64,
}

const SOURCE: usize = 0;
const SINK: usize = 1;

impl LagrangeBound {
    pub(crate) fn new(p: &Problem, side: Side) -> Self {
        let chains: Vec<usize> = (0..p.chains.len())
            .filter(|&c| side.includes(p.chains[c].upper))
            .collect();
        let levels: usize = chains.iter().map(|&c| p.chains[c].len()).sum();
        let mut b = FlowBuilder::new(2 + p.n + levels);
        let mut source_edge = vec![None; p.n];
        let mut next_level = 2 + p.n;
        let mut total_weight = 0.0;
        for &c in &chains {
            let chain = &p.chains[c];
            for rank in 0..chain.len() {
                let node = next_level + rank;
                let w = chain.weight(rank);
                total_weight += w;
                b.add_edge(node, SINK, w);
                if rank + 1 < chain.len() {
                    b.add_edge(node, node + 1, f64::INFINITY);
                }
                let i = chain.paths[rank];
                b.add_edge(2 + i, node, f64::INFINITY);
                if source_edge[i].is_none() {
                    source_edge[i] = Some(b.add_edge(SOURCE, 2 + i, 0.0));
                }
            }
            next_level += chain.len();
        }
        Self {
            net: b.build(),
            source_edge,
            chains,
            total_weight,
            eps: 1e-13 * total_weight.max(1e-300),
        }
    }

    pub(crate) fn initial_mu(&self) -> f64 {
        let active = self.source_edge.iter().filter(|e| e.is_some()).count().max(1);
        self.total_weight / active as f64
    }

    /// Side cost of a kept set.
    pub(crate) fn cost(&self, p: &Problem, kept: &[bool]) -> f64 {
        self.chains
            .iter()
            .map(|&c| {
                let chain = &p.chains[c];
                chain
                    .paths
                    .iter()
                    .position(|&i| kept[i])
                    .map_or(0.0, |r| chain.excess[r])
            })
            .sum()
    }

    pub(crate) fn probe(&mut self, p: &Problem, fix: &[Fix], remaining: usize, mu: f64) -> Probe {
        for (i, edge) in self.source_edge.iter().enumerate() {
            if let Some(e) = *edge {
                let cap = match fix[i] {
                    Fix::Keep => f64::INFINITY,
                    Fix::Drop => 0.0,
                    Fix::Free => mu,
                };
                self.net.set_capacity(e, cap);
            }
        }
        let flow = self.net.max_flow(SOURCE, SINK, self.eps);
        let side = self.net.source_side(SOURCE, self.eps);
        let kept: Vec<bool> = (0..p.n)
            .map(|i| match self.source_edge[i] {
                Some(_) => side[2 + i],
                None => fix[i] != Fix::Drop,
            })
            .collect();
        let size = kept.iter().filter(|&&k| k).count();
        let cost = self.cost(p, &kept);
        Probe {
            mu,
            lower: flow - mu * remaining as f64,
            cost,
            size,
            kept,
        }
    }

    /// Maximizes the dual function over `mu`, stopping early once the bound
    /// reaches `target` or `max_probes` flows have been solved.
    pub(crate) fn maximize(
        &mut self,
        p: &Problem,
        fix: &[Fix],
        remaining: usize,
        mu0: f64,
        target: f64,
        max_probes: usize,
    ) -> Maximized {
        let k = p.k;
        let mu_hi = self.total_weight + 1.0;
        let tol = 1e-12 * self.total_weight.max(1.0);
        let mut track = Tracker {
            probes: 0,
            best: f64::NEG_INFINITY,
            best_mu: mu0,
            target,
            max_probes,
        };

        let first = track.run(self, p, fix, remaining, mu0.clamp(0.0, mu_hi));
        if first.size == k || track.done() {
            return track.finish(vec![first.kept]);
        }
        let (mut left, mut right);
        if first.size < k {
            left = first;
            let mut mu = if left.mu > 0.0 { left.mu * 2.0 } else { self.initial_mu() };
            loop {
                let pr = track.run(self, p, fix, remaining, mu.min(mu_hi));
                if pr.size >= k || pr.mu >= mu_hi {
                    right = pr;
                    break;
                }
                left = pr;
                if track.done() {
                    return track.finish(vec![left.kept]);
                }
                mu *= 2.0;
            }
        } else {
            right = first;
            if right.mu <= 0.0 {
                return track.finish(vec![right.kept]);
            }
            let mut mu = right.mu / 2.0;
            loop {
                let mu_eval = if mu < 1e-9 * mu_hi { 0.0 } else { mu };
                let pr = track.run(self, p, fix, remaining, mu_eval);
                if pr.size <= k {
                    left = pr;
                    break;
                }
                right = pr;
                if right.mu <= 0.0 || track.done() {
                    return track.finish(vec![right.kept]);
                }
                mu /= 2.0;
            }
        }
        // Here `left.size <= k <= right.size`.
        while left.size < k && right.size > k && !track.done() {
            let mu = (right.cost - left.cost) / (right.size - left.size) as f64;
            if !(mu > left.mu && mu < right.mu) {
                break;
            }
            let line = left.cost - mu * (left.size as f64 - k as f64);
            let pr = track.run(self, p, fix, remaining, mu);
            if pr.lower >= line - tol || pr.size == k {
                left = pr;
                break;
            }
            if pr.size < k {
                left = pr;
            } else {
                right = pr;
            }
        }
        track.finish(vec![left.kept, right.kept])
    }
}

struct Tracker {
    probes: usize,
    best: f64,
    best_mu: f64,
    target: f64,
    max_probes: usize,
}

impl Tracker {
    fn run(
        &mut self,
        bound: &mut LagrangeBound,
        p: &Problem,
        fix: &[Fix],
        remaining: usize,
        mu: f64,
    ) -> Probe {
        self.probes += 1;
        let pr = bound.probe(p, fix, remaining, mu);
        if pr.lower > self.best {
            self.best = pr.lower;
            self.best_mu = mu;
        }
        pr
    }

    fn done(&self) -> bool {
        self.best >= self.target || self.probes >= self.max_probes
    }

    fn finish(self, candidates: Vec<Vec<bool>>) -> Maximized {
        Maximized {
            lower: self.best,
            mu: self.best_mu,
            candidates,
        }
    }
}
