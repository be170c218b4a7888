//! Best-first branch-and-bound over which paths the band leaves uncovered.
//!
//! A node fixes some paths as kept (covered) and some as dropped, with at
//! most `n - k` drops in total. Its bound is the larger of a per-step
//! relaxation (every step may drop a different set of `r` paths) and the
//! Lagrangian min-cut bound of [`super::lagrange`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::lagrange::{LagrangeBound, Side};
use super::problem::{Evaluator, Fix, Problem};

pub(crate) struct SearchLimits {
    pub(crate) gap: f64,
    pub(crate) node_limit: Option<u64>,
    pub(crate) time_limit: Option<Duration>,
}

pub(crate) struct SearchOutcome {
    pub(crate) kept: Vec<bool>,
    pub(crate) objective: f64,
    pub(crate) lower_bound: f64,
    pub(crate) nodes: u64,
    pub(crate) proven: bool,
}

struct Node {
    bound: f64,
    depth: usize,
    seq: u64,
    decisions: Vec<(u32, bool)>,
    drops: usize,
    mu: [f64; 3],
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    objective: f64,
    kept: Vec<bool>,
}

/// Bound pieces for one node.
struct NodeBound {
    value: f64,
    mu: [f64; 3],
    candidates: Vec<Vec<bool>>,
}

pub(crate) struct Search<'p> {
    p: &'p Problem,
    limits: SearchLimits,
    flows: [Option<LagrangeBound>; 3],
    incumbent: Incumbent,
    tol: f64,
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Both => 0,
        Side::Upper => 1,
        Side::Lower => 2,
    }
}

impl<'p> Search<'p> {
    pub(crate) fn new(p: &'p Problem, limits: SearchLimits, warm: Option<&[usize]>) -> Self {
        let free = vec![Fix::Free; p.n];
        let mut ev = Evaluator::from_excluded(p, vec![false; p.n]);
        ev.greedy_remove(p.k, &free);
        ev.swap_search(&free, 4 * p.n);
        let mut incumbent = Incumbent {
            objective: ev.objective(),
            kept: ev.excluded.iter().map(|e| !e).collect(),
        };
        if let Some(subset) = warm {
            let mut excluded = vec![true; p.n];
            for &i in subset.iter().filter(|&&i| i < p.n) {
                excluded[i] = false;
            }
            let mut ev = Evaluator::from_excluded(p, excluded);
            if ev.kept_count() >= p.k {
                ev.greedy_remove(p.k, &free);
                let obj = ev.objective();
                if obj < incumbent.objective {
                    incumbent = Incumbent {
                        objective: obj,
                        kept: ev.excluded.iter().map(|e| !e).collect(),
                    };
                }
            }
        }
        let tol = 1e-11 * p.scale();
        Self {
            p,
            limits,
            flows: [None, None, None],
            incumbent,
            tol,
        }
    }

    fn threshold(&self) -> f64 {
        let inc = self.incumbent.objective;
        if self.limits.gap > 0.0 {
            inc - self.limits.gap * inc.abs()
        } else {
            inc - self.tol
        }
    }

    fn offer(&mut self, kept: Vec<bool>, objective: f64) {
        if objective < self.incumbent.objective - self.tol {
            self.incumbent = Incumbent { objective, kept };
        }
    }

    /// Turns a kept set of the wrong size into a feasible one and offers it.
    fn repair_and_offer(&mut self, kept: &[bool], fix: &[Fix]) {
        let excluded: Vec<bool> = kept.iter().map(|k| !k).collect();
        let mut ev = Evaluator::from_excluded(self.p, excluded);
        if ev.kept_count() > self.p.k {
            ev.greedy_remove(self.p.k, fix);
        } else {
            ev.greedy_add(self.p.k, fix);
        }
        if ev.kept_count() < self.p.k {
            return;
        }
        ev.swap_search(fix, 8);
        let obj = ev.objective();
        self.offer(ev.excluded.iter().map(|e| !e).collect(), obj);
    }

    fn flow(&mut self, side: Side) -> &mut LagrangeBound {
        let p = self.p;
        self.flows[side_index(side)].get_or_insert_with(|| LagrangeBound::new(p, side))
    }

    /// Per-step relaxation: at each chain, the first kept entry or the
    /// `(r+1)`-th free entry, whichever comes first.
    fn per_step(&self, fix: &[Fix], remaining: usize) -> (f64, f64) {
        let (mut up, mut lo) = (0.0, 0.0);
        for chain in &self.p.chains {
            let mut free = 0usize;
            let mut value = 0.0;
            for (rank, &i) in chain.paths.iter().enumerate() {
                match fix[i] {
                    Fix::Drop => continue,
                    Fix::Keep => {
                        value = chain.excess[rank];
                        break;
                    }
                    Fix::Free => {
                        free += 1;
                        if free == remaining + 1 {
                            value = chain.excess[rank];
                            break;
                        }
                    }
                }
            }
            if chain.upper {
                up += value;
            } else {
                lo += value;
            }
        }
        (up, lo)
    }

    fn node_bound(
        &mut self,
        fix: &[Fix],
        remaining: usize,
        mu: [f64; 3],
        probe_budget: usize,
    ) -> NodeBound {
        let p = self.p;
        let (pc_up, pc_lo) = self.per_step(fix, remaining);
        let mut lb_up = pc_up;
        let mut lb_lo = pc_lo;
        let mut lb_both = pc_up + pc_lo;
        let value = |u: f64, l: f64, b: f64| {
            (p.naive + b).max(p.combine(u, l))
        };
        let mut out = NodeBound {
            value: value(lb_up, lb_lo, lb_both),
            mu,
            candidates: Vec::new(),
        };
        let target = self.threshold();
        if out.value >= target || remaining == 0 {
            return out;
        }

        // Largest attainable side costs: everything not dropped is kept.
        let all: Vec<bool> = fix.iter().map(|f| *f != Fix::Drop).collect();
        let ev = Evaluator::from_excluded(p, all.iter().map(|k| !k).collect());
        let (max_up, max_lo) = ev.sums();
        let upper_fixed = p.du >= max_up;
        let lower_fixed = p.dl >= max_lo;
        if upper_fixed && lower_fixed {
            out.value = out.value.max(p.combine(max_up, max_lo));
            return out;
        }
        let mut sides = Vec::with_capacity(3);
        if upper_fixed {
            sides.push(Side::Lower);
        } else if lower_fixed {
            sides.push(Side::Upper);
        } else {
            sides.push(Side::Both);
            if p.dl > 0.0 {
                sides.push(Side::Upper);
            }
            if p.du > 0.0 {
                sides.push(Side::Lower);
            }
        }
        for side in sides {
            let idx = side_index(side);
            // Side-local target that would lift the node value to `target`.
            let side_target = match side {
                Side::Both => target - p.naive,
                Side::Upper => target - p.naive - lb_lo.max(p.dl),
                Side::Lower => target - p.naive - lb_up.max(p.du),
            };
            let start = if out.mu[idx] > 0.0 {
                out.mu[idx]
            } else {
                self.flow(side).initial_mu()
            };
            let m = self
                .flow(side)
                .maximize(p, fix, remaining, start, side_target, probe_budget);
            out.mu[idx] = m.mu;
            match side {
                Side::Both => lb_both = lb_both.max(m.lower),
                Side::Upper => lb_up = lb_up.max(m.lower),
                Side::Lower => lb_lo = lb_lo.max(m.lower),
            }
            out.candidates.extend(m.candidates);
            out.value = out.value.max(value(lb_up, lb_lo, lb_both));
            if out.value >= target {
                break;
            }
        }
        out
    }

    fn fixes(&self, decisions: &[(u32, bool)]) -> Vec<Fix> {
        let mut fix = vec![Fix::Free; self.p.n];
        for &(i, keep) in decisions {
            fix[i as usize] = if keep { Fix::Keep } else { Fix::Drop };
        }
        fix
    }

    /// Free path protruding furthest beyond the envelope of the kept paths.
    fn branch_path(&self, fix: &[Fix]) -> Option<usize> {
        let mut protrusion = vec![0.0f64; self.p.n];
        for chain in &self.p.chains {
            let kept_excess = chain
                .paths
                .iter()
                .position(|&i| fix[i] == Fix::Keep)
                .map_or(0.0, |r| chain.excess[r]);
            for (rank, &i) in chain.paths.iter().enumerate() {
                let e = chain.excess[rank];
                if e <= kept_excess {
                    break;
                }
                if fix[i] == Fix::Free {
                    protrusion[i] = protrusion[i].max(e - kept_excess);
                }
            }
        }
        let mut best: Option<(f64, usize)> = None;
        for (i, &v) in protrusion.iter().enumerate() {
            if v > 0.0 && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
        best.map(|(_, i)| i)
    }

    pub(crate) fn run(mut self) -> SearchOutcome {
        let p = self.p;
        let r0 = p.exclusions();
        let started = Instant::now();
        let mut nodes = 0u64;
        let mut seq = 0u64;
        let mut heap = BinaryHeap::new();
        let mut pruned_floor = f64::INFINITY;
        let mut proven = true;

        let root_fix = vec![Fix::Free; p.n];
        let root = self.node_bound(&root_fix, r0, [0.0; 3], 64);
        for cand in &root.candidates {
            self.repair_and_offer(cand, &root_fix);
        }
        heap.push(Node {
            bound: root.value,
            depth: 0,
            seq,
            decisions: Vec::new(),
            drops: 0,
            mu: root.mu,
        });

        while let Some(node) = heap.pop() {
            let threshold = self.threshold();
            if node.bound >= threshold {
                // Everything left is at least as bad.
                if node.bound < self.incumbent.objective {
                    pruned_floor = pruned_floor.min(node.bound);
                }
                heap.push(node);
                break;
            }
            let over_nodes = self.limits.node_limit.is_some_and(|lim| nodes >= lim);
            let over_time = self.limits.time_limit.is_some_and(|lim| started.elapsed() >= lim);
            if over_nodes || over_time {
                heap.push(node);
                proven = false;
                break;
            }
            nodes += 1;

            let fix = self.fixes(&node.decisions);
            let remaining = r0 - node.drops;
            let branch = if remaining == 0 { None } else { self.branch_path(&fix) };
            let Some(i) = branch else {
                let kept: Vec<bool> = fix.iter().map(|f| *f != Fix::Drop).collect();
                let obj = p.objective_of(&kept);
                self.offer(kept, obj);
                continue;
            };

            for keep in [false, true] {
                if !keep && remaining == 0 {
                    continue;
                }
                let mut child_fix = fix.clone();
                child_fix[i] = if keep { Fix::Keep } else { Fix::Drop };
                let child_remaining = if keep { remaining } else { remaining - 1 };
                let nb = self.node_bound(&child_fix, child_remaining, node.mu, 6);
                let bound = nb.value.max(node.bound);
                if let Some(cand) = nb.candidates.last() {
                    self.repair_and_offer(cand, &child_fix);
                }
                let threshold = self.threshold();
                if bound >= threshold {
                    if bound < self.incumbent.objective {
                        pruned_floor = pruned_floor.min(bound);
                    }
                    continue;
                }
                seq += 1;
                let mut decisions = node.decisions.clone();
                decisions.push((i as u32, keep));
                heap.push(Node {
                    bound,
                    depth: node.depth + 1,
                    seq,
                    decisions,
                    drops: node.drops + usize::from(!keep),
                    mu: nb.mu,
                });
            }
        }

        let open_floor = heap.peek().map_or(f64::INFINITY, |n| n.bound);
        let inc = self.incumbent.objective;
        let lower_bound = inc.min(open_floor).min(pruned_floor);
        SearchOutcome {
            kept: self.incumbent.kept,
            objective: inc,
            lower_bound,
            nodes,
            proven,
        }
    }
}

#[cfg(test)]
/// Bound of a node given explicit kept/dropped paths; exposed for tests.
pub(crate) fn bound_for(p: &Problem, keep: &[usize], drop: &[usize]) -> f64 {
    let mut search = Search::new(
        p,
        SearchLimits {
            gap: 0.0,
            node_limit: None,
            time_limit: None,
        },
        None,
    );
    // Disable early stopping so the full bound is reported.
    search.incumbent.objective = f64::INFINITY;
    let mut fix = vec![Fix::Free; p.n];
    for &i in keep {
        fix[i] = Fix::Keep;
    }
    for &i in drop {
        fix[i] = Fix::Drop;
    }
    let remaining = p.exclusions() - drop.len();
    search.node_bound(&fix, remaining, [0.0; 3], 64).value
}
