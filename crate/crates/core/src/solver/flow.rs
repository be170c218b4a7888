//! Dinic maximum flow over `f64` capacities.

use std::collections::VecDeque;

pub(crate) struct FlowBuilder {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl FlowBuilder {
    pub(crate) fn new(nodes: usize) -> Self {
        Self {
            nodes,
            edges: Vec::new(),
        }
    }

    /// Returns the id of the forward edge.
    pub(crate) fn add_edge(&mut self, from: usize, to: usize, cap: f64) -> usize {
        self.edges.push((from, to, cap));
        2 * (self.edges.len() - 1)
    }

    pub(crate) fn build(self) -> FlowNetwork {
        let m = self.edges.len() * 2;
        let mut to = vec![0usize; m];
        let mut base = vec![0.0; m];
        let mut degree = vec![0usize; self.nodes + 1];
        for (e, &(u, v, c)) in self.edges.iter().enumerate() {
            to[2 * e] = v;
            to[2 * e + 1] = u;
            base[2 * e] = c;
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut start = vec![0usize; self.nodes + 1];
        for v in 0..self.nodes {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut adj = vec![0usize; m];
        for (e, &(u, v, _)) in self.edges.iter().enumerate() {
            adj[fill[u]] = 2 * e;
            fill[u] += 1;
            adj[fill[v]] = 2 * e + 1;
            fill[v] += 1;
        }
        FlowNetwork {
            nodes: self.nodes,
            start,
            adj,
            to,
            cap: base.clone(),
            base,
            level: vec![-1; self.nodes],
            cursor: vec![0; self.nodes],
            queue: VecDeque::with_capacity(self.nodes),
        }
    }
}

pub(crate) struct FlowNetwork {
    nodes: usize,
    start: Vec<usize>,
    adj: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    base: Vec<f64>,
    level: Vec<i32>,
    cursor: Vec<usize>,
    queue: VecDeque<usize>,
}

impl FlowNetwork {
    pub(crate) fn set_capacity(&mut self, edge: usize, cap: f64) {
        self.base[edge] = cap;
    }

    fn bfs(&mut self, s: usize, t: usize, eps: f64) -> bool {
        self.level.iter_mut().for_each(|l| *l = -1);
        self.level[s] = 0;
        self.queue.clear();
        self.queue.push_back(s);
        while let Some(u) = self.queue.pop_front() {
            for &e in &self.adj[self.start[u]..self.start[u + 1]] {
                let v = self.to[e];
                if self.level[v] < 0 && self.cap[e] > eps {
                    self.level[v] = self.level[u] + 1;
                    self.queue.push_back(v);
                }
            }
        }
        self.level[t] >= 0
    }

    fn dfs(&mut self, u: usize, t: usize, limit: f64, eps: f64) -> f64 {
        if u == t {
            return limit;
        }
        while self.cursor[u] < self.start[u + 1] {
            let e = self.adj[self.cursor[u]];
            let v = self.to[e];
            if self.cap[e] > eps && self.level[v] == self.level[u] + 1 {
                let pushed = self.dfs(v, t, limit.min(self.cap[e]), eps);
                if pushed > 0.0 {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            self.cursor[u] += 1;
        }
        0.0
    }

    /// Resets residual capacities from the base capacities and computes a
    /// maximum `s`-`t` flow. Residuals at or below `eps` count as saturated.
    pub(crate) fn max_flow(&mut self, s: usize, t: usize, eps: f64) -> f64 {
        self.cap.copy_from_slice(&self.base);
        let mut total = 0.0;
        while self.bfs(s, t, eps) {
            self.cursor.copy_from_slice(&self.start[..self.nodes]);
            loop {
                let pushed = self.dfs(s, t, f64::INFINITY, eps);
                if pushed <= 0.0 {
                    break;
                }
                total += pushed;
            }
        }
        total
    }

    /// Nodes reachable from `s` in the residual graph of the last flow.
    pub(crate) fn source_side(&mut self, s: usize, eps: f64) -> Vec<bool> {
        let mut seen = vec![false; self.nodes];
        seen[s] = true;
        self.queue.clear();
        self.queue.push_back(s);
        while let Some(u) = self.queue.pop_front() {
            for &e in &self.adj[self.start[u]..self.start[u + 1]] {
                let v = self.to[e];
                if !seen[v] && self.cap[e] > eps {
                    seen[v] = true;
                    self.queue.push_back(v);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        // CLRS figure 26.1: max flow 23.
        let mut b = FlowBuilder::new(6);
        for (u, v, c) in [
            (0, 1, 16.0),
            (0, 2, 13.0),
            (2, 1, 4.0),
            (1, 3, 12.0),
            (3, 2, 9.0),
            (2, 4, 14.0),
            (4, 3, 7.0),
            (3, 5, 20.0),
            (4, 5, 4.0),
        ] {
            b.add_edge(u, v, c);
        }
        let mut g = b.build();
        assert!((g.max_flow(0, 5, 1e-12) - 23.0).abs() < 1e-12);
        let side = g.source_side(0, 1e-12);
        assert!(side[0] && !side[5]);
    }

    #[test]
    fn infinite_arcs_and_capacity_reset() {
        let mut b = FlowBuilder::new(4);
        let src = b.add_edge(0, 1, 1.0);
        b.add_edge(1, 2, f64::INFINITY);
        b.add_edge(2, 3, 2.5);
        let mut g = b.build();
        assert_eq!(g.max_flow(0, 3, 1e-12), 1.0);
        g.set_capacity(src, f64::INFINITY);
        assert_eq!(g.max_flow(0, 3, 1e-12), 2.5);
    }
}
