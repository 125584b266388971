//! Bipartite coupling network for threshold max-flow problems.
//!
//! Left nodes carry the masses of one measure, right nodes the masses of the
//! other, and a middle edge `i -> j` is usable only when its distance is at
//! most the current threshold. Raising the threshold only adds edges, so a
//! flow found at a lower threshold stays feasible and can seed the next solve.

use std::collections::VecDeque;

/// Residual capacities below this are treated as exhausted.
const RESIDUAL_EPS: f64 = 1e-18;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    rev: usize,
    /// Middle edges are active only when `dist <= threshold`; `-inf` for the rest.
    dist: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CouplingNetwork {
    adj: Vec<Vec<Edge>>,
    residual: Vec<Vec<f64>>,
    source: usize,
    sink: usize,
    flow: f64,
}

/// Saved flow state, restorable with [`CouplingNetwork::restore`].
#[derive(Debug, Clone)]
pub(crate) struct FlowState {
    residual: Vec<Vec<f64>>,
    flow: f64,
}

impl CouplingNetwork {
    /// `cross[i][j]` is the distance between left node `i` and right node `j`.
    pub(crate) fn new(left: &[f64], right: &[f64], cross: &[Vec<f64>]) -> Self {
        let p = left.len();
        let q = right.len();
        let source = p + q;
        let sink = p + q + 1;
        let mut net = CouplingNetwork {
            adj: vec![Vec::new(); p + q + 2],
            residual: vec![Vec::new(); p + q + 2],
            source,
            sink,
            flow: 0.0,
        };
        for (i, &m) in left.iter().enumerate() {
            net.add_edge(source, i, m, f64::NEG_INFINITY);
        }
        for (j, &m) in right.iter().enumerate() {
            net.add_edge(p + j, sink, m, f64::NEG_INFINITY);
        }
        for i in 0..p {
            // nearest targets first so augmenting paths prefer short edges
            let mut order: Vec<usize> = (0..q).collect();
            order.sort_by(|&a, &b| cross[i][a].total_cmp(&cross[i][b]));
            for j in order {
                net.add_edge(i, p + j, left[i].min(right[j]), cross[i][j]);
            }
        }
        net
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: f64, dist: f64) {
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Edge { to, rev: rev_from, dist });
        self.residual[from].push(cap);
        self.adj[to].push(Edge {
            to: from,
            rev: rev_to,
            dist: f64::NEG_INFINITY,
        });
        self.residual[to].push(0.0);
    }

    pub(crate) fn save(&self) -> FlowState {
        FlowState {
            residual: self.residual.clone(),
            flow: self.flow,
        }
    }

    pub(crate) fn restore(&mut self, state: &FlowState) {
        self.residual.clone_from(&state.residual);
        self.flow = state.flow;
    }

    /// Augments the current flow to a maximum flow using middle edges with
    /// `dist <= threshold`, and returns its value.
    pub(crate) fn max_flow(&mut self, threshold: f64) -> f64 {
        let n = self.adj.len();
        let mut level = vec![usize::MAX; n];
        let mut next = vec![0usize; n];
        loop {
            if !self.bfs(threshold, &mut level) {
                break;
            }
            next.iter_mut().for_each(|x| *x = 0);
            loop {
                let pushed = self.dfs(self.source, f64::INFINITY, threshold, &level, &mut next);
                if pushed <= RESIDUAL_EPS {
                    break;
                }
                self.flow += pushed;
            }
        }
        self.flow
    }

    fn bfs(&self, threshold: f64, level: &mut [usize]) -> bool {
        level.iter_mut().for_each(|l| *l = usize::MAX);
        level[self.source] = 0;
        let mut queue = VecDeque::from([self.source]);
        while let Some(u) = queue.pop_front() {
            for (k, e) in self.adj[u].iter().enumerate() {
                if level[e.to] == usize::MAX && self.residual[u][k] > RESIDUAL_EPS && e.dist <= threshold {
                    level[e.to] = level[u] + 1;
                    queue.push_back(e.to);
                }
            }
        }
        level[self.sink] != usize::MAX
    }

    fn dfs(&mut self, u: usize, limit: f64, threshold: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == self.sink {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let k = next[u];
            let (to, rev, dist) = {
                let e = &self.adj[u][k];
                (e.to, e.rev, e.dist)
            };
            let cap = self.residual[u][k];
            if cap > RESIDUAL_EPS && dist <= threshold && level[to] == level[u] + 1 {
                let pushed = self.dfs(to, limit.min(cap), threshold, level, next);
                if pushed > RESIDUAL_EPS {
                    self.residual[u][k] -= pushed;
                    self.residual[to][rev] += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }
}
