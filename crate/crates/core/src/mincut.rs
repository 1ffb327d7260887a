//! Binary Potts labeling by max-flow/min-cut.
//!
//! The source side of the cut is the inlier label. Unary costs become
//! terminal capacities (`s→p` carries the outlier cost, `p→t` the inlier
//! cost) and every neighborhood edge becomes a pair of arcs with capacity
//! `λ·w_pq`. The flow solver is a Boykov–Kolmogorov style search-tree
//! algorithm: two trees grow from the terminals, meet on an augmenting path,
//! and orphaned subtrees are re-adopted after each augmentation.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{domain, Result};
use crate::neighbors::NeighborGraph;

/// One pairwise Potts term, paid when `a` and `b` take different labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PottsEdge {
    pub a: usize,
    pub b: usize,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemGraph {
    cost_inlier: Vec<f64>,
    cost_outlier: Vec<f64>,
    edges: Vec<PottsEdge>,
}

impl ProblemGraph {
    pub fn new(cost_inlier: Vec<f64>, cost_outlier: Vec<f64>, edges: Vec<PottsEdge>) -> Result<Self> {
        if cost_inlier.len() != cost_outlier.len() {
            return Err(domain("unary cost vectors differ in length"));
        }
        let ok = |c: &f64| c.is_finite() && *c >= 0.0;
        if !cost_inlier.iter().chain(&cost_outlier).all(ok) {
            return Err(domain("unary costs must be finite and non-negative"));
        }
        let n = cost_inlier.len();
        for e in &edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(domain(format!("invalid edge ({}, {}) for {n} nodes", e.a, e.b)));
            }
            if !ok(&e.penalty) {
                return Err(domain("edge penalties must be finite and non-negative"));
            }
        }
        Ok(Self {
            cost_inlier,
            cost_outlier,
            edges,
        })
    }

    pub fn node_count(&self) -> usize {
        self.cost_inlier.len()
    }

    pub fn cost_inlier(&self) -> &[f64] {
        &self.cost_inlier
    }

    pub fn cost_outlier(&self) -> &[f64] {
        &self.cost_outlier
    }

    pub fn edges(&self) -> &[PottsEdge] {
        &self.edges
    }

    /// Total energy of `labels` (`true` = inlier).
    pub fn energy(&self, labels: &[bool]) -> f64 {
        let unary: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| if l { self.cost_inlier[i] } else { self.cost_outlier[i] })
            .sum();
        let pairwise: f64 = self
            .edges
            .iter()
            .filter(|e| labels[e.a] != labels[e.b])
            .map(|e| e.penalty)
            .sum();
        unary + pairwise
    }

    /// Plain-text flow network: a header line `nodes source sink`, then one
    /// `u v cap` line per arc with positive capacity. Terminals are numbered
    /// `n` (source) and `n + 1` (sink).
    pub fn to_edge_list(&self) -> String {
        let n = self.node_count();
        let (s, t) = (n, n + 1);
        let mut out = format!("{n} {s} {t}\n");
        for i in 0..n {
            if self.cost_outlier[i] > 0.0 {
                let _ = writeln!(out, "{s} {i} {}", self.cost_outlier[i]);
            }
            if self.cost_inlier[i] > 0.0 {
                let _ = writeln!(out, "{i} {t} {}", self.cost_inlier[i]);
            }
        }
        for e in self.edges.iter().filter(|e| e.penalty > 0.0) {
            let _ = writeln!(out, "{} {} {}", e.a, e.b, e.penalty);
            let _ = writeln!(out, "{} {} {}", e.b, e.a, e.penalty);
        }
        out
    }
}

/// Truncated Gaussian inlier kernel: `exp(−r²/(2ε²))`, zero beyond `3ε`.
pub fn kernel(residual: f64, eps: f64) -> f64 {
    if residual > 3.0 * eps {
        0.0
    } else {
        (-(residual * residual) / (2.0 * eps * eps)).exp()
    }
}

/// Unary costs from the kernel (`inlier = 1 − K`, `outlier = K`) and a Potts
/// penalty `λ·w_pq` on every neighborhood edge.
pub fn build_problem_graph(residuals: &[f64], eps: f64, graph: &NeighborGraph, lambda: f64) -> Result<ProblemGraph> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(domain(format!("threshold must be positive, got {eps}")));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    if graph.node_count() != residuals.len() {
        return Err(domain(format!(
            "graph has {} nodes but {} residuals were given",
            graph.node_count(),
            residuals.len()
        )));
    }
    if let Some(i) = residuals.iter().position(|r| r.is_nan() || *r < 0.0) {
        return Err(domain(format!("residual {i} is negative or NaN")));
    }
    let k: Vec<f64> = residuals.iter().map(|&r| kernel(r, eps)).collect();
    let edges = graph
        .edges()
        .iter()
        .map(|e| PottsEdge {
            a: e.a,
            b: e.b,
            penalty: lambda * e.weight,
        })
        .collect();
    ProblemGraph::new(k.iter().map(|v| 1.0 - v).collect(), k, edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutResult {
    /// `true` = inlier (source side).
    pub labels: Vec<bool>,
    pub energy: f64,
}

impl CutResult {
    pub fn inlier_count(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }
}

/// Globally minimal labeling. Among several minimal cuts the one with the
/// largest inlier set is returned.
pub fn min_cut(g: &ProblemGraph) -> CutResult {
    let mut flow = FlowGraph::new(g);
    flow.maxflow();
    let labels: Vec<bool> = flow.tree.iter().map(|t| *t != Tree::Sink).collect();
    let energy = g.energy(&labels);
    CutResult { labels, energy }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tree {
    Free,
    Source,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parent {
    None,
    Terminal,
    Orphan,
    /// Arc from the node towards its parent.
    Arc(usize),
}

struct FlowGraph {
    /// Positive values are residual source capacity, negative sink capacity.
    tr_cap: Vec<f64>,
    head: Vec<usize>,
    r_cap: Vec<f64>,
    /// Outgoing arcs per node; arc `a` and `a ^ 1` are sisters.
    out: Vec<Vec<usize>>,
    tree: Vec<Tree>,
    parent: Vec<Parent>,
    active: VecDeque<usize>,
    queued: Vec<bool>,
    orphans: VecDeque<usize>,
}

impl FlowGraph {
    fn new(g: &ProblemGraph) -> Self {
        let n = g.node_count();
        let mut head = Vec::with_capacity(2 * g.edges.len());
        let mut r_cap = Vec::with_capacity(2 * g.edges.len());
        let mut out = vec![Vec::new(); n];
        for e in g.edges.iter().filter(|e| e.penalty > 0.0) {
            out[e.a].push(head.len());
            head.push(e.b);
            r_cap.push(e.penalty);
            out[e.b].push(head.len());
            head.push(e.a);
            r_cap.push(e.penalty);
        }
        let tr_cap: Vec<f64> = (0..n).map(|i| g.cost_outlier[i] - g.cost_inlier[i]).collect();
        let mut fg = Self {
            tree: vec![Tree::Free; n],
            parent: vec![Parent::None; n],
            active: VecDeque::new(),
            queued: vec![false; n],
            orphans: VecDeque::new(),
            tr_cap,
            head,
            r_cap,
            out,
        };
        for i in 0..n {
            if fg.tr_cap[i] != 0.0 {
                fg.tree[i] = if fg.tr_cap[i] > 0.0 { Tree::Source } else { Tree::Sink };
                fg.parent[i] = Parent::Terminal;
                fg.activate(i);
            }
        }
        fg
    }

    fn activate(&mut self, i: usize) {
        if !self.queued[i] {
            self.queued[i] = true;
            self.active.push_back(i);
        }
    }

    fn maxflow(&mut self) {
        while let Some(arc) = self.grow() {
            self.augment(arc);
            self.adopt();
        }
    }

    /// Expands the trees until they touch; returns the connecting arc,
    /// oriented from the source tree to the sink tree.
    fn grow(&mut self) -> Option<usize> {
        while let Some(&i) = self.active.front() {
            if self.tree[i] == Tree::Free {
                self.active.pop_front();
                self.queued[i] = false;
                continue;
            }
            let from_source = self.tree[i] == Tree::Source;
            for k in 0..self.out[i].len() {
                let a = self.out[i][k];
                let j = self.head[a];
                let cap = if from_source { self.r_cap[a] } else { self.r_cap[a ^ 1] };
                if cap <= 0.0 {
                    continue;
                }
                match self.tree[j] {
                    Tree::Free => {
                        self.tree[j] = self.tree[i];
                        self.parent[j] = Parent::Arc(a ^ 1);
                        self.activate(j);
                    }
                    t if t == self.tree[i] => {}
                    _ => return Some(if from_source { a } else { a ^ 1 }),
                }
            }
            self.active.pop_front();
            self.queued[i] = false;
        }
        None
    }

    fn augment(&mut self, bridge: usize) {
        let mut flow = self.r_cap[bridge];
        let mut x = self.head[bridge ^ 1];
        while let Parent::Arc(a) = self.parent[x] {
            flow = flow.min(self.r_cap[a ^ 1]);
            x = self.head[a];
        }
        flow = flow.min(self.tr_cap[x]);
        let mut x = self.head[bridge];
        while let Parent::Arc(a) = self.parent[x] {
            flow = flow.min(self.r_cap[a]);
            x = self.head[a];
        }
        flow = flow.min(-self.tr_cap[x]);

        self.r_cap[bridge] -= flow;
        self.r_cap[bridge ^ 1] += flow;
        let mut x = self.head[bridge ^ 1];
        while let Parent::Arc(a) = self.parent[x] {
            self.r_cap[a] += flow;
            self.r_cap[a ^ 1] -= flow;
            if self.r_cap[a ^ 1] <= 0.0 {
                self.r_cap[a ^ 1] = 0.0;
                self.make_orphan(x);
            }
            x = self.head[a];
        }
        self.tr_cap[x] -= flow;
        if self.tr_cap[x] <= 0.0 {
            self.tr_cap[x] = 0.0;
            self.make_orphan(x);
        }
        let mut x = self.head[bridge];
        while let Parent::Arc(a) = self.parent[x] {
            self.r_cap[a ^ 1] += flow;
            self.r_cap[a] -= flow;
            if self.r_cap[a] <= 0.0 {
                self.r_cap[a] = 0.0;
                self.make_orphan(x);
            }
            x = self.head[a];
        }
        self.tr_cap[x] += flow;
        if self.tr_cap[x] >= 0.0 {
            self.tr_cap[x] = 0.0;
            self.make_orphan(x);
        }
    }

    fn make_orphan(&mut self, x: usize) {
        self.parent[x] = Parent::Orphan;
        self.orphans.push_back(x);
    }

    /// Whether `j`'s parent chain still reaches a terminal.
    fn rooted(&self, mut j: usize) -> bool {
        loop {
            match self.parent[j] {
                Parent::Terminal => return true,
                Parent::Arc(a) => j = self.head[a],
                Parent::Orphan | Parent::None => return false,
            }
        }
    }

    fn adopt(&mut self) {
        while let Some(x) = self.orphans.pop_front() {
            let side = self.tree[x];
            let in_source = side == Tree::Source;
            let mut adopted = None;
            for &a in &self.out[x] {
                let j = self.head[a];
                let cap = if in_source { self.r_cap[a ^ 1] } else { self.r_cap[a] };
                if self.tree[j] == side && cap > 0.0 && self.rooted(j) {
                    adopted = Some(a);
                    break;
                }
            }
            if let Some(a) = adopted {
                self.parent[x] = Parent::Arc(a);
                continue;
            }
            for k in 0..self.out[x].len() {
                let a = self.out[x][k];
                let j = self.head[a];
                if self.tree[j] != side {
                    continue;
                }
                let cap = if in_source { self.r_cap[a ^ 1] } else { self.r_cap[a] };
                if cap > 0.0 {
                    self.activate(j);
                }
                if self.parent[j] == Parent::Arc(a ^ 1) {
                    self.make_orphan(j);
                }
            }
            self.tree[x] = Tree::Free;
            self.parent[x] = Parent::None;
        }
    }
}
