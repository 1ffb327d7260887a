//! Neighborhood systems for the spatial-coherence term: an image grid over
//! correspondences and a fixed-radius graph over 3-D points.

use nalgebra::Point3;

use crate::error::{domain, Result};
use crate::geometry::{Correspondence, MapPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphKind {
    Grid { cells_per_axis: usize },
    Radius { radius: f64 },
    Subgraph,
}

/// Undirected weighted graph with canonical `a < b` edges, sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    node_count: usize,
    edges: Vec<Edge>,
    kind: GraphKind,
}

impl NeighborGraph {
    pub fn new(node_count: usize, mut edges: Vec<Edge>, kind: GraphKind) -> Result<Self> {
        for e in &mut edges {
            if e.a == e.b {
                return Err(domain(format!("self edge on node {}", e.a)));
            }
            if e.a.max(e.b) >= node_count {
                return Err(domain(format!("edge ({}, {}) out of range", e.a, e.b)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(domain("edge weights must be positive"));
            }
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        if edges.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(domain("duplicate edge"));
        }
        Ok(Self {
            node_count,
            edges,
            kind,
        })
    }

    pub fn empty(node_count: usize) -> Self {
        Self {
            node_count,
            edges: Vec::new(),
            kind: GraphKind::Subgraph,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search_by(|e| (e.a, e.b).cmp(&key)).is_ok()
    }

    /// Induced subgraph on `nodes`, renumbered by position in `nodes`.
    pub fn induced(&self, nodes: &[usize]) -> NeighborGraph {
        let mut local = vec![usize::MAX; self.node_count];
        for (i, &n) in nodes.iter().enumerate() {
            local[n] = i;
        }
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| local[e.a] != usize::MAX && local[e.b] != usize::MAX)
            .map(|e| {
                let (a, b) = (local[e.a], local[e.b]);
                Edge {
                    a: a.min(b),
                    b: a.max(b),
                    weight: e.weight,
                }
            })
            .collect();
        edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)));
        NeighborGraph {
            node_count: nodes.len(),
            edges,
            kind: GraphKind::Subgraph,
        }
    }
}

/// Assignment of reference-frame points to square-ish image cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridIndex {
    cells_per_axis: usize,
    cells: Vec<(usize, usize)>,
}

impl GridIndex {
    pub fn new(points: &[&Correspondence], image_size: (f64, f64), cells_per_axis: usize) -> Result<Self> {
        let (w, h) = image_size;
        if !(w > 0.0 && h > 0.0) {
            return Err(domain("image size must be positive"));
        }
        if cells_per_axis == 0 {
            return Err(domain("cells_per_axis must be at least 1"));
        }
        let k = cells_per_axis as f64;
        let cells = points
            .iter()
            .map(|c| {
                let (x, y) = (c.ref_point.x, c.ref_point.y);
                if !(0.0..w).contains(&x) || !(0.0..h).contains(&y) {
                    return Err(domain(format!(
                        "correspondence {} at ({x}, {y}) lies outside the {w}x{h} image",
                        c.id
                    )));
                }
                let cx = ((x * k / w).floor() as usize).min(cells_per_axis - 1);
                let cy = ((y * k / h).floor() as usize).min(cells_per_axis - 1);
                Ok((cx, cy))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cells_per_axis, cells })
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn cell(&self, i: usize) -> (usize, usize) {
        self.cells[i]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Chebyshev distance between the cells of two points.
    pub fn cell_distance(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.cells[i], self.cells[j]);
        a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
    }

    /// Point indices grouped per cell, row-major by `(cy, cx)`.
    pub fn buckets(&self) -> Vec<Vec<usize>> {
        let k = self.cells_per_axis;
        let mut buckets = vec![Vec::new(); k * k];
        for (i, &(cx, cy)) in self.cells.iter().enumerate() {
            buckets[cy * k + cx].push(i);
        }
        buckets
    }
}

/// Grid neighborhood: points are adjacent when their reference-frame cells
/// coincide or are 8-connected.
pub fn grid_graph(
    points: &[Correspondence],
    image_size: (f64, f64),
    cells_per_axis: usize,
    weight: f64,
) -> Result<NeighborGraph> {
    let refs: Vec<&Correspondence> = points.iter().collect();
    let index = GridIndex::new(&refs, image_size, cells_per_axis)?;
    grid_graph_from_index(&index, weight)
}

pub fn grid_graph_from_index(index: &GridIndex, weight: f64) -> Result<NeighborGraph> {
    let k = index.cells_per_axis();
    let buckets = index.buckets();
    let mut edges = Vec::new();
    let mut push = |a: usize, b: usize| edges.push(Edge { a: a.min(b), b: a.max(b), weight });
    for cy in 0..k {
        for cx in 0..k {
            let here = &buckets[cy * k + cx];
            for (n, &i) in here.iter().enumerate() {
                for &j in &here[n + 1..] {
                    push(i, j);
                }
            }
            // forward half of the 8-neighborhood so each cell pair is visited once
            for (dx, dy) in [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)] {
                let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                if nx < 0 || ny < 0 || nx >= k as i64 || ny >= k as i64 {
                    continue;
                }
                let there = &buckets[ny as usize * k + nx as usize];
                for &i in here {
                    for &j in there {
                        push(i, j);
                    }
                }
            }
        }
    }
    NeighborGraph::new(index.len(), edges, GraphKind::Grid { cells_per_axis: k })
}

/// `true` iff `a` and `b` are within `radius` (inclusive).
pub fn within_radius(a: &Point3<f64>, b: &Point3<f64>, radius: f64) -> bool {
    (a - b).norm() <= radius
}

/// Fixed-radius graph: edge `(i, j)` iff `‖vᵢ − vⱼ‖ ≤ r`.
pub fn radius_graph(points: &[MapPoint], radius: f64, weight: f64) -> Result<NeighborGraph> {
    let positions: Vec<Point3<f64>> = points.iter().map(|p| p.position).collect();
    radius_graph_from_positions(&positions, radius, weight)
}

pub fn radius_graph_from_positions(positions: &[Point3<f64>], radius: f64, weight: f64) -> Result<NeighborGraph> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(domain(format!("radius must be positive, got {radius}")));
    }
    let tree = KdTree::build(positions);
    let mut edges = Vec::new();
    let mut found = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        found.clear();
        tree.within(p, radius, &mut found);
        found.sort_unstable();
        edges.extend(found.iter().filter(|&&j| j > i).map(|&j| Edge { a: i, b: j, weight }));
    }
    NeighborGraph::new(positions.len(), edges, GraphKind::Radius { radius })
}

const LEAF_SIZE: usize = 8;

enum KdNode {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static median-split k-d tree with exact fixed-radius queries.
struct KdTree<'a> {
    points: &'a [Point3<f64>],
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [Point3<f64>]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let spread = |axis: usize| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points[i][axis];
                (lo.min(v), hi.max(v))
            });
            hi - lo
        };
        let axis = (0..3).max_by(|&a, &b| spread(a).total_cmp(&spread(b))).unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[self.order[mid]][axis];
        self.nodes.push(KdNode::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = KdNode::Split { axis, value, left, right };
        id
    }

    fn within(&self, q: &Point3<f64>, radius: f64, out: &mut Vec<usize>) {
        if self.nodes.is_empty() {
            return;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match self.nodes[n] {
                KdNode::Leaf { start, end } => {
                    out.extend(
                        self.order[start..end]
                            .iter()
                            .copied()
                            .filter(|&i| within_radius(q, &self.points[i], radius)),
                    );
                }
                KdNode::Split { axis, value, left, right } => {
                    // left holds coordinates <= value, right holds >= value
                    let d = q[axis] - value;
                    if d <= radius {
                        stack.push(left);
                    }
                    if -d <= radius {
                        stack.push(right);
                    }
                }
            }
        }
    }
}
