//! Ball tree with exact pruned k-nearest-neighbour search under the
//! Euclidean metric.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Pruning slack absorbing rounding in the triangle-inequality bound.
const BOUND_SLACK: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Node {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Range into the tree's point permutation.
    pub start: usize,
    pub end: usize,
    pub children: Option<(usize, usize)>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct BallTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    dist: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl BallTree {
    /// Builds a tree over `points` (row-major, `dim` columns).
    ///
    /// # Panics
    ///
    /// Panics if `points` is empty, `dim` is zero, `leaf_size` is zero, or
    /// `points.len()` is not a multiple of `dim`.
    pub fn build(points: Vec<f64>, dim: usize, leaf_size: usize) -> Self {
        assert!(dim > 0 && leaf_size > 0, "dim and leaf_size must be positive");
        assert!(
            !points.is_empty() && points.len().is_multiple_of(dim),
            "points must be a non-empty n × dim table"
        );
        let n = points.len() / dim;
        let mut tree = BallTree {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
            leaf_size,
        };
        tree.build_node(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Point ids held by a node.
    pub fn node_points(&self, node: &Node) -> &[usize] {
        &self.order[node.start..node.end]
    }

    pub fn point(&self, id: usize) -> &[f64] {
        &self.points[id * self.dim..(id + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let dim = self.dim;
        let count = (end - start) as f64;
        let mut center = vec![0.0; dim];
        for &p in &self.order[start..end] {
            for (c, x) in center.iter_mut().zip(&self.points[p * dim..(p + 1) * dim]) {
                *c += x;
            }
        }
        center.iter_mut().for_each(|c| *c /= count);
        let radius = self.order[start..end]
            .iter()
            .map(|&p| euclidean(&center, self.point(p)))
            .fold(0.0, f64::max);

        let idx = self.nodes.len();
        self.nodes.push(Node {
            center,
            radius,
            start,
            end,
            children: None,
        });
        if end - start <= self.leaf_size || radius == 0.0 {
            return idx;
        }

        let split_dim = (0..dim)
            .map(|j| {
                let (lo, hi) = self.order[start..end]
                    .iter()
                    .map(|&p| self.points[p * dim + j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                (j, hi - lo)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(j, _)| j)
            .unwrap_or(0);
        let mid = (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid, |&a, &b| {
            points[a * dim + split_dim]
                .total_cmp(&points[b * dim + split_dim])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[idx].children = Some((left, right));
        idx
    }

    /// Exact `k` nearest neighbours of an arbitrary query point, ascending by
    /// distance with ties broken by ascending id. `exclude` drops one id.
    pub fn knn(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(|c| (c.id, c.dist))
            .collect()
    }

    fn lower_bound(&self, node: usize, query: &[f64]) -> f64 {
        let n = &self.nodes[node];
        (euclidean(query, &n.center) - n.radius).max(0.0)
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if heap.len() == k {
            let worst = heap.peek().expect("heap is full").dist;
            if self.lower_bound(node, query) > worst + BOUND_SLACK {
                return;
            }
        }
        let n = &self.nodes[node];
        match n.children {
            None => {
                for &p in &self.order[n.start..n.end] {
                    if Some(p) == exclude {
                        continue;
                    }
                    let cand = Candidate {
                        dist: euclidean(query, self.point(p)),
                        id: p,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Some((left, right)) => {
                let dl = euclidean(query, &self.nodes[left].center);
                let dr = euclidean(query, &self.nodes[right].center);
                let (first, second) = if dl <= dr { (left, right) } else { (right, left) };
                self.search(first, query, k, exclude, heap);
                self.search(second, query, k, exclude, heap);
            }
        }
    }

    /// Checks that every point lies inside every ball on its root path and
    /// that the leaves partition the point set.
    pub fn check_invariants(&self, tol: f64) -> bool {
        let mut seen = vec![0usize; self.len()];
        self.check_node(0, &mut Vec::new(), &mut seen, tol) && seen.iter().all(|&c| c == 1)
    }

    fn check_node(&self, node: usize, path: &mut Vec<usize>, seen: &mut [usize], tol: f64) -> bool {
        path.push(node);
        let n = &self.nodes[node];
        let ok = match n.children {
            Some((l, r)) => {
                self.check_node(l, path, seen, tol) && self.check_node(r, path, seen, tol)
            }
            None => self.order[n.start..n.end].iter().all(|&p| {
                seen[p] += 1;
                path.iter().all(|&a| {
                    euclidean(self.point(p), &self.nodes[a].center) <= self.nodes[a].radius + tol
                })
            }),
        };
        path.pop();
        ok
    }
}

/// k nearest neighbours of the tree's own point `query_id`. With
/// `include_self` the query itself is returned first at distance 0 and
/// counts towards `k`.
pub fn query_knn(tree: &BallTree, query_id: usize, k: usize, include_self: bool) -> Vec<(usize, f64)> {
    let query = tree.point(query_id);
    if include_self {
        let mut out = vec![(query_id, 0.0)];
        out.extend(tree.knn(query, k.saturating_sub(1), Some(query_id)));
        out
    } else {
        tree.knn(query, k, Some(query_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_a_leaf() {
        let tree = BallTree::build(vec![1.0, 2.0], 2, 40);
        assert_eq!(tree.nodes().len(), 1);
        assert!(tree.nodes()[0].is_leaf());
        assert_eq!(tree.nodes()[0].radius, 0.0);
    }

    #[test]
    fn identical_points_share_a_zero_radius_node() {
        let tree = BallTree::build(vec![0.5, 0.5, 0.5, 0.5], 2, 1);
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.nodes()[0].radius, 0.0);
        assert_eq!(tree.node_points(&tree.nodes()[0]).len(), 2);
    }

    #[test]
    fn hand_geometry() {
        let tree = BallTree::build(vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0], 2, 1);
        let got = query_knn(&tree, 0, 1, false);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, 1);
        assert!((got[0].1 - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(query_knn(&tree, 2, 1, true), vec![(2, 0.0)]);
    }

    #[test]
    fn points_on_a_line() {
        let tree = BallTree::build(vec![0.0, 1.0, 3.0], 1, 1);
        let nn: Vec<usize> = (0..3).map(|q| query_knn(&tree, q, 1, false)[0].0).collect();
        assert_eq!(nn, vec![1, 0, 1]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        // points 1 and 2 are equidistant from point 0
        let tree = BallTree::build(vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 3.0], 2, 1);
        let ids: Vec<_> = query_knn(&tree, 0, 2, false).iter().map(|x| x.0).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn oversized_k_truncates() {
        let tree = BallTree::build(vec![0.0, 1.0, 2.0], 1, 2);
        assert_eq!(query_knn(&tree, 0, 10, false).len(), 2);
        assert_eq!(query_knn(&tree, 0, 10, true).len(), 3);
    }
}
