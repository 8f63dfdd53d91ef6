//! Ball-tree k-nearest-neighbour search and the per-source neighbourhood graph.

mod balltree;
mod graph;

pub use balltree::{euclidean, query_knn, BallTree, Node};
pub use graph::{
    build_graph, normalized_points, source_tree, NeighbourhoodGraph, DEFAULT_K,
    DEFAULT_LEAF_SIZE, GRAPH_MAGIC, GRAPH_VERSION,
};

/// Builds a ball tree over the rows of an embedding set (as stored).
pub fn build_balltree(set: &crate::embio::EmbeddingSet, leaf_size: usize) -> BallTree {
    let points = set.vectors().iter().map(|&x| f64::from(x)).collect();
    BallTree::build(points, set.dim(), leaf_size)
}
