//! Relation-graph construction from node features.

mod build;
mod similarity;

pub(crate) use build::{adjacency, links_from_similarities, top_k};
pub use build::{
    build_epsilon_graph, build_knn_graph, connect_to_compressed, epsilon_edges, load_edges, read_edges,
    save_edges, write_edges, ConnectionRule, RelationGraph,
};
pub use similarity::{prepare_rows, prepared_similarities, similarity, SimilarityMetric};
