//! Graph compression by class-balanced k-means coreset selection.

mod assignment;
mod graph;
mod kmeans;

pub use assignment::{build_assignment, compress_features_labels, medoid, AssignmentMatrix, CompressionMode};
pub use graph::{
    compress, compress_adjacency, BalancedKMeans, CompressOptions, CompressedGraph, CompressionStrategy,
    Representative,
};
pub use kmeans::{balanced_kmeans, class_allotment, kmeans, KMeansConfig, Partition};
