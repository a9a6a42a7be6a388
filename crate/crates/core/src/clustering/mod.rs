//! DTW similarity between regions and balanced average-linkage clustering
//! into a multi-level hierarchy.

mod balance;
mod dtw;
mod hierarchy;
mod linkage;
mod similarity;

pub use balance::{balance, default_threshold, DEFAULT_THRESHOLD_FACTOR};
pub use dtw::dtw_distance;
pub use hierarchy::{build_hierarchy, ClusterHierarchy, ClusterLevel, HierarchyFile};
pub use linkage::{agglomerate, cluster_distance, Partition};
pub use similarity::{similarity_matrix, SimilarityMatrix};
