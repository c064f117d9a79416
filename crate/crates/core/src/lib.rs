//! Condensing labeled image datasets through label-homogeneous clustering.
//!
//! The pipeline is: load a [`Dataset`], partition it into homogeneous
//! clusters with [`partition_homogeneous`], pick representatives with one of
//! the strategies in [`select`], then score the result with [`evaluate`].

pub mod cluster;
pub mod condensed;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod metric;
pub mod select;

pub use cluster::{
    class_centroid_seeds, cluster_size_histogram, is_homogeneous, kmeans, kmeans_with,
    partition_homogeneous, partition_homogeneous_with, size_histogram, Cluster, HistogramBin, KMeansParams,
    Partition, PartitionParams,
};
pub use condensed::{read_condensed, write_condensed, CondensedKind, CondensedSet, Contents, SyntheticPoint};
pub use dataset::{generate_blobs, load_cifar10, load_idx_pair, write_idx_pair, Dataset, Dims};
pub use error::{Error, Result};
pub use eval::{evaluate, knn_classify, EvalReport, TrainView};
pub use metric::Centroid;
pub use select::{
    calibrate_alpha, cluster_quota, compute_beta, random_count, reduce, reduction_percent, select_cwkc,
    select_ghcidr, select_koncw, select_random, select_rhc, select_rhckon, Method,
    ReductionConfig,
};
