//! Out-of-core snapshot matrices for multi-file simulation output, and the
//! clustering methods that run on them: sparse random projection with
//! ensemble k-means and consensus analysis, k-means on SVD weights, and
//! agglomerative hierarchical clustering.
//!
//! Pipeline stages, in order: [`ingest`] (subdomain files to one file per
//! time step), [`preprocess`] (align, crop, remap onto a [`grid::CommonGrid`]),
//! [`assemble`] (remapped blocks to a [`store::BlockMatrix`]), then any of
//! [`projection`] + [`kmeans`] + [`consensus`], [`svd`] + [`kmeans`], or
//! [`hierarchical`].

pub mod assemble;
pub mod config;
pub mod consensus;
pub mod error;
pub mod format;
pub mod grid;
pub mod hierarchical;
pub mod index;
pub mod ingest;
pub mod kmeans;
pub mod labels;
pub mod matrix;
pub mod parallel;
pub mod points;
pub mod preprocess;
pub mod projection;
pub mod report;
pub mod rng;
pub mod spatial;
pub mod store;
pub mod svd;
pub mod synth;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use grid::CommonGrid;
pub use labels::ClusterAssignment;
pub use matrix::DenseColumns;
pub use store::{BlockMatrix, BlockSpec, SnapshotIndex};
