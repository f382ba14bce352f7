//! CS-Net: collaborative completion and segmentation of partial point clouds
//! that are contaminated with outliers.
//!
//! The crate is organized as a small stack:
//!
//! - [`geom`]: deterministic geometry kernels (FPS, KNN, voxel grids,
//!   hidden point removal, normalization).
//! - [`metrics`]: Chamfer distance, density-aware Chamfer distance,
//!   F-score and segmentation accuracy, plus report serialization.
//! - [`autodiff`]: a dense f64 reverse-mode tape sufficient to express
//!   and train the network.
//! - [`model`]: the cascaded network itself (segmentation + completion
//!   blocks), its parameters and checkpoint format.
//! - [`datasynth`]: procedural scenes with partial objects and clutter,
//!   with ground-truth complete clouds and binary labels.
//! - [`train`]: Adam, the training loop, evaluation and the ablation
//!   harness.

pub mod autodiff;
pub mod config;
pub mod datasynth;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{CsError, Result};
pub use geom::PointCloud;
