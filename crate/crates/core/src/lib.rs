//! Open-set re-identification over precomputed embedding vectors.
//!
//! The crate is `no_std` (it needs `alloc`) and carries only the numeric
//! pieces of the pipeline:
//!
//! * [`dataset`] and [`pca`]: the in-memory embedding dataset and a PCA
//!   projection for 2-D diagnostics.
//! * [`split`]: the known/unknown stratified split over individuals.
//! * [`metrics`]: balanced accuracy on known and unknown samples and their
//!   geometric mean.
//! * [`knn`]: an exact flat nearest-neighbor index and the thresholded
//!   mode-of-top-K classification rule.
//! * [`threshold`]: median/MAD statistics and the validation grid search for
//!   the new-individual threshold.
//! * [`head`], [`loss`], [`mining`], [`optim`] and [`train`]: the projection
//!   head, triplet losses, online triplet mining, Adam with a warmup/cosine
//!   schedule and the training loop.
//!
//! File formats, the CLI and everything else that touches the filesystem live
//! in the `openreid` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod head;
pub mod knn;
pub mod loss;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod mining;
pub mod optim;
pub mod pca;
pub mod rng;
pub mod split;
pub mod threshold;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::NEW_INDIVIDUAL;
