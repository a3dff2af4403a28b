//! File formats, the end-to-end pipeline and the `openreid` command-line
//! tool, built on [`openreid_core`].
//!
//! * [`emb1`] and [`store`]: the EMB1 matrix file and its metadata CSV.
//! * [`checkpoint`]: projection-head checkpoints.
//! * [`tables`]: split, submission, curve, history and PCA CSVs.
//! * [`manifest`]: per-run manifests with input digests.
//! * [`synthetic`]: Gaussian-cluster datasets for demos and tests.
//! * [`cli`] and [`commands`]: argument parsing and subcommand bodies.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod emb1;
pub mod error;
pub mod manifest;
pub mod store;
pub mod synthetic;
pub mod tables;

pub use error::{Error, Result};
