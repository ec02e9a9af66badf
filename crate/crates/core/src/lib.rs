//! Differential k-mer discovery between two groups of DNA sequences.
//!
//! The crate covers the whole path from FASTA records to ranked,
//! SHAP-attributed k-mer features:
//!
//! - [`fasta`]: streaming parsing, statistics and chunking of long records
//! - [`encode`]: five vectorization schemes over a shared sparse matrix type
//! - [`kselect`]: k-mer spectra and optimal-k selection
//! - [`sampling`]: splits, k-fold indices and SMOTE oversampling
//! - [`models`]: CART trees, random forests and gradient-boosted trees
//! - [`eval`]: confusion matrices, metrics, ROC/AUC, cross-validation
//! - [`explain`]: exact and tree-path SHAP, rankings and incremental-AUC selection
//! - [`synth`]: planted-motif datasets and read simulation

pub mod encode;
pub mod error;
pub mod eval;
pub mod explain;
pub mod fasta;
pub mod kselect;
pub mod models;
pub mod sampling;
pub mod synth;

pub use error::{Error, Result};
