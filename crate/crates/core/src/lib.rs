//! Explainable classification of API-call sequences.
//!
//! The crate is split into five layers:
//!
//! - [`numerics`]: dense tensors and differentiable layer primitives with
//!   hand-written backward passes.
//! - [`models`]: the MLP, CNN, RNN and CNN-LSTM classifiers, training and
//!   weight persistence.
//! - [`dataio`]: the sequence dataset schema, CSV I/O, balancing, SMOTE,
//!   split protocols and a synthetic generator.
//! - [`evalkit`]: confusion matrices, metric reports, ROC/PR curves and the
//!   dataset-composition sweep harness.
//! - [`xai`]: LIME and SHAP explainers, axiom checks and plot documents.

pub mod dataio;
pub mod error;
pub mod evalkit;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod xai;

pub use error::{Error, Result};
