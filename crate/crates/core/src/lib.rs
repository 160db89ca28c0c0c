//! Valence classification with transfer from a large binary sentiment corpus.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`text`]: normalization, tokenization, vocabulary, sequence encoding, corpus I/O
//! - [`annotation`]: majority-vote resolution, Cohen's and Fleiss' kappa
//! - [`neural`]: tensors, GRU, attention, losses, Adam, gradient checking
//! - [`model`]: the embedding → BiGRU → attention → dense classifier and its training loop
//! - [`transfer`]: weight container, GloVe ingestion, embedding and full-weight transfer
//! - [`baseline`]: tf-idf features with multinomial logistic regression
//! - [`evaluation`]: stratified folds, metrics, AUROC, four-model comparison, attention report
//! - [`synthetic`]: seeded corpora with a known signal vocabulary, for end-to-end checks

pub mod annotation;
pub mod baseline;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod neural;
pub mod selfcheck;
pub mod synthetic;
pub mod text;
pub mod transfer;

pub use error::{Error, Result};
