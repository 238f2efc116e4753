//! Character-level morphological inflection for low-resource languages.
//!
//! The pipeline goes TSV corpora -> (optional) hallucinated data -> three-phase
//! training of a two-step-attention transducer -> triple checkpoints ->
//! equal-weight ensemble predictions. Everything numeric runs on the minimal
//! reverse-mode tape in [`autodiff`]; there is no external tensor dependency.

pub mod align;
pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod hallucinate;
pub mod model;
pub mod rng;
pub mod serialize;
pub mod train;

pub use error::{Error, Result};
