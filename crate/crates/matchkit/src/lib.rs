//! matchkit: a self-contained two-stage retrieval engine. Sparse and
//! dense first-stage retrieval over an inverted index / embedding store,
//! kernel-pooling neural reranking with hand-written gradients,
//! learning-to-rank ensembling, and TREC-style evaluation.

pub mod dense;
pub mod error;
pub mod eval;
pub mod fewshot;
pub mod index;
pub mod kernel;
pub mod ltr;
pub mod run;
pub mod scalar;
pub mod sparse;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// The scalar type the pipeline is instantiated at. The numeric kernels
/// in [`scalar`], [`dense`] and [`kernel`] stay generic; everything that
/// crosses a file format boundary uses this alias.
pub type Real = f64;

/// Embedding store at the pipeline scalar type.
pub type RealEmbeddingStore = dense::EmbeddingStore<Real>;

/// Dense document matrix at the pipeline scalar type.
pub type RealDenseDocMatrix = dense::DenseDocMatrix<Real>;
