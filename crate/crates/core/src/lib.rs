//! Embedding-based topic modeling and its evaluation harness.
//!
//! The pipeline runs in four stages: document embeddings are ingested from an
//! external provider, reduced with UMAP, clustered with HDBSCAN, and each
//! cluster is described by ranked topic words (class-based TF-IDF or
//! embedding-similarity keywords). Around it sit the evaluation pieces:
//! DBCV-scored hyperparameter sweeps with two selection rules, the classical
//! coherence metrics (`c_v`, `u_mass`, `c_uci`, `c_npmi`) and LLM-judged
//! intrusion/rating scores.

pub mod coherence;
pub mod corpus;
pub mod ctc;
pub mod dbcv;
pub mod distance;
pub mod embedding;
pub mod hdbscan;
pub mod pipeline;
pub mod sweep;
pub mod topics;
pub mod umap;

pub use corpus::{Corpus, Document, Label, TokenizedDocument};
pub use embedding::EmbeddingMatrix;
pub use hdbscan::{HdbscanParams, Labeling, SelectionMethod};
pub use umap::{Projection, UmapParams};
