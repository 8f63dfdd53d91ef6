//! Locally linear meta-embeddings: combine several pre-trained word
//! embedding sets by reconstructing every word from its nearest neighbours
//! in each source, then projecting all words into one space that preserves
//! those reconstructions.
//!
//! The stages are exposed as modules:
//!
//! - [`embio`]: loading, normalising, caching and aligning source sets
//! - [`neighbours`]: exact ball-tree k-NN and the per-source neighbourhood graph
//! - [`recon`]: reconstruction weights by AdaGrad or by an exact solve
//! - [`project`]: combined weights and the bottom eigenvectors of `(I−W′)ᵀ(I−W′)`
//! - [`baselines`]: CONC and SVD meta-embeddings
//! - [`evalsuite`]: benchmark parsers, evaluators and synthetic fixtures
//! - [`pipeline`]: configuration, caching, reports, sweeps and ablations

pub mod baselines;
pub mod embio;
pub mod error;
pub mod evalsuite;
pub mod neighbours;
pub mod pipeline;
pub mod project;
pub mod recon;
pub mod rng;
pub mod sparse;

pub use embio::{AlignedSources, EmbeddingSet, Format, Vocabulary};
pub use error::{Error, Result};
pub use neighbours::NeighbourhoodGraph;
pub use pipeline::PipelineConfig;
pub use project::MetaEmbedding;
pub use recon::{SolverConfig, SparseWeights};
