//! Projection of the reconstruction weights into the meta-embedding space.
//!
//! Weights from all sources are merged into `W′` (each `w_vu` multiplied by
//! the number of sources whose neighbourhood of `v` contains `u`), and the
//! meta-embedding is read off the bottom non-null eigenvectors of
//! `M = (I − W′)ᵀ(I − W′)`. `M` is never formed: every product goes through
//! two sparse passes over `W′` and its transpose.

pub mod eigen;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embio::{self, EmbeddingSet, Format, Vocabulary};
use crate::error::{Error, Result};
use crate::neighbours::NeighbourhoodGraph;
use crate::recon::SparseWeights;
use crate::sparse::SparseRows;

pub use eigen::{EigenConfig, EigenMethod, EigenPairs, SymmetricOperator, Which};

pub const DEFAULT_DIM: usize = 300;

/// Merged weights `W′` together with their transpose.
#[derive(Clone, Debug)]
pub struct CombinedWeights {
    rows: SparseRows,
    transposed: SparseRows,
    pub row_normalized: bool,
}

impl CombinedWeights {
    pub fn from_rows(rows: SparseRows, row_normalized: bool) -> Result<Self> {
        if rows.nrows() != rows.ncols() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                found: rows.ncols(),
            });
        }
        let transposed = rows.transpose();
        Ok(CombinedWeights {
            rows,
            transposed,
            row_normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn rows(&self) -> &SparseRows {
        &self.rows
    }

    pub fn get(&self, v: usize, u: usize) -> f64 {
        self.rows.get(v, u)
    }
}

/// `w′_vu = w_vu · |{i : u ∈ N_i(v)}|`, optionally rescaled so every
/// non-empty row sums to one.
pub fn combine_weights(
    weights: &SparseWeights,
    graph: &NeighbourhoodGraph,
    row_normalize: bool,
) -> Result<CombinedWeights> {
    if weights.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: weights.len(),
        });
    }
    let rows = (0..graph.len())
        .map(|v| {
            let multiplicity = graph.union_neighbourhood(v);
            let (cols, vals) = weights.rows().row(v);
            let mut row: Vec<(usize, f64)> = cols
                .iter()
                .zip(vals)
                .map(|(&u, &w)| {
                    let u = u as usize;
                    let count = multiplicity
                        .binary_search_by_key(&u, |&(x, _)| x)
                        .map_or(0, |i| multiplicity[i].1);
                    (u, w * count as f64)
                })
                .collect();
            if row_normalize && !row.is_empty() {
                let sum: f64 = row.iter().map(|x| x.1).sum();
                if sum != 0.0 {
                    row.iter_mut().for_each(|x| x.1 /= sum);
                }
            }
            row
        })
        .collect();
    CombinedWeights::from_rows(SparseRows::from_rows(graph.len(), rows)?, row_normalize)
}

/// `M x = (I − W′)ᵀ((I − W′) x)`.
pub fn apply_m(weights: &CombinedWeights, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: x.len(),
        });
    }
    Ok(apply_unchecked(weights, x))
}

fn apply_unchecked(weights: &CombinedWeights, x: &[f64]) -> Vec<f64> {
    let wx = weights.rows.mul_vec(x);
    let y: Vec<f64> = x.iter().zip(&wx).map(|(a, b)| a - b).collect();
    let wty = weights.transposed.mul_vec(&y);
    y.iter().zip(&wty).map(|(a, b)| a - b).collect()
}

impl SymmetricOperator for CombinedWeights {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        apply_unchecked(self, x)
    }
}

/// The `count` smallest eigenpairs of `M`, ascending.
pub fn smallest_eigenpairs(
    weights: &CombinedWeights,
    count: usize,
    config: &EigenConfig,
) -> Result<EigenPairs> {
    if count >= weights.len() {
        return Err(Error::InvalidArgument(format!(
            "need fewer than {} eigenpairs, asked for {count}",
            weights.len()
        )));
    }
    let pairs = eigen::extreme_eigenpairs(weights, count, Which::Smallest, config)?;
    let worst = pairs
        .residuals
        .iter()
        .zip(&pairs.values)
        .map(|(r, l)| r / l.abs().max(1.0))
        .fold(0.0, f64::max);
    if worst > config.tol {
        return Err(Error::NoConvergence {
            max_residual: worst,
            restarts: config.max_restarts,
        });
    }
    Ok(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Lle,
    Conc,
    Svd,
    /// A single source or an externally produced embedding.
    Source,
}

/// Dense meta-embedding over the union vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaEmbedding {
    pub vocab: Vocabulary,
    dim: usize,
    vectors: Vec<f64>,
    pub provenance: Provenance,
}

impl MetaEmbedding {
    pub fn new(vocab: Vocabulary, dim: usize, vectors: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if vectors.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: vectors.len(),
            });
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("meta-embedding contains non-finite values".into()));
        }
        Ok(MetaEmbedding {
            vocab,
            dim,
            vectors,
            provenance,
        })
    }

    /// Builds an embedding from column vectors of length `vocab.len()`.
    pub fn from_columns(vocab: Vocabulary, columns: &[Vec<f64>], provenance: Provenance) -> Result<Self> {
        let n = vocab.len();
        let dim = columns.len();
        let mut vectors = vec![0.0; n * dim];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            for (i, x) in col.iter().enumerate() {
                vectors[i * dim + j] = *x;
            }
        }
        Self::new(vocab, dim, vectors, provenance)
    }

    pub fn from_set(set: &EmbeddingSet) -> Self {
        MetaEmbedding {
            vocab: set.vocab().clone(),
            dim: set.dim(),
            vectors: set.vectors().iter().map(|&x| f64::from(x)).collect(),
            provenance: Provenance::Source,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab.lookup(word).map(|i| self.row(i))
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.vectors[i * self.dim + j]).collect()
    }

    /// Single-precision copy in the on-disk table layout.
    pub fn to_set(&self, name: &str) -> Result<EmbeddingSet> {
        EmbeddingSet::new(
            name,
            self.dim,
            self.vocab.clone(),
            self.vectors.iter().map(|&x| x as f32).collect(),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        let name = format!("{:?}", self.provenance).to_lowercase();
        embio::save_embeddings(&self.to_set(&name)?, path, format)
    }

    pub fn load(path: impl AsRef<Path>, format: Format) -> Result<Self> {
        Ok(Self::from_set(&embio::load_embeddings(path, format)?))
    }
}

/// Result of the spectral projection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub embedding: MetaEmbedding,
    /// All `d_P + 1` eigenvalues, ascending; the first is discarded.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl Projection {
    pub fn retained_eigenvalue_sum(&self) -> f64 {
        self.eigenvalues[1..].iter().sum()
    }
}

/// Meta-embedding from the `d_P + 1` smallest eigenvectors of `M`, bottom
/// one discarded; row `v` holds the coordinates of word `v`.
pub fn project(
    weights: &CombinedWeights,
    vocab: &Vocabulary,
    dim: usize,
    config: &EigenConfig,
) -> Result<Projection> {
    if vocab.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: vocab.len(),
        });
    }
    if dim == 0 || dim + 1 > weights.len() {
        return Err(Error::InvalidArgument(format!(
            "projection dimension {dim} needs 1 ≤ d_P < n = {}",
            weights.len()
        )));
    }
    let pairs = smallest_eigenpairs(weights, dim + 1, config)?;
    let embedding = MetaEmbedding::from_columns(vocab.clone(), &pairs.vectors[1..], Provenance::Lle)?;
    Ok(Projection {
        embedding,
        eigenvalues: pairs.values,
        residuals: pairs.residuals,
    })
}

/// Ψ = Σ_v ‖v⁽ᴾ⁾ − Σ_u w′_vu u⁽ᴾ⁾‖².
pub fn projection_cost(embedding: &MetaEmbedding, weights: &CombinedWeights) -> Result<f64> {
    if embedding.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: embedding.len(),
        });
    }
    let d = embedding.dim();
    let mut total = 0.0;
    for v in 0..embedding.len() {
        let mut r = embedding.row(v).to_vec();
        let (cols, vals) = weights.rows.row(v);
        for (&u, &w) in cols.iter().zip(vals) {
            let pu = embedding.row(u as usize);
            for k in 0..d {
                r[k] -= w * pu[k];
            }
        }
        total += r.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total)
}
