//! Concatenation and truncated-SVD meta-embedding baselines.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embio::{AlignedSources, Vocabulary};
use crate::error::{Error, Result};
use crate::neighbours::NeighbourhoodGraph;
use crate::project::eigen::{self, EigenConfig, EigenMethod, SymmetricOperator, Which};
use crate::project::{MetaEmbedding, Provenance};
use crate::recon::SparseWeights;

/// Emphasis factor for designated high-quality sources.
pub const DEFAULT_EMPHASIS: f64 = 8.0;
pub const DEFAULT_SVD_DIM: usize = 300;
/// Singular values below this fraction of the largest are flagged.
pub const SINGULAR_TOL: f64 = 1e-8;
/// Widest concatenation whose Gram matrix is diagonalised densely.
pub const DENSE_GRAM_LIMIT: usize = 2000;
const GRAM_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VocabPolicy {
    /// Keep only words covered by every source.
    #[default]
    Intersection,
    /// Keep the union; missing blocks are zero.
    UnionZeroFill,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcConfig {
    pub scales: Vec<f64>,
    pub policy: VocabPolicy,
}

impl ConcConfig {
    pub fn uniform(num_sources: usize) -> Self {
        ConcConfig {
            scales: vec![1.0; num_sources],
            policy: VocabPolicy::Intersection,
        }
    }

    /// Scale 1 everywhere except the named sources, which get `factor`.
    pub fn with_emphasis(names: &[&str], emphasized: &[&str], factor: f64) -> Self {
        ConcConfig {
            scales: names
                .iter()
                .map(|n| if emphasized.contains(n) { factor } else { 1.0 })
                .collect(),
            policy: VocabPolicy::Intersection,
        }
    }

    fn validate(&self, num_sources: usize) -> Result<()> {
        if self.scales.len() != num_sources {
            return Err(Error::DimensionMismatch {
                expected: num_sources,
                found: self.scales.len(),
            });
        }
        if self.scales.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidArgument("CONC scale factors must be positive".into()));
        }
        Ok(())
    }
}

fn unit_block(row: &[f64], scale: f64, out: &mut [f64]) {
    let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    let factor = if norm > 0.0 { scale / norm } else { 0.0 };
    for (o, x) in out.iter_mut().zip(row) {
        *o = x * factor;
    }
}

/// Row `v` of the concatenation: scaled unit blocks, zero where uncovered.
fn concat_row(sources: &AlignedSources, scales: &[f64], v: usize, out: &mut [f64]) {
    let mut offset = 0;
    for (s, table) in sources.sources.iter().enumerate() {
        let block = &mut out[offset..offset + table.dim];
        match sources.vector(s, v) {
            Some(row) => unit_block(row, scales[s], block),
            None => block.iter_mut().for_each(|x| *x = 0.0),
        }
        offset += table.dim;
    }
}

/// CONC: per word, the concatenation of `scale_i · v⁽ⁱ⁾ / ‖v⁽ⁱ⁾‖` in source order.
pub fn concat(sources: &AlignedSources, config: &ConcConfig) -> Result<MetaEmbedding> {
    if sources.num_sources() < 2 {
        return Err(Error::InvalidArgument("concatenation needs at least two sources".into()));
    }
    config.validate(sources.num_sources())?;
    let words: Vec<usize> = match config.policy {
        VocabPolicy::UnionZeroFill => (0..sources.len()).collect(),
        VocabPolicy::Intersection => (0..sources.len())
            .filter(|&v| sources.membership.coverage_count(v) == sources.num_sources())
            .collect(),
    };
    if words.is_empty() {
        return Err(Error::EmptyInput("vocabulary intersection of the CONC sources".into()));
    }
    let dim: usize = sources.sources.iter().map(|t| t.dim).sum();
    let mut vectors = vec![0.0; words.len() * dim];
    vectors
        .par_chunks_mut(dim)
        .zip(&words)
        .for_each(|(row, &v)| concat_row(sources, &config.scales, v, row));
    let (vocab, _) = Vocabulary::from_words(words.iter().map(|&v| sources.vocab.word(v)));
    MetaEmbedding::new(vocab, dim, vectors, Provenance::Conc)
}

#[derive(Clone, Debug)]
pub struct SvdMeta {
    pub embedding: MetaEmbedding,
    /// Top `d` singular values of the concatenation matrix, descending.
    pub singular_values: Vec<f64>,
    /// Trailing columns whose singular value fell below tolerance; they are
    /// left at zero.
    pub rank_deficient: usize,
}

/// Gram operator `Cᵀ C` of the zero-filled concatenation.
struct GramOperator<'a> {
    c: &'a [f64],
    rows: usize,
    cols: usize,
}

impl SymmetricOperator for GramOperator<'_> {
    fn dim(&self) -> usize {
        self.cols
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let cx: Vec<f64> = self
            .c
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        let partials: Vec<Vec<f64>> = self
            .c
            .par_chunks(self.cols * GRAM_CHUNK)
            .zip(cx.par_chunks(GRAM_CHUNK))
            .map(|(block, cxs)| {
                let mut acc = vec![0.0; self.cols];
                for (row, &s) in block.chunks(self.cols).zip(cxs) {
                    for (a, r) in acc.iter_mut().zip(row) {
                        *a += r * s;
                    }
                }
                acc
            })
            .collect();
        let _ = self.rows;
        sum_partials(partials, self.cols)
    }
}

fn sum_partials(partials: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    partials.into_iter().fold(vec![0.0; width], |mut acc, p| {
        acc.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        acc
    })
}

/// Dense `Cᵀ C`, accumulated over fixed row blocks so the summation order
/// does not depend on the number of threads.
fn gram(c: &[f64], cols: usize) -> DMatrix<f64> {
    let partials: Vec<Vec<f64>> = c
        .par_chunks(cols * GRAM_CHUNK)
        .map(|block| {
            let mut acc = vec![0.0; cols * cols];
            for row in block.chunks(cols) {
                for (i, &ri) in row.iter().enumerate() {
                    if ri == 0.0 {
                        continue;
                    }
                    let dst = &mut acc[i * cols..(i + 1) * cols];
                    for (d, &rj) in dst[i..].iter_mut().zip(&row[i..]) {
                        *d += ri * rj;
                    }
                }
            }
            acc
        })
        .collect();
    let upper = sum_partials(partials, cols * cols);
    DMatrix::from_fn(cols, cols, |i, j| {
        if i <= j {
            upper[i * cols + j]
        } else {
            upper[j * cols + i]
        }
    })
}

/// SVD baseline: the `d` leading left singular vectors of the union
/// zero-filled concatenation matrix `C` (singular values are not applied).
/// With `apply_scaling` false every block gets scale 1.
pub fn svd_meta(
    sources: &AlignedSources,
    d: usize,
    conc: &ConcConfig,
    apply_scaling: bool,
    eigen_config: &EigenConfig,
) -> Result<SvdMeta> {
    conc.validate(sources.num_sources())?;
    let cols: usize = sources.sources.iter().map(|t| t.dim).sum();
    let n = sources.len();
    if d == 0 || d > cols || d > n {
        return Err(Error::InvalidArgument(format!(
            "SVD dimension {d} must be in 1..={}",
            cols.min(n)
        )));
    }
    let scales = if apply_scaling {
        conc.scales.clone()
    } else {
        vec![1.0; sources.num_sources()]
    };
    let mut c = vec![0.0; n * cols];
    c.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(v, row)| concat_row(sources, &scales, v, row));

    let (values, vectors): (Vec<f64>, Vec<Vec<f64>>) = if cols <= DENSE_GRAM_LIMIT {
        let eig = SymmetricEigen::new(gram(&c, cols));
        let mut order: Vec<usize> = (0..cols).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        order[..d]
            .iter()
            .map(|&i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
            .unzip()
    } else {
        let op = GramOperator { c: &c, rows: n, cols };
        let cfg = EigenConfig {
            method: EigenMethod::Iterative,
            ..eigen_config.clone()
        };
        let pairs = eigen::extreme_eigenpairs(&op, d, Which::Largest, &cfg)?;
        (pairs.values, pairs.vectors)
    };

    let singular_values: Vec<f64> = values.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let cutoff = SINGULAR_TOL * singular_values.first().copied().unwrap_or(0.0);
    let mut rank_deficient = 0;
    let mut columns = Vec::with_capacity(d);
    for (sigma, v) in singular_values.iter().zip(&vectors) {
        if *sigma <= cutoff || *sigma == 0.0 {
            rank_deficient += 1;
            columns.push(vec![0.0; n]);
            continue;
        }
        let u: Vec<f64> = c
            .par_chunks(cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / sigma)
            .collect();
        columns.push(u);
    }
    eigen::fix_signs(&mut columns);
    if rank_deficient > 0 {
        log::warn!("SVD baseline: {rank_deficient} of {d} singular values below tolerance");
    }
    let embedding = MetaEmbedding::from_columns(sources.vocab.clone(), &columns, Provenance::Svd)?;
    Ok(SvdMeta {
        embedding,
        singular_values,
        rank_deficient,
    })
}

/// Reconstruction error in the concatenated space,
/// `Σ_v ‖x_v − Σ_{u ∈ N(v)} w_vu y_u‖²`, where `x_v` stacks the (unscaled)
/// source vectors of `v` and `N(v)` is the neighbourhood shared by all
/// sources. Only words covered by every source are summed.
pub fn concat_reconstruction_error(
    weights: &SparseWeights,
    sources: &AlignedSources,
    graph: &NeighbourhoodGraph,
) -> Result<f64> {
    let m = sources.num_sources();
    let mut total = 0.0;
    for v in 0..sources.len() {
        if sources.membership.coverage_count(v) != m {
            continue;
        }
        let common = graph.neighbours(0, v).unwrap_or(&[]);
        let mut sorted: Vec<u32> = common.to_vec();
        sorted.sort_unstable();
        for s in 1..m {
            let mut other = graph.neighbours(s, v).unwrap_or(&[]).to_vec();
            other.sort_unstable();
            if other != sorted {
                return Err(Error::InvalidArgument(format!(
                    "word {} has different neighbourhoods across sources",
                    sources.vocab.word(v)
                )));
            }
        }
        let x: Vec<f64> = (0..m).flat_map(|s| sources.vector(s, v).unwrap().to_vec()).collect();
        let mut r = x;
        for &u in common {
            let u = u as usize;
            let w = weights.get(v, u);
            let y = (0..m).flat_map(|s| sources.vector(s, u).unwrap().iter().copied());
            for (ri, yi) in r.iter_mut().zip(y) {
                *ri -= w * yi;
            }
        }
        total += r.iter().map(|a| a * a).sum::<f64>();
    }
    Ok(total)
}
