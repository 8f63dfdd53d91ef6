//! Synthetic sources drawn from a shared latent space, and a neighbourhood
//! overlap score against that latent space.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embio::{EmbeddingSet, Vocabulary};
use crate::error::{Error, Result};
use crate::project::MetaEmbedding;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub dim: usize,
    pub noise: f64,
    pub coverage: f64,
}

pub fn synthetic_word(i: usize) -> String {
    format!("w{i:06}")
}

/// `rows × cols` matrix with orthonormal rows when `rows ≤ cols`, otherwise
/// orthonormal columns.
fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::from_fn(tall, short, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    if rows <= cols {
        q.transpose()
    } else {
        q
    }
}

/// Latent `Z` with standard normal entries and sources `Z·Aᵢ + ε`, where
/// `Aᵢ` has orthonormal rows and `ε ~ N(0, σᵢ²)`. Each source keeps a random
/// `coverageᵢ` fraction of the words; a word dropped by every source is
/// returned to the source with the highest coverage.
pub fn make_synthetic(
    n: usize,
    latent_dim: usize,
    specs: &[SourceSpec],
    seed: u64,
) -> Result<(EmbeddingSet, Vec<EmbeddingSet>)> {
    if n == 0 || latent_dim == 0 || specs.is_empty() {
        return Err(Error::InvalidArgument("synthetic instance needs n, latent_dim and sources".into()));
    }
    for s in specs {
        if !(s.coverage > 0.0 && s.coverage <= 1.0) || s.noise.is_nan() || s.noise < 0.0 || s.dim == 0 {
            return Err(Error::InvalidArgument(format!("invalid synthetic source spec {s:?}")));
        }
    }
    let mut zr = rng::substream(seed, "synthetic-latent", 0);
    let z: Vec<f64> = (0..n * latent_dim).map(|_| zr.sample(StandardNormal)).collect();

    let mut covered: Vec<Vec<bool>> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::substream(seed, "synthetic-coverage", i as u64);
            let keep = ((s.coverage * n as f64).round() as usize).clamp(1, n);
            let mut mask = vec![false; n];
            for w in index::sample(&mut r, n, keep) {
                mask[w] = true;
            }
            mask
        })
        .collect();
    let widest = (0..specs.len())
        .max_by(|&a, &b| specs[a].coverage.total_cmp(&specs[b].coverage).then(b.cmp(&a)))
        .unwrap_or(0);
    for w in 0..n {
        if !covered.iter().any(|m| m[w]) {
            covered[widest][w] = true;
        }
    }

    let latent = EmbeddingSet::new(
        "latent",
        latent_dim,
        Vocabulary::from_words((0..n).map(synthetic_word)).0,
        z.iter().map(|&x| x as f32).collect(),
    )?;
    let mut sources = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let a = random_orthonormal(latent_dim, spec.dim, &mut rng::substream(seed, "synthetic-map", i as u64));
        let mut noise = rng::substream(seed, "synthetic-noise", i as u64);
        let words: Vec<usize> = (0..n).filter(|&w| covered[i][w]).collect();
        let mut data = Vec::with_capacity(words.len() * spec.dim);
        for &w in &words {
            let zw = &z[w * latent_dim..(w + 1) * latent_dim];
            for j in 0..spec.dim {
                let clean: f64 = (0..latent_dim).map(|l| zw[l] * a[(l, j)]).sum();
                let eps: f64 = noise.sample(StandardNormal);
                data.push((clean + spec.noise * eps) as f32);
            }
        }
        let vocab = Vocabulary::from_words(words.iter().map(|&w| synthetic_word(w))).0;
        sources.push(EmbeddingSet::new(format!("src{i}"), spec.dim, vocab, data)?);
    }
    Ok((latent, sources))
}

fn unit_rows(emb: &MetaEmbedding, ids: &[usize]) -> Vec<Vec<f64>> {
    ids.iter()
        .map(|&i| {
            let r = emb.row(i);
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| if n > 0.0 { x / n } else { 0.0 }).collect()
        })
        .collect()
}

/// Cosine `k`-NN of every row among `rows`, self excluded, ties by index.
fn cosine_knn(rows: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let mut sims: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum(), j))
                .collect();
            let k = k.min(sims.len());
            let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if k < sims.len() {
                sims.select_nth_unstable_by(k, cmp);
                sims.truncate(k);
            }
            sims.sort_by(cmp);
            sims.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Mean fraction of each word's cosine `k`-NN in `emb` that are also among
/// its `k`-NN in `latent`. Both neighbourhoods are searched within the
/// vocabulary of `emb`, which must be contained in that of `latent`.
pub fn neighbour_overlap(emb: &MetaEmbedding, latent: &MetaEmbedding, k: usize) -> Result<f64> {
    if emb.len() <= k || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "overlap@{k} needs more than {k} words, found {}",
            emb.len()
        )));
    }
    let latent_ids = emb
        .vocab
        .words()
        .iter()
        .map(|w| latent.vocab.lookup(w).ok_or_else(|| Error::OutOfVocabulary { word: w.clone() }))
        .collect::<Result<Vec<usize>>>()?;
    let own: Vec<usize> = (0..emb.len()).collect();
    let a = cosine_knn(&unit_rows(emb, &own), k);
    let b = cosine_knn(&unit_rows(latent, &latent_ids), k);
    let total: usize = a
        .iter()
        .zip(&b)
        .map(|(x, y)| x.iter().filter(|i| y.contains(i)).count())
        .sum();
    Ok(total as f64 / (k * emb.len()) as f64)
}
