//! Reconstruction weights.
//!
//! Every word `v` is reconstructed in each source `i` that covers it from
//! its neighbours `N_i(v)`, with one weight `w_vu` shared across sources for
//! each `u` in the union neighbourhood:
//!
//! ```text
//! Φ(W) = Σ_i Σ_v ‖ v⁽ⁱ⁾ − Σ_{u ∈ N_i(v)} w_vu u⁽ⁱ⁾ ‖²
//! ```
//!
//! The objective separates over words, so each row of `W` is solved
//! independently. Two solvers are provided: AdaGrad gradient descent followed
//! by row normalisation, and an exact equality-constrained least-squares
//! solve used as the reference optimum.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embio::{read_f64, read_u32, read_u64, AlignedSources, Vocabulary};
use crate::error::{Error, Result};
use crate::neighbours::NeighbourhoodGraph;
use crate::rng::substream;
use crate::sparse::SparseRows;

pub const WEIGHTS_MAGIC: &[u8; 8] = b"METAWGT\0";
pub const WEIGHTS_VERSION: u32 = 1;
/// Largest union neighbourhood the exact solver accepts.
pub const EXACT_MAX_NEIGHBOURS: usize = 5000;
pub const ROW_SUM_TOL: f64 = 1e-10;

/// How the sum-to-one constraint is enforced by the gradient solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// Unconstrained descent, rows rescaled to sum to one at the end.
    #[default]
    NormaliseAfter,
    /// Iterates start on the constraint plane and every step is projected
    /// onto it; the final rescaling is then a no-op up to rounding.
    Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub adagrad_epsilon: f64,
    pub seed: u64,
    /// Stop when the relative change of a word's error falls below this.
    pub tolerance: f64,
    pub constraint: Constraint,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            learning_rate: 0.01,
            max_iters: 100,
            adagrad_epsilon: 1e-8,
            seed: 0,
            tolerance: 1e-7,
            constraint: Constraint::NormaliseAfter,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and max_iters ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Row-sparse reconstruction weights over the union vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseWeights(pub SparseRows);

impl SparseWeights {
    /// Weights with the support of the union neighbourhoods and the given
    /// value everywhere.
    pub fn constant(graph: &NeighbourhoodGraph, value: f64) -> Self {
        let rows = (0..graph.len())
            .map(|v| {
                graph
                    .union_neighbourhood(v)
                    .into_iter()
                    .map(|(u, _)| (u, value))
                    .collect()
            })
            .collect();
        SparseWeights(SparseRows::from_rows(graph.len(), rows).expect("sorted union support"))
    }

    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        SparseRows::from_rows(n, rows).map(SparseWeights)
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn get(&self, v: usize, u: usize) -> f64 {
        self.0.get(v, u)
    }

    pub fn rows(&self) -> &SparseRows {
        &self.0
    }

    /// Largest deviation of a non-empty row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.0
            .rows()
            .filter(|(c, _)| !c.is_empty())
            .map(|(_, vals)| (vals.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(WEIGHTS_MAGIC)?;
        out.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for (cols, vals) in self.0.rows() {
            out.write_all(&(cols.len() as u32).to_le_bytes())?;
            for (c, v) in cols.iter().zip(vals) {
                out.write_all(&c.to_le_bytes())?;
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read<R: Read>(mut input: R, origin: &Path) -> Result<Self> {
        let io = |e| Error::io(origin, e);
        let mut magic = [0u8; 8];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::CacheVersion(format!("{}: truncated header", origin.display())))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::CacheVersion(format!("{}: not a weights file", origin.display())));
        }
        let version = read_u32(&mut input).map_err(io)?;
        if version != WEIGHTS_VERSION {
            return Err(Error::CacheVersion(format!(
                "{}: weights version {version}, expected {WEIGHTS_VERSION}",
                origin.display()
            )));
        }
        let n = read_u64(&mut input).map_err(io)? as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(&mut input).map_err(io)? as usize;
            let mut row = Vec::with_capacity(len);
            for _ in 0..len {
                let c = read_u32(&mut input).map_err(io)? as usize;
                row.push((c, read_f64(&mut input).map_err(io)?));
            }
            rows.push(row);
        }
        Self::from_rows(n, rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::pipeline::cache::write_atomic(path.as_ref(), |w| self.write(w))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    /// Text triples `word neighbour weight`, one per line.
    pub fn write_text<W: Write>(&self, vocab: &Vocabulary, mut out: W) -> std::io::Result<()> {
        for (v, (cols, vals)) in self.0.rows().enumerate() {
            for (&u, w) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {w:e}", vocab.word(v), vocab.word(u as usize))?;
            }
        }
        out.flush()
    }

    pub fn save_text(&self, vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(vocab, BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// Row `v` of the least-squares problem: the union neighbourhood and, per
/// covering source, the target vector and the neighbours' positions in it.
struct WordProblem<'a> {
    support: Vec<usize>,
    terms: Vec<Term<'a>>,
}

struct Term<'a> {
    target: &'a [f64],
    neighbours: Vec<(usize, &'a [f64])>,
}

impl<'a> WordProblem<'a> {
    fn new(sources: &'a AlignedSources, graph: &NeighbourhoodGraph, v: usize) -> Self {
        let support: Vec<usize> = graph.union_neighbourhood(v).into_iter().map(|(u, _)| u).collect();
        let terms = (0..graph.num_sources())
            .filter_map(|s| {
                let list = graph.neighbours(s, v)?;
                let target = sources.vector(s, v)?;
                let neighbours = list
                    .iter()
                    .map(|&u| {
                        let u = u as usize;
                        let pos = support.binary_search(&u).expect("u in union neighbourhood");
                        (pos, sources.vector(s, u).expect("neighbour covered by its source"))
                    })
                    .collect();
                Some(Term { target, neighbours })
            })
            .collect();
        WordProblem { support, terms }
    }

    fn residual(term: &Term<'_>, w: &[f64]) -> Vec<f64> {
        let mut r = term.target.to_vec();
        for &(pos, u) in &term.neighbours {
            let wu = w[pos];
            for (ri, ui) in r.iter_mut().zip(u) {
                *ri -= wu * ui;
            }
        }
        r
    }

    fn error(&self, w: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| Self::residual(t, w).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// Error and its gradient with respect to every support weight.
    fn error_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut err = 0.0;
        for t in &self.terms {
            let r = Self::residual(t, w);
            err += r.iter().map(|x| x * x).sum::<f64>();
            for &(pos, u) in &t.neighbours {
                grad[pos] -= 2.0 * dot(&r, u);
            }
        }
        err
    }

    /// Normal equations `H w = c` of the unconstrained problem.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.support.len();
        let mut h = DMatrix::zeros(m, m);
        let mut c = DVector::zeros(m);
        for t in &self.terms {
            for (a, &(pa, ua)) in t.neighbours.iter().enumerate() {
                c[pa] += dot(t.target, ua);
                for &(pb, ub) in &t.neighbours[a..] {
                    let g = dot(ua, ub);
                    h[(pa, pb)] += g;
                    if pa != pb {
                        h[(pb, pa)] += g;
                    }
                }
            }
        }
        (h, c)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Values of row `v` of `w` aligned with the sorted union neighbourhood.
fn row_values(w: &SparseWeights, support: &[usize], v: usize) -> Vec<f64> {
    support.iter().map(|&u| w.get(v, u)).collect()
}

fn check_shape(w: &SparseWeights, sources: &AlignedSources, graph: &NeighbourhoodGraph) -> Result<()> {
    if w.len() != graph.len() || sources.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            found: w.len().min(sources.len()),
        });
    }
    if graph.num_sources() != sources.num_sources() {
        return Err(Error::DimensionMismatch {
            expected: sources.num_sources(),
            found: graph.num_sources(),
        });
    }
    Ok(())
}

/// Φ(W) summed over all words and the sources covering them. Weights
/// outside each word's union neighbourhood are ignored.
pub fn reconstruction_error(
    w: &SparseWeights,
    sources: &AlignedSources,
    graph: &NeighbourhoodGraph,
) -> Result<f64> {
    check_shape(w, sources, graph)?;
    let per_word: Vec<f64> = (0..graph.len())
        .into_par_iter()
        .map(|v| {
            let problem = WordProblem::new(sources, graph, v);
            problem.error(&row_values(w, &problem.support, v))
        })
        .collect();
    Ok(per_word.iter().sum())
}

/// ∂Φ/∂w_vu = −2 Σ_i (v⁽ⁱ⁾ − Σ_{x∈N_i(v)} w_vx x⁽ⁱ⁾)ᵀ u⁽ⁱ⁾ 𝕀[u ∈ N_i(v)].
pub fn error_gradient(
    w: &SparseWeights,
    sources: &AlignedSources,
    graph: &NeighbourhoodGraph,
    v: usize,
    u: usize,
) -> Result<f64> {
    check_shape(w, sources, graph)?;
    let problem = WordProblem::new(sources, graph, v);
    let pos = problem
        .support
        .binary_search(&u)
        .map_err(|_| Error::NotANeighbour { word: v, neighbour: u })?;
    let mut grad = vec![0.0; problem.support.len()];
    problem.error_and_gradient(&row_values(w, &problem.support, v), &mut grad);
    Ok(grad[pos])
}

/// Per-run diagnostics of the gradient solver.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SgdStats {
    pub words: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    /// Words whose error rose by more than 1e-9 between consecutive epochs
    /// after the tenth epoch.
    pub divergent_words: usize,
}

impl SgdStats {
    pub fn mean_iterations(&self) -> f64 {
        if self.words == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.words as f64
        }
    }
}

struct RowFit {
    values: Vec<f64>,
    iterations: usize,
    diverged: bool,
}

fn normalise_row(values: &mut [f64]) {
    let sum: f64 = values.iter().sum();
    if sum.abs() > f64::EPSILON * values.iter().map(|x| x.abs()).sum::<f64>().max(1e-300) {
        values.iter_mut().for_each(|x| *x /= sum);
    } else {
        let uniform = 1.0 / values.len() as f64;
        values.iter_mut().for_each(|x| *x = uniform);
    }
}

fn sgd_row(
    problem: &WordProblem<'_>,
    word: &str,
    v: usize,
    config: &SolverConfig,
) -> Result<RowFit> {
    let m = problem.support.len();
    if m == 0 {
        return Ok(RowFit {
            values: Vec::new(),
            iterations: 0,
            diverged: false,
        });
    }
    let mut rng = substream(config.seed, "recon-init", v as u64);
    let mut w: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    if config.constraint == Constraint::Projected {
        normalise_row(&mut w);
    }
    let mut accum = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut step = vec![0.0; m];
    let mut prev = problem.error(&w);
    let mut iterations = 0;
    let mut diverged = false;
    for epoch in 1..=config.max_iters {
        problem.error_and_gradient(&w, &mut grad);
        if config.constraint == Constraint::Projected {
            let mean = grad.iter().sum::<f64>() / m as f64;
            grad.iter_mut().for_each(|g| *g -= mean);
        }
        for p in 0..m {
            accum[p] += grad[p] * grad[p];
            step[p] = config.learning_rate * grad[p] / (accum[p].sqrt() + config.adagrad_epsilon);
        }
        if config.constraint == Constraint::Projected {
            let mean = step.iter().sum::<f64>() / m as f64;
            step.iter_mut().for_each(|s| *s -= mean);
        }
        for p in 0..m {
            w[p] -= step[p];
        }
        let cur = problem.error(&w);
        iterations = epoch;
        if !cur.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { word: word.to_string() });
        }
        if epoch > 10 && cur > prev + 1e-9 {
            diverged = true;
        }
        let change = (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = cur;
        if change < config.tolerance {
            break;
        }
    }
    normalise_row(&mut w);
    Ok(RowFit {
        values: w,
        iterations,
        diverged,
    })
}

/// Fits each row by AdaGrad gradient descent from a uniform random start,
/// then rescales rows to sum to one.
pub fn fit_weights_sgd(
    sources: &AlignedSources,
    graph: &NeighbourhoodGraph,
    config: &SolverConfig,
) -> Result<SparseWeights> {
    fit_weights_sgd_with_stats(sources, graph, config).map(|(w, _)| w)
}

pub fn fit_weights_sgd_with_stats(
    sources: &AlignedSources,
    graph: &NeighbourhoodGraph,
    config: &SolverConfig,
) -> Result<(SparseWeights, SgdStats)> {
    config.validate()?;
    check_shape(&SparseWeights(SparseRows::zeros(graph.len(), graph.len())), sources, graph)?;
    let fits: Vec<(Vec<usize>, RowFit)> = (0..graph.len())
        .into_par_iter()
        .map(|v| {
            let problem = WordProblem::new(sources, graph, v);
            let fit = sgd_row(&problem, sources.vocab.word(v), v, config)?;
            Ok((problem.support, fit))
        })
        .collect::<Result<_>>()?;
    let mut stats = SgdStats {
        words: fits.len(),
        ..SgdStats::default()
    };
    let rows = fits
        .into_iter()
        .map(|(support, fit)| {
            stats.total_iterations += fit.iterations;
            stats.max_iterations = stats.max_iterations.max(fit.iterations);
            stats.divergent_words += usize::from(fit.diverged);
            support.into_iter().zip(fit.values).collect()
        })
        .collect();
    if stats.divergent_words > 0 {
        log::warn!("{} word(s) showed rising reconstruction error late in descent", stats.divergent_words);
    }
    Ok((SparseWeights::from_rows(graph.len(), rows)?, stats))
}

fn exact_row(problem: &WordProblem<'_>, word: &str) -> Result<Vec<f64>> {
    let m = problem.support.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    if m > EXACT_MAX_NEIGHBOURS {
        return Err(Error::InvalidArgument(format!(
            "word {word:?} has {m} neighbours; the exact solver accepts at most {EXACT_MAX_NEIGHBOURS}"
        )));
    }
    let (mut h, c) = problem.normal_equations();
    let trace = h.trace();
    let lambda = if trace > 0.0 { 1e-8 * trace / m as f64 } else { 1e-8 };
    for i in 0..m {
        h[(i, i)] += lambda;
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Singular { word: word.to_string() })?;
    let a = chol.solve(&c);
    let b = chol.solve(&DVector::from_element(m, 1.0));
    let denom = b.sum();
    if !denom.is_finite() || denom == 0.0 {
        return Err(Error::Singular { word: word.to_string() });
    }
    let mu = (1.0 - a.sum()) / denom;
    let mut w: Vec<f64> = (0..m).map(|i| a[i] + mu * b[i]).collect();
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular { word: word.to_string() });
    }
    normalise_row(&mut w);
    Ok(w)
}

/// Minimises each row's error subject to `Σ_u w_vu = 1` through the
/// Lagrange system of the (Tikhonov-regularised) normal equations.
pub fn fit_weights_exact(sources: &AlignedSources, graph: &NeighbourhoodGraph) -> Result<SparseWeights> {
    check_shape(&SparseWeights(SparseRows::zeros(graph.len(), graph.len())), sources, graph)?;
    let rows = (0..graph.len())
        .into_par_iter()
        .map(|v| {
            let problem = WordProblem::new(sources, graph, v);
            let w = exact_row(&problem, sources.vocab.word(v))?;
            Ok(problem.support.into_iter().zip(w).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    SparseWeights::from_rows(graph.len(), rows)
}
