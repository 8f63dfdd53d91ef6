//! Extreme eigenpairs of symmetric operators that are only available through
//! matrix-vector products.
//!
//! The iterative path is a thick-restart Lanczos method with full
//! reorthogonalisation: the projected matrix is formed explicitly from the
//! inner products of each new operator image against the whole basis, Ritz
//! pairs are extracted with a small dense eigensolve, and on restart the
//! wanted Ritz vectors are kept together with the normalised residual. When
//! the Krylov space becomes invariant a random vector orthogonal to the basis
//! is injected, which is what lets repeated eigenvalues be resolved.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

/// Size limit on the Krylov basis, in bytes.
const BASIS_MEMORY_BUDGET: usize = 2 << 30;

pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

/// Dense row-major symmetric matrix as an operator.
pub struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl DenseOperator {
    pub fn new(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        DenseOperator { n, data }
    }
}

impl SymmetricOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .par_chunks(self.n)
            .map(|row| dot(row, x))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    /// Dense below `dense_threshold`, iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub method: EigenMethod,
    /// Residual bound: ‖Ax − λx‖ ≤ tol · max(1, |λ|).
    pub tol: f64,
    /// Basis size per restart cycle; `None` picks `min(n, 50·count)`
    /// subject to the basis memory budget.
    pub krylov_dim: Option<usize>,
    pub max_restarts: usize,
    pub dense_threshold: usize,
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            method: EigenMethod::Auto,
            tol: 1e-8,
            krylov_dim: None,
            max_restarts: 30,
            dense_threshold: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenPairs {
    /// Ordered ascending for `Smallest`, descending for `Largest`.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual_norm(op: &dyn SymmetricOperator, x: &[f64], lambda: f64) -> f64 {
    let ax = op.apply(x);
    ax.iter()
        .zip(x)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Flips each vector so its largest-magnitude entry is positive.
pub fn fix_signs(vectors: &mut [Vec<f64>]) {
    for v in vectors {
        let pivot = v
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `count` extreme eigenpairs of `op`.
pub fn extreme_eigenpairs(
    op: &dyn SymmetricOperator,
    count: usize,
    which: Which,
    config: &EigenConfig,
) -> Result<EigenPairs> {
    let n = op.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "requested {count} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let dense = match config.method {
        EigenMethod::Dense => true,
        EigenMethod::Iterative => false,
        EigenMethod::Auto => n <= config.dense_threshold,
    };
    let mut pairs = if dense {
        dense_eigenpairs(op, count, which)
    } else {
        lanczos(op, count, which, config)?
    };
    fix_signs(&mut pairs.vectors);
    pairs.residuals = pairs
        .vectors
        .iter()
        .zip(&pairs.values)
        .map(|(x, &l)| residual_norm(op, x, l))
        .collect();
    Ok(pairs)
}

/// Materialises the operator column by column and diagonalises it.
pub fn dense_eigenpairs(op: &dyn SymmetricOperator, count: usize, which: Which) -> EigenPairs {
    let n = op.dim();
    let columns: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            op.apply(&e)
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (columns[j][i] + columns[i][j]));
    let eig = SymmetricEigen::new(m);
    let order = ordered(eig.eigenvalues.as_slice(), which);
    let values = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..count]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    EigenPairs {
        values,
        vectors,
        residuals: Vec::new(),
    }
}

fn ordered(values: &[f64], which: Which) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    match which {
        Which::Smallest => idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b))),
        Which::Largest => idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b))),
    }
    idx
}

/// Orthogonalises `w` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalisation) and returns the accumulated coefficients.
fn orthogonalise(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let h: Vec<f64> = basis.par_iter().map(|v| dot(v, w)).collect();
        w.par_iter_mut().enumerate().for_each(|(r, x)| {
            for (v, c) in basis.iter().zip(&h) {
                *x -= c * v[r];
            }
        });
        for (a, b) in coeffs.iter_mut().zip(&h) {
            *a += b;
        }
    }
    coeffs
}

fn random_orthogonal(basis: &[Vec<f64>], n: usize, seed: u64, draw: u64) -> Option<Vec<f64>> {
    let mut rng = substream(seed, "eigen-start", draw);
    for _ in 0..4 {
        let mut w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        orthogonalise(basis, &mut w);
        let nw = norm(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|x| *x /= nw);
            return Some(w);
        }
    }
    None
}

/// Thick-restart Lanczos.
pub fn lanczos(
    op: &dyn SymmetricOperator,
    count: usize,
    which: Which,
    config: &EigenConfig,
) -> Result<EigenPairs> {
    let n = op.dim();
    let memory_cap = (BASIS_MEMORY_BUDGET / (8 * n.max(1))).max(2 * count + 20);
    let m = config
        .krylov_dim
        .unwrap_or_else(|| (50 * count).min(memory_cap))
        .min(n)
        .max(count);
    if m < n && m <= count {
        return Err(Error::InvalidArgument(format!(
            "Krylov dimension {m} must exceed the {count} requested eigenpairs"
        )));
    }
    let mut draws = 0u64;
    let mut basis: Vec<Vec<f64>> =
        vec![random_orthogonal(&[], n, config.seed, draws).expect("non-empty space")];
    let mut t = DMatrix::<f64>::zeros(m, m);
    let mut next = 0usize;
    let mut anorm = 0.0f64;
    let mut worst = f64::INFINITY;

    for restart in 0..=config.max_restarts {
        let mut residual = vec![0.0; n];
        for j in next..m {
            let mut w = op.apply(&basis[j]);
            let h = orthogonalise(&basis, &mut w);
            for (i, &hi) in h.iter().enumerate() {
                t[(i, j)] = hi;
                t[(j, i)] = hi;
                anorm = anorm.max(hi.abs());
            }
            let beta = norm(&w);
            if j + 1 == m {
                residual = w;
                break;
            }
            if beta > 1e-12 * anorm.max(f64::MIN_POSITIVE) {
                w.iter_mut().for_each(|x| *x /= beta);
                basis.push(w);
            } else {
                draws += 1;
                match random_orthogonal(&basis, n, config.seed, draws) {
                    Some(v) => basis.push(v),
                    None => {
                        // basis spans the whole space
                        residual = vec![0.0; n];
                        break;
                    }
                }
            }
        }
        let size = basis.len();
        let tm = t.view((0, 0), (size, size)).into_owned();
        let eig = SymmetricEigen::new(tm);
        let order = ordered(eig.eigenvalues.as_slice(), which);
        let rnorm = norm(&residual);

        let estimates: Vec<f64> = order[..count]
            .iter()
            .map(|&i| rnorm * eig.eigenvectors[(size - 1, i)].abs())
            .collect();
        let converged = order[..count]
            .iter()
            .zip(&estimates)
            .all(|(&i, &r)| r <= config.tol * eig.eigenvalues[i].abs().max(1.0));

        let keep = if converged || size < m {
            count
        } else {
            (count + (m - count) / 2).min(m - 1)
        };
        let ritz = ritz_vectors(&basis, &eig.eigenvectors, &order[..keep]);

        if converged || size < m {
            let values: Vec<f64> = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
            let true_res: Vec<f64> = ritz
                .iter()
                .zip(&values)
                .map(|(x, &l)| residual_norm(op, x, l))
                .collect();
            worst = true_res
                .iter()
                .zip(&values)
                .map(|(r, l)| r / l.abs().max(1.0))
                .fold(0.0, f64::max);
            if worst <= config.tol {
                return Ok(EigenPairs {
                    values,
                    vectors: ritz,
                    residuals: true_res,
                });
            }
            if size < m {
                // the space is exhausted and still not accurate enough
                break;
            }
        } else {
            worst = estimates
                .iter()
                .zip(&order[..count])
                .map(|(r, &i)| r / eig.eigenvalues[i].abs().max(1.0))
                .fold(0.0, f64::max);
        }
        if restart == config.max_restarts {
            break;
        }

        log::debug!("lanczos restart {restart}: worst relative residual {worst:e}");
        t.fill(0.0);
        for (a, &i) in order[..keep].iter().enumerate() {
            t[(a, a)] = eig.eigenvalues[i];
        }
        basis = ritz;
        if rnorm > 1e-12 * anorm.max(f64::MIN_POSITIVE) {
            let mut f: Vec<f64> = residual.iter().map(|x| x / rnorm).collect();
            orthogonalise(&basis, &mut f);
            let nf = norm(&f);
            f.iter_mut().for_each(|x| *x /= nf);
            basis.push(f);
        } else {
            draws += 1;
            match random_orthogonal(&basis, n, config.seed, draws) {
                Some(v) => basis.push(v),
                None => break,
            }
        }
        next = keep;
    }
    Err(Error::NoConvergence {
        max_residual: worst,
        restarts: config.max_restarts,
    })
}

fn ritz_vectors(basis: &[Vec<f64>], y: &DMatrix<f64>, cols: &[usize]) -> Vec<Vec<f64>> {
    let n = basis[0].len();
    cols.par_iter()
        .map(|&c| {
            let mut x = vec![0.0; n];
            for (j, v) in basis.iter().enumerate() {
                let coef = y[(j, c)];
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi += coef * vi;
                }
            }
            x
        })
        .collect()
}
