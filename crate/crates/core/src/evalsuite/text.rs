//! Short-text classification: bag centroids fed to an ℓ2-regularised
//! logistic regression whose regulariser is picked by cross-validation.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::datasets::{Document, TextDataset};
use super::EvalOutcome;
use crate::error::{Error, Result};
use crate::project::MetaEmbedding;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextEvalConfig {
    pub folds: usize,
    pub reg_grid: Vec<f64>,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for TextEvalConfig {
    fn default() -> Self {
        TextEvalConfig {
            folds: 5,
            reg_grid: (-4..=2).map(|e| 10f64.powi(e)).collect(),
            max_epochs: 5000,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Mean of the in-vocabulary word vectors; zero for an empty bag. The second
/// value counts the tokens found.
pub fn centroid(emb: &MetaEmbedding, tokens: &[String]) -> (Vec<f64>, usize) {
    let mut sum = vec![0.0; emb.dim()];
    let mut found = 0;
    for t in tokens {
        if let Some(v) = emb.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            found += 1;
        }
    }
    if found > 0 {
        sum.iter_mut().for_each(|s| *s /= found as f64);
    }
    (sum, found)
}

/// Binary logistic regression `p(y=1|x) = σ(wᵀx + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let z: f64 = self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        u8::from(sigmoid(z) >= 0.5)
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
        let correct = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        correct as f64 / xs.len() as f64
    }
}

/// Batch gradient descent on the mean log-loss plus `reg/2 ‖w‖²` (bias not
/// penalised), with step `1/L` for the loss's Lipschitz bound `L`. Stops when
/// the gradient norm drops below `grad_tol` or after `max_epochs` epochs.
pub fn train_logistic(xs: &[Vec<f64>], ys: &[u8], reg: f64, max_epochs: usize, grad_tol: f64) -> LogisticModel {
    let dim = xs.first().map_or(0, Vec::len);
    let n = xs.len() as f64;
    let max_sq = xs
        .iter()
        .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (0.25 * max_sq + reg);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut gw = vec![0.0; dim];
    for _ in 0..max_epochs {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = reg * wi);
        let mut gb = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let z = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            let r = (sigmoid(z) - f64::from(y)) / n;
            gw.iter_mut().zip(x).for_each(|(g, xi)| *g += r * xi);
            gb += r;
        }
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if gnorm < grad_tol {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
    }
    LogisticModel { weights: w, bias: b }
}

fn both_classes(ys: &[u8]) -> bool {
    ys.contains(&0) && ys.contains(&1)
}

/// Mean held-out accuracy of `reg` over the folds; folds whose training part
/// has a single class are skipped. `None` when every fold was skipped.
fn cross_validate(xs: &[Vec<f64>], ys: &[u8], fold_of: &[usize], folds: usize, reg: f64, cfg: &TextEvalConfig) -> Option<f64> {
    let mut scores = Vec::new();
    for f in 0..folds {
        let split = |held: bool| -> (Vec<Vec<f64>>, Vec<u8>) {
            (0..xs.len())
                .filter(|&i| (fold_of[i] == f) == held)
                .map(|i| (xs[i].clone(), ys[i]))
                .unzip()
        };
        let (tx, ty) = split(false);
        let (vx, vy) = split(true);
        if vx.is_empty() {
            continue;
        }
        if !both_classes(&ty) {
            log::warn!("text evaluation: fold {f} has a single-class training part, skipped");
            continue;
        }
        let model = train_logistic(&tx, &ty, reg, cfg.max_epochs, cfg.grad_tol);
        scores.push(model.accuracy(&vx, &vy));
    }
    (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64)
}

fn featurize(emb: &MetaEmbedding, docs: &[Document]) -> (Vec<Vec<f64>>, Vec<u8>, usize) {
    let mut covered = 0;
    let xs = docs
        .iter()
        .map(|d| {
            let (c, found) = centroid(emb, &d.tokens);
            covered += usize::from(found > 0);
            c
        })
        .collect();
    (xs, docs.iter().map(|d| d.label).collect(), covered)
}

/// Test accuracy of the centroid classifier with the CV-selected regulariser.
/// Coverage counts test documents with at least one known token.
pub fn eval_text(emb: &MetaEmbedding, ds: &TextDataset, cfg: &TextEvalConfig) -> Result<EvalOutcome> {
    if cfg.reg_grid.is_empty() || cfg.reg_grid.iter().any(|&r| r.is_nan() || r < 0.0) {
        return Err(Error::InvalidArgument("reg_grid must be non-empty and non-negative".into()));
    }
    let (xs, ys, _) = featurize(emb, &ds.train);
    if !both_classes(&ys) {
        return Err(Error::InvalidArgument("text training set needs both classes".into()));
    }
    if ds.test.is_empty() {
        return Err(Error::EmptyInput("text test set".into()));
    }
    let folds = cfg.folds.clamp(2, xs.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng::substream(cfg.seed, "text-folds", 0));
    let mut fold_of = vec![0; xs.len()];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    let mut best: Option<(f64, f64)> = None;
    for &reg in &cfg.reg_grid {
        if let Some(acc) = cross_validate(&xs, &ys, &fold_of, folds, reg, cfg) {
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((reg, acc));
            }
        }
    }
    let reg = best.map_or(cfg.reg_grid[0], |(r, _)| r);
    let model = train_logistic(&xs, &ys, reg, cfg.max_epochs, cfg.grad_tol);
    let (tx, ty, covered) = featurize(emb, &ds.test);
    let acc = model.accuracy(&tx, &ty);
    Ok(EvalOutcome::new(Some(acc), covered, ds.test.len(), 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_points_are_fit() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 0.3]).collect();
        let ys: Vec<u8> = (0..20).map(|i| u8::from(i % 2 == 0)).collect();
        let m = train_logistic(&xs, &ys, 1e-4, 5000, 1e-6);
        assert_eq!(m.accuracy(&xs, &ys), 1.0);
    }

    #[test]
    fn constant_labels_give_majority_class() {
        let xs = vec![vec![0.0], vec![0.0], vec![0.0]];
        let m = train_logistic(&xs, &[1, 1, 0], 1.0, 5000, 1e-9);
        assert_eq!(m.accuracy(&xs, &[1, 1, 0]), 2.0 / 3.0);
    }

    #[test]
    fn empty_bag_is_zero() {
        use crate::embio::Vocabulary;
        use crate::project::Provenance;
        let (vocab, _) = Vocabulary::from_words(["a", "b"]);
        let e = MetaEmbedding::new(vocab, 2, vec![1.0, 0.0, 0.0, 3.0], Provenance::Source).unwrap();
        assert_eq!(centroid(&e, &["a".into(), "b".into(), "zz".into()]), (vec![0.5, 1.5], 2));
        assert_eq!(centroid(&e, &[]), (vec![0.0, 0.0], 0));
    }
}
