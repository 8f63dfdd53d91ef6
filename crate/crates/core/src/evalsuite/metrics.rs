//! Word similarity, analogy and relation evaluators.

use rayon::prelude::*;

use super::datasets::{AnalogyDataset, RelationDataset, SimilarityDataset};
use super::EvalOutcome;
use crate::error::{Error, Result};
use crate::project::MetaEmbedding;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// 1-based fractional ranks; tied values share their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's ρ: Pearson correlation of average-tie ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Undefined("Spearman correlation needs at least two pairs".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("zero rank variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman correlation between cosine similarities and human scores over
/// the pairs whose words are both in the vocabulary.
pub fn eval_similarity(emb: &MetaEmbedding, ds: &SimilarityDataset) -> Result<EvalOutcome> {
    let (predicted, gold): (Vec<f64>, Vec<f64>) = ds
        .pairs
        .iter()
        .filter_map(|p| Some((cosine(emb.get(&p.word1)?, emb.get(&p.word2)?), p.score)))
        .unzip();
    if predicted.len() < 2 {
        return Err(Error::Undefined(format!(
            "{} of {} similarity pairs covered; need at least two",
            predicted.len(),
            ds.pairs.len()
        )));
    }
    let rho = spearman(&predicted, &gold)?;
    Ok(EvalOutcome::new(Some(rho), predicted.len(), ds.pairs.len(), 0))
}

/// Row-normalised copy of an embedding for repeated cosine scans.
pub struct UnitRows {
    dim: usize,
    data: Vec<f64>,
}

impl UnitRows {
    pub fn new(emb: &MetaEmbedding) -> Self {
        let dim = emb.dim();
        let mut data = emb.vectors().to_vec();
        data.par_chunks_mut(dim.max(1)).for_each(|row| {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        });
        UnitRows { dim, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CosAdd over unit rows; returns the winning id.
    fn cosadd(&self, a: usize, b: usize, c: usize) -> Option<usize> {
        let q: Vec<f64> = (0..self.dim)
            .map(|j| self.row(b)[j] - self.row(a)[j] + self.row(c)[j])
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for d in 0..self.len() {
            if d == a || d == b || d == c {
                continue;
            }
            let s = dot(&q, self.row(d));
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((d, s));
            }
        }
        best.map(|(d, _)| d)
    }
}

fn lookup(emb: &MetaEmbedding, word: &str) -> Result<usize> {
    emb.vocab.lookup(word).ok_or_else(|| Error::OutOfVocabulary { word: word.to_string() })
}

/// CosAdd: the word `d ∉ {a, b, c}` maximising cos(b − a + c, d), computed on
/// unit-normalised vectors; ties go to the smaller id.
pub fn cosadd(emb: &MetaEmbedding, a: &str, b: &str, c: &str) -> Result<String> {
    let (ia, ib, ic) = (lookup(emb, a)?, lookup(emb, b)?, lookup(emb, c)?);
    UnitRows::new(emb)
        .cosadd(ia, ib, ic)
        .map(|d| emb.vocab.word(d).to_string())
        .ok_or_else(|| Error::Undefined("no candidate words outside the query".into()))
}

/// Fraction of covered questions answered correctly by CosAdd; `None` when
/// no question is covered.
pub fn eval_analogy(emb: &MetaEmbedding, ds: &AnalogyDataset) -> EvalOutcome {
    let unit = UnitRows::new(emb);
    let ids = |w: &str| emb.vocab.lookup(w);
    let results: Vec<bool> = ds
        .questions
        .par_iter()
        .filter_map(|q| {
            let (a, b, c, d) = (ids(&q.a)?, ids(&q.b)?, ids(&q.c)?, ids(&q.d)?);
            Some(unit.cosadd(a, b, c) == Some(d))
        })
        .collect();
    let correct = results.iter().filter(|&&ok| ok).count();
    let score = (!results.is_empty()).then(|| correct as f64 / results.len() as f64);
    EvalOutcome::new(score, results.len(), ds.questions.len(), 0)
}

/// Leave-one-out 1-NN relation classification on offsets `word2 − word1`,
/// compared by cosine; ties go to the earlier triple. Triples with an OOV
/// word or a zero offset are skipped.
pub fn eval_relation(emb: &MetaEmbedding, ds: &RelationDataset) -> EvalOutcome {
    let mut offsets = Vec::new();
    let mut labels = Vec::new();
    let mut zero = 0;
    for t in &ds.triples {
        let (Some(v1), Some(v2)) = (emb.get(&t.word1), emb.get(&t.word2)) else {
            continue;
        };
        let off: Vec<f64> = v2.iter().zip(v1).map(|(b, a)| b - a).collect();
        let n = norm(&off);
        if n == 0.0 {
            zero += 1;
            continue;
        }
        offsets.push(off.into_iter().map(|x| x / n).collect::<Vec<f64>>());
        labels.push(t.relation.as_str());
    }
    if offsets.len() < 2 {
        return EvalOutcome::new(None, offsets.len(), ds.triples.len(), zero);
    }
    let correct = (0..offsets.len())
        .into_par_iter()
        .filter(|&i| {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..offsets.len() {
                if j == i {
                    continue;
                }
                let s = dot(&offsets[i], &offsets[j]);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((j, s));
                }
            }
            best.is_some_and(|(j, _)| labels[j] == labels[i])
        })
        .count();
    let score = correct as f64 / offsets.len() as f64;
    EvalOutcome::new(Some(score), offsets.len(), ds.triples.len(), zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embio::Vocabulary;
    use crate::evalsuite::datasets::{AnalogyQuestion, RelationTriple, SimilarityPair};
    use crate::project::Provenance;

    fn emb(rows: &[(&str, &[f64])]) -> MetaEmbedding {
        let dim = rows[0].1.len();
        let (vocab, _) = Vocabulary::from_words(rows.iter().map(|r| r.0));
        let data = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        MetaEmbedding::new(vocab, dim, data, Provenance::Source).unwrap()
    }

    #[test]
    fn spearman_extremes() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[1.0, 2.0, 3.0, 3.0]), vec![1.0, 2.0, 3.5, 3.5]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn similarity_skips_oov_pairs() {
        let e = emb(&[("a", &[1.0, 0.0]), ("b", &[1.0, 0.5]), ("c", &[0.0, 1.0])]);
        let pair = |w1: &str, w2: &str, score| SimilarityPair {
            word1: w1.into(),
            word2: w2.into(),
            score,
        };
        let ds = SimilarityDataset {
            pairs: vec![pair("a", "b", 9.0), pair("a", "c", 1.0), pair("b", "c", 8.0), pair("a", "zz", 5.0)],
        };
        let out = eval_similarity(&e, &ds).unwrap();
        assert_eq!(out.score, Some(1.0));
        assert_eq!(out.coverage, 0.75);
    }

    #[test]
    fn cosadd_parallelogram_and_exclusion() {
        let e = emb(&[
            ("a", &[1.0, 0.0, 0.0]),
            ("b", &[1.0, 1.0, 0.0]),
            ("c", &[0.0, 0.0, 1.0]),
            ("d", &[0.0, 1.0, 1.0]),
            ("x", &[-1.0, 0.0, 0.0]),
        ]);
        assert_eq!(cosadd(&e, "a", "b", "c").unwrap(), "d");
        let small = emb(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0]), ("x", &[-5.0, -5.0])]);
        assert_eq!(cosadd(&small, "a", "b", "c").unwrap(), "x");
        assert!(matches!(cosadd(&e, "a", "b", "nope"), Err(Error::OutOfVocabulary { .. })));
    }

    #[test]
    fn analogy_without_coverage_is_undefined() {
        let e = emb(&[("a", &[1.0]), ("b", &[2.0])]);
        let ds = AnalogyDataset {
            questions: vec![AnalogyQuestion {
                a: "a".into(),
                b: "b".into(),
                c: "c".into(),
                d: "d".into(),
                section: None,
            }],
        };
        let out = eval_analogy(&e, &ds);
        assert_eq!(out.score, None);
        assert_eq!(out.coverage, 0.0);
    }

    fn triple(r: &str, w1: &str, w2: &str) -> RelationTriple {
        RelationTriple {
            relation: r.into(),
            word1: w1.into(),
            word2: w2.into(),
        }
    }

    #[test]
    fn relation_two_triples() {
        let e = emb(&[("a", &[0.0, 0.0]), ("b", &[1.0, 0.0]), ("c", &[0.0, 1.0]), ("d", &[1.0, 1.0])]);
        let same = RelationDataset {
            triples: vec![triple("r", "a", "b"), triple("r", "c", "d")],
        };
        assert_eq!(eval_relation(&e, &same).score, Some(1.0));
        let different = RelationDataset {
            triples: vec![triple("r", "a", "b"), triple("s", "c", "d")],
        };
        assert_eq!(eval_relation(&e, &different).score, Some(0.0));
        let degenerate = RelationDataset {
            triples: vec![triple("r", "a", "a"), triple("r", "a", "b"), triple("r", "c", "d")],
        };
        let out = eval_relation(&e, &degenerate);
        assert_eq!((out.evaluated, out.skipped), (2, 1));
    }
}
