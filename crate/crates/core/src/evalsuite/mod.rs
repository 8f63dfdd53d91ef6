//! Benchmark parsers, the four evaluation protocols, and synthetic fixtures.

pub mod datasets;
pub mod metrics;
pub mod synthetic;
pub mod text;

use serde::{Deserialize, Serialize};

pub use datasets::{
    parse_analogy, parse_relation, parse_similarity, parse_text, tokenize, AnalogyDataset, AnalogyQuestion,
    Document, RelationDataset, RelationTriple, SimilarityDataset, SimilarityPair, TextDataset,
};
pub use metrics::{average_ranks, cosadd, cosine, eval_analogy, eval_relation, eval_similarity, spearman};
pub use synthetic::{make_synthetic, neighbour_overlap, synthetic_word, SourceSpec};
pub use text::{eval_text, train_logistic, LogisticModel, TextEvalConfig};

/// Score of one evaluation. `score` is `None` when it is undefined, e.g.
/// when no item of the dataset is covered by the vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub score: Option<f64>,
    /// Fraction of dataset items that were evaluated.
    pub coverage: f64,
    pub evaluated: usize,
    pub total: usize,
    /// Covered items dropped as degenerate.
    pub skipped: usize,
}

impl EvalOutcome {
    pub fn new(score: Option<f64>, evaluated: usize, total: usize, skipped: usize) -> Self {
        let coverage = if total == 0 {
            0.0
        } else {
            evaluated as f64 / total as f64
        };
        EvalOutcome {
            score,
            coverage,
            evaluated,
            total,
            skipped,
        }
    }
}
