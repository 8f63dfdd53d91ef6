//! JSON and CSV evaluation reports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cache::write_atomic;
use super::config::{Method, SolverKind, TaskKind};
use crate::error::{Error, Result};
use crate::evalsuite::EvalOutcome;

/// One (embedding, dataset) evaluation. Scores are on the ×100 scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub embedding: String,
    pub task: TaskKind,
    pub dataset: String,
    pub score: Option<f64>,
    pub coverage: f64,
    pub evaluated: usize,
    pub total: usize,
    pub skipped: usize,
    pub error: Option<String>,
}

impl Record {
    pub fn from_outcome(embedding: &str, task: TaskKind, dataset: &str, outcome: Result<EvalOutcome>) -> Self {
        let (outcome, error) = match outcome {
            Ok(o) => (o, None),
            Err(e) => (EvalOutcome::new(None, 0, 0, 0), Some(e.to_string())),
        };
        Record {
            embedding: embedding.to_string(),
            task,
            dataset: dataset.to_string(),
            score: outcome.score.map(|s| s * 100.0),
            coverage: outcome.coverage,
            evaluated: outcome.evaluated,
            total: outcome.total,
            skipped: outcome.skipped,
            error,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSummary {
    pub name: String,
    pub words: usize,
    pub dim: usize,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    /// Reconstruction solver; only set for the LLE method.
    pub solver: Option<SolverKind>,
    pub seed: u64,
    pub k: usize,
    pub dim: usize,
    pub meta_dim: usize,
    pub vocab_size: usize,
    /// Name of the held-out source of an ablation run.
    pub ablation: Option<String>,
    pub sources: Vec<SourceSummary>,
    pub records: Vec<Record>,
}

impl Report {
    pub fn score(&self, embedding: &str, dataset: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.embedding == embedding && r.dataset == dataset)
            .and_then(|r| r.score)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "embedding", "task", "dataset", "score", "coverage", "evaluated", "total", "skipped", "error",
        ])?;
        for r in &self.records {
            w.write_record([
                r.embedding.clone(),
                r.task.to_string(),
                r.dataset.clone(),
                r.score.map_or_else(String::new, |s| s.to_string()),
                r.coverage.to_string(),
                r.evaluated.to_string(),
                r.total.to_string(),
                r.skipped.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("report.json"), |w| {
            w.write_all(self.to_json().as_bytes())?;
            w.write_all(b"\n")
        })?;
        write_atomic(&dir.join("report.csv"), |w| {
            self.write_csv(w).map_err(std::io::Error::other)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        Report {
            method: Method::Conc,
            solver: None,
            seed: 1,
            k: 5,
            dim: 3,
            meta_dim: 3,
            vocab_size: 4,
            ablation: None,
            sources: vec![],
            records: vec![
                Record::from_outcome("conc", TaskKind::Similarity, "rg", Ok(EvalOutcome::new(Some(0.625), 3, 4, 0))),
                Record::from_outcome("conc", TaskKind::Analogy, "gl", Err(Error::Undefined("x".into()))),
            ],
        }
    }

    #[test]
    fn scores_are_scaled_by_100() {
        let r = report();
        assert_eq!(r.score("conc", "rg"), Some(62.5));
        assert_eq!(r.records[1].score, None);
        assert!(r.records[1].error.is_some());
    }

    #[test]
    fn json_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        r.save(dir.path()).unwrap();
        assert_eq!(Report::load(&dir.path().join("report.json")).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("conc,similarity,rg,62.5,0.75"));
    }
}
