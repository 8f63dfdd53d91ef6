//! End-to-end orchestration: load → normalise → k-NN → weights → projection
//! (or a baseline) → evaluation, with content-addressed caching between
//! stages.

pub mod cache;
pub mod config;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{self, ConcConfig};
use crate::embio::{self, AlignedSources, EmbeddingSet, Format};
use crate::error::{Error, Result, StageContext};
use crate::evalsuite::{self, EvalOutcome};
use crate::neighbours::{self, NeighbourhoodGraph};
use crate::project::{self, MetaEmbedding};
use crate::recon::{self, SolverConfig, SparseWeights};
use crate::rng;

pub use cache::{file_digest, stage_key, write_atomic, Cache};
pub use config::{EvalEntry, Method, PipelineConfig, SolverKind, SourceEntry, TaskKind};
pub use report::{Record, Report, SourceSummary};

/// File names inside the output directory.
pub const META_CACHE_FILE: &str = "meta.bin";
pub const META_TEXT_FILE: &str = "meta.txt";

#[derive(Debug)]
pub struct RunOutput {
    pub report: Report,
    pub meta: MetaEmbedding,
    pub meta_path: PathBuf,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Solver settings with the seed taken from the root seed.
pub fn effective_solver_config(cfg: &PipelineConfig) -> SolverConfig {
    SolverConfig {
        seed: rng::derive_seed(cfg.seed, "weights", 0),
        ..cfg.sgd.clone()
    }
}

pub fn effective_eigen_config(cfg: &PipelineConfig) -> project::eigen::EigenConfig {
    project::eigen::EigenConfig {
        seed: rng::derive_seed(cfg.seed, "eigen", 0),
        ..cfg.eigen.clone()
    }
}

pub fn effective_text_config(cfg: &PipelineConfig) -> evalsuite::TextEvalConfig {
    evalsuite::TextEvalConfig {
        seed: rng::derive_seed(cfg.seed, "text", 0),
        ..cfg.text.clone()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Loads and unit-normalises every source, reusing cached copies. Returns
/// the sets and their cache keys.
fn ingest(cfg: &PipelineConfig, cache: &mut Cache) -> Result<(Vec<EmbeddingSet>, Vec<String>)> {
    let mut sets = Vec::with_capacity(cfg.sources.len());
    let mut keys = Vec::with_capacity(cfg.sources.len());
    for entry in &cfg.sources {
        let digest = file_digest(&entry.path)?;
        let key = stage_key("ingest", &(&digest, entry.format));
        let mut set = cache.get_or_compute(
            "ingest",
            &key,
            |p| embio::load_cache(p),
            |s, p| embio::save_cache(s, p),
            || embio::l2_normalize(embio::load_embeddings(&entry.path, entry.format)?),
        )?;
        set.name = entry.display_name();
        sets.push(set);
        keys.push(key);
    }
    Ok((sets, keys))
}

fn lle(cfg: &PipelineConfig, sources: &AlignedSources, ingest_keys: &[String], cache: &mut Cache) -> Result<EmbeddingSet> {
    let knn_key = stage_key("knn", &(ingest_keys, cfg.k, cfg.include_self, cfg.leaf_size));
    let graph = cache
        .get_or_compute(
            "knn",
            &knn_key,
            |p| NeighbourhoodGraph::load(p),
            |g, p| g.save(p),
            || neighbours::build_graph(sources, cfg.k, cfg.include_self, cfg.leaf_size),
        )
        .stage("knn")?;

    let solver = effective_solver_config(cfg);
    let weights_key = match cfg.solver {
        SolverKind::Sgd => stage_key("weights", &(&knn_key, cfg.solver, &solver)),
        SolverKind::Exact => stage_key("weights", &(&knn_key, cfg.solver)),
    };
    let weights = cache
        .get_or_compute(
            "weights",
            &weights_key,
            |p| SparseWeights::load(p),
            |w, p| w.save(p),
            || match cfg.solver {
                SolverKind::Sgd => {
                    let (w, stats) = recon::fit_weights_sgd_with_stats(sources, &graph, &solver)?;
                    log::info!(
                        "weights: {} words, mean {:.1} iterations, {} divergent",
                        stats.words,
                        stats.mean_iterations(),
                        stats.divergent_words
                    );
                    Ok(w)
                }
                SolverKind::Exact => recon::fit_weights_exact(sources, &graph),
            },
        )
        .stage("weights")?;

    let eigen = effective_eigen_config(cfg);
    let project_key = stage_key("project", &(&weights_key, cfg.row_normalize, cfg.dim, &eigen));
    cache
        .get_or_compute(
            "project",
            &project_key,
            |p| embio::load_cache(p),
            |s, p| embio::save_cache(s, p),
            || {
                let combined = project::combine_weights(&weights, &graph, cfg.row_normalize)?;
                let projection = project::project(&combined, &sources.vocab, cfg.dim, &eigen)?;
                log::info!(
                    "project: smallest eigenvalue {:e}, retained sum {:e}",
                    projection.eigenvalues[0],
                    projection.retained_eigenvalue_sum()
                );
                projection.embedding.to_set("lle")
            },
        )
        .stage("project")
}

fn baseline(cfg: &PipelineConfig, sources: &AlignedSources, ingest_keys: &[String], cache: &mut Cache) -> Result<EmbeddingSet> {
    let conc = ConcConfig {
        scales: cfg.source_scales(),
        policy: cfg.conc.policy,
    };
    match cfg.method {
        Method::Conc => {
            let key = stage_key("conc", &(ingest_keys, &conc.scales, conc.policy));
            cache
                .get_or_compute(
                    "conc",
                    &key,
                    |p| embio::load_cache(p),
                    |s, p| embio::save_cache(s, p),
                    || baselines::concat(sources, &conc)?.to_set("conc"),
                )
                .stage("conc")
        }
        Method::Svd => {
            let eigen = effective_eigen_config(cfg);
            let key = stage_key("svd", &(ingest_keys, &conc.scales, cfg.svd.dim, cfg.svd.apply_scaling, &eigen));
            cache
                .get_or_compute(
                    "svd",
                    &key,
                    |p| embio::load_cache(p),
                    |s, p| embio::save_cache(s, p),
                    || {
                        let out = baselines::svd_meta(sources, cfg.svd.dim, &conc, cfg.svd.apply_scaling, &eigen)?;
                        out.embedding.to_set("svd")
                    },
                )
                .stage("svd")
        }
        Method::Lle => unreachable!("handled by lle()"),
    }
}

/// A parsed evaluation dataset.
pub enum Dataset {
    Similarity(evalsuite::SimilarityDataset),
    Analogy(evalsuite::AnalogyDataset),
    Relation(evalsuite::RelationDataset),
    Text(evalsuite::TextDataset),
    Overlap { reference: MetaEmbedding, k: usize },
}

impl Dataset {
    pub fn load(entry: &EvalEntry) -> Result<Self> {
        Ok(match entry.task {
            TaskKind::Similarity => Dataset::Similarity(evalsuite::parse_similarity(&entry.path)?),
            TaskKind::Analogy => Dataset::Analogy(evalsuite::parse_analogy(&entry.path)?),
            TaskKind::Relation => Dataset::Relation(evalsuite::parse_relation(&entry.path)?),
            TaskKind::Text => {
                let test = entry
                    .test_path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("text task needs test_path".into()))?;
                Dataset::Text(evalsuite::parse_text(&entry.path, test)?)
            }
            TaskKind::Overlap => Dataset::Overlap {
                reference: MetaEmbedding::load(&entry.path, entry.format.unwrap_or(Format::GloveText))?,
                k: entry.k.unwrap_or(10),
            },
        })
    }

    pub fn evaluate(&self, emb: &MetaEmbedding, text_cfg: &evalsuite::TextEvalConfig) -> Result<EvalOutcome> {
        match self {
            Dataset::Similarity(ds) => evalsuite::eval_similarity(emb, ds),
            Dataset::Analogy(ds) => Ok(evalsuite::eval_analogy(emb, ds)),
            Dataset::Relation(ds) => Ok(evalsuite::eval_relation(emb, ds)),
            Dataset::Text(ds) => evalsuite::eval_text(emb, ds, text_cfg),
            Dataset::Overlap { reference, k } => {
                let total = emb.len();
                let covered: Vec<usize> = (0..total)
                    .filter(|&i| reference.vocab.lookup(emb.vocab.word(i)).is_some())
                    .collect();
                let sub = restrict(emb, &covered)?;
                let score = evalsuite::neighbour_overlap(&sub, reference, *k)?;
                Ok(EvalOutcome::new(Some(score), covered.len(), total, 0))
            }
        }
    }
}

fn restrict(emb: &MetaEmbedding, rows: &[usize]) -> Result<MetaEmbedding> {
    if rows.len() == emb.len() {
        return Ok(emb.clone());
    }
    let vocab = embio::Vocabulary::from_words(rows.iter().map(|&i| emb.vocab.word(i))).0;
    let data = rows.iter().flat_map(|&i| emb.row(i).iter().copied()).collect();
    MetaEmbedding::new(vocab, emb.dim(), data, emb.provenance)
}

/// Scores every embedding on every dataset, in configuration order.
pub fn evaluate_all(
    cfg: &PipelineConfig,
    embeddings: &[(String, MetaEmbedding)],
) -> Result<Vec<Record>> {
    let text_cfg = effective_text_config(cfg);
    let mut records = Vec::new();
    for entry in &cfg.evaluations {
        let dataset = Dataset::load(entry)?;
        let name = entry.display_name();
        for (emb_name, emb) in embeddings {
            records.push(Record::from_outcome(emb_name, entry.task, &name, dataset.evaluate(emb, &text_cfg)));
        }
    }
    Ok(records)
}

fn run_tagged(cfg: &PipelineConfig, ablation: Option<String>) -> Result<RunOutput> {
    cfg.validate().stage("config")?;
    create_dir(&cfg.output).stage("config")?;
    let mut cache = Cache::open(cfg.cache_dir()).stage("config")?;

    let (sets, ingest_keys) = ingest(cfg, &mut cache).stage("ingest")?;
    let sources = AlignedSources::new(&sets).stage("ingest")?;
    let meta_set = match cfg.method {
        Method::Lle => lle(cfg, &sources, &ingest_keys, &mut cache)?,
        _ => baseline(cfg, &sources, &ingest_keys, &mut cache)?,
    };

    let meta_path = cfg.output.join(META_CACHE_FILE);
    embio::save_cache(&meta_set, &meta_path).stage("write")?;
    if cfg.write_text {
        let text_path = cfg.output.join(META_TEXT_FILE);
        write_atomic(&text_path, |w| embio::write_text(&meta_set, Format::GloveText, w)).stage("write")?;
    }
    let meta = MetaEmbedding::from_set(&meta_set);

    let mut embeddings = Vec::new();
    if cfg.evaluate_sources {
        embeddings.extend(sets.iter().map(|s| (s.name.clone(), MetaEmbedding::from_set(s))));
    }
    embeddings.push((cfg.method.to_string(), meta.clone()));
    let records = evaluate_all(cfg, &embeddings).stage("evaluate")?;

    let scales = cfg.source_scales();
    let report = Report {
        method: cfg.method,
        solver: (cfg.method == Method::Lle).then_some(cfg.solver),
        seed: cfg.seed,
        k: cfg.k,
        dim: match cfg.method {
            Method::Svd => cfg.svd.dim,
            _ => cfg.dim,
        },
        meta_dim: meta.dim(),
        vocab_size: meta.len(),
        ablation,
        sources: sets
            .iter()
            .zip(scales)
            .map(|(s, scale)| SourceSummary {
                name: s.name.clone(),
                words: s.len(),
                dim: s.dim(),
                scale,
            })
            .collect(),
        records,
    };
    report.save(&cfg.output).stage("write")?;
    log::info!("cache: {} hits, {} misses", cache.hits, cache.misses);
    Ok(RunOutput {
        report,
        meta,
        meta_path,
        cache_hits: cache.hits,
        cache_misses: cache.misses,
    })
}

/// Runs the configured pipeline and writes the meta-embedding and report
/// into the output directory.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutput> {
    run_tagged(cfg, None)
}

/// Runs the configured method without the named source; outputs go to
/// `<output>/ablate-<name>` and share the cache.
pub fn ablate(cfg: &PipelineConfig, hold_out: &str) -> Result<RunOutput> {
    if cfg.sources.len() < 3 {
        return Err(Error::InvalidArgument("ablation needs at least three sources".into())).stage("config");
    }
    let names = cfg.source_names();
    let idx = names
        .iter()
        .position(|n| n == hold_out)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown source {hold_out:?}; configured: {}", names.join(", "))))
        .stage("config")?;
    let mut sub = cfg.clone();
    sub.sources.remove(idx);
    sub.conc.emphasized.retain(|n| n != hold_out);
    sub.cache_dir = Some(cfg.cache_dir());
    sub.output = cfg.output.join(format!("ablate-{hold_out}"));
    run_tagged(&sub, Some(hold_out.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    Dimension,
    Neighbourhood,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dimension" | "dim" => Ok(SweepAxis::Dimension),
            "neighbourhood" | "neighborhood" | "k" => Ok(SweepAxis::Neighbourhood),
            other => Err(Error::InvalidArgument(format!(
                "unknown sweep axis {other:?}; expected dimension or neighbourhood"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Dimension => "dimension",
            SweepAxis::Neighbourhood => "neighbourhood",
        })
    }
}

/// One cell of a sweep grid. A failed point has no task and carries the
/// error message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub task: Option<TaskKind>,
    pub dataset: String,
    pub score: Option<f64>,
    pub error: Option<String>,
}

/// Runs the pipeline once per value of `axis`, the other axis held at its
/// configured value, and writes `<output>/sweep-<axis>.csv`.
pub fn sweep(cfg: &PipelineConfig, axis: SweepAxis, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() || values[0] == 0 || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sweep values must be positive and strictly ascending".into()))
            .stage("config");
    }
    create_dir(&cfg.output).stage("config")?;
    let mut rows = Vec::new();
    for &value in values {
        let mut point = cfg.clone();
        match axis {
            SweepAxis::Dimension => {
                point.dim = value;
                point.svd.dim = value;
            }
            SweepAxis::Neighbourhood => point.k = value,
        }
        point.evaluate_sources = false;
        point.cache_dir = Some(cfg.cache_dir());
        point.output = cfg.output.join(format!("sweep-{axis}-{value}"));
        match run(&point) {
            Ok(out) => rows.extend(out.report.records.into_iter().map(|r| SweepRow {
                value,
                task: Some(r.task),
                dataset: r.dataset,
                score: r.score,
                error: r.error,
            })),
            Err(e) => {
                log::warn!("sweep point {axis} = {value} failed: {e}");
                rows.push(SweepRow {
                    value,
                    task: None,
                    dataset: String::new(),
                    score: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let path = cfg.output.join(format!("sweep-{axis}.csv"));
    write_atomic(&path, |w| write_sweep_csv(axis, &rows, w).map_err(std::io::Error::other))?;
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(axis: SweepAxis, rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([axis.to_string().as_str(), "task", "dataset", "score", "error"])?;
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.task.map_or_else(String::new, |t| t.to_string()),
            r.dataset.clone(),
            r.score.map_or_else(String::new, |s| s.to_string()),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config(dir: &Path) -> PipelineConfig {
        let a = dir.join("a.txt");
        let b = dir.join("b.txt");
        std::fs::write(&a, "x 1 0\ny 0 1\nz 1 1\nw 1 -1\n").unwrap();
        std::fs::write(&b, "x 1 0 0\ny 0 1 0\nz 0 0 1\nw 1 1 1\n").unwrap();
        let sim = dir.join("sim.txt");
        std::fs::write(&sim, "x y 1\nx z 3\ny w 2\n").unwrap();
        PipelineConfig {
            k: 2,
            dim: 2,
            output: dir.join("out"),
            sources: vec![
                SourceEntry {
                    name: None,
                    path: a,
                    format: Format::GloveText,
                    scale: None,
                },
                SourceEntry {
                    name: None,
                    path: b,
                    format: Format::GloveText,
                    scale: None,
                },
            ],
            evaluations: vec![EvalEntry {
                name: None,
                task: TaskKind::Similarity,
                path: sim,
                test_path: None,
                format: None,
                k: None,
            }],
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn conc_reports_summed_dimensionality() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(dir.path());
        cfg.method = Method::Conc;
        let out = run(&cfg).unwrap();
        assert_eq!(out.report.meta_dim, 5);
        assert_eq!(out.report.records.len(), 3);
        assert!(cfg.output.join("report.json").exists());
        assert!(cfg.output.join("report.csv").exists());
    }

    #[test]
    fn second_run_is_all_cache_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        let first = run(&cfg).unwrap();
        let report = std::fs::read(cfg.output.join("report.json")).unwrap();
        let second = run(&cfg).unwrap();
        assert_eq!(second.cache_misses, 0);
        assert_eq!(second.cache_hits, first.cache_misses);
        assert_eq!(std::fs::read(cfg.output.join("report.json")).unwrap(), report);
    }

    #[test]
    fn stage_failures_name_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = toy_config(dir.path());
        cfg.sources[0].path = dir.path().join("missing.txt");
        let err = run(&cfg).unwrap_err();
        assert_eq!(err.stage(), Some("ingest"));
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn ablation_requires_a_known_source() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = toy_config(dir.path());
        assert!(ablate(&cfg, "a").is_err());
    }
}
