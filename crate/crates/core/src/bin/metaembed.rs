//! Command-line front end. Every subcommand prints a JSON summary on
//! success; failures print a JSON error object to stderr and exit nonzero.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use metaembed::baselines::{self, ConcConfig, VocabPolicy};
use metaembed::embio::{self, AlignedSources, EmbeddingSet, Format};
use metaembed::error::{Error, Result};
use metaembed::evalsuite::{self, SourceSpec};
use metaembed::neighbours::{self, NeighbourhoodGraph};
use metaembed::pipeline::{self, EvalEntry, Method, PipelineConfig, SolverKind, SourceEntry, SweepAxis, TaskKind};
use metaembed::project::{self, MetaEmbedding};
use metaembed::recon::{self, SparseWeights};

#[derive(Parser, Debug)]
#[command(name = "metaembed", version, about = "Locally linear meta-embeddings of word embedding sets")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the matching key of
/// the configuration file.
#[derive(Args, Debug, Clone)]
struct Global {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Neighbourhood size.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Meta-embedding dimensionality.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// lle, conc or svd.
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    row_normalize: Option<bool>,
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    include_self: Option<bool>,
    /// sgd or exact.
    #[arg(long, global = true)]
    solver: Option<SolverKind>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load an embedding file, unit-normalise it and write a binary cache.
    Ingest {
        input: PathBuf,
        /// Input format (detected when omitted).
        #[arg(long)]
        format: Option<Format>,
        /// Keep the vectors as stored instead of unit-normalising them.
        #[arg(long)]
        raw: bool,
    },
    /// Build the per-source k-NN graph.
    Knn {
        sources: Vec<PathBuf>,
        /// Also dump the graph as text.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Fit reconstruction weights for a graph.
    Weights {
        sources: Vec<PathBuf>,
        #[arg(long)]
        graph: PathBuf,
        /// Also write `word neighbour weight` triples.
        #[arg(long)]
        text: Option<PathBuf>,
    },
    /// Project to the bottom eigenvectors of the combined weights.
    Project {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Output format.
        #[arg(long, default_value = "cache-binary")]
        format: Format,
    },
    /// Concatenation baseline.
    Conc {
        sources: Vec<PathBuf>,
        /// Keep the union vocabulary with zero-filled blocks.
        #[arg(long)]
        union: bool,
        #[arg(long, default_value = "cache-binary")]
        format: Format,
    },
    /// Truncated-SVD baseline.
    Svd {
        sources: Vec<PathBuf>,
        /// Do not apply the CONC scale factors to the blocks.
        #[arg(long)]
        no_scaling: bool,
        #[arg(long, default_value = "cache-binary")]
        format: Format,
    },
    /// Evaluate an embedding on the configured (or given) datasets.
    Eval {
        embedding: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        /// Extra dataset as `task=path`; for text `text=train,test`.
        #[arg(long = "task")]
        tasks: Vec<String>,
    },
    /// Run the full pipeline.
    Run,
    /// Run the pipeline over a grid of dimensions or neighbourhood sizes.
    Sweep {
        /// dimension or neighbourhood.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Run the pipeline with one source held out.
    Ablate {
        #[arg(long)]
        hold_out: String,
    },
    /// Write a synthetic instance (latent space, sources and a config).
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        latent_dim: usize,
        /// Source as `dim:noise:coverage`; repeatable.
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
    },
}

fn base_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = g.seed {
        cfg.seed = v;
    }
    if let Some(v) = g.k {
        cfg.k = v;
    }
    if let Some(v) = g.dim {
        cfg.dim = v;
        cfg.svd.dim = v;
    }
    if let Some(v) = g.method {
        cfg.method = v;
    }
    if let Some(v) = g.row_normalize {
        cfg.row_normalize = v;
    }
    if let Some(v) = g.include_self {
        cfg.include_self = v;
    }
    if let Some(v) = g.solver {
        cfg.solver = v;
    }
    Ok(cfg)
}

fn require_out(g: &Global) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("--out is required for this command".into()))
}

/// Sources from positional paths, or from the configuration when none are
/// given. All are unit-normalised.
fn load_sources(paths: &[PathBuf], cfg: &PipelineConfig) -> Result<(Vec<EmbeddingSet>, Vec<f64>)> {
    let entries: Vec<SourceEntry> = if paths.is_empty() {
        cfg.sources.clone()
    } else {
        paths
            .iter()
            .map(|p| {
                Ok(SourceEntry {
                    name: None,
                    path: p.clone(),
                    format: embio::detect_format(p)?,
                    scale: None,
                })
            })
            .collect::<Result<_>>()?
    };
    if entries.is_empty() {
        return Err(Error::InvalidArgument("no sources given".into()));
    }
    let mut scales_cfg = cfg.clone();
    scales_cfg.sources = entries.clone();
    let scales = scales_cfg.source_scales();
    let sets = entries
        .iter()
        .map(|e| {
            let mut set = embio::l2_normalize(embio::load_embeddings(&e.path, e.format)?)?;
            set.name = e.display_name();
            Ok(set)
        })
        .collect::<Result<_>>()?;
    Ok((sets, scales))
}

fn parse_task(spec: &str) -> Result<EvalEntry> {
    let (task, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("--task expects task=path, got {spec:?}")))?;
    let task: TaskKind = task.parse()?;
    let (path, test_path) = match (task, path.split_once(',')) {
        (TaskKind::Text, Some((train, test))) => (PathBuf::from(train), Some(PathBuf::from(test))),
        _ => (PathBuf::from(path), None),
    };
    Ok(EvalEntry {
        name: None,
        task,
        path,
        test_path,
        format: None,
        k: None,
    })
}

fn parse_spec(spec: &str) -> Result<SourceSpec> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("--source expects dim:noise:coverage, got {spec:?}"));
    let [dim, noise, coverage] = parts[..] else {
        return Err(bad());
    };
    Ok(SourceSpec {
        dim: dim.parse().map_err(|_| bad())?,
        noise: noise.parse().map_err(|_| bad())?,
        coverage: coverage.parse().map_err(|_| bad())?,
    })
}

fn save_meta(meta: &MetaEmbedding, path: &Path, format: Format) -> Result<()> {
    meta.save(path, format)
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest { input, format, raw } => {
            let out = require_out(g)?;
            let format = match format {
                Some(f) => f,
                None => embio::detect_format(&input)?,
            };
            let mut set = embio::load_embeddings(&input, format)?;
            if !raw {
                set = embio::l2_normalize(set)?;
            }
            embio::save_cache(&set, out)?;
            Ok(json!({"out": out, "words": set.len(), "dim": set.dim()}))
        }
        Command::Knn { sources, text } => {
            let cfg = base_config(g)?;
            let out = require_out(g)?;
            let (sets, _) = load_sources(&sources, &cfg)?;
            let aligned = AlignedSources::new(&sets)?;
            let graph = neighbours::build_graph(&aligned, cfg.k, cfg.include_self, cfg.leaf_size)?;
            graph.save(out)?;
            if let Some(t) = text {
                graph.dump_text_file(t)?;
            }
            Ok(json!({"out": out, "words": graph.len(), "sources": graph.num_sources(), "k": cfg.k}))
        }
        Command::Weights { sources, graph, text } => {
            let cfg = base_config(g)?;
            let out = require_out(g)?;
            let (sets, _) = load_sources(&sources, &cfg)?;
            let aligned = AlignedSources::new(&sets)?;
            let graph = NeighbourhoodGraph::load(&graph)?;
            if graph.vocab() != &aligned.vocab {
                return Err(Error::InvalidArgument("graph vocabulary does not match the sources".into()));
            }
            let weights = match cfg.solver {
                SolverKind::Sgd => recon::fit_weights_sgd(&aligned, &graph, &pipeline::effective_solver_config(&cfg))?,
                SolverKind::Exact => recon::fit_weights_exact(&aligned, &graph)?,
            };
            let phi = recon::reconstruction_error(&weights, &aligned, &graph)?;
            weights.save(out)?;
            if let Some(t) = text {
                weights.save_text(&aligned.vocab, t)?;
            }
            Ok(json!({"out": out, "solver": cfg.solver.to_string(), "reconstruction_error": phi}))
        }
        Command::Project { graph, weights, format } => {
            let cfg = base_config(g)?;
            let out = require_out(g)?;
            let graph = NeighbourhoodGraph::load(&graph)?;
            let weights = SparseWeights::load(&weights)?;
            let combined = project::combine_weights(&weights, &graph, cfg.row_normalize)?;
            let projection = project::project(&combined, graph.vocab(), cfg.dim, &pipeline::effective_eigen_config(&cfg))?;
            save_meta(&projection.embedding, out, format)?;
            Ok(json!({
                "out": out,
                "dim": cfg.dim,
                "eigenvalues": projection.eigenvalues,
                "max_residual": projection.residuals.iter().copied().fold(0.0, f64::max),
            }))
        }
        Command::Conc { sources, union, format } => {
            let cfg = base_config(g)?;
            let out = require_out(g)?;
            let (sets, scales) = load_sources(&sources, &cfg)?;
            let policy = if union { VocabPolicy::UnionZeroFill } else { cfg.conc.policy };
            let meta = baselines::concat(&AlignedSources::new(&sets)?, &ConcConfig { scales, policy })?;
            save_meta(&meta, out, format)?;
            Ok(json!({"out": out, "words": meta.len(), "dim": meta.dim()}))
        }
        Command::Svd { sources, no_scaling, format } => {
            let cfg = base_config(g)?;
            let out = require_out(g)?;
            let (sets, scales) = load_sources(&sources, &cfg)?;
            let conc = ConcConfig {
                scales,
                policy: VocabPolicy::UnionZeroFill,
            };
            let result = baselines::svd_meta(
                &AlignedSources::new(&sets)?,
                cfg.svd.dim,
                &conc,
                !no_scaling && cfg.svd.apply_scaling,
                &pipeline::effective_eigen_config(&cfg),
            )?;
            save_meta(&result.embedding, out, format)?;
            Ok(json!({
                "out": out,
                "dim": cfg.svd.dim,
                "singular_values": result.singular_values,
                "rank_deficient": result.rank_deficient,
            }))
        }
        Command::Eval { embedding, format, tasks } => {
            let mut cfg = base_config(g)?;
            for t in &tasks {
                cfg.evaluations.push(parse_task(t)?);
            }
            if cfg.evaluations.is_empty() {
                return Err(Error::InvalidArgument("no evaluations configured; use --task or --config".into()));
            }
            let format = match format {
                Some(f) => f,
                None => embio::detect_format(&embedding)?,
            };
            let emb = MetaEmbedding::load(&embedding, format)?;
            let name = embedding
                .file_stem()
                .map_or_else(|| "embedding".to_string(), |s| s.to_string_lossy().into_owned());
            let records = pipeline::evaluate_all(&cfg, &[(name, emb)])?;
            let value = json!({ "records": records });
            if let Some(out) = &g.out {
                pipeline::write_atomic(out, |w| {
                    serde_json::to_writer_pretty(&mut *w, &value)?;
                    writeln!(w)
                })?;
            }
            Ok(value)
        }
        Command::Run => {
            let mut cfg = base_config(g)?;
            if let Some(out) = &g.out {
                cfg.output = out.clone();
            }
            let out = pipeline::run(&cfg)?;
            Ok(json!({
                "output": cfg.output,
                "meta": out.meta_path,
                "cache_hits": out.cache_hits,
                "cache_misses": out.cache_misses,
                "records": out.report.records,
            }))
        }
        Command::Sweep { axis, values } => {
            let mut cfg = base_config(g)?;
            if let Some(out) = &g.out {
                cfg.output = out.clone();
            }
            let rows = pipeline::sweep(&cfg, axis, &values)?;
            Ok(json!({"csv": cfg.output.join(format!("sweep-{axis}.csv")), "rows": rows}))
        }
        Command::Ablate { hold_out } => {
            let mut cfg = base_config(g)?;
            if let Some(out) = &g.out {
                cfg.output = out.clone();
            }
            let out = pipeline::ablate(&cfg, &hold_out)?;
            Ok(json!({"meta": out.meta_path, "ablation": hold_out, "records": out.report.records}))
        }
        Command::Synth { n, latent_dim, sources } => {
            let out = require_out(g)?;
            let specs = sources.iter().map(|s| parse_spec(s)).collect::<Result<Vec<_>>>()?;
            let seed = g.seed.unwrap_or(0);
            let (latent, sets) = evalsuite::make_synthetic(n, latent_dim, &specs, seed)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            embio::save_embeddings(&latent, out.join("latent.txt"), Format::GloveText)?;
            let mut cfg = PipelineConfig {
                seed,
                k: g.k.unwrap_or(40),
                dim: g.dim.unwrap_or(latent_dim),
                output: PathBuf::from("out"),
                ..PipelineConfig::default()
            };
            for set in &sets {
                let file = format!("{}.txt", set.name);
                embio::save_embeddings(set, out.join(&file), Format::GloveText)?;
                cfg.sources.push(SourceEntry {
                    name: Some(set.name.clone()),
                    path: PathBuf::from(file),
                    format: Format::GloveText,
                    scale: None,
                });
            }
            cfg.evaluations.push(EvalEntry {
                name: Some("latent".into()),
                task: TaskKind::Overlap,
                path: PathBuf::from("latent.txt"),
                test_path: None,
                format: Some(Format::GloveText),
                k: Some(10),
            });
            let config_path = out.join("config.toml");
            pipeline::write_atomic(&config_path, |w| w.write_all(cfg.to_toml().as_bytes()))?;
            Ok(json!({"config": config_path, "sources": sets.len(), "words": n}))
        }
    }
}

fn error_json(e: &Error) -> serde_json::Value {
    let root = match e {
        Error::Stage { source, .. } => source.as_ref(),
        e => e,
    };
    json!({"error": {"kind": e.kind(), "stage": e.stage(), "message": root.to_string()}})
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": "usage", "stage": null, "message": e.to_string().trim()}}));
            return ExitCode::from(2);
        }
    };
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("{}", json!({"error": {"kind": "invalid_argument", "stage": null, "message": e.to_string()}}));
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("summary serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
