use std::path::Path;

use metaembed::embio::{self, Format};
use metaembed::evalsuite::{make_synthetic, SourceSpec};
use metaembed::pipeline::{self, PipelineConfig, SweepAxis};

/// Writes three synthetic sources plus a latent reference and returns a
/// config over them.
fn fixture(dir: &Path, method: &str) -> PipelineConfig {
    let specs: Vec<SourceSpec> = [6, 8, 10]
        .iter()
        .map(|&dim| SourceSpec {
            dim,
            noise: 0.1,
            coverage: 0.9,
        })
        .collect();
    let (latent, sets) = make_synthetic(120, 5, &specs, 9).unwrap();
    embio::save_embeddings(&latent, dir.join("latent.txt"), Format::GloveText).unwrap();
    let mut toml = format!("method = \"{method}\"\nk = 10\ndim = 4\noutput = \"out\"\n\n[svd]\ndim = 4\n");
    for s in &sets {
        embio::save_embeddings(s, dir.join(format!("{}.txt", s.name)), Format::GloveText).unwrap();
        toml += &format!("\n[[sources]]\npath = \"{}.txt\"\nformat = \"glove-text\"\n", s.name);
    }
    toml += "\n[[evaluations]]\nname = \"latent\"\ntask = \"overlap\"\npath = \"latent.txt\"\nformat = \"glove-text\"\n";
    std::fs::write(dir.join("config.toml"), toml).unwrap();
    PipelineConfig::load(dir.join("config.toml")).unwrap()
}

#[test]
fn every_method_runs_end_to_end() {
    for method in ["lle", "conc", "svd"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = fixture(dir.path(), method);
        let out = pipeline::run(&cfg).unwrap();
        assert_eq!(out.report.records.len(), 4, "{method}");
        let expected_dim = if method == "conc" { 24 } else { 4 };
        assert_eq!(out.report.meta_dim, expected_dim, "{method}");
        assert!(out.report.score(method, "latent").is_some(), "{method}");
    }
}

#[test]
fn sweep_writes_one_row_per_value_and_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "lle");
    let rows = pipeline::sweep(&cfg, SweepAxis::Neighbourhood, &[5, 8, 12]).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), [5, 8, 12]);
    assert!(rows.iter().all(|r| r.score.is_some() && r.error.is_none()));
    let csv = std::fs::read_to_string(cfg.output.join("sweep-neighbourhood.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    assert!(pipeline::sweep(&cfg, SweepAxis::Dimension, &[4, 2]).is_err());
}

#[test]
fn ablation_drops_one_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture(dir.path(), "lle");
    let full = pipeline::run(&cfg).unwrap();
    let held = pipeline::ablate(&cfg, "src1").unwrap();
    assert_eq!(held.report.ablation.as_deref(), Some("src1"));
    assert_eq!(held.report.sources.len(), 2);
    assert!(held.report.sources.iter().all(|s| s.name != "src1"));
    assert!(held.meta_path.starts_with(cfg.output.join("ablate-src1")));
    assert_ne!(full.report, held.report);

    let err = pipeline::ablate(&cfg, "nope").unwrap_err();
    assert_eq!(err.stage(), Some("config"));
}
