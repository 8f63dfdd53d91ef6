//! Experiment manifest: a single TOML file describing sources, stage
//! parameters and evaluations.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{VocabPolicy, DEFAULT_EMPHASIS, DEFAULT_SVD_DIM};
use crate::embio::Format;
use crate::error::{Error, Result};
use crate::evalsuite::TextEvalConfig;
use crate::neighbours::{DEFAULT_K, DEFAULT_LEAF_SIZE};
use crate::project::eigen::EigenConfig;
use crate::project::DEFAULT_DIM;
use crate::recon::SolverConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Lle,
    Conc,
    Svd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Sgd,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Similarity,
    Analogy,
    Relation,
    Text,
    /// Neighbourhood agreement with a reference embedding (e.g. the latent
    /// space of a synthetic instance).
    Overlap,
}

macro_rules! kebab_enum {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(<$ty>::$variant),)*
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of: ", $($name, " "),*),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $name,)* })
            }
        }
    };
}

kebab_enum!(Method { Lle => "lle", Conc => "conc", Svd => "svd" });
kebab_enum!(SolverKind { Sgd => "sgd", Exact => "exact" });
kebab_enum!(TaskKind {
    Similarity => "similarity",
    Analogy => "analogy",
    Relation => "relation",
    Text => "text",
    Overlap => "overlap",
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    /// Defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub path: PathBuf,
    pub format: Format,
    /// CONC/SVD block scale; defaults to the emphasis factor for sources
    /// listed in `conc.emphasized` and 1 otherwise.
    #[serde(default)]
    pub scale: Option<f64>,
}

impl SourceEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| self.path.display().to_string(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalEntry {
    /// Dataset label in reports; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub task: TaskKind,
    /// Dataset file; for `text` the training file, for `overlap` the
    /// reference embedding.
    pub path: PathBuf,
    /// Test file of a `text` task.
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    /// Format of the reference embedding of an `overlap` task.
    #[serde(default)]
    pub format: Option<Format>,
    /// Neighbourhood size of an `overlap` task (default 10).
    #[serde(default)]
    pub k: Option<usize>,
}

impl EvalEntry {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map_or_else(|| self.path.display().to_string(), |s| s.to_string_lossy().into_owned())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcSettings {
    pub emphasis: f64,
    pub emphasized: Vec<String>,
    pub policy: VocabPolicy,
}

impl Default for ConcSettings {
    fn default() -> Self {
        ConcSettings {
            emphasis: DEFAULT_EMPHASIS,
            emphasized: Vec::new(),
            policy: VocabPolicy::Intersection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvdSettings {
    pub dim: usize,
    pub apply_scaling: bool,
}

impl Default for SvdSettings {
    fn default() -> Self {
        SvdSettings {
            dim: DEFAULT_SVD_DIM,
            apply_scaling: true,
        }
    }
}

/// Full pipeline configuration. The nested `seed` keys of `sgd`, `eigen`
/// and `text` are replaced by substreams of the root `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub k: usize,
    pub dim: usize,
    pub include_self: bool,
    pub row_normalize: bool,
    pub method: Method,
    pub solver: SolverKind,
    pub leaf_size: usize,
    pub sgd: SolverConfig,
    pub eigen: EigenConfig,
    pub conc: ConcSettings,
    pub svd: SvdSettings,
    pub text: TextEvalConfig,
    /// Also score every source on the evaluations.
    pub evaluate_sources: bool,
    /// Also write the meta-embedding in GloVe text format.
    pub write_text: bool,
    pub output: PathBuf,
    /// Defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub sources: Vec<SourceEntry>,
    pub evaluations: Vec<EvalEntry>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            k: DEFAULT_K,
            dim: DEFAULT_DIM,
            include_self: false,
            row_normalize: true,
            method: Method::Lle,
            solver: SolverKind::Sgd,
            leaf_size: DEFAULT_LEAF_SIZE,
            sgd: SolverConfig::default(),
            eigen: EigenConfig::default(),
            conc: ConcSettings::default(),
            svd: SvdSettings::default(),
            text: TextEvalConfig::default(),
            evaluate_sources: true,
            write_text: true,
            output: PathBuf::from("out"),
            cache_dir: None,
            sources: Vec::new(),
            evaluations: Vec::new(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("configuration: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// Reads a TOML file; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::parse(path, 0, m),
            e => e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.output);
        if let Some(c) = &mut self.cache_dir {
            resolve(base, c);
        }
        for s in &mut self.sources {
            resolve(base, &mut s.path);
        }
        for e in &mut self.evaluations {
            resolve(base, &mut e.path);
            if let Some(t) = &mut e.test_path {
                resolve(base, t);
            }
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output.join("cache"))
    }

    pub fn source_names(&self) -> Vec<String> {
        self.sources.iter().map(SourceEntry::display_name).collect()
    }

    /// CONC/SVD scale of each source.
    pub fn source_scales(&self) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| {
                s.scale.unwrap_or_else(|| {
                    if self.conc.emphasized.contains(&s.display_name()) {
                        self.conc.emphasis
                    } else {
                        1.0
                    }
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::InvalidArgument("no sources configured".into()));
        }
        let names = self.source_names();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::InvalidArgument(format!("duplicate source name {n:?}")));
            }
        }
        for e in &self.conc.emphasized {
            if !names.contains(e) {
                return Err(Error::InvalidArgument(format!("emphasized source {e:?} is not configured")));
            }
        }
        if self.method != Method::Lle && self.sources.len() < 2 {
            return Err(Error::InvalidArgument(format!("method {} needs at least two sources", self.method)));
        }
        if self.k == 0 || self.dim == 0 || self.leaf_size == 0 {
            return Err(Error::InvalidArgument("k, dim and leaf_size must be positive".into()));
        }
        if self.conc.emphasis <= 0.0 || self.source_scales().iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidArgument("source scales must be positive".into()));
        }
        self.sgd.validate()?;
        let inputs = self
            .sources
            .iter()
            .map(|s| &s.path)
            .chain(self.evaluations.iter().map(|e| &e.path))
            .chain(self.evaluations.iter().filter_map(|e| e.test_path.as_ref()));
        for p in inputs {
            if p == &self.output {
                return Err(Error::InvalidArgument(format!(
                    "input {} coincides with the output directory",
                    p.display()
                )));
            }
        }
        for e in &self.evaluations {
            if e.task == TaskKind::Text && e.test_path.is_none() {
                return Err(Error::InvalidArgument(format!("text task {} needs test_path", e.display_name())));
            }
        }
        if self.method == Method::Lle && self.k < self.dim + 1 {
            log::warn!("k = {} is below d_P + 1 = {}; results may be degenerate", self.k, self.dim + 1);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!((c.k, c.dim, c.svd.dim), (1200, 300, 300));
        assert_eq!((c.sgd.learning_rate, c.sgd.max_iters), (0.01, 100));
        assert_eq!(c.conc.emphasis, 8.0);
        assert_eq!((c.method, c.solver), (Method::Lle, SolverKind::Sgd));
    }

    #[test]
    fn toml_round_trip_and_resolution() {
        let text = r#"
            k = 40
            dim = 20
            [[sources]]
            path = "a.txt"
            format = "glove-text"
            [[evaluations]]
            task = "similarity"
            path = "/data/rg.txt"
        "#;
        let mut c = PipelineConfig::from_toml(text).unwrap();
        c.resolve_paths(Path::new("/exp"));
        assert_eq!(c.sources[0].path, Path::new("/exp/a.txt"));
        assert_eq!(c.evaluations[0].path, Path::new("/data/rg.txt"));
        assert_eq!(c.sources[0].display_name(), "a");
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::from_toml("kk = 3").is_err());
        let mut c = PipelineConfig::default();
        assert!(c.validate().is_err());
        c.sources.push(SourceEntry {
            name: None,
            path: "x.txt".into(),
            format: Format::GloveText,
            scale: None,
        });
        c.validate().unwrap();
        c.method = Method::Conc;
        assert!(c.validate().is_err());
        assert_eq!("svd".parse::<Method>().unwrap(), Method::Svd);
        assert!("pca".parse::<Method>().is_err());
    }

    #[test]
    fn emphasis_applies_to_named_sources() {
        let mut c = PipelineConfig::default();
        for n in ["glove", "hlbl"] {
            c.sources.push(SourceEntry {
                name: Some(n.into()),
                path: format!("{n}.txt").into(),
                format: Format::GloveText,
                scale: None,
            });
        }
        c.conc.emphasized = vec!["glove".into()];
        assert_eq!(c.source_scales(), vec![8.0, 1.0]);
    }
}
