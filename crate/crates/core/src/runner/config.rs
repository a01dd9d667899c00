use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticConfig;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::recommender::{RecommenderConfig, DEFAULT_K};
use crate::strategy::{FrequencySource, StrategyConfig, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CorpusSource {
    /// One or more MPD slice files.
    Mpd { paths: Vec<PathBuf> },
    /// Directory written by `save_canonical`.
    Canonical { dir: PathBuf },
    Synthetic(SyntheticConfig),
}

/// Which validation playlists the manipulated model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationData {
    /// Validation collective playlists are manipulated too.
    #[default]
    Manipulated,
    /// Validation stays clean, so early stopping ignores the target.
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub song: String,
    pub artist: String,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            song: "collective:target".into(),
            artist: "collective:artist".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub corpus: CorpusSource,
    pub n_test: usize,
    pub n_val: usize,
    /// Each entry is trained and evaluated separately, so a hyperparameter
    /// sweep is a list of configurations.
    #[serde(default = "default_recommenders")]
    pub recommenders: Vec<RecommenderConfig>,
    #[serde(default)]
    pub strategies: Vec<StrategyConfig>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub validation: ValidationData,
    /// Cap on targeted contexts in the similarity report.
    #[serde(default = "default_max_contexts")]
    pub max_contexts: usize,
    /// Skip participant, context and externality reports.
    #[serde(default)]
    pub success_only: bool,
    #[serde(default)]
    pub execution: Execution,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_recommenders() -> Vec<RecommenderConfig> {
    vec![RecommenderConfig::default()]
}
fn default_folds() -> usize {
    5
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_max_contexts() -> usize {
    2000
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths in
    /// the config are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.corpus {
            CorpusSource::Mpd { paths } => paths.iter_mut().for_each(fix),
            CorpusSource::Canonical { dir } => fix(dir),
            CorpusSource::Synthetic(_) => {}
        }
        for s in &mut self.strategies {
            if let StrategyKind::DirLoF { frequency } | StrategyKind::Hybrid { frequency, .. } =
                &mut s.kind
            {
                if let FrequencySource::Proxy { path } = frequency {
                    fix(path);
                }
            }
        }
        if let Some(out) = &mut self.out_dir {
            fix(out);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(Error::Config("folds must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.n_test == 0 {
            return Err(Error::Config("n_test must be >= 1".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0,1]")));
        }
        if self.recommenders.is_empty() {
            return Err(Error::Config("at least one recommender is required".into()));
        }
        for r in &self.recommenders {
            r.validate()?;
        }
        for s in &self.strategies {
            s.kind.validate()?;
        }
        if let CorpusSource::Synthetic(c) = &self.corpus {
            c.validate()?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
