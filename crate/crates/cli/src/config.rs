//! Run configuration: a TOML file whose keys mirror [`RunConfig`], overlaid
//! with command-line flags and environment variables.
//!
//! ```toml
//! memes = "data/memes.jsonl"
//! annotations = "data/annotations.jsonl"
//! lexicons = "data/lexicons"      # optional; bundled lexicons otherwise
//! model_dir = "model"
//! split_seed = 0
//! threshold = 0.5
//! top_k = 8
//!
//! [gbdt]
//! n_estimators = 100
//!
//! [lstm]
//! epochs = 45
//!
//! [tfidf]
//! min_df = 2
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use memelens_core::augment::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use memelens_core::gbdt::GbdtParams;
use memelens_core::neural::LstmParams;
use memelens_core::vectorizer::VectorizerOptions;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub memes: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub model_dir: PathBuf,
    pub split_seed: u64,
    pub threshold: f64,
    pub top_k: usize,
    pub gbdt: GbdtParams,
    pub lstm: LstmParams,
    pub tfidf: VectorizerOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            memes: None,
            annotations: None,
            lexicons: None,
            model_dir: PathBuf::from("model"),
            split_seed: 0,
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            gbdt: GbdtParams::default(),
            lstm: LstmParams::default(),
            tfidf: VectorizerOptions::default(),
        }
    }
}

/// Values given on the command line or through the environment; each one
/// that is set replaces the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub memes: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub lexicons: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub split_seed: Option<u64>,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
}

/// The corpus inputs of a run, checked to exist.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPaths {
    pub memes: PathBuf,
    pub annotations: PathBuf,
    pub lexicons: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        for path in [&mut config.memes, &mut config.annotations, &mut config.lexicons]
            .into_iter()
            .flatten()
        {
            *path = resolve(base, path);
        }
        config.model_dir = resolve(base, &config.model_dir);
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn apply(mut self, overrides: Overrides) -> Self {
        let Overrides {
            memes,
            annotations,
            lexicons,
            model_dir,
            split_seed,
            threshold,
            top_k,
        } = overrides;
        self.memes = memes.or(self.memes);
        self.annotations = annotations.or(self.annotations);
        self.lexicons = lexicons.or(self.lexicons);
        self.model_dir = model_dir.unwrap_or(self.model_dir);
        self.split_seed = split_seed.unwrap_or(self.split_seed);
        self.threshold = threshold.unwrap_or(self.threshold);
        self.top_k = top_k.unwrap_or(self.top_k);
        self
    }

    /// Input paths, required to be configured and present on disk before
    /// anything runs.
    pub fn corpus_paths(&self) -> CliResult<CorpusPaths> {
        let required = |value: &Option<PathBuf>, key: &str| -> CliResult<PathBuf> {
            let path = value
                .clone()
                .ok_or_else(|| CliError::Usage(format!("no {key} path configured; set `{key}` or pass --{key}")))?;
            if !path.is_file() {
                return Err(CliError::Data(format!("{key} file not found: {}", path.display())));
            }
            Ok(path)
        };
        let memes = required(&self.memes, "memes")?;
        let annotations = required(&self.annotations, "annotations")?;
        if let Some(dir) = &self.lexicons {
            if !dir.is_dir() {
                return Err(CliError::Data(format!(
                    "lexicon directory not found: {}",
                    dir.display()
                )));
            }
        }
        Ok(CorpusPaths {
            memes,
            annotations,
            lexicons: self.lexicons.clone(),
        })
    }

    /// Threshold for turning scores into labels; both classes must stay
    /// reachable.
    pub fn classification_threshold(&self) -> CliResult<f64> {
        if self.threshold > 0.0 && self.threshold < 1.0 {
            Ok(self.threshold)
        } else {
            Err(CliError::Usage(format!(
                "threshold must lie strictly between 0 and 1 for evaluation, got {}",
                self.threshold
            )))
        }
    }

    /// Threshold for flagging memes; 0 flags everything.
    pub fn flag_threshold(&self) -> CliResult<f64> {
        if (0.0..=1.0).contains(&self.threshold) {
            Ok(self.threshold)
        } else {
            Err(CliError::Usage(format!(
                "threshold must lie in [0, 1], got {}",
                self.threshold
            )))
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_resolve_against_the_config_directory() {
        let text = r#"
            memes = "memes.jsonl"
            annotations = "/abs/annotations.jsonl"
            split_seed = 7
            [gbdt]
            n_estimators = 20
            [tfidf]
            max_features = 500
        "#;
        let config = RunConfig::from_toml(text, Path::new("/data/run")).unwrap();
        assert_eq!(config.memes.as_deref(), Some(Path::new("/data/run/memes.jsonl")));
        assert_eq!(config.annotations.as_deref(), Some(Path::new("/abs/annotations.jsonl")));
        assert_eq!(config.model_dir, Path::new("/data/run/model"));
        assert_eq!(config.split_seed, 7);
        assert_eq!(config.gbdt.n_estimators, 20);
        assert_eq!(config.gbdt.max_depth, GbdtParams::default().max_depth);
        assert_eq!(config.tfidf.max_features, Some(500));
        assert_eq!(config.tfidf.min_df, 2);
        assert_eq!(config.lstm, LstmParams::default());
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let err = RunConfig::from_toml("tresh = 0.4", Path::new("")).unwrap_err();
        assert!(matches!(err, CliError::Usage(m) if m.contains("tresh")));
        assert!(RunConfig::from_toml("[gbdt]\nlearning_rte = 1", Path::new("")).is_err());
    }

    #[test]
    fn overrides_win() {
        let config = RunConfig::from_toml("threshold = 0.3\ntop_k = 4", Path::new("")).unwrap();
        let config = config.apply(Overrides {
            threshold: Some(0.6),
            model_dir: Some("out".into()),
            ..Overrides::default()
        });
        assert_eq!(config.threshold, 0.6);
        assert_eq!(config.top_k, 4);
        assert_eq!(config.model_dir, Path::new("out"));
    }

    #[test]
    fn thresholds_are_range_checked() {
        let at = |t| RunConfig {
            threshold: t,
            ..RunConfig::default()
        };
        assert!(at(0.0).classification_threshold().is_err());
        assert!(at(0.0).flag_threshold().is_ok());
        assert!(at(1.5).flag_threshold().is_err());
        assert_eq!(at(0.5).classification_threshold().unwrap(), 0.5);
    }

    #[test]
    fn missing_inputs_are_named() {
        let config = RunConfig {
            memes: Some("/nonexistent/memes.jsonl".into()),
            annotations: Some("/nonexistent/annotations.jsonl".into()),
            ..RunConfig::default()
        };
        let err = config.corpus_paths().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/memes.jsonl"));
        assert_eq!(RunConfig::default().corpus_paths().unwrap_err().exit_code(), 1);
    }
}
