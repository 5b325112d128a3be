//! On-disk layout of a trained model.
//!
//! ```text
//! model/
//!   manifest.json     kind, split seed, input dimension
//!   gbdt.model        (gbdt) trees, importances, loss history
//!   vocabulary.tsv    (gbdt) tf-idf vocabulary
//!   lexicons/         (gbdt) the lexicons the features were computed with
//!   lstm.model        (lstm) weights and loss history
//!   report.json       validation metrics at train time
//!   report.txt
//! ```
//!
//! Everything needed to featurize new memes travels with the model, so a
//! model directory can be evaluated or served without the original config.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use memelens_core::features::{Example, FeaturePipeline};
use memelens_core::gbdt::GbdtModel;
use memelens_core::lexicon::{LexiconSet, LEXICON_FILES};
use memelens_core::neural::LstmModel;
use memelens_core::vectorizer::Vocabulary;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GBDT_FILE: &str = "gbdt.model";
pub const LSTM_FILE: &str = "lstm.model";
pub const VOCABULARY_FILE: &str = "vocabulary.tsv";
pub const LEXICON_DIR: &str = "lexicons";
const MANIFEST_FORMAT: &str = "memelens-model-dir v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbdt,
    Lstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gbdt => "gbdt",
            ModelKind::Lstm => "lstm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub kind: ModelKind,
    /// Seed of the split the model was trained on; evaluation reuses it.
    pub split_seed: u64,
    pub input_dim: usize,
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Gbdt {
        model: GbdtModel,
        pipeline: FeaturePipeline,
    },
    Lstm(LstmModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Gbdt { .. } => ModelKind::Gbdt,
            TrainedModel::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Gbdt { model, .. } => model.n_features(),
            TrainedModel::Lstm(model) => model.input_dim(),
        }
    }

    /// Probability of the hateful class for each example.
    pub fn score(&self, examples: &[Example<'_>]) -> CliResult<Vec<f64>> {
        let scores = match self {
            TrainedModel::Gbdt { model, pipeline } => pipeline
                .rows(examples)?
                .iter()
                .map(|row| model.predict_proba(row))
                .collect::<memelens_core::Result<Vec<_>>>()?,
            TrainedModel::Lstm(model) => examples
                .iter()
                .map(|(_, bundle)| model.predict_proba(&bundle.embedding_seq))
                .collect::<memelens_core::Result<Vec<_>>>()?,
        };
        Ok(scores)
    }

    /// Writes the model files and manifest into `dir`. `lexicon_source` is
    /// the lexicon directory the pipeline was built from (bundled if none).
    pub fn save(&self, dir: &Path, split_seed: u64, lexicon_source: Option<&Path>) -> CliResult<()> {
        create_dir(dir)?;
        match self {
            TrainedModel::Gbdt { model, pipeline } => {
                model.save(&dir.join(GBDT_FILE))?;
                pipeline.vocabulary().save(&dir.join(VOCABULARY_FILE))?;
                let lexicon_dir = dir.join(LEXICON_DIR);
                match lexicon_source {
                    Some(source) => {
                        create_dir(&lexicon_dir)?;
                        for name in LEXICON_FILES {
                            let to = lexicon_dir.join(name);
                            fs::copy(source.join(name), &to).map_err(|e| io_error(&to, e))?;
                        }
                    }
                    None => LexiconSet::write_bundled(&lexicon_dir)?,
                }
            }
            TrainedModel::Lstm(model) => model.save(&dir.join(LSTM_FILE))?,
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            kind: self.kind(),
            split_seed,
            input_dim: self.input_dim(),
        };
        write_file(&dir.join(MANIFEST_FILE), &(to_json(&manifest) + "\n"))
    }

    pub fn load(dir: &Path) -> CliResult<(TrainedModel, Manifest)> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            CliError::Data(format!(
                "{} is not a model directory ({}: {e})",
                dir.display(),
                path.display()
            ))
        })?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: model format error: {e}", path.display())))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(CliError::Data(format!(
                "{}: unsupported model directory version \"{}\" (expected \"{MANIFEST_FORMAT}\")",
                path.display(),
                manifest.format
            )));
        }
        let model = match manifest.kind {
            ModelKind::Gbdt => {
                let model = GbdtModel::load(&dir.join(GBDT_FILE))?;
                let vocabulary = Vocabulary::load(&dir.join(VOCABULARY_FILE))?;
                let lexicons = LexiconSet::load_dir(&dir.join(LEXICON_DIR))?;
                let pipeline = FeaturePipeline::new(lexicons, vocabulary);
                if model.n_features() != pipeline.dim() {
                    return Err(CliError::Data(format!(
                        "{}: model expects {} features but its vocabulary yields {}",
                        dir.display(),
                        model.n_features(),
                        pipeline.dim()
                    )));
                }
                TrainedModel::Gbdt { model, pipeline }
            }
            ModelKind::Lstm => TrainedModel::Lstm(LstmModel::load(&dir.join(LSTM_FILE))?),
        };
        if model.input_dim() != manifest.input_dim {
            return Err(CliError::Data(format!(
                "{}: manifest records input dimension {} but the model has {}",
                path.display(),
                manifest.input_dim,
                model.input_dim()
            )));
        }
        Ok((model, manifest))
    }
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub(crate) fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| io_error(path, e))
}

pub fn model_file(dir: &Path, kind: ModelKind) -> PathBuf {
    dir.join(match kind {
        ModelKind::Gbdt => GBDT_FILE,
        ModelKind::Lstm => LSTM_FILE,
    })
}
