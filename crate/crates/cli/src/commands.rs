use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use memelens_core::corpus::{load_corpus, write_memes, Corpus, Split};
use memelens_core::features::{examples_for_ids, labels_of, split_examples, Example, FeaturePipeline};
use memelens_core::gbdt::train_gbdt;
use memelens_core::lexicon::LexiconSet;
use memelens_core::metrics::{cross_validate, CrossValidationReport, EvalReport};
use memelens_core::neural::train_lstm;
use memelens_core::synthetic::{generate, SyntheticConfig};
use memelens_review::{augment_corpus, build_queue, Candidate, ModelInfo, QueueSort, ReviewConfig, ReviewService};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::model_dir::{io_error, model_file, to_json, write_file, ModelKind, TrainedModel};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const SYNTHETIC_CONFIG: &str = "memelens.toml";

/// Metrics of a model on one split, as written by `train` and `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub model: ModelKind,
    pub split: Split,
    pub split_seed: u64,
    pub n_train: usize,
    pub metrics: EvalReport,
}

impl SplitReport {
    pub fn to_text(&self) -> String {
        format!(
            "model {}\nsplit {}\nsplit_seed {}\nn_train {}\n{}",
            self.model.as_str(),
            self.split.as_str(),
            self.split_seed,
            self.n_train,
            self.metrics.to_text()
        )
    }
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Runtime(format!("writing output: {e}"))
}

fn load_inputs(config: &RunConfig) -> CliResult<(Corpus, LexiconSet)> {
    let paths = config.corpus_paths()?;
    let corpus = load_corpus(&paths.memes, &paths.annotations)?;
    let lexicons = match &paths.lexicons {
        Some(dir) => LexiconSet::load_dir(dir)?,
        None => LexiconSet::bundled(),
    };
    Ok((corpus, lexicons))
}

fn fit(kind: ModelKind, train: &[Example<'_>], lexicons: LexiconSet, config: &RunConfig) -> CliResult<TrainedModel> {
    let labels = labels_of(train)?;
    Ok(match kind {
        ModelKind::Gbdt => {
            let pipeline = FeaturePipeline::fit(train, lexicons, config.tfidf)?;
            let model = train_gbdt(&pipeline.rows(train)?, &labels, &config.gbdt, &pipeline.feature_names())?;
            TrainedModel::Gbdt { model, pipeline }
        }
        ModelKind::Lstm => {
            let sequences: Vec<Vec<Vec<f64>>> = train.iter().map(|(_, b)| b.embedding_seq.clone()).collect();
            TrainedModel::Lstm(train_lstm(&sequences, &labels, &config.lstm)?)
        }
    })
}

fn evaluate_on(model: &TrainedModel, examples: &[Example<'_>], threshold: f64) -> CliResult<EvalReport> {
    let scores = model.score(examples)?;
    Ok(EvalReport::compute(&scores, &labels_of(examples)?, threshold)?)
}

/// `gen-synthetic`: writes a synthetic corpus with planted signals plus a
/// config file pointing at it.
pub fn gen_synthetic(dir: &Path, synthetic: &SyntheticConfig, out: &mut dyn Write) -> CliResult<()> {
    let corpus = generate(synthetic)?;
    let paths = corpus.write(dir)?;
    let config = "# generated by memelens gen-synthetic\n\
                  memes = \"memes.jsonl\"\n\
                  annotations = \"annotations.jsonl\"\n\
                  lexicons = \"lexicons\"\n\
                  model_dir = \"model\"\n";
    write_file(&dir.join(SYNTHETIC_CONFIG), config)?;
    let hateful = corpus.records.iter().filter(|r| r.label == Some(1)).count();
    writeln!(
        out,
        "wrote {} memes ({hateful} hateful, {} planted) to {}\nconfig {}",
        corpus.records.len(),
        corpus.planted.len(),
        paths.memes.parent().unwrap_or(dir).display(),
        dir.join(SYNTHETIC_CONFIG).display()
    )
    .map_err(out_err)
}

/// `split`: assigns the seeded stratified split and reports its sizes;
/// optionally writes the memes file with the assignment.
pub fn split(config: &RunConfig, output: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let (corpus, _) = load_inputs(config)?;
    let corpus = corpus.assign_splits(config.split_seed)?;
    for split in [Split::Train, Split::Validation, Split::Test, Split::Unassigned] {
        let records: Vec<_> = corpus.in_split(split).collect();
        let positives = records.iter().filter(|r| r.label == Some(1)).count();
        writeln!(out, "{} {} hateful {positives}", split.as_str(), records.len()).map_err(out_err)?;
    }
    if let Some(path) = output {
        write_memes(path, corpus.records())?;
        writeln!(out, "wrote {}", path.display()).map_err(out_err)?;
    }
    Ok(())
}

/// `train`: fits on the train split, saves the model directory and reports
/// validation metrics.
pub fn train(config: &RunConfig, kind: ModelKind, out: &mut dyn Write) -> CliResult<SplitReport> {
    let threshold = config.classification_threshold()?;
    let (corpus, lexicons) = load_inputs(config)?;
    let corpus = corpus.assign_splits(config.split_seed)?;
    let train = split_examples(&corpus, Split::Train);
    log::info!("training {} on {} memes", kind.as_str(), train.len());
    let model = fit(kind, &train, lexicons, config)?;
    let validation = split_examples(&corpus, Split::Validation);
    let report = SplitReport {
        model: kind,
        split: Split::Validation,
        split_seed: config.split_seed,
        n_train: train.len(),
        metrics: evaluate_on(&model, &validation, threshold)?,
    };

    let dir = &config.model_dir;
    model.save(dir, config.split_seed, config.lexicons.as_deref())?;
    write_file(&dir.join(REPORT_JSON), &(to_json(&report) + "\n"))?;
    write_file(&dir.join(REPORT_TEXT), &report.to_text())?;
    log::info!("saved {}", model_file(dir, kind).display());
    out.write_all(report.to_text().as_bytes()).map_err(out_err)?;
    Ok(report)
}

/// `evaluate`: scores a saved model on the validation or test split of the
/// split it was trained with.
pub fn evaluate(
    config: &RunConfig,
    split: Split,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<SplitReport> {
    if !matches!(split, Split::Validation | Split::Test) {
        return Err(CliError::Usage(format!(
            "can only evaluate on validation or test, not {}",
            split.as_str()
        )));
    }
    let threshold = config.classification_threshold()?;
    let (model, manifest) = TrainedModel::load(&config.model_dir)?;
    let (corpus, _) = load_inputs(config)?;
    if manifest.split_seed != config.split_seed {
        log::warn!(
            "evaluating with the model's split seed {} instead of the configured {}",
            manifest.split_seed,
            config.split_seed
        );
    }
    let corpus = corpus.assign_splits(manifest.split_seed)?;
    let report = SplitReport {
        model: model.kind(),
        split,
        split_seed: manifest.split_seed,
        n_train: corpus
            .in_split(Split::Train)
            .filter(|r| corpus.is_usable(&r.id))
            .count(),
        metrics: evaluate_on(&model, &split_examples(&corpus, split), threshold)?,
    };
    if let Some(path) = output {
        write_file(path, &(to_json(&report) + "\n"))?;
    }
    out.write_all(report.to_text().as_bytes()).map_err(out_err)?;
    Ok(report)
}

/// `cv`: stratified k-fold cross-validation over the non-test records.
pub fn cross_validation(
    config: &RunConfig,
    kind: ModelKind,
    k: usize,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<CrossValidationReport> {
    let threshold = config.classification_threshold()?;
    let (corpus, lexicons) = load_inputs(config)?;
    let corpus = corpus.assign_splits(config.split_seed)?;
    let folds = corpus.make_folds(k, config.split_seed)?;
    let report = cross_validate(&folds, threshold, |fold| {
        let train = examples_for_ids(&corpus, &fold.train)?;
        let holdout = examples_for_ids(&corpus, &fold.holdout)?;
        let model = fit(kind, &train, lexicons.clone(), config).map_err(into_core)?;
        let scores = model.score(&holdout).map_err(into_core)?;
        Ok((scores, labels_of(&holdout)?))
    })?;
    if let Some(path) = output {
        write_file(path, &(to_json(&report) + "\n"))?;
    }
    writeln!(out, "model {}", kind.as_str()).map_err(out_err)?;
    out.write_all(report.to_text().as_bytes()).map_err(out_err)?;
    Ok(report)
}

// Fold closures must return core errors; every CLI error raised inside one
// originates from a core error or a model-directory problem.
fn into_core(e: CliError) -> memelens_core::Error {
    match e {
        CliError::Usage(m) => memelens_core::Error::InvalidParams(m),
        CliError::Data(m) => memelens_core::Error::Validation(m),
        CliError::Runtime(m) => memelens_core::Error::Format(m),
    }
}

fn gbdt_candidates(config: &RunConfig, threshold: f64) -> CliResult<(Corpus, Vec<Candidate>, ModelInfo)> {
    let (model, _) = TrainedModel::load(&config.model_dir)?;
    let TrainedModel::Gbdt { model, pipeline } = model else {
        return Err(CliError::Usage(
            "per-feature attribution is unsupported for lstm models; train a gbdt model to augment or review memes"
                .into(),
        ));
    };
    let (corpus, _) = load_inputs(config)?;
    let candidates = augment_corpus(&corpus, &model, &pipeline, threshold, config.top_k)?;
    let info = ModelInfo {
        kind: ModelKind::Gbdt.as_str().into(),
        n_trees: model.trees().len(),
        n_features: model.n_features(),
    };
    Ok((corpus, candidates, info))
}

/// `augment`: writes one augmentation record per flagged meme, highest
/// score first, and returns the record count.
pub fn augment(config: &RunConfig, output: &Path, out: &mut dyn Write) -> CliResult<usize> {
    let threshold = config.flag_threshold()?;
    let (_, candidates, _) = gbdt_candidates(config, threshold)?;
    let flagged = build_queue(&candidates, threshold, QueueSort::Score);
    let mut body = String::new();
    for candidate in &flagged {
        body.push_str(&serde_json::to_string(&candidate.augmentation).expect("augmentation serializes"));
        body.push('\n');
    }
    write_file(output, &body)?;
    writeln!(
        out,
        "flagged {} of {} memes at threshold {threshold}; wrote {}",
        flagged.len(),
        candidates.len(),
        output.display()
    )
    .map_err(out_err)?;
    Ok(flagged.len())
}

pub struct ServeOptions {
    pub listen: String,
    pub labels: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
}

/// `serve`: runs the review service until interrupted.
pub fn serve(config: &RunConfig, options: ServeOptions, out: &mut dyn Write) -> CliResult<()> {
    let threshold = config.flag_threshold()?;
    let (_, candidates, model) = gbdt_candidates(config, threshold)?;
    let paths = config.corpus_paths()?;
    let image_root = options
        .image_root
        .unwrap_or_else(|| paths.memes.parent().map(Path::to_path_buf).unwrap_or_default());
    let labels_path = options.labels.unwrap_or_else(|| config.model_dir.join("labels.jsonl"));
    let service = ReviewService::new(
        candidates,
        ReviewConfig {
            threshold,
            image_root,
            labels_path,
            model,
        },
    )?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(format!("starting runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&options.listen)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", options.listen)))?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out, "listening on http://{addr}").map_err(out_err)?;
        out.flush().map_err(out_err)?;
        let shutdown = async {
            if tokio::signal::ctrl_c().await.is_err() {
                std::future::pending::<()>().await;
            }
        };
        memelens_review::serve(listener, Arc::new(service), shutdown)
            .await
            .map_err(|e| CliError::Runtime(format!("server error: {e}")))
    })
}

/// Reads an augmentation export back (one JSON record per line).
pub fn read_augmentations(path: &Path) -> CliResult<Vec<memelens_core::augment::AugmentedMeme>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Share of planted memes whose planted feature is among the first `k`
/// features of their augmentation; memes missing from the export count as
/// misses.
pub fn planted_hit_rate(
    planted: &BTreeMap<String, String>,
    augmentations: &[memelens_core::augment::AugmentedMeme],
    k: usize,
) -> f64 {
    if planted.is_empty() {
        return 0.0;
    }
    let by_id: BTreeMap<&str, _> = augmentations.iter().map(|a| (a.id.as_str(), a)).collect();
    let hits = planted
        .iter()
        .filter(|(id, feature)| {
            by_id
                .get(id.as_str())
                .is_some_and(|a| a.top_features.iter().take(k).any(|f| &f.name == *feature))
        })
        .count();
    hits as f64 / planted.len() as f64
}
