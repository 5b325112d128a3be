//! Meme corpus and annotation sidecar: loading, validation, splits and folds.
//!
//! The memes file follows the public Hateful Memes JSONL layout (`id`, `img`,
//! `text`, optional `label`), so the licensed dataset can be loaded as is.
//! Perception outputs (captions, objects, entities, NLI probabilities and
//! encoder embeddings) arrive precomputed in a second JSONL file keyed by id.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of every encoder embedding vector.
pub const EMBEDDING_DIM: usize = 768;

const NLI_SUM_TOLERANCE: f64 = 1e-6;
const TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemeRecord {
    pub id: String,
    pub img: String,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    #[serde(skip_serializing_if = "is_unassigned")]
    pub split: Split,
}

fn is_unassigned(split: &Split) -> bool {
    *split == Split::Unassigned
}

impl MemeRecord {
    pub fn new(id: impl Into<String>, img: impl Into<String>, text: impl Into<String>) -> Self {
        MemeRecord {
            id: id.into(),
            img: img.into(),
            text: text.into(),
            label: None,
            split: Split::Unassigned,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedEntity {
    #[serde(rename = "text")]
    pub surface: String,
    #[serde(rename = "label")]
    pub category: String,
}

impl NamedEntity {
    pub fn new(surface: impl Into<String>, category: impl Into<String>) -> Self {
        NamedEntity {
            surface: surface.into(),
            category: category.into(),
        }
    }
}

/// NLI class probabilities between meme text and image caption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliProbs {
    pub contradiction: f64,
    pub neutral: f64,
    pub entailment: f64,
}

impl NliProbs {
    pub fn new(contradiction: f64, neutral: f64, entailment: f64) -> Self {
        NliProbs {
            contradiction,
            neutral,
            entailment,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.contradiction, self.neutral, self.entailment]
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.to_array();
        if parts.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!(
                "nli components must lie in [0, 1], got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > NLI_SUM_TOLERANCE {
            return Err(Error::Validation(format!("nli components must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Precomputed perception outputs for one meme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBundle {
    pub id: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default)]
    pub web_entities: Vec<String>,
    #[serde(default)]
    pub named_entities: Vec<NamedEntity>,
    pub nli: NliProbs,
    pub embedding_seq: Vec<Vec<f64>>,
}

impl AnnotationBundle {
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::Validation(format!("annotation \"{}\": {msg}", self.id));
        if self.id.is_empty() {
            return Err(Error::Validation("annotation with empty id".into()));
        }
        self.nli.validate().map_err(|e| ctx(e.to_string()))?;
        if self.embedding_seq.is_empty() {
            return Err(ctx("embedding_seq must contain at least one vector".into()));
        }
        for (step, vector) in self.embedding_seq.iter().enumerate() {
            if vector.len() != EMBEDDING_DIM {
                return Err(ctx(format!(
                    "embedding step {step} has {} components, expected {EMBEDDING_DIM}",
                    vector.len()
                )));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(ctx(format!("embedding step {step} has non-finite components")));
            }
        }
        for entity in &self.named_entities {
            if !is_entity_category(&entity.category) {
                return Err(ctx(format!(
                    "named entity category \"{}\" is not an uppercase tag",
                    entity.category
                )));
            }
        }
        Ok(())
    }
}

// spaCy-style tags: NORP, PERSON, WORK_OF_ART.
fn is_entity_category(tag: &str) -> bool {
    !tag.is_empty()
        && tag.starts_with(|c: char| c.is_ascii_uppercase())
        && tag
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

/// The public dataset stores ids as integers; synthetic and exported files use strings.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
struct RawMeme {
    id: RawId,
    img: String,
    text: String,
    #[serde(default)]
    label: Option<i64>,
    #[serde(default)]
    split: Option<Split>,
}

/// Folds for cross-validation over the non-test labeled records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub holdout: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<MemeRecord>,
    annotations: BTreeMap<String, AnnotationBundle>,
    split_seed: Option<u64>,
}

impl Corpus {
    /// Builds a validated corpus. Records without annotations are kept; the
    /// feature builders refuse them.
    pub fn new(records: Vec<MemeRecord>, annotations: Vec<AnnotationBundle>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            validate_record(record)?;
            if !seen.insert(record.id.as_str()) {
                return Err(Error::DuplicateId(record.id.clone()));
            }
        }
        let mut by_id = BTreeMap::new();
        for bundle in annotations {
            bundle.validate()?;
            if !seen.contains(bundle.id.as_str()) {
                return Err(Error::Validation(format!(
                    "annotation \"{}\" has no matching meme record",
                    bundle.id
                )));
            }
            if by_id.contains_key(&bundle.id) {
                return Err(Error::DuplicateId(bundle.id));
            }
            by_id.insert(bundle.id.clone(), bundle);
        }
        Ok(Corpus {
            records,
            annotations: by_id,
            split_seed: None,
        })
    }

    pub fn records(&self) -> &[MemeRecord] {
        &self.records
    }

    pub fn annotations(&self) -> &BTreeMap<String, AnnotationBundle> {
        &self.annotations
    }

    pub fn annotation(&self, id: &str) -> Option<&AnnotationBundle> {
        self.annotations.get(id)
    }

    pub fn record(&self, id: &str) -> Option<&MemeRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn split_seed(&self) -> Option<u64> {
        self.split_seed
    }

    /// A record can feed a model only when its annotations are present.
    pub fn is_usable(&self, id: &str) -> bool {
        self.annotations.contains_key(id)
    }

    /// Records paired with their annotation bundles, in file order.
    pub fn annotated(&self) -> impl Iterator<Item = (&MemeRecord, &AnnotationBundle)> {
        self.records
            .iter()
            .filter_map(|r| self.annotations.get(&r.id).map(|b| (r, b)))
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &MemeRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn labeled_count(&self) -> usize {
        self.records.iter().filter(|r| r.label.is_some()).count()
    }

    /// Assigns a stratified, seeded split: 10% of labeled records to test,
    /// the remaining pool divided 8:1 into train and validation. Unlabeled
    /// records stay unassigned.
    pub fn assign_splits(&self, seed: u64) -> Result<Corpus> {
        let (mut positives, mut negatives) = self.labeled_ids_by_class(|_| true);
        let total = positives.len() + negatives.len();
        if total < 10 {
            return Err(Error::InsufficientData(format!(
                "split assignment needs at least 10 labeled records, found {total}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        positives.shuffle(&mut rng);
        negatives.shuffle(&mut rng);

        let n_test = (total as f64 * TEST_FRACTION).round() as usize;
        let (test_pos, test_neg) = stratified_counts(positives.len(), negatives.len(), n_test);
        let pool = total - n_test;
        let n_validation = (pool as f64 / 9.0).round() as usize;
        let (val_pos, val_neg) =
            stratified_counts(positives.len() - test_pos, negatives.len() - test_neg, n_validation);

        let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
        for (ids, n_test, n_val) in [(&positives, test_pos, val_pos), (&negatives, test_neg, val_neg)] {
            for (i, id) in ids.iter().enumerate() {
                let split = if i < n_test {
                    Split::Test
                } else if i < n_test + n_val {
                    Split::Validation
                } else {
                    Split::Train
                };
                assignment.insert(id, split);
            }
        }

        let mut out = self.clone();
        for record in &mut out.records {
            record.split = assignment.get(record.id.as_str()).copied().unwrap_or(Split::Unassigned);
        }
        out.split_seed = Some(seed);
        Ok(out)
    }

    /// Stratified k-fold partition of the labeled, non-test records. Ids in
    /// each list are sorted.
    pub fn make_folds(&self, k: usize, seed: u64) -> Result<Vec<Fold>> {
        if k < 2 {
            return Err(Error::InvalidParams(format!("fold count must be at least 2, got {k}")));
        }
        let (mut positives, mut negatives) = self.labeled_ids_by_class(|r| r.split != Split::Test);
        let n = positives.len() + negatives.len();
        if k > n {
            return Err(Error::InsufficientData(format!(
                "{k} folds requested over {n} participating records"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        positives.shuffle(&mut rng);
        negatives.shuffle(&mut rng);

        let mut holdouts: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
        for (i, id) in positives.iter().chain(negatives.iter()).enumerate() {
            holdouts[i % k].insert(id);
        }
        let all: BTreeSet<&str> = holdouts.iter().flatten().copied().collect();
        Ok(holdouts
            .iter()
            .map(|holdout| Fold {
                train: all
                    .iter()
                    .filter(|id| !holdout.contains(*id))
                    .map(|id| id.to_string())
                    .collect(),
                holdout: holdout.iter().map(|id| id.to_string()).collect(),
            })
            .collect())
    }

    /// Labeled ids split by class, each sorted so the result is independent
    /// of file order.
    fn labeled_ids_by_class(&self, keep: impl Fn(&MemeRecord) -> bool) -> (Vec<&str>, Vec<&str>) {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for record in self.records.iter().filter(|r| keep(r)) {
            match record.label {
                Some(1) => positives.push(record.id.as_str()),
                Some(_) => negatives.push(record.id.as_str()),
                None => {}
            }
        }
        positives.sort_unstable();
        negatives.sort_unstable();
        (positives, negatives)
    }
}

/// Splits `take` items across two classes proportionally to their sizes.
fn stratified_counts(n_pos: usize, n_neg: usize, take: usize) -> (usize, usize) {
    let total = n_pos + n_neg;
    if total == 0 {
        return (0, 0);
    }
    let take = take.min(total);
    let mut pos = ((n_pos * take) as f64 / total as f64).round() as usize;
    pos = pos.min(n_pos).max(take.saturating_sub(n_neg));
    (pos, take - pos)
}

fn validate_record(record: &MemeRecord) -> Result<()> {
    if record.id.is_empty() {
        return Err(Error::Validation("meme record with empty id".into()));
    }
    if let Some(label) = record.label {
        if label > 1 {
            return Err(Error::Validation(format!(
                "meme \"{}\" has label {label}, expected 0 or 1",
                record.id
            )));
        }
    }
    Ok(())
}

fn for_each_line(path: &Path, mut handle: impl FnMut(usize, &str) -> Result<()>) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        handle(i + 1, &line)?;
    }
    Ok(())
}

pub fn read_memes(path: &Path) -> Result<Vec<MemeRecord>> {
    let mut records = Vec::new();
    for_each_line(path, |line_no, line| {
        let raw: RawMeme = serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e))?;
        let label = match raw.label {
            None => None,
            Some(l @ (0 | 1)) => Some(l as u8),
            Some(other) => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("label must be 0 or 1, got {other}"),
                ))
            }
        };
        records.push(MemeRecord {
            id: match raw.id {
                RawId::Text(s) => s,
                RawId::Number(n) => n.to_string(),
            },
            img: raw.img,
            text: raw.text,
            label,
            split: raw.split.unwrap_or_default(),
        });
        Ok(())
    })?;
    Ok(records)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationBundle>> {
    let mut bundles = Vec::new();
    for_each_line(path, |line_no, line| {
        let bundle: AnnotationBundle = serde_json::from_str(line).map_err(|e| Error::parse(path, line_no, e))?;
        bundle.validate().map_err(|e| Error::parse(path, line_no, e))?;
        bundles.push(bundle);
        Ok(())
    })?;
    Ok(bundles)
}

/// Loads and validates the memes file and its annotation sidecar.
pub fn load_corpus(memes_path: &Path, annotations_path: &Path) -> Result<Corpus> {
    let records = read_memes(memes_path)?;
    let annotations = read_annotations(annotations_path)?;
    Corpus::new(records, annotations)
}

fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_memes(path: &Path, records: &[MemeRecord]) -> Result<()> {
    write_jsonl(path, records)
}

pub fn write_annotations<'a>(path: &Path, bundles: impl IntoIterator<Item = &'a AnnotationBundle>) -> Result<()> {
    write_jsonl(path, bundles)
}
