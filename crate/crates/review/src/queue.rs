use std::str::FromStr;

use chrono::{DateTime, Utc};
use memelens_core::augment::{augment_meme, AugmentedMeme};
use memelens_core::corpus::Corpus;
use memelens_core::features::FeaturePipeline;
use memelens_core::gbdt::GbdtModel;
use serde::{Deserialize, Serialize};

use crate::store::LabelRecord;

/// A scored meme that may enter the review queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub img: String,
    pub augmentation: AugmentedMeme,
}

impl Candidate {
    pub fn id(&self) -> &str {
        &self.augmentation.id
    }

    pub fn score(&self) -> f64 {
        self.augmentation.score
    }
}

/// Scores and augments every annotated meme of `corpus`, in id order.
pub fn augment_corpus(
    corpus: &Corpus,
    model: &GbdtModel,
    pipeline: &FeaturePipeline,
    threshold: f64,
    top_k: usize,
) -> memelens_core::Result<Vec<Candidate>> {
    let mut candidates = corpus
        .annotated()
        .map(|(record, bundle)| {
            Ok(Candidate {
                text: record.text.clone(),
                img: record.img.clone(),
                augmentation: augment_meme(record, bundle, model, pipeline, threshold, top_k)?,
            })
        })
        .collect::<memelens_core::Result<Vec<_>>>()?;
    candidates.sort_by(|a, b| a.id().cmp(b.id()));
    Ok(candidates)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueSort {
    /// Highest score first, ties by ascending id.
    #[default]
    Score,
    Id,
}

impl FromStr for QueueSort {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "score" => Ok(QueueSort::Score),
            "id" => Ok(QueueSort::Id),
            other => Err(format!("unknown sort \"{other}\"; expected score or id")),
        }
    }
}

/// Candidates scoring at least `flag_threshold`, in queue order.
pub fn build_queue(candidates: &[Candidate], flag_threshold: f64, sort: QueueSort) -> Vec<&Candidate> {
    let mut queue: Vec<&Candidate> = candidates.iter().filter(|c| c.score() >= flag_threshold).collect();
    match sort {
        QueueSort::Score => queue.sort_by(|a, b| b.score().total_cmp(&a.score()).then_with(|| a.id().cmp(b.id()))),
        QueueSort::Id => queue.sort_by(|a, b| a.id().cmp(b.id())),
    }
    queue
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Pending,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    pub text: String,
    pub img: String,
    pub augmentation: AugmentedMeme,
    pub status: ReviewStatus,
    pub human_label: Option<u8>,
    pub labeled_at: Option<DateTime<Utc>>,
    pub annotator: Option<String>,
}

impl ReviewItem {
    pub fn new(candidate: &Candidate, label: Option<&LabelRecord>) -> Self {
        ReviewItem {
            id: candidate.id().to_string(),
            text: candidate.text.clone(),
            img: candidate.img.clone(),
            augmentation: candidate.augmentation.clone(),
            status: if label.is_some() {
                ReviewStatus::Labeled
            } else {
                ReviewStatus::Pending
            },
            human_label: label.map(|l| l.label),
            labeled_at: label.map(|l| l.labeled_at),
            annotator: label.and_then(|l| l.annotator.clone()),
        }
    }
}

/// Model prediction versus human decision over labeled items.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementConfusion {
    pub model_pos_human_pos: u64,
    pub model_pos_human_neg: u64,
    pub model_neg_human_pos: u64,
    pub model_neg_human_neg: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n_reviewed: u64,
    /// Fraction of reviewed items where the human label equals the model's
    /// thresholded prediction; 0 when nothing has been reviewed.
    pub agreement: f64,
    pub human_positive_rate: f64,
    pub model_positive_rate: f64,
    pub confusion: AgreementConfusion,
}

impl AgreementStats {
    /// `pairs` yields (model predicted label, human label) for labeled items.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Self {
        let mut c = AgreementConfusion::default();
        for (model, human) in pairs {
            match (model == 1, human == 1) {
                (true, true) => c.model_pos_human_pos += 1,
                (true, false) => c.model_pos_human_neg += 1,
                (false, true) => c.model_neg_human_pos += 1,
                (false, false) => c.model_neg_human_neg += 1,
            }
        }
        let n = c.model_pos_human_pos + c.model_pos_human_neg + c.model_neg_human_pos + c.model_neg_human_neg;
        let rate = |k: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        AgreementStats {
            n_reviewed: n,
            agreement: rate(c.model_pos_human_pos + c.model_neg_human_neg),
            human_positive_rate: rate(c.model_pos_human_pos + c.model_neg_human_pos),
            model_positive_rate: rate(c.model_pos_human_pos + c.model_pos_human_neg),
            confusion: c,
        }
    }
}
