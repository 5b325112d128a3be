//! Model input assembly: the engineered block followed by the joint tf-idf
//! channel, plus the naming and channel tagging of every column.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationBundle, Corpus, MemeRecord, Split};
use crate::error::{Error, Result};
use crate::lexicon::{build_engineered, EngineeredVector, LexiconSet, ENGINEERED_DIM, ENGINEERED_NAMES};
use crate::vectorizer::{
    assemble_input, compose_joint_text, fit_vocabulary, is_entity_token, SparseVector, VectorizerOptions, Vocabulary,
};

/// Where a model input column comes from, as shown to moderators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureChannel {
    Engineered,
    TextTerm,
    NamedEntity,
}

impl FeatureChannel {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureChannel::Engineered => "engineered",
            FeatureChannel::TextTerm => "text-term",
            FeatureChannel::NamedEntity => "named-entity",
        }
    }
}

/// Channel of column `index` named `name` in the assembled layout.
pub fn channel_of(index: usize, name: &str) -> FeatureChannel {
    if index < ENGINEERED_DIM {
        FeatureChannel::Engineered
    } else if is_entity_token(name) {
        FeatureChannel::NamedEntity
    } else {
        FeatureChannel::TextTerm
    }
}

/// A labeled, annotated example.
pub type Example<'a> = (&'a MemeRecord, &'a AnnotationBundle);

/// Looks up records and bundles for `ids`, in the given order.
pub fn examples_for_ids<'a>(corpus: &'a Corpus, ids: &[String]) -> Result<Vec<Example<'a>>> {
    let by_id: HashMap<&str, &MemeRecord> = corpus.records().iter().map(|r| (r.id.as_str(), r)).collect();
    ids.iter()
        .map(|id| {
            let record = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::Validation(format!("unknown meme id \"{id}\"")))?;
            let bundle = corpus
                .annotation(id)
                .ok_or_else(|| Error::Validation(format!("meme \"{id}\" has no annotations")))?;
            Ok((*record, bundle))
        })
        .collect()
}

/// Labeled, annotated records of one split, in file order.
pub fn split_examples(corpus: &Corpus, split: Split) -> Vec<Example<'_>> {
    corpus
        .annotated()
        .filter(|(r, _)| r.split == split && r.label.is_some())
        .collect()
}

pub fn labels_of(examples: &[Example<'_>]) -> Result<Vec<u8>> {
    examples
        .iter()
        .map(|(r, _)| {
            r.label
                .ok_or_else(|| Error::Validation(format!("meme \"{}\" has no label", r.id)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePipeline {
    lexicons: LexiconSet,
    vocabulary: Vocabulary,
}

impl FeaturePipeline {
    pub fn new(lexicons: LexiconSet, vocabulary: Vocabulary) -> Self {
        FeaturePipeline { lexicons, vocabulary }
    }

    /// Fits the vocabulary on the joint text of `examples` (the training side only).
    pub fn fit(examples: &[Example<'_>], lexicons: LexiconSet, options: VectorizerOptions) -> Result<Self> {
        let docs = examples
            .iter()
            .map(|(r, b)| compose_joint_text(r, b))
            .collect::<Result<Vec<_>>>()?;
        let vocabulary = fit_vocabulary(&docs, options)?;
        Ok(FeaturePipeline { lexicons, vocabulary })
    }

    pub fn lexicons(&self) -> &LexiconSet {
        &self.lexicons
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// 13 engineered columns plus one per vocabulary term.
    pub fn dim(&self) -> usize {
        ENGINEERED_DIM + self.vocabulary.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        ENGINEERED_NAMES
            .iter()
            .map(|n| n.to_string())
            .chain(self.vocabulary.terms().iter().cloned())
            .collect()
    }

    pub fn feature_name(&self, index: usize) -> Option<&str> {
        if index < ENGINEERED_DIM {
            Some(ENGINEERED_NAMES[index])
        } else {
            self.vocabulary.terms().get(index - ENGINEERED_DIM).map(String::as_str)
        }
    }

    pub fn channel(&self, index: usize) -> Option<FeatureChannel> {
        self.feature_name(index).map(|name| channel_of(index, name))
    }

    pub fn engineered(&self, record: &MemeRecord, bundle: &AnnotationBundle) -> Result<EngineeredVector> {
        build_engineered(record, bundle, &self.lexicons)
    }

    pub fn row(&self, record: &MemeRecord, bundle: &AnnotationBundle) -> Result<SparseVector> {
        let engineered = self.engineered(record, bundle)?;
        let tokens = compose_joint_text(record, bundle)?;
        Ok(assemble_input(&engineered, &self.vocabulary.transform(&tokens)))
    }

    pub fn rows(&self, examples: &[Example<'_>]) -> Result<Vec<SparseVector>> {
        examples.iter().map(|(r, b)| self.row(r, b)).collect()
    }
}
