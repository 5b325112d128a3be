use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationBundle, MemeRecord};
use crate::error::{Error, Result};
use crate::features::{channel_of, FeatureChannel, FeaturePipeline};
use crate::gbdt::GbdtModel;
use crate::lexicon::EngineeredVector;

pub const DEFAULT_TOP_K: usize = 8;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopFeature {
    pub name: String,
    pub channel: FeatureChannel,
    /// Signed change in log-odds attributed to this feature.
    pub contribution: f64,
}

/// A meme as shown to a moderator: the model's score and the features that
/// drove it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedMeme {
    pub id: String,
    pub score: f64,
    pub predicted_label: u8,
    pub threshold: f64,
    pub top_features: Vec<TopFeature>,
    pub engineered: EngineeredVector,
    pub caption: String,
}

pub fn augment_meme(
    record: &MemeRecord,
    bundle: &AnnotationBundle,
    model: &GbdtModel,
    pipeline: &FeaturePipeline,
    threshold: f64,
    top_k: usize,
) -> Result<AugmentedMeme> {
    if !model.is_trained() {
        return Err(Error::NotTrained);
    }
    if model.n_features() != pipeline.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: pipeline.dim(),
        });
    }
    let engineered = pipeline.engineered(record, bundle)?;
    let row = pipeline.row(record, bundle)?;
    let score = model.predict_proba(&row)?;
    let top_features = model
        .attribute_prediction(&row, top_k)?
        .into_iter()
        .map(|f| TopFeature {
            channel: channel_of(f.index, &f.name),
            name: f.name,
            contribution: f.score,
        })
        .collect();
    Ok(AugmentedMeme {
        id: record.id.clone(),
        score,
        predicted_label: u8::from(score >= threshold),
        threshold,
        top_features,
        engineered,
        caption: bundle.caption.clone(),
    })
}
