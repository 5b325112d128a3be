//! Synthetic corpus with planted signals, for end-to-end runs without the
//! licensed dataset.
//!
//! Every hateful meme except a small unplanted share carries exactly one
//! planted signal:
//!
//! * a dogwhistle word from the bundled hate-word lexicon in its text, which
//!   surfaces as the engineered `hate_word_count` feature, or
//! * a hateful named entity, which surfaces as an `ent_*` token.
//!
//! Embedding sequences are separable by label: each step is uniform noise in
//! `[-0.5, 0.5]` plus `±EMBEDDING_SHIFT` along a fixed random sign direction.
//! A few benign decoys use dogwhistle words innocently.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_annotations, write_memes, AnnotationBundle, MemeRecord, NamedEntity, NliProbs, EMBEDDING_DIM,
};
use crate::error::{Error, Result};
use crate::lexicon::LexiconSet;
use crate::vectorizer::entity_token;

pub const EMBEDDING_SHIFT: f64 = 0.1;
pub const HATE_WORD_FEATURE: &str = "hate_word_count";

const DOGWHISTLES: [&str; 8] = [
    "dishwasher",
    "oven",
    "shower",
    "gas",
    "goblin",
    "globalist",
    "thug",
    "groomer",
];
const HATEFUL_ENTITIES: [(&str, &str); 4] = [
    ("jews", "NORP"),
    ("hitler", "PERSON"),
    ("islamic", "NORP"),
    ("muslims", "NORP"),
];
const BENIGN_ENTITIES: [(&str, &str); 6] = [
    ("london", "GPE"),
    ("taylor swift", "PERSON"),
    ("nasa", "ORG"),
    ("monday", "DATE"),
    ("christmas", "DATE"),
    ("elon musk", "PERSON"),
];

const OPENERS: [&str; 8] = [
    "when you",
    "me after",
    "nobody",
    "that moment",
    "my friends",
    "they said",
    "every time",
    "look at",
];
const MIDDLES: [&str; 12] = [
    "finally finish the project",
    "see the weekend forecast",
    "forgot the coffee",
    "win the game",
    "find a lovely dog",
    "miss the bus again",
    "get a happy surprise",
    "eat the last pizza",
    "lost my keys",
    "start a new job",
    "watch the funny cat",
    "hear the best song",
];
const CLOSERS: [&str; 6] = ["lol", "again", "today", "every day", "no words", "classic"];
const HATEFUL_LINES: [&str; 6] = [
    "belongs in the",
    "should go back to the",
    "know where they belong the",
    "all of them to the",
    "send them to the",
    "they are always near the",
];
const DECOY_LINES: [&str; 4] = [
    "my {} broke again",
    "cleaning the {} on a monday",
    "new {} arrived today",
    "who left the {} on",
];
const OBJECTS: [&str; 12] = [
    "person", "dog", "cat", "car", "table", "phone", "sign", "flag", "kitchen", "tree", "crowd", "pizza",
];
const WEB_ENTITIES: [&str; 8] = [
    "meme",
    "internet",
    "reaction",
    "cartoon",
    "photograph",
    "news",
    "sports",
    "holiday",
];
const ADJECTIVES: [&str; 6] = ["blurry", "bright", "dark", "close", "colorful", "old"];

/// 1x1 grey PNG written for every meme so the image endpoint has something to serve.
const PLACEHOLDER_PNG: [u8; 67] = [
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00, 0x00,
    0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a, 0x7e, 0x9b, 0x55, 0x00, 0x00, 0x00, 0x0a, 0x49,
    0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x00, 0x00, 0x00, 0x82, 0x00, 0x81, 0x77, 0xcd, 0x72, 0xb6, 0x00, 0x00,
    0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_memes: usize,
    pub hateful_fraction: f64,
    /// Share of hateful memes left without a planted signal.
    pub unplanted_fraction: f64,
    /// Share of benign memes using a dogwhistle word innocently.
    pub decoy_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_memes: 400,
            hateful_fraction: 0.37,
            unplanted_fraction: 0.04,
            decoy_fraction: 0.03,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub records: Vec<MemeRecord>,
    pub annotations: Vec<AnnotationBundle>,
    /// Planted feature name for every planted hateful meme.
    pub planted: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticPaths {
    pub memes: PathBuf,
    pub annotations: PathBuf,
    pub planted: PathBuf,
    pub lexicons: PathBuf,
    pub images: PathBuf,
}

impl SyntheticPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SyntheticPaths {
            memes: dir.join("memes.jsonl"),
            annotations: dir.join("annotations.jsonl"),
            planted: dir.join("planted.json"),
            lexicons: dir.join("lexicons"),
            images: dir.join("img"),
        }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("non-empty pool")
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn benign_text(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {}",
        pick(rng, &OPENERS),
        pick(rng, &MIDDLES),
        pick(rng, &CLOSERS)
    )
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.n_memes < 10 {
        return Err(Error::InvalidParams("at least 10 memes are needed".into()));
    }
    let fractions = [
        config.hateful_fraction,
        config.unplanted_fraction,
        config.decoy_fraction,
    ];
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidParams("fractions must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let direction: Vec<f64> = (0..EMBEDDING_DIM)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();

    let n_hateful = (config.n_memes as f64 * config.hateful_fraction).round() as usize;
    let mut labels: Vec<u8> = (0..config.n_memes).map(|i| u8::from(i < n_hateful)).collect();
    labels.shuffle(&mut rng);

    let mut records = Vec::with_capacity(config.n_memes);
    let mut annotations = Vec::with_capacity(config.n_memes);
    let mut planted = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        let id = format!("{:05}", 10_007 + 37 * i);
        let mut named_entities = Vec::new();
        let text = if label == 1 {
            if rng.gen_bool(config.unplanted_fraction) {
                benign_text(&mut rng)
            } else if rng.gen_bool(0.5) {
                let word = pick(&mut rng, &DOGWHISTLES);
                planted.insert(id.clone(), HATE_WORD_FEATURE.to_string());
                format!("{} {} {word}", pick(&mut rng, &OPENERS), pick(&mut rng, &HATEFUL_LINES))
            } else {
                let (surface, category) = *pick(&mut rng, &HATEFUL_ENTITIES);
                planted.insert(id.clone(), entity_token(surface, category));
                named_entities.push(NamedEntity::new(surface, category));
                benign_text(&mut rng)
            }
        } else if rng.gen_bool(config.decoy_fraction) {
            pick(&mut rng, &DECOY_LINES).replace("{}", pick(&mut rng, &DOGWHISTLES))
        } else {
            benign_text(&mut rng)
        };
        if rng.gen_bool(0.4) {
            let (surface, category) = *pick(&mut rng, &BENIGN_ENTITIES);
            named_entities.push(NamedEntity::new(surface, category));
        }

        let objects: Vec<String> = (0..rng.gen_range(1..=3))
            .map(|_| pick(&mut rng, &OBJECTS).to_string())
            .collect();
        let caption = format!("a {} photo of a {}", pick(&mut rng, &ADJECTIVES), objects[0]);
        let web_entities = (0..rng.gen_range(0..=2))
            .map(|_| pick(&mut rng, &WEB_ENTITIES).to_string())
            .collect();

        let contradiction = round4(rng.gen_range(0.0..0.5));
        let neutral = round4(rng.gen_range(0.0..(1.0 - contradiction)));
        let nli = NliProbs::new(contradiction, neutral, 1.0 - contradiction - neutral);

        let shift = if label == 1 { EMBEDDING_SHIFT } else { -EMBEDDING_SHIFT };
        let embedding_seq = (0..rng.gen_range(2..=4))
            .map(|_| {
                direction
                    .iter()
                    .map(|d| round4(rng.gen_range(-0.5..0.5) + shift * d))
                    .collect()
            })
            .collect();

        records.push(MemeRecord::new(&id, format!("img/{id}.png"), text).with_label(label));
        annotations.push(AnnotationBundle {
            id,
            caption,
            objects,
            web_entities,
            named_entities,
            nli,
            embedding_seq,
        });
    }
    Ok(SyntheticCorpus {
        records,
        annotations,
        planted,
    })
}

impl SyntheticCorpus {
    /// Writes memes, annotations, the planted-signal manifest, the bundled
    /// lexicons and placeholder images under `dir`.
    pub fn write(&self, dir: &Path) -> Result<SyntheticPaths> {
        let paths = SyntheticPaths::in_dir(dir);
        std::fs::create_dir_all(&paths.images).map_err(|e| Error::io(&paths.images, e))?;
        write_memes(&paths.memes, &self.records)?;
        write_annotations(&paths.annotations, &self.annotations)?;
        let manifest = serde_json::to_string_pretty(&self.planted).expect("string map serializes");
        std::fs::write(&paths.planted, manifest + "\n").map_err(|e| Error::io(&paths.planted, e))?;
        LexiconSet::write_bundled(&paths.lexicons)?;
        for record in &self.records {
            let path = dir.join(&record.img);
            std::fs::write(&path, PLACEHOLDER_PNG).map_err(|e| Error::io(&path, e))?;
        }
        Ok(paths)
    }
}

pub fn read_planted(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))
}
