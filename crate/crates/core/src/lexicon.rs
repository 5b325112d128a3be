//! Lexicon-driven engineered features: emotion, sentiment, NLI pass-through
//! and profanity / slur / dogwhistle counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationBundle, MemeRecord};
use crate::error::{Error, Result};

/// Number of engineered features.
pub const ENGINEERED_DIM: usize = 13;

/// Engineered feature names in vector order.
pub const ENGINEERED_NAMES: [&str; ENGINEERED_DIM] = [
    "emotion_happy",
    "emotion_sad",
    "emotion_fear",
    "emotion_surprise",
    "emotion_angry",
    "sentiment_polarity",
    "sentiment_subjectivity",
    "nli_contradiction",
    "nli_neutral",
    "nli_entailment",
    "profanity_count",
    "slur_count",
    "hate_word_count",
];

const NEGATORS: [&str; 3] = ["not", "no", "never"];

/// Splits on non-alphanumeric characters and lowercases.
pub fn tokenize_basic(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentimentEntry {
    pub polarity: f64,
    pub subjectivity: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexiconSet {
    pub profanity: BTreeSet<String>,
    pub slurs: BTreeSet<String>,
    pub hate_words: BTreeSet<String>,
    pub sentiment: BTreeMap<String, SentimentEntry>,
    /// Weights ordered happy, sad, fear, surprise, angry.
    pub emotion: BTreeMap<String, [f64; 5]>,
}

const BUNDLED_PROFANITY: &str = include_str!("../lexicons/profanity.txt");
const BUNDLED_SLURS: &str = include_str!("../lexicons/slurs.txt");
const BUNDLED_HATE_WORDS: &str = include_str!("../lexicons/hate_words.txt");
const BUNDLED_SENTIMENT: &str = include_str!("../lexicons/sentiment.tsv");
const BUNDLED_EMOTION: &str = include_str!("../lexicons/emotion.tsv");

pub const LEXICON_FILES: [&str; 5] = [
    "profanity.txt",
    "slurs.txt",
    "hate_words.txt",
    "sentiment.tsv",
    "emotion.tsv",
];

impl LexiconSet {
    /// The lexicons compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_sources(
            [
                BUNDLED_PROFANITY,
                BUNDLED_SLURS,
                BUNDLED_HATE_WORDS,
                BUNDLED_SENTIMENT,
                BUNDLED_EMOTION,
            ],
            Path::new("<bundled>"),
        )
        .expect("bundled lexicons are valid")
    }

    /// Writes the bundled lexicon files into `dir`.
    pub fn write_bundled(dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sources = [
            BUNDLED_PROFANITY,
            BUNDLED_SLURS,
            BUNDLED_HATE_WORDS,
            BUNDLED_SENTIMENT,
            BUNDLED_EMOTION,
        ];
        for (name, body) in LEXICON_FILES.iter().zip(sources) {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut sources = Vec::with_capacity(LEXICON_FILES.len());
        for name in LEXICON_FILES {
            let path = dir.join(name);
            sources.push(std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
        }
        Self::from_sources([&sources[0], &sources[1], &sources[2], &sources[3], &sources[4]], dir)
    }

    fn from_sources(sources: [&str; 5], dir: &Path) -> Result<Self> {
        let [profanity, slurs, hate_words, sentiment, emotion] = sources;
        let mut set = LexiconSet {
            profanity: parse_terms(profanity, &dir.join(LEXICON_FILES[0]))?,
            slurs: parse_terms(slurs, &dir.join(LEXICON_FILES[1]))?,
            hate_words: parse_terms(hate_words, &dir.join(LEXICON_FILES[2]))?,
            ..Default::default()
        };

        let path = dir.join(LEXICON_FILES[3]);
        for (line_no, fields) in data_lines(sentiment) {
            let [term, polarity, subjectivity] = fixed_fields(&path, line_no, &fields)?;
            let entry = SentimentEntry {
                polarity: parse_real(&path, line_no, polarity)?,
                subjectivity: parse_real(&path, line_no, subjectivity)?,
            };
            set.sentiment.insert(check_term(&path, line_no, term)?, entry);
        }

        let path = dir.join(LEXICON_FILES[4]);
        for (line_no, fields) in data_lines(emotion) {
            let [term, rest @ ..] = fixed_fields::<6>(&path, line_no, &fields)?;
            let mut weights = [0.0; 5];
            for (w, raw) in weights.iter_mut().zip(rest) {
                *w = parse_real(&path, line_no, raw)?;
            }
            set.emotion.insert(check_term(&path, line_no, term)?, weights);
        }

        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let terms = self
            .profanity
            .iter()
            .chain(&self.slurs)
            .chain(&self.hate_words)
            .chain(self.sentiment.keys())
            .chain(self.emotion.keys());
        for term in terms {
            if term.is_empty() || term.trim() != term || term.to_lowercase() != *term {
                return Err(Error::Validation(format!(
                    "lexicon term \"{term}\" must be lowercase without surrounding whitespace"
                )));
            }
        }
        for (term, entry) in &self.sentiment {
            if !(-1.0..=1.0).contains(&entry.polarity) || !(0.0..=1.0).contains(&entry.subjectivity) {
                return Err(Error::Validation(format!(
                    "sentiment entry \"{term}\" out of range: {entry:?}"
                )));
            }
        }
        for (term, weights) in &self.emotion {
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Validation(format!(
                    "emotion weights for \"{term}\" must be nonnegative: {weights:?}"
                )));
            }
        }
        Ok(())
    }
}

fn data_lines(body: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    body.lines().enumerate().filter_map(|(i, line)| {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

fn parse_terms(body: &str, path: &Path) -> Result<BTreeSet<String>> {
    data_lines(body)
        .map(|(line_no, fields)| {
            let [term] = fixed_fields(path, line_no, &fields)?;
            check_term(path, line_no, term)
        })
        .collect()
}

fn fixed_fields<'a, const N: usize>(path: &Path, line_no: usize, fields: &[&'a str]) -> Result<[&'a str; N]> {
    fields.try_into().map_err(|_| {
        Error::parse(
            path,
            line_no,
            format!("expected {N} tab-separated fields, found {}", fields.len()),
        )
    })
}

fn check_term(path: &Path, line_no: usize, term: &str) -> Result<String> {
    if term.is_empty() || term.to_lowercase() != term {
        return Err(Error::parse(
            path,
            line_no,
            format!("term \"{term}\" must be lowercase"),
        ));
    }
    Ok(term.to_string())
}

fn parse_real(path: &Path, line_no: usize, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(path, line_no, format!("\"{raw}\" is not a finite number")))
}

/// Occurrences (with multiplicity) of tokens found in `lexicon`.
pub fn count_lexicon_hits<S: AsRef<str>>(tokens: &[S], lexicon: &BTreeSet<String>) -> usize {
    tokens.iter().filter(|t| lexicon.contains(t.as_ref())).count()
}

/// Mean (polarity, subjectivity) of lexicon tokens; a directly preceding
/// "not", "no" or "never" flips the polarity of a match.
pub fn score_sentiment<S: AsRef<str>>(tokens: &[S], lexicons: &LexiconSet) -> (f64, f64) {
    let mut polarity = 0.0;
    let mut subjectivity = 0.0;
    let mut hits = 0usize;
    for (i, token) in tokens.iter().enumerate() {
        let Some(entry) = lexicons.sentiment.get(token.as_ref()) else {
            continue;
        };
        let negated = i > 0 && NEGATORS.contains(&tokens[i - 1].as_ref());
        polarity += if negated { -entry.polarity } else { entry.polarity };
        subjectivity += entry.subjectivity;
        hits += 1;
    }
    if hits == 0 {
        return (0.0, 0.0);
    }
    (polarity / hits as f64, subjectivity / hits as f64)
}

/// L1-normalized sum of emotion weights; all zero when nothing matches.
pub fn score_emotion<S: AsRef<str>>(tokens: &[S], lexicons: &LexiconSet) -> [f64; 5] {
    let mut total = [0.0; 5];
    for weights in tokens.iter().filter_map(|t| lexicons.emotion.get(t.as_ref())) {
        for (acc, w) in total.iter_mut().zip(weights) {
            *acc += w;
        }
    }
    let mass: f64 = total.iter().sum();
    if mass > 0.0 {
        for v in &mut total {
            *v /= mass;
        }
    }
    total
}

/// The fixed 13-component engineered block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineeredVector([f64; ENGINEERED_DIM]);

impl EngineeredVector {
    pub fn from_array(values: [f64; ENGINEERED_DIM]) -> Self {
        EngineeredVector(values)
    }

    pub fn as_array(&self) -> &[f64; ENGINEERED_DIM] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        ENGINEERED_NAMES.iter().position(|n| *n == name).map(|i| self.0[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        ENGINEERED_NAMES.iter().copied().zip(self.0.iter().copied())
    }
}

impl fmt::Display for EngineeredVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, value)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

impl Serialize for EngineeredVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(ENGINEERED_DIM))?;
        for (name, value) in self.iter() {
            map.serialize_entry(name, &value)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for EngineeredVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let named = BTreeMap::<String, f64>::deserialize(deserializer)?;
        let mut values = [0.0; ENGINEERED_DIM];
        for (slot, name) in values.iter_mut().zip(ENGINEERED_NAMES) {
            *slot = *named.get(name).ok_or_else(|| serde::de::Error::missing_field(name))?;
        }
        Ok(EngineeredVector(values))
    }
}

/// Scores the meme text and appends the NLI probabilities from `bundle`.
pub fn build_engineered(
    record: &MemeRecord,
    bundle: &AnnotationBundle,
    lexicons: &LexiconSet,
) -> Result<EngineeredVector> {
    if record.id != bundle.id {
        return Err(Error::IdMismatch {
            record: record.id.clone(),
            annotation: bundle.id.clone(),
        });
    }
    let tokens = tokenize_basic(&record.text);
    let emotion = score_emotion(&tokens, lexicons);
    let (polarity, subjectivity) = score_sentiment(&tokens, lexicons);
    let nli = bundle.nli.to_array();

    let mut values = [0.0; ENGINEERED_DIM];
    values[..5].copy_from_slice(&emotion);
    values[5] = polarity;
    values[6] = subjectivity;
    values[7..10].copy_from_slice(&nli);
    values[10] = count_lexicon_hits(&tokens, &lexicons.profanity) as f64;
    values[11] = count_lexicon_hits(&tokens, &lexicons.slurs) as f64;
    values[12] = count_lexicon_hits(&tokens, &lexicons.hate_words) as f64;
    Ok(EngineeredVector(values))
}
