//! Joint tf-idf channel over meme text, caption, objects, web entities and
//! synthetic named-entity tokens.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationBundle, MemeRecord};
use crate::error::{Error, Result};
use crate::lexicon::{tokenize_basic, EngineeredVector, ENGINEERED_DIM};

const VOCAB_MAGIC: &str = "memelens-vocabulary";
const VOCAB_VERSION: &str = "v1";

/// Sparse row: strictly increasing indices, finite nonzero values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for (i, &(index, value)) in entries.iter().enumerate() {
            if index >= dim {
                return Err(Error::Validation(format!(
                    "sparse index {index} outside dimension {dim}"
                )));
            }
            if i > 0 && entries[i - 1].0 >= index {
                return Err(Error::Validation("sparse indices must be strictly increasing".into()));
            }
            if !value.is_finite() || value == 0.0 {
                return Err(Error::Validation(format!(
                    "sparse value at {index} must be finite and nonzero"
                )));
            }
        }
        Ok(SparseVector { dim, entries })
    }

    /// Builds from a dense slice, dropping zeros.
    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Value at `index`; absent entries read as 0.
    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            dense[i] = v;
        }
        dense
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizerOptions {
    pub min_df: usize,
    pub max_features: Option<usize>,
}

impl Default for VectorizerOptions {
    fn default() -> Self {
        VectorizerOptions {
            min_df: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
    n_docs: usize,
}

/// Token for a named entity, e.g. ("jews", "NORP") gives `ent_jews_norp`.
pub fn entity_token(surface: &str, category: &str) -> String {
    let surface = surface.to_lowercase().split_whitespace().collect::<Vec<_>>().join("_");
    format!("ent_{surface}_{}", category.to_lowercase())
}

pub fn is_entity_token(term: &str) -> bool {
    term.starts_with("ent_")
}

/// Token stream for the joint text channel: meme text, caption, objects and
/// web entities, followed by one token per named entity.
pub fn compose_joint_text(record: &MemeRecord, bundle: &AnnotationBundle) -> Result<Vec<String>> {
    if record.id != bundle.id {
        return Err(Error::IdMismatch {
            record: record.id.clone(),
            annotation: bundle.id.clone(),
        });
    }
    let mut tokens = tokenize_basic(&record.text);
    tokens.extend(tokenize_basic(&bundle.caption));
    for text in bundle.objects.iter().chain(&bundle.web_entities) {
        tokens.extend(tokenize_basic(text));
    }
    tokens.extend(
        bundle
            .named_entities
            .iter()
            .map(|e| entity_token(&e.surface, &e.category)),
    );
    Ok(tokens)
}

/// Fits the vocabulary. Kept terms are indexed in lexicographic order.
pub fn fit_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], options: VectorizerOptions) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::InsufficientData(
            "cannot fit a vocabulary on zero documents".into(),
        ));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        let unique: BTreeSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for term in unique {
            *df.entry(term).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= options.min_df).collect();
    if let Some(limit) = options.max_features {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        kept.truncate(limit);
        kept.sort_by(|a, b| a.0.cmp(b.0));
    }
    Ok(Vocabulary::from_parts(
        kept.iter().map(|(t, _)| t.to_string()).collect(),
        kept.iter().map(|(_, n)| *n).collect(),
        docs.len(),
    ))
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>, n_docs: usize) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            doc_freq,
            index,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[index] as f64)).ln() + 1.0
    }

    /// Raw-count tf times smoothed idf, L2-normalized; unknown tokens ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for index in tokens.iter().filter_map(|t| self.index_of(t.as_ref())) {
            *counts.entry(index).or_default() += 1;
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, tf)| (i, tf as f64 * self.idf(i))).collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector {
            dim: self.len(),
            entries,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(
            out,
            "{VOCAB_MAGIC}\t{VOCAB_VERSION}\tN={}\tV={}",
            self.n_docs,
            self.len()
        )
        .map_err(io)?;
        for (i, term) in self.terms.iter().enumerate() {
            writeln!(out, "{term}\t{i}\t{}", self.doc_freq[i]).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| Error::parse(path, 1, "empty vocabulary file"))?;
        let fields: Vec<&str> = header.split('\t').collect();
        let (n_docs, size) = match fields.as_slice() {
            [VOCAB_MAGIC, VOCAB_VERSION, n, v] => (header_count(path, n, "N=")?, header_count(path, v, "V=")?),
            [VOCAB_MAGIC, version, ..] => {
                return Err(Error::Format(format!(
                    "{}: unsupported vocabulary version {version}",
                    path.display()
                )))
            }
            _ => return Err(Error::Format(format!("{}: not a vocabulary file", path.display()))),
        };

        let mut terms = Vec::with_capacity(size);
        let mut doc_freq = Vec::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            let parts: Vec<&str> = line.split('\t').collect();
            let [term, index, df] = parts.as_slice() else {
                return Err(Error::parse(path, line_no, "expected term<TAB>index<TAB>df"));
            };
            let index: usize = index.parse().map_err(|e| Error::parse(path, line_no, e))?;
            let df: usize = df.parse().map_err(|e| Error::parse(path, line_no, e))?;
            if index != terms.len() {
                return Err(Error::parse(path, line_no, format!("index {index} out of sequence")));
            }
            if df == 0 || df > n_docs {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("document frequency {df} outside [1, {n_docs}]"),
                ));
            }
            terms.push(term.to_string());
            doc_freq.push(df);
        }
        if terms.len() != size {
            return Err(Error::Format(format!(
                "{}: header declares {size} terms, found {}",
                path.display(),
                terms.len()
            )));
        }
        Ok(Vocabulary::from_parts(terms, doc_freq, n_docs))
    }
}

fn header_count(path: &Path, field: &str, prefix: &str) -> Result<usize> {
    field
        .strip_prefix(prefix)
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::parse(path, 1, format!("malformed header field \"{field}\"")))
}

/// Concatenates the engineered block (indices 0..13) with the tf-idf row
/// shifted by 13.
pub fn assemble_input(engineered: &EngineeredVector, tfidf: &SparseVector) -> SparseVector {
    let mut entries: Vec<(usize, f64)> = engineered
        .as_array()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    entries.extend(tfidf.entries.iter().map(|&(i, v)| (i + ENGINEERED_DIM, v)));
    SparseVector {
        dim: ENGINEERED_DIM + tfidf.dim,
        entries,
    }
}
