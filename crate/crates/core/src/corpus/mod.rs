//! Article collections: loading, analysis-split filtering, text normalization
//! and stopword-filtered tokenization.

mod load;
mod preprocess;
mod stopwords;

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

pub use load::{load_corpus, FieldMap, InputFormat, LoadReport, RowIssue};
pub use preprocess::{is_emoji, preprocess};
pub use stopwords::StopwordSets;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("split country={country:?} language={language:?} label={label} matched no documents")]
    EmptySplit {
        country: String,
        language: String,
        label: Label,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: u64,
        message: String,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Veracity label attached to an article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
    Other,
}

impl Label {
    /// Maps free-form dataset labels onto the three classes. Fact-check
    /// verdicts such as "false" count as fake.
    pub fn from_raw(raw: &str) -> Label {
        match raw.trim().to_lowercase().as_str() {
            "fake" | "false" | "0" => Label::Fake,
            "real" | "true" | "1" => Label::Real,
            _ => Label::Other,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Fake => "fake",
            Label::Real => "real",
            Label::Other => "other",
        })
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "fake" => Ok(Label::Fake),
            "real" => Ok(Label::Real),
            "other" => Ok(Label::Other),
            other => Err(CorpusError::Config(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub country: String,
    /// ISO-639-1 code.
    pub language: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub filters: Vec<String>,
}

/// An ordered, immutable document collection. Row `i` of every matrix derived
/// from the corpus belongs to `documents[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids.
    pub fn new(documents: Vec<Document>, provenance: Provenance) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus {
            documents,
            provenance,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.id.clone()).collect()
    }

    /// Keeps the documents of one analysis split (country, language, label),
    /// preserving order. Country and language compare case-insensitively.
    pub fn filter_split(
        &self,
        country: &str,
        language: &str,
        label: Label,
    ) -> Result<Corpus, CorpusError> {
        let documents: Vec<Document> = self
            .documents
            .iter()
            .filter(|d| {
                d.label == label
                    && d.country.trim().eq_ignore_ascii_case(country.trim())
                    && d.language.trim().eq_ignore_ascii_case(language.trim())
            })
            .cloned()
            .collect();
        if documents.is_empty() {
            return Err(CorpusError::EmptySplit {
                country: country.to_string(),
                language: language.to_string(),
                label,
            });
        }
        let mut provenance = self.provenance.clone();
        let filter = format!("country={country} language={language} label={label}");
        if provenance.filters.last() != Some(&filter) {
            provenance.filters.push(filter);
        }
        Ok(Corpus {
            documents,
            provenance,
        })
    }

    /// Applies [`preprocess`] to every document text.
    pub fn preprocessed(&self) -> Corpus {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                text: preprocess(&d.text),
                ..d.clone()
            })
            .collect();
        Corpus {
            documents,
            provenance: self.provenance.clone(),
        }
    }

    pub fn tokenize(&self, stopwords: &StopwordSets) -> Vec<TokenizedDocument> {
        self.documents
            .iter()
            .map(|d| tokenize_and_filter(d, stopwords))
            .collect()
    }

    /// Writes the corpus as JSONL, one document per line.
    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a corpus previously written by [`Corpus::save_jsonl`].
    pub fn load_jsonl(path: &Path) -> Result<Corpus, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut documents = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    path: path.display().to_string(),
                    line: i as u64 + 1,
                    message: e.to_string(),
                })?;
            documents.push(doc);
        }
        Corpus::new(
            documents,
            Provenance {
                source: path.display().to_string(),
                filters: Vec::new(),
            },
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<String>,
}

impl TokenizedDocument {
    /// True when stopword removal left nothing. Such documents stay in the
    /// corpus but contribute no reference statistics.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercases, splits on Unicode word boundaries and drops stopwords of the
/// document's language. Numeric tokens are kept.
pub fn tokenize_and_filter(doc: &Document, stopwords: &StopwordSets) -> TokenizedDocument {
    let set = stopwords.for_language(&doc.language);
    if set.is_none() {
        tracing::warn!(
            language = %doc.language,
            id = %doc.id,
            "no stopword list for language, keeping all tokens"
        );
    }
    let lowered = doc.text.to_lowercase();
    let tokens = lowered
        .unicode_words()
        .filter(|t| set.is_none_or(|s| !s.contains(*t)))
        .map(str::to_string)
        .collect();
    TokenizedDocument {
        id: doc.id.clone(),
        tokens,
    }
}
