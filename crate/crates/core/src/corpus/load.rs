use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusError, Document, Label, Provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_lowercase().as_str() {
            "csv" => Some(InputFormat::Csv),
            "jsonl" | "ndjson" => Some(InputFormat::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(CorpusError::Config(format!("unknown input format {other:?}"))),
        }
    }
}

/// Which input column feeds each document field. `None` leaves a field
/// unmapped: ids then default to `row-<line>`, country and language to the
/// empty string and the label to [`Label::Other`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub id: Option<String>,
    pub text: String,
    pub country: Option<String>,
    pub language: Option<String>,
    pub label: Option<String>,
    pub published: Option<String>,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: None,
            text: "text".into(),
            country: Some("country".into()),
            language: Some("language".into()),
            label: Some("label".into()),
            published: None,
        }
    }
}

impl FieldMap {
    fn columns(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.text.as_str()).chain(
            [
                &self.id,
                &self.country,
                &self.language,
                &self.label,
                &self.published,
            ]
            .into_iter()
            .flatten()
            .map(String::as_str),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport {
    pub corpus: Corpus,
    /// Rows skipped because their text was empty after trimming.
    pub skipped_empty: usize,
    /// Rows that could not be parsed; loading continued past them.
    pub malformed: Vec<RowIssue>,
}

/// Loads an article collection, one document per CSV row or JSONL line.
pub fn load_corpus(
    path: &Path,
    format: InputFormat,
    field_map: &FieldMap,
) -> Result<LoadReport, CorpusError> {
    let mut raw = String::new();
    File::open(path)?.read_to_string(&mut raw)?;
    let provenance = Provenance {
        source: path.display().to_string(),
        filters: Vec::new(),
    };
    if raw.trim().is_empty() {
        tracing::warn!(path = %path.display(), "input file is empty");
        return Ok(LoadReport {
            corpus: Corpus::new(Vec::new(), provenance)?,
            skipped_empty: 0,
            malformed: Vec::new(),
        });
    }

    let mut builder = Builder::default();
    match format {
        InputFormat::Csv => read_csv(raw.as_bytes(), field_map, &mut builder)?,
        InputFormat::Jsonl => read_jsonl(raw.as_bytes(), field_map, &mut builder)?,
    }
    for issue in &builder.malformed {
        tracing::warn!(path = %path.display(), line = issue.line, "{}", issue.message);
    }
    if builder.skipped_empty > 0 {
        tracing::info!(count = builder.skipped_empty, "skipped rows with empty text");
    }
    Ok(LoadReport {
        corpus: Corpus::new(builder.documents, provenance)?,
        skipped_empty: builder.skipped_empty,
        malformed: builder.malformed,
    })
}

#[derive(Default)]
struct Builder {
    documents: Vec<Document>,
    ids: HashSet<String>,
    skipped_empty: usize,
    malformed: Vec<RowIssue>,
}

impl Builder {
    fn push(&mut self, line: u64, get: impl Fn(&str) -> Option<String>, map: &FieldMap) {
        let text = get(&map.text).unwrap_or_default();
        if text.trim().is_empty() {
            self.skipped_empty += 1;
            return;
        }
        let id = match &map.id {
            Some(col) => get(col).unwrap_or_default().trim().to_string(),
            None => format!("row-{line}"),
        };
        if id.is_empty() {
            self.issue(line, "empty id");
            return;
        }
        if !self.ids.insert(id.clone()) {
            self.issue(line, &format!("duplicate id {id:?}"));
            return;
        }
        let field = |col: &Option<String>| {
            col.as_deref()
                .and_then(&get)
                .map(|v| v.trim().to_string())
                .unwrap_or_default()
        };
        let published = field(&map.published);
        self.documents.push(Document {
            id,
            text,
            country: field(&map.country),
            language: field(&map.language).to_lowercase(),
            label: map
                .label
                .as_deref()
                .and_then(&get)
                .map(|raw| Label::from_raw(&raw))
                .unwrap_or(Label::Other),
            published: (!published.is_empty()).then_some(published),
        });
    }

    fn issue(&mut self, line: u64, message: &str) {
        self.malformed.push(RowIssue {
            line,
            message: message.to_string(),
        });
    }
}

fn read_csv(bytes: &[u8], map: &FieldMap, builder: &mut Builder) -> Result<(), CorpusError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Config(format!("cannot read CSV header: {e}")))?
        .clone();
    for col in map.columns() {
        if !headers.iter().any(|h| h == col) {
            return Err(CorpusError::Config(format!("missing column {col:?}")));
        }
    }
    let index = |col: &str| headers.iter().position(|h| h == col);
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                let get = |col: &str| index(col).and_then(|i| record.get(i)).map(str::to_string);
                builder.push(line, get, map);
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                builder.issue(line, &e.to_string());
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    break;
                }
            }
        }
    }
    Ok(())
}

fn read_jsonl(bytes: &[u8], map: &FieldMap, builder: &mut Builder) -> Result<(), CorpusError> {
    let mut checked_columns = false;
    for (i, line) in BufReader::new(bytes).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(Value::Object(obj)) => Value::Object(obj),
            Ok(_) => {
                builder.issue(line_no, "expected a JSON object");
                continue;
            }
            Err(e) => {
                builder.issue(line_no, &e.to_string());
                continue;
            }
        };
        if !checked_columns {
            for col in map.columns() {
                if value.get(col).is_none() {
                    return Err(CorpusError::Config(format!("missing field {col:?}")));
                }
            }
            checked_columns = true;
        }
        let get = |col: &str| match value.get(col)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        };
        builder.push(line_no, get, map);
    }
    Ok(())
}
