use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::{EmbeddingError, EmbeddingMatrix};
use crate::corpus::Corpus;

/// One item to embed; the provider must return rows in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedInput {
    pub id: String,
    pub text: String,
}

pub trait EmbeddingProvider {
    fn embed(&self, inputs: &[EmbedInput]) -> Result<EmbeddingMatrix, EmbeddingError>;
}

/// Names an embedding provider. `command` is either an executable (plus
/// arguments) honouring the provider contract, or `builtin:hashing` for the
/// in-process hashing encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub command: String,
    pub model_name: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    32
}

pub const BUILTIN_HASHING: &str = "builtin:hashing";

impl ProviderSpec {
    pub fn new(command: &str, model_name: &str) -> Self {
        ProviderSpec {
            command: command.to_string(),
            model_name: model_name.to_string(),
            batch_size: default_batch_size(),
        }
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>, EmbeddingError> {
        if self.model_name.trim().is_empty() {
            return Err(EmbeddingError::Provider("model name is empty".into()));
        }
        if let Some(rest) = self.command.strip_prefix(BUILTIN_HASHING) {
            let dim = match rest.strip_prefix(':') {
                Some(d) => d
                    .parse()
                    .map_err(|_| EmbeddingError::Provider(format!("bad hashing dim {d:?}")))?,
                None => known_model_dim(&self.model_name).unwrap_or(HashingProvider::DEFAULT_DIM),
            };
            return Ok(Box::new(HashingProvider::new(dim, 0)));
        }
        Ok(Box::new(CommandProvider::new(self.clone())))
    }
}

/// Output width of the sentence encoders used with this tool.
pub fn known_model_dim(model_name: &str) -> Option<usize> {
    let name = model_name.rsplit('/').next().unwrap_or(model_name);
    match name {
        "[para]" | "para" | "paraphrase-multilingual-mpnet-base-v2" => Some(768),
        "[cross]" | "cross" | "cross-en-de-roberta-sentence-transformer" => Some(768),
        _ => None,
    }
}

/// Runs an external encoder: JSONL `{"id","text"}` on stdin, EMB1 and ids
/// files written to the paths passed as `--out` and `--ids-out`.
#[derive(Debug, Clone)]
pub struct CommandProvider {
    spec: ProviderSpec,
}

impl CommandProvider {
    pub fn new(spec: ProviderSpec) -> Self {
        CommandProvider { spec }
    }
}

impl EmbeddingProvider for CommandProvider {
    fn embed(&self, inputs: &[EmbedInput]) -> Result<EmbeddingMatrix, EmbeddingError> {
        let mut parts = self.spec.command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| EmbeddingError::Provider("empty provider command".into()))?;
        let dir = tempfile::tempdir()?;
        let out = dir.path().join("out.emb");
        let ids_out = super::ids_path(&out);

        let mut child = Command::new(program)
            .args(parts)
            .arg("--model")
            .arg(&self.spec.model_name)
            .arg("--out")
            .arg(&out)
            .arg("--ids-out")
            .arg(&ids_out)
            .arg("--batch-size")
            .arg(self.spec.batch_size.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EmbeddingError::Provider(format!("cannot start {program:?}: {e}")))?;

        let mut payload = Vec::new();
        for input in inputs {
            serde_json::to_writer(&mut payload, input).map_err(std::io::Error::other)?;
            payload.push(b'\n');
        }
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));
        let output = child.wait_with_output()?;
        let write_result = writer.join().expect("stdin writer panicked");

        if !output.status.success() {
            return Err(EmbeddingError::Provider(format!(
                "{program} exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        write_result?;
        EmbeddingMatrix::read(&out).map_err(|e| {
            EmbeddingError::Provider(format!(
                "malformed provider output ({e}); stderr: {}",
                String::from_utf8_lossy(&output.stderr).trim()
            ))
        })
    }
}

/// Deterministic bag-of-words encoder: every token hashes to a fixed
/// pseudo-random direction and a text embeds as the normalized sum of its
/// token directions. Texts sharing vocabulary land close together, which is
/// enough structure for synthetic pipelines and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingProvider {
    pub dim: usize,
    pub seed: u64,
}

impl HashingProvider {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize, seed: u64) -> Self {
        HashingProvider { dim, seed }
    }

    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for token in text.to_lowercase().unicode_words() {
            let mut state = fnv1a(token.as_bytes()) ^ self.seed;
            for v in acc.iter_mut() {
                state = splitmix64(state);
                *v += (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter().map(|v| (v / norm) as f32).collect()
        } else {
            acc.iter().map(|_| 0.0).collect()
        }
    }
}

impl EmbeddingProvider for HashingProvider {
    fn embed(&self, inputs: &[EmbedInput]) -> Result<EmbeddingMatrix, EmbeddingError> {
        let ids = inputs.iter().map(|i| i.id.clone()).collect();
        let mut values = Vec::with_capacity(inputs.len() * self.dim);
        for input in inputs {
            values.extend(self.embed_text(&input.text));
        }
        EmbeddingMatrix::new(ids, self.dim, values)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x100000001b3)
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Embeds every document of `corpus` and checks that the provider returned
/// exactly one row per document, in corpus order.
pub fn fetch_embeddings(
    corpus: &Corpus,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let inputs: Vec<EmbedInput> = corpus
        .documents()
        .iter()
        .map(|d| EmbedInput {
            id: d.id.clone(),
            text: d.text.clone(),
        })
        .collect();
    let matrix = provider.embed(&inputs)?;
    if matrix.n_rows() != inputs.len() {
        return Err(EmbeddingError::Alignment(format!(
            "{} rows for {} documents",
            matrix.n_rows(),
            inputs.len()
        )));
    }
    if let Some((i, (got, want))) = matrix
        .ids()
        .iter()
        .zip(&inputs)
        .enumerate()
        .find(|(_, (got, want))| **got != want.id)
    {
        return Err(EmbeddingError::Alignment(format!(
            "row {i} has id {got:?}, expected {:?}",
            want.id
        )));
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Label, Provenance};

    struct Echo {
        rows: Vec<Vec<f32>>,
        drop_last: bool,
    }

    impl EmbeddingProvider for Echo {
        fn embed(&self, inputs: &[EmbedInput]) -> Result<EmbeddingMatrix, EmbeddingError> {
            let n = if self.drop_last {
                inputs.len() - 1
            } else {
                inputs.len()
            };
            let ids = inputs[..n].iter().map(|i| i.id.clone()).collect();
            EmbeddingMatrix::from_rows(ids, &self.rows[..n])
        }
    }

    fn corpus() -> Corpus {
        let doc = |id: &str, text: &str| Document {
            id: id.into(),
            text: text.into(),
            country: "Germany".into(),
            language: "de".into(),
            label: Label::Fake,
            published: None,
        };
        Corpus::new(vec![doc("b", "zwei"), doc("a", "eins")], Provenance::default()).unwrap()
    }

    #[test]
    fn rows_follow_corpus_order() {
        let echo = Echo {
            rows: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]],
            drop_last: false,
        };
        let m = fetch_embeddings(&corpus(), &echo).unwrap();
        assert_eq!(m.ids(), ["b", "a"]);
        assert_eq!((m.n_rows(), m.dim()), (2, 4));
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn wrong_row_count_is_an_alignment_error() {
        let echo = Echo {
            rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            drop_last: true,
        };
        assert!(matches!(
            fetch_embeddings(&corpus(), &echo),
            Err(EmbeddingError::Alignment(_))
        ));
    }

    #[test]
    fn hashing_provider_is_deterministic_and_topical() {
        let p = HashingProvider::new(64, 7);
        let a = p.embed_text("vaccine mask vaccine");
        assert_eq!(a, p.embed_text("Vaccine MASK vaccine"));
        let b = p.embed_text("vaccine mask");
        let c = p.embed_text("election fraud ballots");
        let cos = |x: &[f32], y: &[f32]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f32>();
        assert!(cos(&a, &b) > cos(&a, &c));
        assert!(p.embed_text("").iter().all(|v| *v == 0.0));
    }

    #[test]
    fn builtin_spec_uses_known_model_width() {
        let spec = ProviderSpec::new(BUILTIN_HASHING, "[para]");
        let m = fetch_embeddings(&corpus(), spec.build().unwrap().as_ref()).unwrap();
        assert_eq!(m.dim(), 768);
        let spec = ProviderSpec::new("builtin:hashing:16", "anything");
        let m = fetch_embeddings(&corpus(), spec.build().unwrap().as_ref()).unwrap();
        assert_eq!(m.dim(), 16);
        assert!(ProviderSpec::new(BUILTIN_HASHING, " ").build().is_err());
    }

    #[test]
    fn failing_command_reports_diagnostics() {
        let provider = CommandProvider::new(ProviderSpec::new("false", "m"));
        let err = fetch_embeddings(&corpus(), &provider).unwrap_err();
        assert!(matches!(err, EmbeddingError::Provider(_)));
    }
}
