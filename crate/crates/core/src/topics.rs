//! Topic words per cluster: class-based TF-IDF over merged cluster
//! documents, and keyword re-ranking by embedding similarity to the cluster
//! centroid.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenizedDocument;
use crate::embedding::{EmbedInput, EmbeddingError, EmbeddingMatrix, EmbeddingProvider};

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("no words left to rank: the vocabulary is empty")]
    EmptyVocabulary,
    #[error("{docs} token streams for {labels} labels")]
    Alignment { docs: usize, labels: usize },
    #[error("embedding provider: {0}")]
    Provider(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopicMethod {
    #[default]
    Ctfidf,
    Keybert,
}

impl fmt::Display for TopicMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopicMethod::Ctfidf => "ctfidf",
            TopicMethod::Keybert => "keybert",
        })
    }
}

impl FromStr for TopicMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace(['-', '_'], "").as_str() {
            "ctfidf" => Ok(TopicMethod::Ctfidf),
            "keybert" => Ok(TopicMethod::Keybert),
            other => Err(format!("unknown topic method {other:?}")),
        }
    }
}

/// All documents of one cluster merged into a single bag of words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDocument {
    pub cluster_id: i32,
    pub token_counts: BTreeMap<String, usize>,
    pub total_tokens: usize,
    pub n_documents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWord {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub method: TopicMethod,
    pub topics: BTreeMap<i32, Vec<TopicWord>>,
    pub cluster_sizes: BTreeMap<i32, usize>,
}

/// Groups token streams by label, noise (`-1`) included.
pub fn merge_cluster_docs(docs: &[TokenizedDocument], labels: &[i32]) -> Result<Vec<ClassDocument>, TopicError> {
    if docs.len() != labels.len() {
        return Err(TopicError::Alignment {
            docs: docs.len(),
            labels: labels.len(),
        });
    }
    let mut classes: BTreeMap<i32, ClassDocument> = BTreeMap::new();
    for (doc, &label) in docs.iter().zip(labels) {
        let class = classes.entry(label).or_insert_with(|| ClassDocument {
            cluster_id: label,
            token_counts: BTreeMap::new(),
            total_tokens: 0,
            n_documents: 0,
        });
        class.n_documents += 1;
        for token in &doc.tokens {
            *class.token_counts.entry(token.clone()).or_insert(0) += 1;
            class.total_tokens += 1;
        }
    }
    Ok(classes.into_values().collect())
}

fn rank(mut words: Vec<TopicWord>) -> Vec<TopicWord> {
    words.sort_by(|x, y| y.weight.total_cmp(&x.weight).then_with(|| x.word.cmp(&y.word)));
    words
}

/// `W(t, c) = tf(t, c) * ln(1 + A / f(t))` with raw class counts `tf`, the
/// word's count over all classes `f`, and `A` the mean class length.
pub fn ctfidf(classes: &[ClassDocument]) -> Result<TopicModel, TopicError> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for class in classes {
        for (word, &count) in &class.token_counts {
            *freq.entry(word.as_str()).or_insert(0) += count;
        }
    }
    if freq.is_empty() {
        return Err(TopicError::EmptyVocabulary);
    }
    let avg = classes.iter().map(|c| c.total_tokens).sum::<usize>() as f64 / classes.len() as f64;

    let mut topics = BTreeMap::new();
    let mut cluster_sizes = BTreeMap::new();
    for class in classes {
        let words = class
            .token_counts
            .iter()
            .map(|(word, &tf)| TopicWord {
                word: word.clone(),
                weight: tf as f64 * (1.0 + avg / freq[word.as_str()] as f64).ln(),
            })
            .collect();
        topics.insert(class.cluster_id, rank(words));
        cluster_sizes.insert(class.cluster_id, class.n_documents);
    }
    Ok(TopicModel {
        method: TopicMethod::Ctfidf,
        topics,
        cluster_sizes,
    })
}

fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (nu > 0.0 && nv > 0.0).then(|| dot / (nu * nv))
}

/// Re-ranks each cluster's top `candidates_per_topic` c-TF-IDF words by
/// cosine similarity between the word's embedding and the mean embedding of
/// the cluster's documents.
pub fn keybert_topics(
    classes: &[ClassDocument],
    embeddings: &EmbeddingMatrix,
    labels: &[i32],
    provider: &dyn EmbeddingProvider,
    candidates_per_topic: usize,
) -> Result<TopicModel, TopicError> {
    if embeddings.n_rows() != labels.len() {
        return Err(TopicError::Alignment {
            docs: embeddings.n_rows(),
            labels: labels.len(),
        });
    }
    let base = ctfidf(classes)?;
    let dim = embeddings.dim();

    let mut centroids: BTreeMap<i32, (Vec<f64>, usize)> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        let (sum, n) = centroids.entry(label).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, &v) in sum.iter_mut().zip(embeddings.row(i)) {
            *s += v as f64;
        }
        *n += 1;
    }

    let candidates: BTreeMap<i32, Vec<String>> = base
        .topics
        .iter()
        .map(|(&c, words)| {
            (
                c,
                words.iter().take(candidates_per_topic).map(|w| w.word.clone()).collect(),
            )
        })
        .collect();
    let mut vocab: Vec<String> = candidates.values().flatten().cloned().collect();
    vocab.sort();
    vocab.dedup();
    let word_vectors: HashMap<String, Vec<f64>> = if vocab.is_empty() {
        HashMap::new()
    } else {
        let inputs: Vec<EmbedInput> = vocab
            .iter()
            .map(|w| EmbedInput {
                id: w.clone(),
                text: w.clone(),
            })
            .collect();
        let matrix = provider.embed(&inputs)?;
        if matrix.n_rows() != vocab.len() || matrix.dim() != dim {
            return Err(TopicError::Provider(EmbeddingError::Alignment(format!(
                "word embeddings are {}x{}, expected {}x{dim}",
                matrix.n_rows(),
                matrix.dim(),
                vocab.len()
            ))));
        }
        vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), matrix.row(i).iter().map(|&v| v as f64).collect()))
            .collect()
    };

    let mut topics = BTreeMap::new();
    for (cluster, words) in candidates {
        if words.is_empty() {
            tracing::warn!(cluster, "no candidate words; topic left empty");
        }
        let centroid: Vec<f64> = centroids
            .get(&cluster)
            .map(|(sum, n)| sum.iter().map(|s| s / *n as f64).collect())
            .unwrap_or_else(|| vec![0.0; dim]);
        let scored = words
            .into_iter()
            .filter_map(|word| match cosine(&word_vectors[&word], &centroid) {
                Some(weight) => Some(TopicWord { word, weight }),
                None => {
                    tracing::warn!(cluster, %word, "zero vector; candidate dropped");
                    None
                }
            })
            .collect();
        topics.insert(cluster, rank(scored));
    }
    Ok(TopicModel {
        method: TopicMethod::Keybert,
        topics,
        cluster_sizes: base.cluster_sizes,
    })
}

/// The first `n` words of every topic.
pub fn top_words(model: &TopicModel, n: usize) -> BTreeMap<i32, Vec<String>> {
    model
        .topics
        .iter()
        .map(|(&c, words)| (c, words.iter().take(n).map(|w| w.word.clone()).collect()))
        .collect()
}
