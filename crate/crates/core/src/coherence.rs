//! Classical topic coherence: `u_mass` over document co-occurrence, and
//! `c_uci`, `c_npmi`, `c_v` over boolean sliding windows.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenizedDocument;
use crate::hdbscan::NOISE;
use crate::topics::{top_words, TopicModel};

pub const EPSILON: f64 = 1e-12;
pub const UCI_WINDOW: usize = 10;
pub const CV_WINDOW: usize = 110;

#[derive(Debug, Error, PartialEq)]
pub enum CoherenceError {
    #[error("reference corpus has no tokens")]
    EmptyCorpus,
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("need at least 2 distinct topic words, got {0}")]
    TooFewWords(usize),
    #[error("{0} is undefined: no word pair could be scored")]
    Undefined(CoherenceMetric),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CoherenceMetric {
    #[serde(rename = "c_v")]
    Cv,
    #[serde(rename = "u_mass")]
    Umass,
    #[serde(rename = "c_uci")]
    Cuci,
    #[serde(rename = "c_npmi")]
    Cnpmi,
}

impl CoherenceMetric {
    pub const ALL: [CoherenceMetric; 4] = [
        CoherenceMetric::Cv,
        CoherenceMetric::Umass,
        CoherenceMetric::Cuci,
        CoherenceMetric::Cnpmi,
    ];
}

impl fmt::Display for CoherenceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoherenceMetric::Cv => "c_v",
            CoherenceMetric::Umass => "u_mass",
            CoherenceMetric::Cuci => "c_uci",
            CoherenceMetric::Cnpmi => "c_npmi",
        })
    }
}

impl FromStr for CoherenceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace('_', "").as_str() {
            "cv" => Ok(CoherenceMetric::Cv),
            "umass" => Ok(CoherenceMetric::Umass),
            "cuci" => Ok(CoherenceMetric::Cuci),
            "cnpmi" => Ok(CoherenceMetric::Cnpmi),
            other => Err(format!("unknown coherence metric {other:?}")),
        }
    }
}

/// Boolean window counts. Each document yields every contiguous span of
/// `window_size` tokens, or one window holding the whole document when it is
/// shorter. Empty documents yield nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    window_size: usize,
    n_windows: usize,
    word_count: HashMap<String, usize>,
    pair_count: HashMap<(String, String), usize>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl WindowStats {
    /// Counts over every word in the corpus.
    pub fn build(docs: &[TokenizedDocument], window_size: usize) -> Result<Self, CoherenceError> {
        Self::build_inner(docs, window_size, None)
    }

    /// Counts restricted to `vocab`; other words are still part of the
    /// windows but are not tallied.
    pub fn build_for(
        docs: &[TokenizedDocument],
        window_size: usize,
        vocab: &HashSet<String>,
    ) -> Result<Self, CoherenceError> {
        Self::build_inner(docs, window_size, Some(vocab))
    }

    /// One window per document.
    pub fn documents(docs: &[TokenizedDocument], vocab: Option<&HashSet<String>>) -> Result<Self, CoherenceError> {
        Self::build_inner(docs, usize::MAX, vocab)
    }

    fn build_inner(
        docs: &[TokenizedDocument],
        window_size: usize,
        vocab: Option<&HashSet<String>>,
    ) -> Result<Self, CoherenceError> {
        if window_size == 0 {
            return Err(CoherenceError::ZeroWindow);
        }
        if docs.iter().all(|d| d.tokens.is_empty()) {
            return Err(CoherenceError::EmptyCorpus);
        }
        let mut stats = WindowStats {
            window_size,
            n_windows: 0,
            word_count: HashMap::new(),
            pair_count: HashMap::new(),
        };
        let keep = |t: &str| vocab.is_none_or(|v| v.contains(t));
        for doc in docs {
            let tokens: Vec<Option<&str>> = doc
                .tokens
                .iter()
                .map(|t| keep(t).then_some(t.as_str()))
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let width = window_size.min(tokens.len());
            // Multiset of tallied words inside the current window.
            let mut inside: BTreeMap<&str, usize> = BTreeMap::new();
            for t in tokens[..width].iter().flatten() {
                *inside.entry(t).or_insert(0) += 1;
            }
            let mut start = 0;
            loop {
                stats.tally(&inside);
                if start + width >= tokens.len() {
                    break;
                }
                if let Some(t) = tokens[start] {
                    let c = inside.get_mut(t).expect("word counted on entry");
                    *c -= 1;
                    if *c == 0 {
                        inside.remove(t);
                    }
                }
                if let Some(t) = tokens[start + width] {
                    *inside.entry(t).or_insert(0) += 1;
                }
                start += 1;
            }
        }
        Ok(stats)
    }

    fn tally(&mut self, window: &BTreeMap<&str, usize>) {
        self.n_windows += 1;
        let words: Vec<&str> = window.keys().copied().collect();
        for (i, &w) in words.iter().enumerate() {
            *self.word_count.entry(w.to_string()).or_insert(0) += 1;
            for &u in &words[i + 1..] {
                *self.pair_count.entry(pair_key(w, u)).or_insert(0) += 1;
            }
        }
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn n_windows(&self) -> usize {
        self.n_windows
    }

    pub fn word_count(&self, w: &str) -> usize {
        self.word_count.get(w).copied().unwrap_or(0)
    }

    pub fn pair_count(&self, a: &str, b: &str) -> usize {
        if a == b {
            return self.word_count(a);
        }
        self.pair_count.get(&pair_key(a, b)).copied().unwrap_or(0)
    }

    fn prob(&self, w: &str) -> f64 {
        self.word_count(w) as f64 / self.n_windows as f64
    }

    fn joint(&self, a: &str, b: &str) -> f64 {
        self.pair_count(a, b) as f64 / self.n_windows as f64
    }

    /// `ln((P(a,b) + eps) / (P(a) P(b)))`, or `None` when a marginal is zero.
    pub fn pmi(&self, a: &str, b: &str) -> Option<f64> {
        let (pa, pb) = (self.prob(a), self.prob(b));
        if pa == 0.0 || pb == 0.0 {
            return None;
        }
        Some(((self.joint(a, b) + EPSILON) / (pa * pb)).ln())
    }

    /// PMI normalized by `-ln(P(a,b) + eps)`. A pair present in every window
    /// has a zero normalizer and is defined as 1.
    pub fn npmi(&self, a: &str, b: &str) -> Option<f64> {
        let pmi = self.pmi(a, b)?;
        let pj = self.joint(a, b);
        if pj >= 1.0 {
            return Some(1.0);
        }
        Some(pmi / -(pj + EPSILON).ln())
    }
}

fn check_words(words: &[String]) -> Result<(), CoherenceError> {
    let distinct: HashSet<&String> = words.iter().collect();
    if words.len() < 2 || distinct.len() != words.len() {
        return Err(CoherenceError::TooFewWords(distinct.len()));
    }
    Ok(())
}

fn mean_of(values: &[f64], metric: CoherenceMetric) -> Result<f64, CoherenceError> {
    if values.is_empty() {
        return Err(CoherenceError::Undefined(metric));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean over ordered pairs `j < i` of `ln((D(w_i, w_j) + 1) / D(w_j))` with
/// document counts `D`. Pairs whose `w_j` never occurs are skipped.
pub fn umass(words: &[String], doc_stats: &WindowStats) -> Result<f64, CoherenceError> {
    check_words(words)?;
    let mut terms = Vec::new();
    for i in 1..words.len() {
        for j in 0..i {
            let dj = doc_stats.word_count(&words[j]);
            if dj == 0 {
                tracing::warn!(word = %words[j], "u_mass: word absent from reference corpus, pair skipped");
                continue;
            }
            let dij = doc_stats.pair_count(&words[i], &words[j]);
            terms.push(((dij as f64 + 1.0) / dj as f64).ln());
        }
    }
    mean_of(&terms, CoherenceMetric::Umass)
}

fn pairwise_mean(
    words: &[String],
    stats: &WindowStats,
    metric: CoherenceMetric,
    f: impl Fn(&str, &str) -> Option<f64>,
) -> Result<f64, CoherenceError> {
    check_words(words)?;
    let mut terms = Vec::new();
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            match f(&words[i], &words[j]) {
                Some(v) => terms.push(v),
                None => tracing::debug!(a = %words[i], b = %words[j], window = stats.window_size, "{metric}: pair skipped"),
            }
        }
    }
    mean_of(&terms, metric)
}

/// Mean PMI over unordered word pairs.
pub fn cuci(words: &[String], stats: &WindowStats) -> Result<f64, CoherenceError> {
    pairwise_mean(words, stats, CoherenceMetric::Cuci, |a, b| stats.pmi(a, b))
}

/// Mean NPMI over unordered word pairs.
pub fn cnpmi(words: &[String], stats: &WindowStats) -> Result<f64, CoherenceError> {
    pairwise_mean(words, stats, CoherenceMetric::Cnpmi, |a, b| stats.npmi(a, b))
}

/// Each word's NPMI context vector against the whole topic (itself
/// included), compared by cosine with the sum of all context vectors.
pub fn cv(words: &[String], stats: &WindowStats) -> Result<f64, CoherenceError> {
    check_words(words)?;
    let vectors: Vec<Vec<f64>> = words
        .iter()
        .map(|w| words.iter().map(|u| stats.npmi(w, u).unwrap_or(0.0)).collect())
        .collect();
    let n = words.len();
    let total: Vec<f64> = (0..n).map(|k| vectors.iter().map(|v| v[k]).sum()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let total_norm = norm(&total);
    let mut sims = Vec::new();
    for v in &vectors {
        let vn = norm(v);
        if vn == 0.0 || total_norm == 0.0 {
            continue;
        }
        let dot: f64 = v.iter().zip(&total).map(|(a, b)| a * b).sum();
        sims.push(dot / (vn * total_norm));
    }
    mean_of(&sims, CoherenceMetric::Cv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Per-topic scores; a metric is absent when undefined for that topic.
    pub per_topic: BTreeMap<i32, BTreeMap<CoherenceMetric, f64>>,
    pub mean: BTreeMap<CoherenceMetric, f64>,
    pub n_words: usize,
    pub include_outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSettings {
    pub metrics: Vec<CoherenceMetric>,
    pub n_words: usize,
    pub include_outlier: bool,
}

impl Default for CoherenceSettings {
    fn default() -> Self {
        CoherenceSettings {
            metrics: CoherenceMetric::ALL.to_vec(),
            n_words: 10,
            include_outlier: false,
        }
    }
}

/// Scores every topic's top `n_words` against `reference` and averages per
/// metric. The outlier topic is scored but only enters the means when
/// `include_outlier` is set.
pub fn coherence_report(
    model: &TopicModel,
    reference: &[TokenizedDocument],
    settings: &CoherenceSettings,
) -> Result<CoherenceReport, CoherenceError> {
    let topics = top_words(model, settings.n_words);
    let vocab: HashSet<String> = topics.values().flatten().cloned().collect();
    let doc_stats = WindowStats::documents(reference, Some(&vocab))?;
    let uci_stats = WindowStats::build_for(reference, UCI_WINDOW, &vocab)?;
    let cv_stats = WindowStats::build_for(reference, CV_WINDOW, &vocab)?;

    let mut per_topic = BTreeMap::new();
    for (&topic, words) in &topics {
        let mut scores = BTreeMap::new();
        for &metric in &settings.metrics {
            let value = match metric {
                CoherenceMetric::Cv => cv(words, &cv_stats),
                CoherenceMetric::Umass => umass(words, &doc_stats),
                CoherenceMetric::Cuci => cuci(words, &uci_stats),
                CoherenceMetric::Cnpmi => cnpmi(words, &uci_stats),
            };
            match value {
                Ok(v) => {
                    scores.insert(metric, v);
                }
                Err(e) => tracing::warn!(topic, %metric, "{e}"),
            }
        }
        per_topic.insert(topic, scores);
    }

    let mut mean = BTreeMap::new();
    for &metric in &settings.metrics {
        let values: Vec<f64> = per_topic
            .iter()
            .filter(|(&t, _)| settings.include_outlier || t != NOISE)
            .filter_map(|(_, s)| s.get(&metric).copied())
            .collect();
        if !values.is_empty() {
            mean.insert(metric, values.iter().sum::<f64>() / values.len() as f64);
        }
    }
    Ok(CoherenceReport {
        per_topic,
        mean,
        n_words: settings.n_words,
        include_outlier: settings.include_outlier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::{TopicMethod, TopicWord};
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<TokenizedDocument> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| TokenizedDocument {
                id: i.to_string(),
                tokens: t.split_whitespace().map(String::from).collect(),
            })
            .collect()
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn window_enumeration() {
        let s = WindowStats::build(&docs(&["a b c"]), 2).unwrap();
        assert_eq!(s.n_windows(), 2);
        assert_eq!(s.pair_count("a", "b"), 1);
        assert_eq!(s.pair_count("a", "c"), 0);
        assert_eq!(s.word_count("b"), 2);
        assert_eq!(s.word_count("zzz"), 0);

        let short = WindowStats::build(&docs(&["a b"]), 10).unwrap();
        assert_eq!(short.n_windows(), 1);
    }

    #[test]
    fn repeated_word_counts_once_per_window() {
        let s = WindowStats::build(&docs(&["a a a"]), 2).unwrap();
        assert_eq!(s.n_windows(), 2);
        assert_eq!(s.word_count("a"), 2);
    }

    #[test]
    fn restricted_vocab_keeps_window_positions() {
        let vocab: HashSet<String> = ["a".to_string(), "c".to_string()].into();
        let full = WindowStats::build(&docs(&["a b c d"]), 3).unwrap();
        let part = WindowStats::build_for(&docs(&["a b c d"]), 3, &vocab).unwrap();
        assert_eq!(part.n_windows(), full.n_windows());
        assert_eq!(part.pair_count("a", "c"), full.pair_count("a", "c"));
        assert_eq!(part.word_count("c"), full.word_count("c"));
        assert_eq!(part.word_count("b"), 0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert_eq!(WindowStats::build(&docs(&["", ""]), 3), Err(CoherenceError::EmptyCorpus));
        assert_eq!(WindowStats::build(&docs(&["a"]), 0), Err(CoherenceError::ZeroWindow));
    }

    #[test]
    fn umass_examples() {
        let d = WindowStats::documents(&docs(&["a b", "a", "b"]), None).unwrap();
        assert!(umass(&words(&["a", "b"]), &d).unwrap().abs() < 1e-15);

        let d = WindowStats::documents(&docs(&["a b", "a b", "c"]), None).unwrap();
        assert!((umass(&words(&["a", "b"]), &d).unwrap() - 1.5f64.ln()).abs() < 1e-12);

        let d = WindowStats::documents(&docs(&["x", "y", "y", "y", "y", "y"]), None).unwrap();
        assert!((umass(&words(&["y", "x"]), &d).unwrap() - (0.2f64).ln()).abs() < 1e-12);

        let d = WindowStats::documents(&docs(&["a"]), None).unwrap();
        assert_eq!(
            umass(&words(&["q", "a"]), &d),
            Err(CoherenceError::Undefined(CoherenceMetric::Umass))
        );
    }

    #[test]
    fn pmi_limits() {
        // Independent: a in half the windows, b in half, together in a quarter.
        let s = WindowStats::documents(&docs(&["a b", "a", "b", "c"]), None).unwrap();
        assert!(s.pmi("a", "b").unwrap().abs() < 1e-9);
        assert!(s.npmi("a", "b").unwrap().abs() < 1e-9);

        // Always together in 2 of 5 windows.
        let s = WindowStats::documents(&docs(&["a b", "a b", "c", "c", "c"]), None).unwrap();
        assert!((s.pmi("a", "b").unwrap() - 2.5f64.ln()).abs() < 1e-9);
        assert!((s.npmi("a", "b").unwrap() - 1.0).abs() < 1e-6);

        // Never together.
        let s = WindowStats::documents(&docs(&["a", "b"]), None).unwrap();
        assert!(s.pmi("a", "b").unwrap() < -25.0);

        // In every window.
        let s = WindowStats::documents(&docs(&["a b", "a b"]), None).unwrap();
        assert_eq!(s.npmi("a", "b"), Some(1.0));
    }

    #[test]
    fn disjoint_npmi_in_hundred_windows() {
        let mut texts = vec!["a"; 1];
        texts.extend(["b"; 1]);
        texts.extend(["c"; 98]);
        let s = WindowStats::documents(&docs(&texts), None).unwrap();
        assert_eq!(s.n_windows(), 100);
        let expected = (EPSILON / (0.01 * 0.01)).ln() / -(EPSILON.ln());
        assert!((s.npmi("a", "b").unwrap() - expected).abs() < 1e-12);
        assert!(expected < -0.6);
    }

    #[test]
    fn cv_examples() {
        let s = WindowStats::build(&docs(&["a b", "a b", "c"]), CV_WINDOW).unwrap();
        assert!((cv(&words(&["a", "b"]), &s).unwrap() - 1.0).abs() < 1e-9);

        let s = WindowStats::build(&docs(&["a", "a", "b", "b"]), CV_WINDOW).unwrap();
        let v = cv(&words(&["a", "b"]), &s).unwrap();
        assert!(v < 0.5, "c_v {v}");

        assert_eq!(cv(&words(&["a", "a"]), &s), Err(CoherenceError::TooFewWords(1)));
    }

    fn model(topics: &[(i32, &[&str])]) -> TopicModel {
        TopicModel {
            method: TopicMethod::Ctfidf,
            topics: topics
                .iter()
                .map(|(c, ws)| {
                    (
                        *c,
                        ws.iter()
                            .enumerate()
                            .map(|(i, w)| TopicWord {
                                word: w.to_string(),
                                weight: 10.0 - i as f64,
                            })
                            .collect(),
                    )
                })
                .collect(),
            cluster_sizes: BTreeMap::new(),
        }
    }

    #[test]
    fn report_means_and_outlier_flag() {
        let reference = docs(&["a b c", "a b", "c d", "d e", "a e"]);
        let m = model(&[(0, &["a", "b"]), (-1, &["d", "e"])]);
        let without = coherence_report(&m, &reference, &CoherenceSettings::default()).unwrap();
        let with = coherence_report(
            &m,
            &reference,
            &CoherenceSettings {
                include_outlier: true,
                ..CoherenceSettings::default()
            },
        )
        .unwrap();
        assert_eq!(without.per_topic, with.per_topic);
        assert_eq!(without.mean, without.per_topic[&0]);
        assert_ne!(with.mean, without.mean);
        assert_eq!(without.mean.len(), 4);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in CoherenceMetric::ALL {
            assert_eq!(m.to_string().parse::<CoherenceMetric>().unwrap(), m);
        }
        assert_eq!("cv".parse::<CoherenceMetric>().unwrap(), CoherenceMetric::Cv);
        assert_eq!(serde_json::to_string(&CoherenceMetric::Umass).unwrap(), "\"u_mass\"");
    }

    proptest! {
        #[test]
        fn counts_and_npmi_bounds(
            texts in proptest::collection::vec(proptest::collection::vec(0u8..5, 0..15), 1..8),
            window in 1usize..6,
        ) {
            let corpus: Vec<TokenizedDocument> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| TokenizedDocument {
                    id: i.to_string(),
                    tokens: t.iter().map(|w| format!("w{w}")).collect(),
                })
                .collect();
            prop_assume!(corpus.iter().any(|d| !d.tokens.is_empty()));
            let s = WindowStats::build(&corpus, window).unwrap();
            for a in 0..5 {
                let wa = format!("w{a}");
                prop_assert!(s.word_count(&wa) <= s.n_windows());
                for b in 0..5 {
                    let wb = format!("w{b}");
                    let pc = s.pair_count(&wa, &wb);
                    prop_assert!(pc <= s.word_count(&wa).min(s.word_count(&wb)));
                    if let Some(v) = s.npmi(&wa, &wb) {
                        prop_assert!((-1.0..=1.0 + 1e-6).contains(&v), "npmi {}", v);
                    }
                }
            }
        }
    }
}
