//! LLM-judged topic quality: a word-intrusion task scored by Jaccard overlap
//! and a 0-3 usefulness rating. Calls go through [`LlmTransport`] so runs can
//! be recorded once and replayed deterministically.

mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdbscan::NOISE;
use crate::topics::{top_words, TopicModel};

pub use transport::{
    prompt_hash, HttpTransport, LlmTransport, RecordingTransport, ReplayEntry, ReplayTransport,
    DEFAULT_API_KEY_ENV,
};

pub const INTRUSION_PROMPT: &str = include_str!("../../prompts/intrusion_v1.txt");
pub const RATING_PROMPT: &str = include_str!("../../prompts/rating_v1.txt");

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("topic {0} not in model")]
    UnknownTopic(i32),
    #[error("intrusion needs at least 2 topics, model has {0}")]
    TooFewTopics(usize),
    #[error("no foreign words available as intruders for topic {0}")]
    NoIntruders(i32),
    #[error("could not parse a {task} answer from {response:?}")]
    Unparseable { task: &'static str, response: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrusionTrial {
    pub topic_id: i32,
    pub presented_words: Vec<String>,
    pub true_intruders: Vec<String>,
    pub llm_flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtcSettings {
    pub n_topic_words: usize,
    pub n_intruders: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub include_outlier: bool,
}

impl Default for CtcSettings {
    fn default() -> Self {
        CtcSettings {
            n_topic_words: 10,
            n_intruders: 5,
            temperature: 0.0,
            max_tokens: 200,
            include_outlier: false,
        }
    }
}

fn topic_rng(seed: u64, topic_id: i32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(topic_id as i64 as u64);
    rng
}

/// Mixes `n_intruders` words drawn from other non-outlier topics' top words
/// into this topic's top words and shuffles the result.
pub fn build_intrusion_trial(
    model: &TopicModel,
    topic_id: i32,
    n_topic_words: usize,
    n_intruders: usize,
    seed: u64,
) -> Result<IntrusionTrial, CtcError> {
    let tops = top_words(model, n_topic_words);
    let own = tops.get(&topic_id).ok_or(CtcError::UnknownTopic(topic_id))?;
    let others: Vec<&i32> = tops.keys().filter(|&&t| t != topic_id && t != NOISE).collect();
    if others.is_empty() {
        return Err(CtcError::TooFewTopics(tops.len()));
    }
    let own_all: BTreeSet<&str> = model.topics[&topic_id].iter().map(|w| w.word.as_str()).collect();
    let pool: Vec<&String> = others
        .iter()
        .flat_map(|t| tops[t].iter())
        .filter(|w| !own_all.contains(w.as_str()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if pool.is_empty() {
        return Err(CtcError::NoIntruders(topic_id));
    }
    if pool.len() < n_intruders {
        tracing::warn!(topic_id, available = pool.len(), wanted = n_intruders, "fewer intruders than requested");
    }
    let mut rng = topic_rng(seed, topic_id);
    let mut intruders: Vec<String> = pool
        .choose_multiple(&mut rng, n_intruders.min(pool.len()))
        .map(|w| (*w).clone())
        .collect();
    intruders.sort();
    let mut presented: Vec<String> = own.iter().cloned().chain(intruders.iter().cloned()).collect();
    presented.shuffle(&mut rng);
    Ok(IntrusionTrial {
        topic_id,
        presented_words: presented,
        true_intruders: intruders,
        llm_flagged: Vec::new(),
    })
}

pub fn render(template: &str, words: &[String]) -> String {
    template.replace("{words}", &words.join(", "))
}

/// Words named on the reply's `Intruders:` line that were actually shown,
/// matched case-insensitively. `None` when there is no such line.
pub fn parse_intruders(response: &str, presented: &[String]) -> Option<Vec<String>> {
    let line = response.lines().find_map(|l| {
        let t = l.trim().trim_start_matches(['*', '-', ' ']);
        t.get(..10)
            .filter(|p| p.eq_ignore_ascii_case("intruders:"))
            .map(|_| t[10..].to_string())
    })?;
    let mut flagged = BTreeSet::new();
    for item in line.split([',', ';']) {
        let item = item
            .trim()
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        if let Some(w) = presented.iter().find(|w| w.to_lowercase() == item) {
            flagged.insert(w.clone());
        }
    }
    Some(flagged.into_iter().collect())
}

/// Jaccard overlap of flagged and true intruders; 0 when nothing is flagged.
pub fn jaccard(flagged: &[String], truth: &[String]) -> f64 {
    let f: BTreeSet<&String> = flagged.iter().collect();
    let t: BTreeSet<&String> = truth.iter().collect();
    if f.is_empty() {
        return 0.0;
    }
    f.intersection(&t).count() as f64 / f.union(&t).count() as f64
}

fn ask_twice<T>(
    transport: &dyn LlmTransport,
    prompt: &str,
    settings: &CtcSettings,
    task: &'static str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<T, CtcError> {
    let mut response = String::new();
    for attempt in 0..2 {
        response = transport.send(prompt, settings.temperature, settings.max_tokens)?;
        if let Some(v) = parse(&response) {
            return Ok(v);
        }
        tracing::debug!(attempt, task, "unparseable LLM answer");
    }
    Err(CtcError::Unparseable { task, response })
}

/// Runs the intrusion prompt, fills in `llm_flagged`, and returns the
/// Jaccard score. Asks once more if the reply cannot be parsed.
pub fn score_intrusion(
    trial: &mut IntrusionTrial,
    transport: &dyn LlmTransport,
    settings: &CtcSettings,
) -> Result<f64, CtcError> {
    let prompt = render(INTRUSION_PROMPT, &trial.presented_words);
    let presented = trial.presented_words.clone();
    trial.llm_flagged = ask_twice(transport, &prompt, settings, "intrusion", |r| parse_intruders(r, &presented))?;
    Ok(jaccard(&trial.llm_flagged, &trial.true_intruders))
}

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("valid regex"));

/// First integer token in `0..=3`.
pub fn parse_rating(response: &str) -> Option<u8> {
    INTEGER
        .find_iter(response)
        .filter_map(|m| m.as_str().parse::<u8>().ok())
        .find(|&v| v <= 3)
}

pub fn score_rating(words: &[String], transport: &dyn LlmTransport, settings: &CtcSettings) -> Result<u8, CtcError> {
    let prompt = render(RATING_PROMPT, words);
    ask_twice(transport, &prompt, settings, "rating", parse_rating)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCtc {
    pub intrusion: Option<f64>,
    pub rating: Option<u8>,
    pub trial: Option<IntrusionTrial>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtcScores {
    /// Mean over valid intrusion trials.
    pub intrusion: Option<f64>,
    /// Mean over valid ratings.
    pub rating: Option<f64>,
    pub valid_intrusion: usize,
    pub valid_rating: usize,
    /// True when no trial of either kind produced a score.
    pub inconclusive: bool,
    pub per_topic: BTreeMap<i32, TopicCtc>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// One intrusion trial and one rating per topic. Unparseable answers make a
/// trial invalid; transport failures abort the report.
pub fn ctc_report(
    model: &TopicModel,
    transport: &dyn LlmTransport,
    settings: &CtcSettings,
    seed: u64,
) -> Result<CtcScores, CtcError> {
    let tops = top_words(model, settings.n_topic_words);
    let mut per_topic = BTreeMap::new();
    for (&topic, words) in &tops {
        if topic == NOISE && !settings.include_outlier {
            continue;
        }
        let mut entry = TopicCtc {
            intrusion: None,
            rating: None,
            trial: None,
            errors: Vec::new(),
        };
        match build_intrusion_trial(model, topic, settings.n_topic_words, settings.n_intruders, seed) {
            Ok(mut trial) => {
                match score_intrusion(&mut trial, transport, settings) {
                    Ok(score) => entry.intrusion = Some(score),
                    Err(e @ CtcError::Unparseable { .. }) => entry.errors.push(e.to_string()),
                    Err(e) => return Err(e),
                }
                entry.trial = Some(trial);
            }
            Err(e) => entry.errors.push(e.to_string()),
        }
        match score_rating(words, transport, settings) {
            Ok(r) => entry.rating = Some(r),
            Err(e @ CtcError::Unparseable { .. }) => entry.errors.push(e.to_string()),
            Err(e) => return Err(e),
        }
        per_topic.insert(topic, entry);
    }
    let intrusion = mean(per_topic.values().filter_map(|t| t.intrusion));
    let rating = mean(per_topic.values().filter_map(|t| t.rating.map(f64::from)));
    let valid_intrusion = per_topic.values().filter(|t| t.intrusion.is_some()).count();
    let valid_rating = per_topic.values().filter(|t| t.rating.is_some()).count();
    if valid_intrusion + valid_rating == 0 {
        tracing::warn!("no valid CTC trials; report is inconclusive");
    }
    Ok(CtcScores {
        intrusion,
        rating,
        valid_intrusion,
        valid_rating,
        inconclusive: valid_intrusion + valid_rating == 0,
        per_topic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::{TopicMethod, TopicWord};

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
                                weight: 100.0 - i as f64,
                            })
                            .collect(),
                    )
                })
                .collect(),
            cluster_sizes: BTreeMap::new(),
        }
    }

    const HEALTH: &[&str] = &["mask", "vaccine", "dose", "hospital", "nurse", "ward", "icu", "booster", "test", "virus"];
    const MONEY: &[&str] = &["bank", "loan", "rate", "stock", "bond", "market", "fund", "tax", "debt", "price"];

    fn two_topics() -> TopicModel {
        model(&[(0, HEALTH), (1, MONEY)])
    }

    /// Answers from a closure over the prompt.
    struct Scripted<F: Fn(&str) -> String>(F);

    impl<F: Fn(&str) -> String> LlmTransport for Scripted<F> {
        fn send(&self, prompt: &str, _: f64, _: u32) -> Result<String, CtcError> {
            Ok((self.0)(prompt))
        }
    }

    fn words_in(prompt: &str) -> Vec<String> {
        let line = prompt.lines().find(|l| l.starts_with("Words: ")).unwrap();
        line["Words: ".len()..].split(", ").map(String::from).collect()
    }

    /// Flags exactly the presented words foreign to `topics[0]`'s vocabulary
    /// set and rates every topic 3.
    fn oracle(prompt: &str) -> String {
        if prompt.contains("Intruders:") {
            let shown = words_in(prompt);
            let health = shown.iter().filter(|w| HEALTH.contains(&w.as_str())).count();
            let vocab = if health > 5 { HEALTH } else { MONEY };
            let foreign: Vec<String> = shown.into_iter().filter(|w| !vocab.contains(&w.as_str())).collect();
            format!("Category: something\nIntruders: {}", foreign.join(", "))
        } else {
            "3".to_string()
        }
    }

    #[test]
    fn trial_draws_five_foreign_words() {
        let trial = build_intrusion_trial(&two_topics(), 0, 10, 5, 7).unwrap();
        assert_eq!(trial.true_intruders.len(), 5);
        assert_eq!(trial.presented_words.len(), 15);
        assert!(trial.true_intruders.iter().all(|w| MONEY.contains(&w.as_str())));
        assert!(trial.true_intruders.iter().all(|w| trial.presented_words.contains(w)));
        assert_eq!(trial, build_intrusion_trial(&two_topics(), 0, 10, 5, 7).unwrap());
        assert_ne!(trial, build_intrusion_trial(&two_topics(), 0, 10, 5, 8).unwrap());
    }

    #[test]
    fn shared_word_is_never_an_intruder() {
        let m = model(&[(0, &["mask", "shared", "dose"]), (1, &["shared", "bank", "loan", "bond"])]);
        for seed in 0..20 {
            let trial = build_intrusion_trial(&m, 0, 10, 5, seed).unwrap();
            assert!(!trial.true_intruders.contains(&"shared".to_string()));
            assert_eq!(trial.true_intruders.len(), 3);
        }
    }

    #[test]
    fn single_topic_cannot_host_intruders() {
        let m = model(&[(0, HEALTH), (-1, MONEY)]);
        assert_eq!(build_intrusion_trial(&m, 0, 10, 5, 1), Err(CtcError::TooFewTopics(2)));
    }

    #[test]
    fn jaccard_cases() {
        let s = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let truth = s(&["a", "b", "c", "d", "e"]);
        assert_eq!(jaccard(&truth, &truth), 1.0);
        assert_eq!(jaccard(&[], &truth), 0.0);
        let flagged = s(&["a", "b", "c", "d", "x"]);
        assert!((jaccard(&flagged, &truth) - 4.0 / 6.0).abs() < 1e-12);
        let flagged = s(&["a", "b", "c", "d", "x", "y"]);
        assert!((jaccard(&flagged, &truth) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn intruder_parsing() {
        let shown: Vec<String> = ["Mask", "bank", "dose"].iter().map(|w| w.to_string()).collect();
        assert_eq!(
            parse_intruders("Category: health\nIntruders: BANK, \"dose\", unknown", &shown),
            Some(vec!["bank".to_string(), "dose".to_string()])
        );
        assert_eq!(parse_intruders("**Intruders:** none", &shown), Some(vec![]));
        assert_eq!(parse_intruders("I think bank is odd", &shown), None);
    }

    #[test]
    fn rating_parsing() {
        assert_eq!(parse_rating("2"), Some(2));
        assert_eq!(parse_rating("Rating: 3 - meaningful and highly coherent"), Some(3));
        assert_eq!(parse_rating("excellent"), None);
        assert_eq!(parse_rating("10 out of 10, so 1"), Some(1));
    }

    #[test]
    fn rating_failure_is_an_invalid_trial() {
        let t = Scripted(|_: &str| "excellent".to_string());
        let words = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            score_rating(&words, &t, &CtcSettings::default()),
            Err(CtcError::Unparseable { task: "rating", .. })
        ));
    }

    #[test]
    fn perfect_judge_scores_the_ceiling() {
        let report = ctc_report(&two_topics(), &Scripted(oracle), &CtcSettings::default(), 3).unwrap();
        assert_eq!(report.intrusion, Some(1.0));
        assert_eq!(report.rating, Some(3.0));
        assert_eq!(report.valid_intrusion, 2);
        assert!(!report.inconclusive);
    }

    #[test]
    fn garbage_judge_is_inconclusive() {
        let report = ctc_report(
            &two_topics(),
            &Scripted(|_: &str| "no idea".to_string()),
            &CtcSettings::default(),
            3,
        )
        .unwrap();
        assert!(report.inconclusive);
        assert_eq!(report.intrusion, None);
        assert_eq!(report.rating, None);
    }

    #[test]
    fn outlier_topic_skipped_by_default() {
        let m = model(&[(0, HEALTH), (1, MONEY), (-1, &["misc", "stuff"])]);
        let report = ctc_report(&m, &Scripted(oracle), &CtcSettings::default(), 1).unwrap();
        assert!(!report.per_topic.contains_key(&-1));
    }

    #[test]
    fn replay_reproduces_recorded_run() {
        let settings = CtcSettings::default();
        let recorder = RecordingTransport::new(Scripted(oracle));
        let live = ctc_report(&two_topics(), &recorder, &settings, 11).unwrap();
        let replay = ReplayTransport::from_entries(recorder.entries());
        let first = serde_json::to_string(&ctc_report(&two_topics(), &replay, &settings, 11).unwrap()).unwrap();
        let second = serde_json::to_string(&ctc_report(&two_topics(), &replay, &settings, 11).unwrap()).unwrap();
        assert_eq!(first, second);
        assert_eq!(first, serde_json::to_string(&live).unwrap());
    }

    #[test]
    fn prompts_carry_the_scale_and_format() {
        assert!(RATING_PROMPT.contains("3=\"meaningful and highly coherent\""));
        assert!(RATING_PROMPT.contains("0=\"useless\""));
        assert!(INTRUSION_PROMPT.contains("Intruders:"));
        assert!(render(RATING_PROMPT, &["x".into(), "y".into()]).contains("Words: x, y"));
    }
}
