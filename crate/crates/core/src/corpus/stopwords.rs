use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use super::CorpusError;

const BUNDLED_EN: &str = include_str!("../../data/stopwords/en.txt");
const BUNDLED_DE: &str = include_str!("../../data/stopwords/de.txt");

/// Stopword lists keyed by ISO-639-1 language code.
#[derive(Debug, Clone, Default)]
pub struct StopwordSets {
    sets: HashMap<String, HashSet<String>>,
}

impl StopwordSets {
    /// The English and German lists shipped with the crate.
    pub fn bundled() -> Self {
        let mut sets = StopwordSets::default();
        sets.insert("en", BUNDLED_EN);
        sets.insert("de", BUNDLED_DE);
        sets
    }

    /// Reads every `<lang>.txt` file in `dir` (one word per line, UTF-8).
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let mut sets = StopwordSets::default();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let text = fs::read_to_string(&path)?;
            sets.insert(lang, &text);
        }
        Ok(sets)
    }

    pub fn insert(&mut self, language: &str, list: &str) {
        let words = list
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        self.sets.insert(language.to_lowercase(), words);
    }

    pub fn for_language(&self, language: &str) -> Option<&HashSet<String>> {
        self.sets.get(&language.trim().to_lowercase())
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }
}
