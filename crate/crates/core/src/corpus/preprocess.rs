use std::sync::LazyLock;

use regex::Regex;

static COVID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)covid[-\s]?19").unwrap());

/// Emoji codepoints that are stripped: Emoticons, Miscellaneous Symbols and
/// Pictographs, Supplemental Symbols and Pictographs, Transport and Map
/// Symbols, and regional-indicator flags. The emoji presentation selector and
/// zero-width joiner are removed too so that no half-sequences remain.
pub fn is_emoji(c: char) -> bool {
    matches!(
        c as u32,
        0x1F600..=0x1F64F
            | 0x1F300..=0x1F5FF
            | 0x1F900..=0x1F9FF
            | 0x1F680..=0x1F6FF
            | 0x1F1E6..=0x1F1FF
            | 0xFE0F
            | 0x200D
    )
}

/// Removes emoji, rewrites every spelling of "Covid-19" to `covid19` and
/// collapses whitespace. Lowercasing happens later, at tokenization.
pub fn preprocess(text: &str) -> String {
    let stripped: String = text.chars().filter(|c| !is_emoji(*c)).collect();
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    COVID.replace_all(&collapsed, "covid19").into_owned()
}
