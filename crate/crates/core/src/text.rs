//! Tokenization and edit-distance helpers shared by recall and embedding.

use std::collections::BTreeSet;
use std::sync::OnceLock;

const STOPWORDS_ASSET: &str = include_str!("../assets/stopwords.txt");

pub fn stopwords() -> &'static BTreeSet<&'static str> {
    static WORDS: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    WORDS.get_or_init(|| {
        STOPWORDS_ASSET
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// Lowercases, splits on anything that is not alphanumeric, drops stopwords
/// and duplicates. Order of first occurrence is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stopwords();
    let mut seen = BTreeSet::new();
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !stop.contains(t))
        .filter(|t| seen.insert(t.to_string()))
        .map(str::to_string)
        .collect()
}

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (cur[j] + 1).min(prev[j + 1] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d / max(|a|, |b|)`, in `[0, 1]`; two empty strings are identical.
pub fn normalized_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_stopwords() {
        assert_eq!(stopwords().len(), 50);
    }

    #[test]
    fn tokenizer_strips_case_punctuation_and_stopwords() {
        assert_eq!(
            tokenize("Click the Search-bar!"),
            vec!["click", "search", "bar"]
        );
        assert_eq!(tokenize("the the a"), Vec::<String>::new());
        assert_eq!(tokenize("Like, like, LIKE"), vec!["like"]);
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("settings", "setings"), 1);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
    }

    #[test]
    fn similarity_normalizes_by_longer_token() {
        assert!((normalized_similarity("settings", "setings") - 7.0 / 8.0).abs() < 1e-12);
        assert_eq!(normalized_similarity("", ""), 1.0);
        assert_eq!(normalized_similarity("abc", "xyz"), 0.0);
    }
}
