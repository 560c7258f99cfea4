//! Brute-force reference implementations used as test oracles. They share
//! no code with the library beyond its data types and the embedding
//! provider under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use recagent::llm::EmbeddingProvider;
use recagent::model::UiElement;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn stopwords() -> BTreeSet<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/stopwords.txt");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Lowercase words split at every non-alphanumeric character, minus
/// stopwords, deduplicated.
pub fn words(text: &str) -> BTreeSet<String> {
    let stop = stopwords();
    let lower = text.to_lowercase();
    let mut out = BTreeSet::new();
    let mut cur = String::new();
    for c in lower.chars().chain(std::iter::once(' ')) {
        if c.is_alphanumeric() {
            cur.push(c);
        } else if !cur.is_empty() {
            if !stop.contains(&cur) {
                out.insert(cur.clone());
            }
            cur.clear();
        }
    }
    out
}

/// Element id to best keyword score, for every element that matches.
pub fn keyword_oracle(goal: &str, elements: &[UiElement], threshold: f64) -> BTreeMap<String, f64> {
    let goal_words = words(goal);
    let mut out = BTreeMap::new();
    for el in elements {
        let mut el_words = words(&el.text);
        el_words.extend(words(&el.content_description));
        let mut best: Option<f64> = None;
        for g in &goal_words {
            for w in &el_words {
                let s = if g == w {
                    1.0
                } else {
                    strsim::normalized_levenshtein(g, w)
                };
                if s >= threshold && best.is_none_or(|b| s > b) {
                    best = Some(s);
                }
            }
        }
        if let Some(b) = best {
            out.insert(el.element_id.clone(), b);
        }
    }
    out
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Every element scored by rescaled cosine, floored, sorted best first with
/// ids breaking ties, then cut to `k`.
pub fn semantic_oracle(
    embedder: &dyn EmbeddingProvider,
    goal: &str,
    elements: &[UiElement],
    k: usize,
    floor: f64,
) -> Vec<(String, f64)> {
    let q = embedder.embed(goal).unwrap().values;
    let mut all: Vec<(String, f64)> = Vec::new();
    for el in elements {
        let fields = [&el.text, &el.content_description];
        let best = fields
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| (cos(&q, &embedder.embed(f).unwrap().values) + 1.0) / 2.0)
            .fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.max(s)))
            });
        if let Some(s) = best {
            if s >= floor {
                all.push((el.element_id.clone(), s));
            }
        }
    }
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}
