//! Component recommendation: three independent recall pathways over the
//! screen's elements, unioned, ranked by best pathway score and truncated.
//!
//! * keyword: exact or fuzzy (normalized Levenshtein) token match
//! * semantic: embedding cosine between subgoal and element text
//! * llm: the model names the elements whose function fits the subgoal
//!
//! Elements excluded by retrospection never come back out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::llm::{
    complete_with_repair, cosine, ChatProvider, ChatRequest, EmbeddingProvider, LlmError,
    ParsedRecord, SchemaTag,
};
use crate::model::{ScreenState, Subgoal, UiElement};
use crate::prompts;
use crate::text::{normalized_similarity, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pathway {
    Keyword,
    Semantic,
    Llm,
}

impl fmt::Display for Pathway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pathway::Keyword => "keyword",
            Pathway::Semantic => "semantic",
            Pathway::Llm => "llm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub element_id: String,
    pub pathway: Pathway,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub element: UiElement,
    pub best_score: f64,
    pub pathways: Vec<Pathway>,
}

/// A candidate without its element payload, as carried in events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRef {
    pub element_id: String,
    pub score: f64,
    pub pathways: Vec<Pathway>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub state_id: String,
    pub candidates: Vec<Candidate>,
    pub excluded_ids: BTreeSet<String>,
    /// No pathway produced a usable element; `candidates` is every
    /// non-excluded element, unscored.
    pub fallback: bool,
    /// Pathways that errored and contributed nothing this round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degraded: Vec<Pathway>,
}

impl CandidateSet {
    /// Every element of the state, unranked. Used when recommendation is off.
    pub fn unfiltered(state: &ScreenState) -> Self {
        CandidateSet {
            state_id: state.state_id.clone(),
            candidates: state
                .elements
                .iter()
                .map(|e| Candidate {
                    element: e.clone(),
                    best_score: 0.0,
                    pathways: Vec::new(),
                })
                .collect(),
            excluded_ids: BTreeSet::new(),
            fallback: false,
            degraded: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, element_id: &str) -> bool {
        self.candidates
            .iter()
            .any(|c| c.element.element_id == element_id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.candidates
            .iter()
            .map(|c| c.element.element_id.as_str())
            .collect()
    }

    pub fn refs(&self) -> Vec<CandidateRef> {
        self.candidates
            .iter()
            .map(|c| CandidateRef {
                element_id: c.element.element_id.clone(),
                score: c.best_score,
                pathways: c.pathways.clone(),
            })
            .collect()
    }

    pub fn elements(&self) -> impl Iterator<Item = &UiElement> {
        self.candidates.iter().map(|c| &c.element)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwaySet {
    pub keyword: bool,
    pub semantic: bool,
    pub llm: bool,
}

impl PathwaySet {
    pub const ALL: PathwaySet = PathwaySet {
        keyword: true,
        semantic: true,
        llm: true,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrmConfig {
    pub max_candidates: usize,
    pub semantic_top_k: usize,
    /// Floor on the rescaled cosine `(c + 1) / 2`.
    pub semantic_floor: f64,
    pub fuzzy_threshold: f64,
    pub llm_confidence: f64,
    pub llm_max_ids: usize,
    pub temperature: f64,
    pub pathways: PathwaySet,
}

impl Default for CrmConfig {
    fn default() -> Self {
        CrmConfig {
            max_candidates: 10,
            semantic_top_k: 5,
            semantic_floor: 0.3,
            fuzzy_threshold: 0.75,
            llm_confidence: 0.9,
            llm_max_ids: 10,
            temperature: 0.0,
            pathways: PathwaySet::ALL,
        }
    }
}

fn element_tokens(el: &UiElement) -> Vec<String> {
    let mut toks = tokenize(&el.text);
    for t in tokenize(&el.content_description) {
        if !toks.contains(&t) {
            toks.push(t);
        }
    }
    toks
}

/// Keyword pathway: any subgoal token matching any element token exactly
/// (score 1) or with normalized Levenshtein similarity `>= threshold`
/// (score = similarity). The element's score is its best match.
pub fn recall_keyword(goal: &Subgoal, elements: &[UiElement], threshold: f64) -> Vec<RecallResult> {
    let goal_tokens = tokenize(&goal.text);
    elements
        .iter()
        .filter_map(|el| {
            let toks = element_tokens(el);
            let best = goal_tokens
                .iter()
                .flat_map(|g| {
                    toks.iter().map(move |t| {
                        if g == t {
                            1.0
                        } else {
                            normalized_similarity(g, t)
                        }
                    })
                })
                .filter(|s| *s >= threshold)
                .fold(None, |acc: Option<f64>, s| {
                    Some(acc.map_or(s, |a| a.max(s)))
                });
            best.map(|score| RecallResult {
                element_id: el.element_id.clone(),
                pathway: Pathway::Keyword,
                score,
            })
        })
        .collect()
}

fn by_score_then_id(a: (&str, f64), b: (&str, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Semantic pathway: top-`k` elements by rescaled cosine, floor applied.
pub fn recall_semantic(
    embedder: &dyn EmbeddingProvider,
    goal: &Subgoal,
    elements: &[UiElement],
    k: usize,
    floor: f64,
) -> Result<Vec<RecallResult>, LlmError> {
    let query = embedder.embed(&goal.text)?;
    let mut cache: BTreeMap<&str, f64> = BTreeMap::new();
    let mut scored = Vec::new();
    for el in elements {
        let mut best: Option<f64> = None;
        for field in el.text_fields() {
            let c = match cache.get(field) {
                Some(c) => *c,
                None => {
                    let c = cosine(&query, &embedder.embed(field)?);
                    cache.insert(field, c);
                    c
                }
            };
            let s = (c + 1.0) / 2.0;
            best = Some(best.map_or(s, |b: f64| b.max(s)));
        }
        if let Some(s) = best.filter(|s| *s >= floor) {
            scored.push((el.element_id.as_str(), s));
        }
    }
    scored.sort_by(|a, b| by_score_then_id(*a, *b));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(id, score)| RecallResult {
            element_id: id.to_string(),
            pathway: Pathway::Semantic,
            score,
        })
        .collect())
}

/// LLM pathway. Each valid returned id scores `confidence`; ids not on
/// screen are dropped with a warning; the reply is capped at `max_ids`.
pub fn recall_llm(
    chat: &dyn ChatProvider,
    goal: &Subgoal,
    elements: &[UiElement],
    config: &CrmConfig,
) -> Result<Vec<RecallResult>, LlmError> {
    let roster = prompts::render_elements(elements);
    let mut req = ChatRequest::new(
        prompts::RECALL.role,
        prompts::RECALL.system.trim_end(),
        prompts::render(
            prompts::RECALL.user,
            &[("subgoal", &goal.text), ("roster", &roster)],
        ),
    );
    req.temperature = config.temperature;
    let ids = complete_with_repair(chat, &req, SchemaTag::RecallIds, |rec| match rec {
        ParsedRecord::RecallIds(ids) => Ok(ids),
        other => Err(format!("unexpected record {other:?}")),
    })
    .map_err(|e| e.into_llm_error(SchemaTag::RecallIds))?;

    let present: BTreeSet<&str> = elements.iter().map(|e| e.element_id.as_str()).collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for id in ids
        .into_iter()
        .filter(|id| seen.insert(id.clone()))
        .take(config.llm_max_ids)
    {
        if present.contains(id.as_str()) {
            out.push(RecallResult {
                element_id: id,
                pathway: Pathway::Llm,
                score: config.llm_confidence,
            });
        } else {
            log::warn!("llm recall returned unknown element id {id:?}; dropped");
        }
    }
    Ok(out)
}

/// Union, exclusion, ranking and truncation of pathway outputs.
pub fn merge(
    state: &ScreenState,
    results: impl IntoIterator<Item = RecallResult>,
    excluded: &BTreeSet<String>,
    max_candidates: usize,
) -> CandidateSet {
    let mut best: BTreeMap<String, (f64, BTreeSet<Pathway>)> = BTreeMap::new();
    for r in results {
        if excluded.contains(&r.element_id) || !state.contains(&r.element_id) {
            continue;
        }
        let slot = best
            .entry(r.element_id)
            .or_insert((f64::NEG_INFINITY, BTreeSet::new()));
        slot.0 = slot.0.max(r.score);
        slot.1.insert(r.pathway);
    }
    if best.is_empty() {
        let mut candidates: Vec<Candidate> = state
            .elements
            .iter()
            .filter(|e| !excluded.contains(&e.element_id))
            .map(|e| Candidate {
                element: e.clone(),
                best_score: 0.0,
                pathways: Vec::new(),
            })
            .collect();
        candidates.sort_by(|a, b| a.element.element_id.cmp(&b.element.element_id));
        return CandidateSet {
            state_id: state.state_id.clone(),
            candidates,
            excluded_ids: excluded.clone(),
            fallback: true,
            degraded: Vec::new(),
        };
    }
    let mut ranked: Vec<(&str, f64, &BTreeSet<Pathway>)> = best
        .iter()
        .map(|(id, (s, p))| (id.as_str(), *s, p))
        .collect();
    ranked.sort_by(|a, b| by_score_then_id((a.0, a.1), (b.0, b.1)));
    ranked.truncate(max_candidates);
    let candidates = ranked
        .into_iter()
        .map(|(id, score, pathways)| Candidate {
            element: state.element(id).expect("filtered to present ids").clone(),
            best_score: score,
            pathways: pathways.iter().copied().collect(),
        })
        .collect();
    CandidateSet {
        state_id: state.state_id.clone(),
        candidates,
        excluded_ids: excluded.clone(),
        fallback: false,
        degraded: Vec::new(),
    }
}

pub struct Recommender<'a> {
    chat: &'a dyn ChatProvider,
    embedder: &'a dyn EmbeddingProvider,
    config: CrmConfig,
}

impl<'a> Recommender<'a> {
    pub fn new(
        chat: &'a dyn ChatProvider,
        embedder: &'a dyn EmbeddingProvider,
        config: CrmConfig,
    ) -> Self {
        Recommender {
            chat,
            embedder,
            config,
        }
    }

    pub fn config(&self) -> &CrmConfig {
        &self.config
    }

    /// Runs the enabled pathways (semantic and llm concurrently), then
    /// merges. A failing pathway contributes nothing and is listed in
    /// `degraded`.
    pub fn recommend(
        &self,
        goal: &Subgoal,
        state: &ScreenState,
        excluded: &BTreeSet<String>,
    ) -> CandidateSet {
        let cfg = &self.config;
        let elements = &state.elements;
        let (semantic, llm) = std::thread::scope(|s| {
            let sem = cfg.pathways.semantic.then(|| {
                s.spawn(|| {
                    recall_semantic(
                        self.embedder,
                        goal,
                        elements,
                        cfg.semantic_top_k,
                        cfg.semantic_floor,
                    )
                })
            });
            let llm = cfg
                .pathways
                .llm
                .then(|| s.spawn(|| recall_llm(self.chat, goal, elements, cfg)));
            (
                sem.map(|h| h.join().expect("semantic recall panicked")),
                llm.map(|h| h.join().expect("llm recall panicked")),
            )
        });
        let mut results = Vec::new();
        if cfg.pathways.keyword {
            results.extend(recall_keyword(goal, elements, cfg.fuzzy_threshold));
        }
        let mut degraded = Vec::new();
        for (pathway, outcome) in [(Pathway::Semantic, semantic), (Pathway::Llm, llm)] {
            match outcome {
                Some(Ok(r)) => results.extend(r),
                Some(Err(e)) => {
                    log::warn!("{pathway} recall failed: {e}; continuing without it");
                    degraded.push(pathway);
                }
                None => {}
            }
        }
        let mut set = merge(state, results, excluded, cfg.max_candidates);
        set.degraded = degraded;
        set
    }
}
