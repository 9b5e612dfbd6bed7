//! Analog ranking, verdicts and application-template filling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clp::{normalize_text, Resources, PHRASE_JOINER};
use crate::vectors::{KeyedVectors, VectorError};

/// Scores strictly above this are analogs; 0.5 itself is not.
pub const SIMILAR_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Similar,
    Dissimilar,
}

pub fn classify(score: f64) -> Verdict {
    if score > SIMILAR_THRESHOLD {
        Verdict::Similar
    } else {
        Verdict::Dissimilar
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentRecord {
    pub id: String,
    pub title: String,
    pub ipc_class: String,
    pub term_array: Vec<String>,
    pub text_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAnalog {
    pub patent_id: String,
    pub score: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("no term of the document is in the model vocabulary")]
    EmptyTermArray,
    #[error("the patent store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("template fields missing: {}", .0.join(", "))]
    MissingField(Vec<String>),
    #[error(transparent)]
    Vector(#[from] VectorError),
}

/// Greedy longest-match recognizer for the model's multi-word terms.
#[derive(Debug, Clone, Default)]
pub struct PhraseMatcher {
    phrases: BTreeSet<String>,
    max_parts: usize,
}

impl PhraseMatcher {
    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Self {
        let mut phrases = BTreeSet::new();
        let mut max_parts = 1;
        for t in terms.iter().map(AsRef::as_ref) {
            let parts = t.split(PHRASE_JOINER).count();
            if parts > 1 {
                max_parts = max_parts.max(parts);
                phrases.insert(String::from(t));
            }
        }
        PhraseMatcher { phrases, max_parts }
    }

    pub fn apply(&self, sentence: &[String]) -> Vec<String> {
        let mut out = Vec::with_capacity(sentence.len());
        let mut i = 0;
        'outer: while i < sentence.len() {
            let longest = self.max_parts.min(sentence.len() - i);
            for n in (2..=longest).rev() {
                let candidate = sentence[i..i + n].join("_");
                if self.phrases.contains(&candidate) {
                    out.push(candidate);
                    i += n;
                    continue 'outer;
                }
            }
            out.push(sentence[i].clone());
            i += 1;
        }
        out
    }
}

/// Terms of a single document: the per-document normalization pipeline,
/// phrase matching against the model, then vocabulary filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermArray {
    pub terms: Vec<String>,
    pub dropped_oov: usize,
}

pub fn extract_terms(text: &str, res: &Resources, model: &KeyedVectors, matcher: &PhraseMatcher) -> TermArray {
    let mut terms = Vec::new();
    let mut dropped_oov = 0;
    for sentence in normalize_text(text, res) {
        for t in matcher.apply(&sentence) {
            if model.contains(&t) {
                terms.push(t);
            } else {
                dropped_oov += 1;
            }
        }
    }
    TermArray { terms, dropped_oov }
}

/// Ranks stored patents against a query term array by set-to-set cosine.
///
/// Stored terms missing from the model are ignored; patents left with no
/// terms are skipped. Ties are broken by ascending patent id.
pub fn rank_analogs<S: AsRef<str>>(
    model: &KeyedVectors,
    query: &[S],
    patents: &[PatentRecord],
    k: usize,
) -> Result<Vec<RankedAnalog>, SearchError> {
    if k == 0 {
        return Err(SearchError::ZeroK);
    }
    if patents.is_empty() {
        return Err(SearchError::EmptyStore);
    }
    if query.is_empty() {
        return Err(SearchError::EmptyTermArray);
    }
    let mut ranked = Vec::with_capacity(patents.len());
    for p in patents {
        let terms: Vec<&str> = p.term_array.iter().map(String::as_str).filter(|t| model.contains(t)).collect();
        if terms.is_empty() {
            continue;
        }
        let score = match model.n_similarity(query, &terms) {
            Ok(s) => s.value(),
            Err(VectorError::DegenerateMean) => continue,
            Err(e) => return Err(e.into()),
        };
        ranked.push(RankedAnalog { patent_id: p.id.clone(), score, verdict: classify(score) });
    }
    sort_ranked(&mut ranked);
    ranked.truncate(k);
    Ok(ranked)
}

/// Score descending, then patent id ascending.
pub fn sort_ranked(ranked: &mut [RankedAnalog]) {
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.patent_id.cmp(&b.patent_id)));
}

/// Replaces every `{{name}}` with its field value. Values are inserted
/// verbatim and not scanned again.
pub fn fill_template(template: &str, fields: &BTreeMap<String, String>) -> Result<String, SearchError> {
    let mut out = String::with_capacity(template.len());
    let mut missing: Vec<String> = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        out.push_str(&rest[..start]);
        let name = rest[start + 2..start + 2 + len].trim();
        match fields.get(name) {
            Some(v) => out.push_str(v),
            None => {
                if !missing.iter().any(|m| m == name) {
                    missing.push(name.into());
                }
            }
        }
        rest = &rest[start + 2 + len + 2..];
    }
    out.push_str(rest);
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(SearchError::MissingField(missing))
    }
}
