//! Compositional linguistic preprocessing.
//!
//! Sentence splitting, tokenization, dictionary lemmatization and tagging,
//! stop-word removal, collocation merging and assembly of the normalized
//! corpus the vector model is trained on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ingest::{ExtractedText, Language};

/// Separator between the constituents of a multi-word term.
pub const PHRASE_JOINER: char = '_';

const TERMINATORS: [char; 4] = ['.', '!', '?', '…'];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '»', '”', '’'];
const APOSTROPHES: [char; 3] = ['\'', '’', 'ʼ'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Prep,
    Conj,
    Num,
    Punct,
    Other,
    Untagged,
}

impl Pos {
    /// Parts of speech that never carry content and are dropped with stop-words.
    pub fn is_noise(self) -> bool {
        matches!(self, Pos::Prep | Pos::Conj | Pos::Punct | Pos::Num)
    }
}

impl core::str::FromStr for Pos {
    type Err = ClpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_lowercase().as_str() {
            "noun" => Pos::Noun,
            "verb" => Pos::Verb,
            "adj" => Pos::Adj,
            "adv" => Pos::Adv,
            "prep" => Pos::Prep,
            "conj" => Pos::Conj,
            "num" => Pos::Num,
            "punct" => Pos::Punct,
            "other" => Pos::Other,
            "untagged" => Pos::Untagged,
            other => return Err(ClpError::UnknownPos(other.into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub is_stopword: bool,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        Token { lemma: surface.clone(), surface, pos: Pos::Untagged, is_stopword: false }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClpError {
    #[error("documents not in Ukrainian: {}", .0.join(", "))]
    LanguageMismatch(Vec<String>),
    #[error("unknown part of speech `{0}`")]
    UnknownPos(String),
    #[error("line {line}: expected two tab-separated fields")]
    MalformedDictionary { line: usize },
    #[error("invalid phrase config: {0}")]
    InvalidConfig(&'static str),
}

/// Stop-list plus the lemma and part-of-speech dictionaries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Resources {
    pub stoplist: BTreeSet<String>,
    /// surface form → lemma
    pub lemmas: BTreeMap<String, String>,
    /// lemma → part of speech
    pub tags: BTreeMap<String, Pos>,
}

impl Resources {
    /// One stop-word per line; blank lines and `#` comments are skipped.
    pub fn parse_stoplist(text: &str) -> BTreeSet<String> {
        entries(text).map(|(_, l)| l.to_lowercase()).collect()
    }

    /// `surface<TAB>lemma` per line.
    pub fn parse_lemmas(text: &str) -> Result<BTreeMap<String, String>, ClpError> {
        entries(text)
            .map(|(line, l)| {
                let (surface, lemma) = split_pair(line, l)?;
                Ok((surface.to_lowercase(), lemma.to_lowercase()))
            })
            .collect()
    }

    /// `lemma<TAB>pos` per line.
    pub fn parse_tags(text: &str) -> Result<BTreeMap<String, Pos>, ClpError> {
        entries(text)
            .map(|(line, l)| {
                let (lemma, pos) = split_pair(line, l)?;
                Ok((lemma.to_lowercase(), pos.parse()?))
            })
            .collect()
    }
}

fn entries(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i, l.trim()))
}

fn split_pair(line: usize, l: &str) -> Result<(&str, &str), ClpError> {
    let mut parts = l.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) if !a.trim().is_empty() && !b.trim().is_empty() => Ok((a.trim(), b.trim())),
        _ => Err(ClpError::MalformedDictionary { line }),
    }
}

/// Splits text into sentences on `.`, `!`, `?` and `…`.
///
/// A period whose next non-space character is a lowercase letter or a digit
/// does not end a sentence, so abbreviations like "рис. 1" stay intact.
/// Whitespace inside a sentence is collapsed to single spaces.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        push_collapsed(&mut current, c);
        i += 1;
        if !TERMINATORS.contains(&c) {
            continue;
        }
        // Absorb runs like "?!" or "..." and trailing quotes/brackets.
        while i < chars.len() && (TERMINATORS.contains(&chars[i]) || CLOSERS.contains(&chars[i])) {
            current.push(chars[i]);
            i += 1;
        }
        let next = chars[i..].iter().find(|c| !c.is_whitespace());
        let guarded = c == '.' && next.is_some_and(|n| n.is_lowercase() || n.is_numeric());
        if !guarded {
            flush(&mut sentences, &mut current);
        }
    }
    flush(&mut sentences, &mut current);
    sentences
}

fn push_collapsed(buf: &mut String, c: char) {
    if c.is_whitespace() {
        if !buf.is_empty() && !buf.ends_with(' ') {
            buf.push(' ');
        }
    } else {
        buf.push(c);
    }
}

fn flush(out: &mut Vec<String>, buf: &mut String) {
    let s = buf.trim_end();
    if !s.is_empty() {
        out.push(s.into());
    }
    buf.clear();
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Lowercased word tokens: runs of letters and digits, joined across a single
/// inner hyphen or apostrophe (`ультра-звуковий`, `м'який`).
pub fn tokenize(sentence: &str) -> Vec<String> {
    let chars: Vec<char> = sentence.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let mut word = String::new();
        loop {
            while i < chars.len() && is_word_char(chars[i]) {
                word.extend(chars[i].to_lowercase());
                i += 1;
            }
            let joiner = i + 1 < chars.len()
                && (chars[i] == '-' || APOSTROPHES.contains(&chars[i]))
                && is_word_char(chars[i + 1]);
            if !joiner {
                break;
            }
            word.push(chars[i]);
            i += 1;
        }
        tokens.push(word);
    }
    tokens
}

/// Dictionary lemma, or the surface itself when the dictionary has no entry.
pub fn lemmatize(surface: &str, dictionary: &BTreeMap<String, String>) -> String {
    dictionary.get(surface).cloned().unwrap_or_else(|| surface.into())
}

/// Fills `pos` from a lemma dictionary. Misses become `Untagged`, except
/// purely numeric lemmas which are tagged `Num`.
pub fn pos_tag(mut tokens: Vec<Token>, dictionary: &BTreeMap<String, Pos>) -> Vec<Token> {
    for t in &mut tokens {
        t.pos = match dictionary.get(&t.lemma) {
            Some(&pos) => pos,
            None if t.lemma.chars().all(|c| c.is_numeric()) => Pos::Num,
            None => Pos::Untagged,
        };
    }
    tokens
}

/// Drops stop-listed lemmas and function-word parts of speech.
pub fn remove_stopwords(tokens: Vec<Token>, stoplist: &BTreeSet<String>) -> Vec<Token> {
    tokens
        .into_iter()
        .filter(|t| !(t.is_stopword || t.pos.is_noise() || stoplist.contains(&t.lemma)))
        .collect()
}

/// Tokenize → lemmatize → tag → stop-word filter for one sentence.
pub fn analyze_sentence(sentence: &str, res: &Resources) -> Vec<Token> {
    let tokens = tokenize(sentence)
        .into_iter()
        .map(|surface| {
            let lemma = lemmatize(&surface, &res.lemmas);
            Token { surface, lemma, pos: Pos::Untagged, is_stopword: false }
        })
        .collect();
    let mut tokens = pos_tag(tokens, &res.tags);
    for t in &mut tokens {
        t.is_stopword = res.stoplist.contains(&t.lemma);
    }
    remove_stopwords(tokens, &res.stoplist)
}

/// Per-document pipeline without corpus-wide phrase statistics: the lemma
/// sequence of each non-empty sentence.
pub fn normalize_text(text: &str, res: &Resources) -> Vec<Vec<String>> {
    split_sentences(text)
        .iter()
        .map(|s| analyze_sentence(s, res).into_iter().map(|t| t.lemma).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhraseConfig {
    /// Discount subtracted from every bigram count.
    pub delta: f64,
    pub threshold: f64,
    pub max_passes: usize,
}

impl Default for PhraseConfig {
    fn default() -> Self {
        PhraseConfig { delta: 1.0, threshold: 10.0, max_passes: 2 }
    }
}

impl PhraseConfig {
    pub fn validate(&self) -> Result<(), ClpError> {
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(ClpError::InvalidConfig("delta must be non-negative"));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(ClpError::InvalidConfig("threshold must be positive"));
        }
        if self.max_passes == 0 {
            return Err(ClpError::InvalidConfig("max_passes must be at least 1"));
        }
        Ok(())
    }
}

/// Sentence-segmented normalized terms with their frequency table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedCorpus {
    pub sentences: Vec<Vec<String>>,
    pub vocab_counts: BTreeMap<String, u64>,
    pub total_tokens: u64,
}

impl NormalizedCorpus {
    /// Builds a corpus and recomputes its counts. Empty sentences and empty
    /// terms are dropped.
    pub fn from_sentences(sentences: Vec<Vec<String>>) -> Self {
        let sentences: Vec<Vec<String>> = sentences
            .into_iter()
            .map(|s| s.into_iter().filter(|t| !t.is_empty()).collect::<Vec<_>>())
            .filter(|s| !s.is_empty())
            .collect();
        let mut vocab_counts = BTreeMap::new();
        for term in sentences.iter().flatten() {
            *vocab_counts.entry(term.clone()).or_insert(0u64) += 1;
        }
        let total_tokens = vocab_counts.values().sum();
        NormalizedCorpus { sentences, vocab_counts, total_tokens }
    }

    pub fn count(&self, term: &str) -> u64 {
        self.vocab_counts.get(term).copied().unwrap_or(0)
    }

    /// Canonical text form: one sentence per line, terms separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for (i, t) in s.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(t);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_sentences(
            text.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect(),
        )
    }
}

/// Collocation score of an adjacent pair:
/// `(count(ab) - delta) * total / (count(a) * count(b))`.
pub fn phrase_score(count_ab: u64, count_a: u64, count_b: u64, total: u64, delta: f64) -> f64 {
    (count_ab as f64 - delta) * total as f64 / (count_a as f64 * count_b as f64)
}

fn bigram_counts(sentences: &[Vec<String>]) -> BTreeMap<(&str, &str), u64> {
    let mut counts = BTreeMap::new();
    for s in sentences {
        for w in s.windows(2) {
            *counts.entry((w[0].as_str(), w[1].as_str())).or_insert(0u64) += 1;
        }
    }
    counts
}

/// Merges strongly associated adjacent terms into `a_b` terms.
///
/// Each pass recounts the corpus and scans every sentence left to right,
/// merging a pair when its score exceeds the threshold; a merged token is
/// not considered again in the same pass.
pub fn detect_phrases(corpus: &NormalizedCorpus, cfg: &PhraseConfig) -> NormalizedCorpus {
    let mut current = corpus.clone();
    for _ in 0..cfg.max_passes {
        let next = {
            let pairs = bigram_counts(&current.sentences);
            let score = |a: &str, b: &str| {
                let ab = pairs.get(&(a, b)).copied().unwrap_or(0);
                phrase_score(ab, current.count(a), current.count(b), current.total_tokens, cfg.delta)
            };
            let mut merged_any = false;
            let sentences = current
                .sentences
                .iter()
                .map(|s| {
                    let mut out = Vec::with_capacity(s.len());
                    let mut i = 0;
                    while i < s.len() {
                        if i + 1 < s.len() && score(&s[i], &s[i + 1]) > cfg.threshold {
                            let mut joined = s[i].clone();
                            joined.push(PHRASE_JOINER);
                            joined.push_str(&s[i + 1]);
                            out.push(joined);
                            merged_any = true;
                            i += 2;
                        } else {
                            out.push(s[i].clone());
                            i += 1;
                        }
                    }
                    out
                })
                .collect();
            merged_any.then(|| NormalizedCorpus::from_sentences(sentences))
        };
        match next {
            Some(c) => current = c,
            None => break,
        }
    }
    current
}

/// Full corpus construction over Ukrainian documents.
pub fn build_corpus(
    docs: &[ExtractedText],
    res: &Resources,
    cfg: &PhraseConfig,
) -> Result<NormalizedCorpus, ClpError> {
    cfg.validate()?;
    let foreign: Vec<String> =
        docs.iter().filter(|d| d.language != Language::Uk).map(|d| d.doc_id.clone()).collect();
    if !foreign.is_empty() {
        return Err(ClpError::LanguageMismatch(foreign));
    }
    let sentences = docs.iter().flat_map(|d| normalize_text(&d.text, res)).collect();
    Ok(detect_phrases(&NormalizedCorpus::from_sentences(sentences), cfg))
}

/// Short human summary, used in logs.
pub fn describe(corpus: &NormalizedCorpus) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{} sentences, {} terms, {} tokens",
        corpus.sentences.len(),
        corpus.vocab_counts.len(),
        corpus.total_tokens
    );
    s
}
