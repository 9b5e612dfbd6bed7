use std::collections::BTreeMap;

use patsim_core::clp::{self, NormalizedCorpus, PhraseConfig, Pos, Resources, Token};
use patsim_core::ingest::{self, Encoding, RawDocument};
use patsim_core::trainer::{self, LrSchedule, TrainingConfig, LR_FLOOR};
use patsim_core::vectors::KeyedVectors;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn term() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "c", "d", "e", "ф", "ж", "щ"]).prop_map(String::from)
}

fn corpus_strategy() -> impl Strategy<Value = NormalizedCorpus> {
    prop::collection::vec(prop::collection::vec(term(), 0..12), 0..15).prop_map(NormalizedCorpus::from_sentences)
}

fn model_strategy() -> impl Strategy<Value = KeyedVectors> {
    (2usize..8, 1usize..6).prop_flat_map(|(n, d)| {
        prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |data| {
            let terms = (0..n).map(|i| format!("t{i}")).collect();
            KeyedVectors::new(terms, data, d).unwrap()
        })
    })
}

fn multiset(words: impl IntoIterator<Item = String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for w in words {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

proptest! {
    #[test]
    fn extract_is_idempotent(text in "[а-яіїєґ A-Za-z0-9.,\t\r\n]{0,80}") {
        let first = ingest::extract_text(&RawDocument::plain_utf8("d", &text)).unwrap();
        let second = ingest::extract_text(&RawDocument::plain_utf8("d", &first.text)).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn language_ignores_word_order(words in prop::collection::vec("[а-яіa-z0-9]{1,6}", 1..10), seed: u64) {
        let mut shuffled = words.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(ingest::detect_language(&words.join(" ")), ingest::detect_language(&shuffled.join(" ")));
    }

    #[test]
    fn win1251_round_trip(text in "[А-Яа-яЁёІіЇїЄєҐґ0-9 .,!?a-zA-Z«»\u{2014}№]{0,60}") {
        let enc = ingest::convert_encoding(text.as_bytes(), Encoding::Utf8, Encoding::Win1251).unwrap();
        prop_assert_eq!(enc.replacements, 0);
        let dec = ingest::convert_encoding(&enc.bytes, Encoding::Win1251, Encoding::Utf8).unwrap();
        prop_assert_eq!(String::from_utf8(dec.bytes).unwrap(), text);
    }

    #[test]
    fn tokenizer_matches_regex_scan(text in "[а-яА-Яa-zA-Z0-9'’ʼ\\- ,.!?]{0,60}") {
        let re = regex::Regex::new(r"[\p{Alphabetic}\p{N}]+(?:['’ʼ\-][\p{Alphabetic}\p{N}]+)*").unwrap();
        let expected: Vec<String> = re.find_iter(&text).map(|m| m.as_str().to_lowercase()).collect();
        prop_assert_eq!(clp::tokenize(&text), expected);
    }

    #[test]
    fn sentences_preserve_non_whitespace(text in "[а-яА-Я0-9 .!?…\n]{0,80}") {
        let joined: String = clp::split_sentences(&text).join(" ");
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        prop_assert_eq!(strip(&joined), strip(&text));
    }

    #[test]
    fn stopword_removal_is_a_subsequence(lemmas in prop::collection::vec(term(), 0..20), stop in prop::collection::btree_set(term(), 0..4)) {
        let tokens: Vec<Token> = lemmas.iter().enumerate().map(|(i, l)| Token {
            pos: if i % 5 == 0 { Pos::Conj } else { Pos::Untagged },
            ..Token::new(l.clone())
        }).collect();
        let out = clp::remove_stopwords(tokens.clone(), &stop);
        prop_assert!(out.len() <= tokens.len());
        let mut it = tokens.iter();
        for t in &out {
            prop_assert!(it.any(|x| x == t));
            prop_assert!(!stop.contains(&t.lemma) && t.pos != Pos::Conj);
        }
    }

    #[test]
    fn phrases_conserve_tokens(corpus in corpus_strategy(), threshold in 0.1f64..5.0, passes in 1usize..4) {
        let cfg = PhraseConfig { delta: 0.5, threshold, max_passes: passes };
        let merged = clp::detect_phrases(&corpus, &cfg);
        prop_assert_eq!(merged.vocab_counts.values().sum::<u64>(), merged.total_tokens);
        prop_assert_eq!(merged.sentences.iter().map(Vec::len).sum::<usize>() as u64, merged.total_tokens);
        prop_assert_eq!(merged.sentences.len(), corpus.sentences.len());
        for (before, after) in corpus.sentences.iter().zip(&merged.sentences) {
            let split = after.iter().flat_map(|t| t.split('_').map(String::from));
            prop_assert_eq!(multiset(before.iter().cloned()), multiset(split));
        }
    }

    #[test]
    fn infinite_threshold_changes_nothing(corpus in corpus_strategy()) {
        let cfg = PhraseConfig { delta: 0.0, threshold: f64::INFINITY, max_passes: 3 };
        prop_assert_eq!(clp::detect_phrases(&corpus, &cfg), corpus);
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(m in model_strategy()) {
        let terms = m.terms().to_vec();
        for a in &terms {
            for b in &terms {
                if let (Ok(x), Ok(y)) = (m.similarity(a, b), m.similarity(b, a)) {
                    prop_assert_eq!(x, y);
                    prop_assert!((-1.0..=1.0).contains(&x.value()));
                }
            }
        }
        let (a, b) = (&terms[..1], &terms[1..]);
        if let (Ok(x), Ok(y)) = (m.n_similarity(a, b), m.n_similarity(b, a)) {
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn scale_invariance(m in model_strategy(), lambda in 0.01f64..100.0) {
        let d = m.dim();
        let terms = m.terms().to_vec();
        let mut one = m.as_slice().to_vec();
        one[..d].iter_mut().for_each(|x| *x *= lambda);
        let scaled_one = KeyedVectors::new(terms.clone(), one, d).unwrap();
        let all = KeyedVectors::new(terms.clone(), m.as_slice().iter().map(|x| x * lambda).collect(), d).unwrap();
        for b in &terms[1..] {
            if let Ok(s) = m.similarity(&terms[0], b) {
                prop_assert!((s.value() - scaled_one.similarity(&terms[0], b).unwrap().value()).abs() < 1e-9);
            }
        }
        if let Ok(s) = m.n_similarity(&terms[..2], &terms[1..]) {
            prop_assert!((s.value() - all.n_similarity(&terms[..2], &terms[1..]).unwrap().value()).abs() < 1e-9);
        }
    }

    #[test]
    fn most_similar_covers_vocabulary(m in model_strategy()) {
        let q = &m.terms()[0];
        if let Ok(r) = m.most_similar(q, m.len() - 1) {
            let nonzero = m.terms()[1..].iter().filter(|t| m.vector(t).unwrap().iter().any(|&x| x != 0.0)).count();
            prop_assert_eq!(r.len(), nonzero);
            let names: std::collections::BTreeSet<_> = r.iter().map(|(t, _)| t.clone()).collect();
            prop_assert_eq!(names.len(), r.len());
            prop_assert!(!names.contains(q));
        }
    }

    #[test]
    fn model_text_round_trip(m in model_strategy()) {
        let back = KeyedVectors::from_text(&m.to_text()).unwrap();
        prop_assert_eq!(back.terms(), m.terms());
        for (x, y) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn lr_schedule_is_monotone(total in 1u64..10_000, steps in prop::collection::vec(0u64..20_000, 2..30)) {
        let s = LrSchedule::new(0.025, total);
        let mut steps = steps;
        steps.sort_unstable();
        for w in steps.windows(2) {
            prop_assert!(s.at(w[1]) <= s.at(w[0]));
        }
        prop_assert!(steps.iter().all(|&x| s.at(x) >= 0.025 * LR_FLOOR));
    }

    #[test]
    fn trained_vectors_are_finite(corpus in corpus_strategy(), seed: u64) {
        let cfg = TrainingConfig { dim: 4, min_count: 1, epochs: 2, lr0: 0.5, seed, ..Default::default() };
        match trainer::train(&corpus, &cfg) {
            Ok(m) => prop_assert!(m.as_slice().iter().all(|x| x.is_finite())),
            Err(e) => prop_assert!(corpus.total_tokens == 0, "{e}"),
        }
    }
}

#[test]
fn win1251_table_matches_encoding_rs() {
    for b in 0u8..=255 {
        let mine = ingest::convert_encoding(&[b], Encoding::Win1251, Encoding::Utf8);
        let byte = [b];
        let (theirs, _, had_errors) = encoding_rs::WINDOWS_1251.decode(&byte);
        if b == 0x98 {
            assert!(mine.is_err());
            continue;
        }
        assert!(!had_errors);
        let mine = String::from_utf8(mine.unwrap().bytes).unwrap();
        assert_eq!(mine, theirs, "byte 0x{b:02X}");
        let back = ingest::convert_encoding(mine.as_bytes(), Encoding::Utf8, Encoding::Win1251).unwrap();
        assert_eq!(back.bytes, [b]);
    }
}

#[test]
fn noise_table_draw_frequency() {
    let corpus = NormalizedCorpus::from_sentences(vec![vec!["a".into(), "a".into(), "a".into(), "b".into()]]);
    let cfg = TrainingConfig { min_count: 1, noise_power: 1.0, ..Default::default() };
    let vocab = trainer::build_vocab(&corpus, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 1_000_000;
    let a = (0..draws).filter(|_| vocab.noise().sample(&mut rng) == 0).count();
    let freq = a as f64 / draws as f64;
    assert!((freq - 0.75).abs() <= 0.01, "frequency of a = {freq}");
}

#[test]
fn build_corpus_is_deterministic() {
    let docs = [ingest::extract_text(&RawDocument::plain_utf8(
        "d",
        "Нейронна мережа вчиться. Нейронна мережа працює. Мережа і дані.",
    ))
    .unwrap()];
    let res = Resources { stoplist: ["і".into()].into(), ..Default::default() };
    let cfg = PhraseConfig { delta: 0.0, threshold: 1.0, max_passes: 1 };
    let a = clp::build_corpus(&docs, &res, &cfg).unwrap();
    let b = clp::build_corpus(&docs, &res, &cfg).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert!(a.vocab_counts.contains_key("нейронна_мережа"), "{}", a.to_text());
}

/// Two vocabularies that never share a sentence.
fn two_topic_corpus(seed: u64) -> NormalizedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics = [
        ["ротор", "статор", "обмотка", "вал", "якір", "щітка", "колектор", "магніт"],
        ["фермент", "білок", "клітина", "субстрат", "мембрана", "розчин", "осад", "реагент"],
    ];
    let sentences = (0..200)
        .map(|i| {
            let topic = &topics[i % 2];
            (0..8).map(|_| topic[rng.random_range(0..topic.len())].to_string()).collect()
        })
        .collect();
    NormalizedCorpus::from_sentences(sentences)
}

#[test]
fn disjoint_topics_separate_after_training() {
    for seed in 0..5 {
        let corpus = two_topic_corpus(100 + seed);
        let cfg = TrainingConfig { dim: 20, epochs: 15, min_count: 1, subsample: 0.0, seed, ..Default::default() };
        let m = trainer::train(&corpus, &cfg).unwrap();
        let topic_of = |t: &str| corpus.sentences.iter().position(|s| s.iter().any(|x| x == t)).unwrap() % 2;
        let (mut intra, mut cross) = (vec![], vec![]);
        for a in m.terms() {
            for b in m.terms() {
                if a < b {
                    let s = m.similarity(a, b).unwrap().value();
                    if topic_of(a) == topic_of(b) { intra.push(s) } else { cross.push(s) }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&intra) > mean(&cross), "seed {seed}: {} vs {}", mean(&intra), mean(&cross));
    }
}
