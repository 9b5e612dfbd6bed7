//! Synthetic Ukrainian-like patents in two disjoint topics.

#![allow(dead_code)]

use std::path::Path;

use patsim::config::Config;
use patsim::engine::{Engine, Upload};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ELECTRIC: &[&str] = &[
    "ротор", "статор", "обмотка", "вал", "підшипник", "якір", "колектор", "щітка", "магніт", "осердя",
    "напруга", "струм", "котушка", "ізоляція", "корпус", "генератор", "двигун", "перетворювач", "інвертор",
    "трансформатор", "провідник", "контакт", "реле", "полюс", "зазор", "фаза", "живлення", "заземлення",
    "кабель", "індуктивність",
];

pub const BIOCHEM: &[&str] = &[
    "білок", "фермент", "клітина", "розчин", "субстрат", "буфер", "мембрана", "пептид", "амінокислота",
    "ліпід", "екстракт", "штам", "культура", "середовище", "інкубація", "центрифуга", "осад", "фільтрат",
    "реагент", "антитіло", "антиген", "плазміда", "вектор", "експресія", "очищення", "хроматографія",
    "сорбент", "концентрація", "ферментація", "біомаса",
];

/// Function words that the stop list removes.
pub const FUNCTION_WORDS: &[&str] = &["і", "та", "що", "для", "з", "у", "на", "який", "при", "або"];

pub fn stoplist() -> String {
    FUNCTION_WORDS.join("\n") + "\n"
}

fn sentence(rng: &mut ChaCha8Rng, topic: &[&str]) -> String {
    let len = rng.random_range(6..=10);
    let mut words: Vec<&str> = Vec::with_capacity(len + 3);
    for i in 0..len {
        if i > 0 && rng.random_bool(0.3) {
            words.push(FUNCTION_WORDS.choose(rng).unwrap());
        }
        words.push(topic.choose(rng).unwrap());
    }
    let mut s = words.join(" ");
    let first = s.chars().next().unwrap();
    s.replace_range(..first.len_utf8(), &first.to_uppercase().to_string());
    s.push('.');
    s
}

pub fn document(rng: &mut ChaCha8Rng, topic: &[&str], sentences: usize) -> String {
    (0..sentences).map(|_| sentence(rng, topic)).collect::<Vec<_>>().join(" ")
}

pub struct Fixture {
    /// `(id, text)`; ids `e00..e09` are topic 1, `b00..b09` topic 2.
    pub patents: Vec<(String, String)>,
    pub query: String,
}

impl Fixture {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patents = Vec::new();
        for i in 0..10 {
            patents.push((format!("e{i:02}"), document(&mut rng, ELECTRIC, 50)));
        }
        for i in 0..10 {
            patents.push((format!("b{i:02}"), document(&mut rng, BIOCHEM, 50)));
        }
        let query = document(&mut rng, ELECTRIC, 10);
        Fixture { patents, query }
    }

    pub fn uploads(&self) -> Vec<Upload> {
        self.patents.iter().map(|(id, text)| Upload::text(id, text)).collect()
    }
}

pub fn is_topic_one(id: &str) -> bool {
    id.starts_with('e')
}

/// An engine over a fresh store with the function-word stop list.
pub fn engine(dir: &Path) -> Engine {
    let stop = dir.join("stop.txt");
    std::fs::write(&stop, stoplist()).unwrap();
    let cfg = Config { store_root: dir.join("data"), stoplist: Some(stop), ..Default::default() };
    Engine::open(cfg).unwrap()
}
