//! `key = value` configuration file.
//!
//! ```text
//! # paths
//! store_root = ./data
//! stoplist   = res/stopwords.txt
//! lemmas     = res/lemmas.tsv
//! tags       = res/tags.tsv
//! listen     = 127.0.0.1:8080
//! # training defaults
//! dim = 100
//! window = 5
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use patsim_core::clp::PhraseConfig;
use patsim_core::trainer::TrainingConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub store_root: PathBuf,
    pub stoplist: Option<PathBuf>,
    pub lemmas: Option<PathBuf>,
    pub tags: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub listen: String,
    pub training: TrainingConfig,
    pub phrase: PhraseConfig,
    /// Training threads; 1 selects the deterministic trainer.
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store_root: PathBuf::from("patsim-data"),
            stoplist: None,
            lemmas: None,
            tags: None,
            template: None,
            listen: "127.0.0.1:8080".into(),
            training: TrainingConfig::default(),
            phrase: PhraseConfig::default(),
            workers: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for `{key}`")))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Config::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", path.display(), no + 1)))?;
            cfg.set(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    /// Applies one setting. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "store_root" => self.store_root = path(),
            "stoplist" => self.stoplist = Some(path()),
            "lemmas" => self.lemmas = Some(path()),
            "tags" => self.tags = Some(path()),
            "template" => self.template = Some(path()),
            "listen" => self.listen = value.into(),
            "workers" => self.workers = parse(key, value)?,
            "dim" => self.training.dim = parse(key, value)?,
            "window" => self.training.window = parse(key, value)?,
            "negatives" => self.training.negatives = parse(key, value)?,
            "epochs" => self.training.epochs = parse(key, value)?,
            "lr0" => self.training.lr0 = parse(key, value)?,
            "min_count" => self.training.min_count = parse(key, value)?,
            "subsample" => self.training.subsample = parse(key, value)?,
            "noise_power" => self.training.noise_power = parse(key, value)?,
            "seed" => self.training.seed = parse(key, value)?,
            "phrase_delta" => self.phrase.delta = parse(key, value)?,
            "phrase_threshold" => self.phrase.threshold = parse(key, value)?,
            "phrase_max_passes" => self.phrase.max_passes = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.phrase.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_file_with_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("patsim.conf");
        fs::write(&file, "# c\nstore_root = data\nstoplist=stop.txt\ndim = 32\nlr0 = 0.05\nphrase_threshold = 3\n\n").unwrap();
        let cfg = Config::load(&file).unwrap();
        assert_eq!(cfg.store_root, dir.path().join("data"));
        assert_eq!(cfg.stoplist, Some(dir.path().join("stop.txt")));
        assert_eq!(cfg.training.dim, 32);
        assert_eq!(cfg.training.lr0, 0.05);
        assert_eq!(cfg.phrase.threshold, 3.0);
        assert_eq!(cfg.training.window, 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c");
        fs::write(&file, "dim 3\n").unwrap();
        assert!(matches!(Config::load(&file), Err(Error::Config(_))));
        fs::write(&file, "dim = three\n").unwrap();
        assert!(matches!(Config::load(&file), Err(Error::Config(_))));
        fs::write(&file, "colour = red\n").unwrap();
        assert!(matches!(Config::load(&file), Err(Error::Config(_))));
        let cfg = Config { workers: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
