//! On-disk formats: linguistic resources, corpus text and model files.

use std::fs;
use std::path::Path;

use patsim_core::clp::{NormalizedCorpus, Resources};
use patsim_core::vectors::KeyedVectors;

use crate::error::{Error, Result};
use crate::store::write_atomic;

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(Error::io(path))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("{} is not UTF-8: {e}", path.display())))
}

/// Loads whichever resource files are given; absent ones stay empty.
pub fn load_resources(stoplist: Option<&Path>, lemmas: Option<&Path>, tags: Option<&Path>) -> Result<Resources> {
    let mut res = Resources::default();
    if let Some(p) = stoplist {
        res.stoplist = Resources::parse_stoplist(&read_utf8(p)?);
    }
    if let Some(p) = lemmas {
        res.lemmas = Resources::parse_lemmas(&read_utf8(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    if let Some(p) = tags {
        res.tags =
            Resources::parse_tags(&read_utf8(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    Ok(res)
}

pub fn save_corpus(corpus: &NormalizedCorpus, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    Ok(write_atomic(path, corpus.to_text().as_bytes())?)
}

pub fn load_corpus(path: &Path) -> Result<NormalizedCorpus> {
    Ok(NormalizedCorpus::from_text(&read_utf8(path)?))
}

pub fn save_model(model: &KeyedVectors, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    Ok(write_atomic(path, model.to_text().as_bytes())?)
}

pub fn load_model(path: &Path) -> Result<KeyedVectors> {
    Ok(KeyedVectors::from_text(&read_utf8(path)?)?)
}
