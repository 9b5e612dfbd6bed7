//! File-backed JSON document store.
//!
//! Layout: `<root>/<collection>/<encoded id>.json`, one document per file.
//! Writes go to a temp file in the same directory and are renamed into
//! place, so readers only ever see whole documents. Writers are serialized
//! per collection.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("document `{id}` not found in `{collection}`")]
    NotFound { collection: String, id: String },
    #[error("document `{id}` in `{collection}` is corrupt: {reason}")]
    Corruption { collection: String, id: String, reason: String },
    #[error("invalid collection name `{0}` (expected [a-z_]+)")]
    InvalidCollection(String),
    #[error("invalid document id: {0}")]
    InvalidId(String),
    #[error("storage io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug)]
pub struct DocumentStore {
    root: PathBuf,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DocumentStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(DocumentStore { root, writers: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn collection_dir(&self, collection: &str) -> Result<PathBuf, StoreError> {
        if collection.is_empty() || !collection.bytes().all(|b| b.is_ascii_lowercase() || b == b'_') {
            return Err(StoreError::InvalidCollection(collection.into()));
        }
        Ok(self.root.join(collection))
    }

    fn writer(&self, collection: &str) -> Arc<Mutex<()>> {
        let mut map = self.writers.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(collection.to_string()).or_default().clone()
    }

    /// Upserts a document and returns the bytes written.
    pub fn put<T: Serialize + ?Sized>(&self, collection: &str, id: &str, doc: &T) -> Result<Vec<u8>, StoreError> {
        let dir = self.collection_dir(collection)?;
        let file = dir.join(format!("{}.json", encode_id(id)?));
        let mut bytes = serde_json::to_vec_pretty(doc).map_err(|e| StoreError::Corruption {
            collection: collection.into(),
            id: id.into(),
            reason: e.to_string(),
        })?;
        bytes.push(b'\n');
        let lock = self.writer(collection);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_atomic(&file, &bytes)?;
        Ok(bytes)
    }

    /// Raw stored bytes of a document.
    pub fn get_raw(&self, collection: &str, id: &str) -> Result<Vec<u8>, StoreError> {
        let file = self.collection_dir(collection)?.join(format!("{}.json", encode_id(id)?));
        fs::read(&file).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { collection: collection.into(), id: id.into() },
            _ => StoreError::Io { path: file.clone(), source: e },
        })
    }

    pub fn get(&self, collection: &str, id: &str) -> Result<Value, StoreError> {
        self.get_as(collection, id)
    }

    pub fn get_as<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<T, StoreError> {
        let bytes = self.get_raw(collection, id)?;
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corruption {
            collection: collection.into(),
            id: id.into(),
            reason: e.to_string(),
        })
    }

    /// Ids in ascending order; an unknown collection is empty.
    pub fn list(&self, collection: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.collection_dir(collection)?;
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::Io { path: dir, source: e }),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else { continue };
            if let Some(id) = decode_id(stem) {
                ids.push(id);
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn all<T: DeserializeOwned>(&self, collection: &str) -> Result<Vec<T>, StoreError> {
        self.list(collection)?.iter().map(|id| self.get_as(collection, id)).collect()
    }

    pub fn delete(&self, collection: &str, id: &str) -> Result<(), StoreError> {
        let file = self.collection_dir(collection)?.join(format!("{}.json", encode_id(id)?));
        let lock = self.writer(collection);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        fs::remove_file(&file).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound { collection: collection.into(), id: id.into() },
            _ => StoreError::Io { path: file.clone(), source: e },
        })
    }
}

/// Write-to-temp, fsync, rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

/// Ids become file names: `[A-Za-z0-9_-]` pass through, every other byte
/// is written as `%XX`.
fn encode_id(id: &str) -> Result<String, StoreError> {
    if id.is_empty() {
        return Err(StoreError::InvalidId("empty id".into()));
    }
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.len() > 240 {
        return Err(StoreError::InvalidId(format!("id too long ({} bytes encoded)", out.len())));
    }
    Ok(out)
}

fn decode_id(stem: &str) -> Option<String> {
    let bytes = stem.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = stem.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}
