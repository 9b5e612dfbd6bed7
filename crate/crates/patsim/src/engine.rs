//! Service layer shared by the CLI and the HTTP API.
//!
//! Layout under the store root:
//!
//! ```text
//! documents/<id>.json   extracted uploads
//! patents/<id>.json     indexed patent records (term arrays)
//! corpus/corpus.txt     normalized corpus, one sentence per line
//! models/model.vec      trained vectors
//! models/CURRENT        path of the model being served
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use base64::Engine as _;
use patsim_core::clp::{self, NormalizedCorpus, PhraseConfig, Resources};
use patsim_core::coordinator::{FunctionDef, ServiceId, ServiceRegistry};
use patsim_core::ingest::{self, DocFormat, Encoding, ExtractedText, Language, RawDocument};
use patsim_core::search::{self, PatentRecord, PhraseMatcher, RankedAnalog, SearchError, Verdict};
use patsim_core::trainer::TrainingConfig;
use patsim_core::vectors::KeyedVectors;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::{files, parallel};

pub const DOCUMENTS: &str = "documents";
pub const PATENTS: &str = "patents";

pub const DEFAULT_TEMPLATE: &str = "\
ЗАЯВКА НА ВИНАХІД
Запит: {{query_id}}
Назва: {{title}}
Заявник: {{applicant}}

Найближчі аналоги ({{analog_count}}):
{{analogs}}
Висновок: {{conclusion}}
";

/// An upload as received from a client.
#[derive(Debug, Clone, Deserialize)]
pub struct Upload {
    pub id: String,
    /// Already-decoded text.
    #[serde(default)]
    pub text: Option<String>,
    /// Raw bytes in `encoding`; used when `text` is absent.
    #[serde(default)]
    pub payload_base64: Option<String>,
    #[serde(default = "plain")]
    pub format: String,
    #[serde(default)]
    pub encoding: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub ipc_class: Option<String>,
}

fn plain() -> String {
    "plain_text".into()
}

impl Upload {
    pub fn text(id: impl Into<String>, text: impl Into<String>) -> Self {
        Upload {
            id: id.into(),
            text: Some(text.into()),
            payload_base64: None,
            format: plain(),
            encoding: None,
            title: None,
            ipc_class: None,
        }
    }

    fn to_raw(&self) -> Result<RawDocument> {
        let declared_format: DocFormat = self.format.parse()?;
        let (payload, declared_encoding) = match (&self.text, &self.payload_base64) {
            (Some(t), None) => (t.as_bytes().to_vec(), Encoding::Utf8),
            (None, Some(b64)) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| Error::BadRequest(format!("payload_base64: {e}")))?;
                let enc = match &self.encoding {
                    Some(e) => e.parse()?,
                    None => Encoding::Utf8,
                };
                (bytes, enc)
            }
            _ => return Err(Error::BadRequest("exactly one of `text` and `payload_base64` is required".into())),
        };
        Ok(RawDocument { id: self.id.clone(), payload, declared_format, declared_encoding })
    }
}

/// An ingested document as stored in `documents/`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub doc_id: String,
    pub text: String,
    pub language: Language,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub ipc_class: String,
}

impl StoredDocument {
    fn extracted(&self) -> ExtractedText {
        ExtractedText { doc_id: self.doc_id.clone(), text: self.text.clone(), language: self.language }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub vocab_size: usize,
    pub total_tokens: u64,
}

impl From<&NormalizedCorpus> for CorpusStats {
    fn from(c: &NormalizedCorpus) -> Self {
        CorpusStats { sentences: c.sentences.len(), vocab_size: c.vocab_counts.len(), total_tokens: c.total_tokens }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelSummary {
    pub model_path: PathBuf,
    pub terms: usize,
    pub dim: usize,
    pub indexed: usize,
    /// Documents with no in-vocabulary term, left out of the index.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrainingStatus {
    Idle,
    Running { config: TrainingConfig },
    Ready { summary: ModelSummary },
    Failed { error: Value },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResponse {
    pub query_id: String,
    pub dropped_oov_terms: usize,
    pub results: Vec<RankedAnalog>,
}

/// The model being served plus its phrase matcher.
struct Serving {
    model: Arc<KeyedVectors>,
    matcher: Arc<PhraseMatcher>,
}

pub struct Engine {
    store: crate::store::DocumentStore,
    resources: Resources,
    config: Config,
    template: String,
    registry: RwLock<ServiceRegistry>,
    serving: RwLock<Option<Serving>>,
    training: Mutex<TrainingStatus>,
    requests: AtomicU64,
}

fn lock_err<T>(e: std::sync::PoisonError<T>) -> T {
    e.into_inner()
}

impl Engine {
    /// Opens the store and resources named by `config` and resumes the
    /// model recorded in `models/CURRENT`, if any.
    pub fn open(config: Config) -> Result<Self> {
        config.validate()?;
        let resources =
            files::load_resources(config.stoplist.as_deref(), config.lemmas.as_deref(), config.tags.as_deref())?;
        let template = match &config.template {
            Some(p) => fs::read_to_string(p).map_err(Error::io(p))?,
            None => DEFAULT_TEMPLATE.into(),
        };
        let engine = Engine {
            store: crate::store::DocumentStore::open(&config.store_root)?,
            resources,
            config,
            template,
            registry: RwLock::new(ServiceRegistry::standard()),
            serving: RwLock::new(None),
            training: Mutex::new(TrainingStatus::Idle),
            requests: AtomicU64::new(0),
        };
        let pointer = engine.current_pointer();
        if let Ok(path) = fs::read_to_string(&pointer) {
            let path = PathBuf::from(path.trim());
            match files::load_model(&path) {
                Ok(model) => engine.serve(model),
                Err(e) => log::warn!("not resuming model {}: {e}", path.display()),
            }
        }
        Ok(engine)
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn store(&self) -> &crate::store::DocumentStore {
        &self.store
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.store.root().join("corpus/corpus.txt")
    }

    pub fn default_model_path(&self) -> PathBuf {
        self.store.root().join("models/model.vec")
    }

    fn current_pointer(&self) -> PathBuf {
        self.store.root().join("models/CURRENT")
    }

    pub fn registry(&self) -> ServiceRegistry {
        self.registry.read().unwrap_or_else(lock_err).clone()
    }

    pub fn with_registry<T>(&self, f: impl FnOnce(&mut ServiceRegistry) -> T) -> T {
        f(&mut self.registry.write().unwrap_or_else(lock_err))
    }

    fn next_id(&self, prefix: &str) -> String {
        let n = self.requests.fetch_add(1, Ordering::Relaxed);
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        format!("{prefix}-{ms}-{n}")
    }

    // ---- ingest ----

    /// Decodes, extracts and detects the language of an upload without
    /// storing it.
    pub fn extract(&self, upload: &Upload) -> Result<StoredDocument> {
        let mut raw = upload.to_raw()?;
        if raw.declared_encoding == Encoding::Win1251 {
            raw.payload = ingest::convert_encoding(&raw.payload, Encoding::Win1251, Encoding::Utf8)?.bytes;
            raw.declared_encoding = Encoding::Utf8;
        }
        let ex = ingest::extract_text(&raw)?;
        Ok(StoredDocument {
            doc_id: ex.doc_id,
            text: ex.text,
            language: ex.language,
            title: upload.title.clone().unwrap_or_default(),
            ipc_class: upload.ipc_class.clone().unwrap_or_default(),
        })
    }

    /// Extracts and stores an upload. While a model is served, Ukrainian
    /// documents with known terms are indexed as patents straight away.
    pub fn ingest(&self, upload: &Upload) -> Result<StoredDocument> {
        let doc = self.extract(upload)?;
        self.store.put(DOCUMENTS, &doc.doc_id, &doc)?;
        if doc.language == Language::Uk && self.serving().is_ok() {
            match self.index_document(&doc) {
                Ok(_) => {}
                Err(Error::Search(SearchError::EmptyTermArray)) => {
                    log::warn!("{}: no known terms, not indexed", doc.doc_id)
                }
                Err(e) => return Err(e),
            }
        }
        Ok(doc)
    }

    pub fn document(&self, id: &str) -> Result<StoredDocument> {
        Ok(self.store.get_as(DOCUMENTS, id)?)
    }

    /// The named documents, or every stored one when `ids` is empty.
    pub fn documents(&self, ids: &[String]) -> Result<Vec<StoredDocument>> {
        if ids.is_empty() {
            Ok(self.store.all(DOCUMENTS)?)
        } else {
            ids.iter().map(|id| self.document(id)).collect()
        }
    }

    // ---- corpus ----

    pub fn build_corpus(&self, ids: &[String], phrase: Option<PhraseConfig>) -> Result<CorpusStats> {
        let docs: Vec<ExtractedText> = self.documents(ids)?.iter().map(StoredDocument::extracted).collect();
        let corpus = clp::build_corpus(&docs, &self.resources, &phrase.unwrap_or(self.config.phrase))?;
        files::save_corpus(&corpus, &self.corpus_path())?;
        log::info!("corpus built: {}", clp::describe(&corpus));
        Ok(CorpusStats::from(&corpus))
    }

    pub fn load_corpus(&self) -> Result<NormalizedCorpus> {
        let path = self.corpus_path();
        if !path.exists() {
            return Err(Error::NoCorpus);
        }
        files::load_corpus(&path)
    }

    // ---- model ----

    pub fn training_defaults(&self) -> TrainingConfig {
        self.config.training.clone()
    }

    /// Trains on the stored corpus, saves the model, serves it and
    /// re-indexes the stored documents.
    pub fn train(&self, cfg: &TrainingConfig) -> Result<ModelSummary> {
        let corpus = self.load_corpus()?;
        let model = parallel::train(&corpus, cfg, self.config.workers)?;
        let path = self.default_model_path();
        files::save_model(&model, &path)?;
        self.activate(model, &path)
    }

    /// Runs [`Engine::train`] on a background thread; poll
    /// [`Engine::training_status`].
    pub fn start_training(self: &Arc<Self>, cfg: TrainingConfig) -> Result<()> {
        cfg.validate()?;
        {
            let mut status = self.training.lock().unwrap_or_else(lock_err);
            if matches!(*status, TrainingStatus::Running { .. }) {
                return Err(Error::TrainingBusy);
            }
            *status = TrainingStatus::Running { config: cfg.clone() };
        }
        let engine = Arc::clone(self);
        std::thread::spawn(move || {
            let outcome = match engine.train(&cfg) {
                Ok(summary) => TrainingStatus::Ready { summary },
                Err(e) => {
                    log::error!("training failed: {e}");
                    TrainingStatus::Failed { error: e.to_json() }
                }
            };
            *engine.training.lock().unwrap_or_else(lock_err) = outcome;
        });
        Ok(())
    }

    pub fn training_status(&self) -> TrainingStatus {
        self.training.lock().unwrap_or_else(lock_err).clone()
    }

    pub fn init_model(&self, path: &Path) -> Result<ModelSummary> {
        let model = files::load_model(path)?;
        self.activate(model, path)
    }

    fn serve(&self, model: KeyedVectors) {
        let matcher = PhraseMatcher::from_terms(model.terms());
        *self.serving.write().unwrap_or_else(lock_err) =
            Some(Serving { model: Arc::new(model), matcher: Arc::new(matcher) });
    }

    fn activate(&self, model: KeyedVectors, path: &Path) -> Result<ModelSummary> {
        let (terms, dim) = (model.len(), model.dim());
        self.serve(model);
        self.record_current(path)?;
        let (indexed, skipped) = self.reindex()?;
        Ok(ModelSummary { model_path: path.to_path_buf(), terms, dim, indexed, skipped })
    }

    fn record_current(&self, model: &Path) -> Result<()> {
        let pointer = self.current_pointer();
        if let Some(dir) = pointer.parent() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let abs = fs::canonicalize(model).map_err(Error::io(model))?;
        Ok(crate::store::write_atomic(&pointer, abs.to_string_lossy().as_bytes())?)
    }

    fn serving(&self) -> Result<(Arc<KeyedVectors>, Arc<PhraseMatcher>)> {
        let guard = self.serving.read().unwrap_or_else(lock_err);
        let s = guard.as_ref().ok_or(Error::ModelNotInitialized)?;
        Ok((Arc::clone(&s.model), Arc::clone(&s.matcher)))
    }

    pub fn model(&self) -> Result<Arc<KeyedVectors>> {
        Ok(self.serving()?.0)
    }

    // ---- patents ----

    /// Builds and stores the patent record of one document.
    pub fn index_document(&self, doc: &StoredDocument) -> Result<PatentRecord> {
        if doc.language != Language::Uk {
            return Err(clp::ClpError::LanguageMismatch(vec![doc.doc_id.clone()]).into());
        }
        let (model, matcher) = self.serving()?;
        let terms = search::extract_terms(&doc.text, &self.resources, &model, &matcher);
        if terms.terms.is_empty() {
            return Err(SearchError::EmptyTermArray.into());
        }
        let record = PatentRecord {
            id: doc.doc_id.clone(),
            title: doc.title.clone(),
            ipc_class: doc.ipc_class.clone(),
            term_array: terms.terms,
            text_ref: format!("{DOCUMENTS}/{}", doc.doc_id),
        };
        self.store.put(PATENTS, &record.id, &record)?;
        Ok(record)
    }

    /// Rebuilds every patent record against the served model. Documents in
    /// other languages or without known terms are dropped from the index.
    pub fn reindex(&self) -> Result<(usize, Vec<String>)> {
        let mut indexed = 0;
        let mut skipped = Vec::new();
        for doc in self.store.all::<StoredDocument>(DOCUMENTS)? {
            match self.index_document(&doc) {
                Ok(_) => indexed += 1,
                Err(Error::Search(SearchError::EmptyTermArray) | Error::Clp(clp::ClpError::LanguageMismatch(_))) => {
                    if self.store.list(PATENTS)?.contains(&doc.doc_id) {
                        self.store.delete(PATENTS, &doc.doc_id)?;
                    }
                    skipped.push(doc.doc_id);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((indexed, skipped))
    }

    pub fn patents(&self) -> Result<Vec<PatentRecord>> {
        Ok(self.store.all(PATENTS)?)
    }

    // ---- queries ----

    pub fn search_text(&self, text: &str, k: usize) -> Result<SearchResponse> {
        let query_id = self.next_id("q");
        let query = self.extract(&Upload::text(&query_id, text))?;
        self.search(&query, k)
    }

    pub fn search(&self, query: &StoredDocument, k: usize) -> Result<SearchResponse> {
        if k == 0 {
            return Err(SearchError::ZeroK.into());
        }
        if query.language != Language::Uk {
            return Err(clp::ClpError::LanguageMismatch(vec![query.doc_id.clone()]).into());
        }
        let (model, matcher) = self.serving()?;
        let terms = search::extract_terms(&query.text, &self.resources, &model, &matcher);
        let results = search::rank_analogs(&model, &terms.terms, &self.patents()?, k)?;
        Ok(SearchResponse { query_id: query.doc_id.clone(), dropped_oov_terms: terms.dropped_oov, results })
    }

    pub fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        Ok(self.model()?.similarity(a, b)?.value())
    }

    pub fn associates(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>> {
        Ok(self.model()?.most_similar(term, k)?.into_iter().map(|(t, s)| (t, s.value())).collect())
    }

    pub fn n_similarity(&self, a: &[String], b: &[String]) -> Result<f64> {
        Ok(self.model()?.n_similarity(a, b)?.value())
    }

    pub fn cluster_center(&self, terms: &[String]) -> Result<Vec<f64>> {
        Ok(self.model()?.cluster_center(terms)?)
    }

    // ---- functions ----

    /// Runs a registered function on a task envelope.
    pub fn execute(&self, function: &str, task: Value) -> Result<Value> {
        let def = self.registry.read().unwrap_or_else(lock_err).executable(function)?.clone();
        let task = if task.is_null() { json!({}) } else { task };
        let correlation_id = match task.get("correlation_id").and_then(Value::as_str) {
            Some(id) => id.to_string(),
            None => self.next_id("job"),
        };
        let mut run = Dispatch { def: &def, stages: Vec::new() };
        let output = match def.id.0.as_str() {
            "C_4" => self.run_corpus_pipeline(&mut run, decode_task(task)?)?,
            "C_5" => self.run_vector_query(&mut run, decode_task(task)?)?,
            "C_7" => self.run_analog_search(&mut run, decode_task(task)?)?,
            other => return Err(Error::NoPipeline(other.into())),
        };
        log::info!("{correlation_id}: {} finished in {} stages", def.id, run.stages.len());
        Ok(json!({
            "correlation_id": correlation_id,
            "function": def.id,
            "stages": run.stages,
            "output": output,
        }))
    }

    fn run_corpus_pipeline(&self, run: &mut Dispatch, task: CorpusTask) -> Result<Value> {
        let mut docs = Vec::new();
        for upload in &task.documents {
            let mut raw = run.call(1, "payload decoding", || upload.to_raw())?;
            if raw.declared_encoding == Encoding::Win1251 {
                raw.payload = run.call(5, "encoding conversion", || {
                    Ok(ingest::convert_encoding(&raw.payload, Encoding::Win1251, Encoding::Utf8)?.bytes)
                })?;
                raw.declared_encoding = Encoding::Utf8;
            }
            let ex = run.call(1, "text extraction", || Ok(ingest::extract_text(&raw)?))?;
            let language = run.call(3, "language detection", || Ok(ingest::detect_language(&ex.text)))?;
            let doc = StoredDocument {
                doc_id: ex.doc_id,
                text: ex.text,
                language,
                title: upload.title.clone().unwrap_or_default(),
                ipc_class: upload.ipc_class.clone().unwrap_or_default(),
            };
            run.call(24, "document storage", || Ok(self.store.put(DOCUMENTS, &doc.doc_id, &doc)?))?;
            docs.push(doc);
        }
        if !task.doc_ids.is_empty() || task.documents.is_empty() {
            docs.extend(run.call(24, "document loading", || self.documents(&task.doc_ids))?);
        }
        let phrase = task.phrase_config.unwrap_or(self.config.phrase);
        run.call(20, "configuration check", || Ok(phrase.validate()?))?;
        run.call(3, "language check", || {
            let foreign: Vec<String> =
                docs.iter().filter(|d| d.language != Language::Uk).map(|d| d.doc_id.clone()).collect();
            if foreign.is_empty() { Ok(()) } else { Err(clp::ClpError::LanguageMismatch(foreign).into()) }
        })?;
        let sentences: Vec<String> =
            run.call(8, "sentence splitting", || Ok(docs.iter().flat_map(|d| clp::split_sentences(&d.text)).collect()))?;
        let tokens = run.call(20, "tokenization, lemmatization and tagging", || {
            Ok(sentences
                .iter()
                .map(|s| {
                    let tokens = clp::tokenize(s)
                        .into_iter()
                        .map(|surface| {
                            let mut t = clp::Token::new(&surface);
                            t.lemma = clp::lemmatize(&surface, &self.resources.lemmas);
                            t.is_stopword = self.resources.stoplist.contains(&t.lemma);
                            t
                        })
                        .collect();
                    clp::pos_tag(tokens, &self.resources.tags)
                })
                .collect::<Vec<_>>())
        })?;
        let lemmas = run.call(12, "stop-word removal", || {
            Ok(tokens
                .into_iter()
                .map(|t| {
                    clp::remove_stopwords(t, &self.resources.stoplist).into_iter().map(|t| t.lemma).collect()
                })
                .collect::<Vec<Vec<String>>>())
        })?;
        let corpus = run.call(20, "phrase detection", || {
            Ok(clp::detect_phrases(&NormalizedCorpus::from_sentences(lemmas), &phrase))
        })?;
        run.call(24, "corpus storage", || files::save_corpus(&corpus, &self.corpus_path()))?;
        Ok(json!({ "corpus": CorpusStats::from(&corpus), "corpus_path": self.corpus_path() }))
    }

    fn run_vector_query(&self, run: &mut Dispatch, task: VectorTask) -> Result<Value> {
        if let Some(path) = &task.model_path {
            run.call(24, "model loading", || self.init_model(path))?;
        }
        let model = run.call(21, "model lookup", || self.model())?;
        run.call(21, "vector query", || {
            let need = |v: &Option<String>, name: &str| {
                v.clone().ok_or_else(|| Error::BadRequest(format!("`{name}` is required for `{}`", task.op)))
            };
            Ok(match task.op.as_str() {
                "similarity" => {
                    json!({ "score": model.similarity(&need(&task.a, "a")?, &need(&task.b, "b")?)?.value() })
                }
                "associates" => {
                    let found = model.most_similar(&need(&task.term, "term")?, task.k.unwrap_or(10))?;
                    json!({ "associates": found.into_iter().map(|(t, s)| json!({"term": t, "score": s.value()})).collect::<Vec<_>>() })
                }
                "n_similarity" => json!({ "score": model.n_similarity(&task.set_a, &task.set_b)?.value() }),
                "cluster_center" => json!({ "center": model.cluster_center(&task.terms)? }),
                other => return Err(Error::BadRequest(format!("unknown vector operation `{other}`"))),
            })
        })
    }

    fn run_analog_search(&self, run: &mut Dispatch, task: AnalogTask) -> Result<Value> {
        let k = task.k.unwrap_or(10);
        // This function has no conversion service, so only UTF-8 input is taken.
        let utf8_only = |u: &Upload| {
            let raw = u.to_raw()?;
            if raw.declared_encoding != Encoding::Utf8 {
                return Err(Error::BadRequest(format!("`{}`: convert to UTF-8 before analog search", u.id)));
            }
            self.extract(u)
        };
        let query = run.call(1, "query extraction", || utf8_only(&task.query))?;
        let patents =
            run.call(1, "patent extraction", || task.patents.iter().map(utf8_only).collect::<Result<Vec<_>>>())?;
        run.call(3, "language check", || {
            let foreign: Vec<String> = std::iter::once(&query)
                .chain(&patents)
                .filter(|d| d.language != Language::Uk)
                .map(|d| d.doc_id.clone())
                .collect();
            if foreign.is_empty() { Ok(()) } else { Err(clp::ClpError::LanguageMismatch(foreign).into()) }
        })?;

        if !patents.is_empty() {
            let ids: Vec<String> = patents.iter().map(|d| d.doc_id.clone()).collect();
            run.call(24, "patent storage", || {
                patents.iter().try_for_each(|d| self.store.put(DOCUMENTS, &d.doc_id, d).map(drop).map_err(Error::from))
            })?;
            let phrase = task.phrase_config.unwrap_or(self.config.phrase);
            let corpus = run.call(24, "corpus construction", || {
                let docs: Vec<ExtractedText> = patents.iter().map(StoredDocument::extracted).collect();
                let corpus = clp::build_corpus(&docs, &self.resources, &phrase)?;
                files::save_corpus(&corpus, &self.corpus_path())?;
                Ok(corpus)
            })?;
            let cfg = task.training.unwrap_or_else(|| self.config.training.clone());
            run.call(21, "model training", || {
                let model = parallel::train(&corpus, &cfg, self.config.workers)?;
                let path = self.default_model_path();
                files::save_model(&model, &path)?;
                self.serve(model);
                self.record_current(&path)
            })?;
            run.call(24, "patent indexing", || {
                for id in ids.iter() {
                    if let Err(e) = self.index_document(&self.document(id)?) {
                        match e {
                            Error::Search(SearchError::EmptyTermArray) => log::warn!("{id}: no known terms, not indexed"),
                            e => return Err(e),
                        }
                    }
                }
                Ok(())
            })?;
        } else if let Some(path) = &task.model_path {
            run.call(21, "model initialization", || {
                let model = files::load_model(path)?;
                self.serve(model);
                self.record_current(path)
            })?;
            run.call(24, "patent indexing", || self.reindex().map(drop))?;
        }

        let response = run.call(21, "analog search", || self.search(&query, k))?;
        let document = run.call(23, "template filling", || {
            let mut fields = auto_fields(&query, &response);
            fields.extend(task.fields.clone());
            let template = task.template.as_deref().unwrap_or(&self.template);
            Ok(search::fill_template(template, &fields)?)
        })?;
        Ok(json!({
            "query_id": response.query_id,
            "dropped_oov_terms": response.dropped_oov_terms,
            "results": response.results,
            "document": document,
        }))
    }
}

fn auto_fields(query: &StoredDocument, response: &SearchResponse) -> BTreeMap<String, String> {
    let analogs: Vec<String> = response
        .results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let verdict = match r.verdict {
                Verdict::Similar => "similar",
                Verdict::Dissimilar => "dissimilar",
            };
            format!("{}. {}: {:.4} ({verdict})", i + 1, r.patent_id, r.score)
        })
        .collect();
    let similar = response.results.iter().filter(|r| r.verdict == Verdict::Similar).count();
    let mut f = BTreeMap::new();
    f.insert("query_id".into(), response.query_id.clone());
    f.insert("title".into(), if query.title.is_empty() { query.doc_id.clone() } else { query.title.clone() });
    f.insert("analog_count".into(), response.results.len().to_string());
    f.insert("analogs".into(), analogs.join("\n"));
    f.insert("similar_count".into(), similar.to_string());
    if let Some(top) = response.results.first() {
        f.insert("top_analog".into(), top.patent_id.clone());
        f.insert("top_score".into(), format!("{:.4}", top.score));
    }
    let conclusion = if similar > 0 {
        format!("виявлено схожих аналогів: {similar}")
    } else {
        "схожих аналогів не виявлено".to_string()
    };
    f.insert("conclusion".into(), conclusion);
    f
}

fn decode_task<T: serde::de::DeserializeOwned>(task: Value) -> Result<T> {
    serde_json::from_value(task).map_err(|e| Error::BadRequest(format!("task envelope: {e}")))
}

#[derive(Debug, Deserialize)]
struct CorpusTask {
    #[serde(default)]
    documents: Vec<Upload>,
    #[serde(default)]
    doc_ids: Vec<String>,
    #[serde(default)]
    phrase_config: Option<PhraseConfig>,
}

#[derive(Debug, Deserialize)]
struct VectorTask {
    op: String,
    #[serde(default)]
    model_path: Option<PathBuf>,
    #[serde(default)]
    a: Option<String>,
    #[serde(default)]
    b: Option<String>,
    #[serde(default)]
    term: Option<String>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    set_a: Vec<String>,
    #[serde(default)]
    set_b: Vec<String>,
    #[serde(default)]
    terms: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct AnalogTask {
    query: Upload,
    #[serde(default)]
    k: Option<usize>,
    /// Patents to ingest and train on; empty reuses the served model.
    #[serde(default)]
    patents: Vec<Upload>,
    #[serde(default)]
    training: Option<TrainingConfig>,
    #[serde(default)]
    phrase_config: Option<PhraseConfig>,
    #[serde(default)]
    model_path: Option<PathBuf>,
    #[serde(default)]
    template: Option<String>,
    #[serde(default)]
    fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub service: ServiceId,
    pub stage: &'static str,
    pub elapsed_ms: f64,
    pub ok: bool,
}

/// Stage runner for one function execution. Every call is attributed to a
/// service of the function; failures come back wrapped with that service.
struct Dispatch<'a> {
    def: &'a FunctionDef,
    stages: Vec<StageRecord>,
}

impl Dispatch<'_> {
    fn call<T>(&mut self, service: u8, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let id = ServiceId::new(service).expect("service numbers in pipelines are literals");
        assert!(self.def.services.contains(&id), "{} dispatched {id}, which is outside the function", self.def.id);
        let start = Instant::now();
        let out = f();
        self.stages.push(StageRecord {
            service: id,
            stage,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            ok: out.is_ok(),
        });
        out.map_err(|e| Error::Stage { service: id, stage, source: Box::new(e) })
    }
}
