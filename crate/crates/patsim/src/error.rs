use std::path::PathBuf;

use patsim_core::clp::ClpError;
use patsim_core::coordinator::{RegistryError, ServiceId};
use patsim_core::ingest::{EncodingFault, IngestError};
use patsim_core::search::SearchError;
use patsim_core::trainer::TrainError;
use patsim_core::vectors::VectorError;
use serde_json::{json, Value};

use crate::store::StoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Clp(#[from] ClpError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no vector model is initialized")]
    ModelNotInitialized,
    #[error("no corpus has been built yet")]
    NoCorpus,
    #[error("a training job is already running")]
    TrainingBusy,
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("function `{0}` has no pipeline bound to it")]
    NoPipeline(String),
    #[error("config: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{service} failed during {stage}: {source}")]
    Stage { service: ServiceId, stage: &'static str, source: Box<Error> },
}

impl From<EncodingFault> for Error {
    fn from(f: EncodingFault) -> Self {
        Error::Ingest(f.into())
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    /// Stable machine-readable name of the failure.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingest(IngestError::UnsupportedFormat(_)) => "UnsupportedFormat",
            Error::Ingest(IngestError::Encoding(_)) => "EncodingError",
            Error::Ingest(_) => "InvalidDocument",
            Error::Clp(ClpError::LanguageMismatch(_)) => "LanguageMismatch",
            Error::Clp(_) => "InvalidLinguisticResource",
            Error::Train(TrainError::EmptyVocabulary) => "EmptyVocabulary",
            Error::Train(TrainError::DomainError(_)) => "DomainError",
            Error::Train(TrainError::DimensionMismatch { .. }) => "DimensionMismatch",
            Error::Train(_) => "InvalidTrainingConfig",
            Error::Vector(v) | Error::Search(SearchError::Vector(v)) => match v {
                VectorError::UnknownTerm(_) => "UnknownTerm",
                VectorError::ZeroVector(_) => "ZeroVector",
                VectorError::DegenerateCenter => "DegenerateCenter",
                VectorError::DegenerateMean => "DegenerateMean",
                VectorError::EmptySet => "EmptyTermSet",
                VectorError::ZeroK => "InvalidK",
                VectorError::InvalidModel(_) => "InvalidModel",
                VectorError::MalformedModelFile { .. } => "MalformedModelFile",
            },
            Error::Search(SearchError::EmptyTermArray) => "EmptyTermArray",
            Error::Search(SearchError::EmptyStore) => "EmptyStore",
            Error::Search(SearchError::ZeroK) => "InvalidK",
            Error::Search(SearchError::MissingField(_)) => "MissingField",
            Error::Registry(RegistryError::UnknownServiceId(_)) => "UnknownServiceId",
            Error::Registry(RegistryError::EmptyServiceSet) => "EmptyServiceSet",
            Error::Registry(RegistryError::UnknownFunction(_)) => "UnknownFunction",
            Error::Registry(RegistryError::NotExecutable { .. }) => "NotExecutable",
            Error::Store(StoreError::NotFound { .. }) => "NotFound",
            Error::Store(StoreError::Corruption { .. }) => "StorageCorruption",
            Error::Store(StoreError::InvalidCollection(_) | StoreError::InvalidId(_)) => "InvalidStorageKey",
            Error::Store(StoreError::Io { .. }) => "StorageIo",
            Error::ModelNotInitialized => "ModelNotInitialized",
            Error::NoCorpus => "NoCorpus",
            Error::TrainingBusy => "TrainingBusy",
            Error::BadRequest(_) => "BadRequest",
            Error::NoPipeline(_) => "NoPipeline",
            Error::Config(_) => "Config",
            Error::Internal(_) => "Internal",
            Error::Io { .. } => "Io",
            Error::Stage { .. } => "StageFailed",
        }
    }

    /// HTTP status for the API layer.
    pub fn status(&self) -> u16 {
        match self {
            Error::BadRequest(_)
            | Error::Ingest(IngestError::UnknownFormat(_) | IngestError::UnknownEncoding(_) | IngestError::EmptyId)
            | Error::Store(StoreError::InvalidCollection(_) | StoreError::InvalidId(_)) => 400,
            Error::Vector(VectorError::UnknownTerm(_))
            | Error::Search(SearchError::Vector(VectorError::UnknownTerm(_)))
            | Error::Registry(RegistryError::UnknownServiceId(_) | RegistryError::UnknownFunction(_))
            | Error::Store(StoreError::NotFound { .. }) => 404,
            Error::Registry(RegistryError::NotExecutable { .. }) | Error::TrainingBusy => 409,
            Error::ModelNotInitialized | Error::NoCorpus => 503,
            Error::Stage { .. }
            | Error::Io { .. }
            | Error::Config(_)
            | Error::Internal(_)
            | Error::Store(StoreError::Corruption { .. } | StoreError::Io { .. }) => 500,
            _ => 422,
        }
    }

    /// JSON error body: kind, message, and for stage failures the failing
    /// service with the inner kind.
    pub fn to_json(&self) -> Value {
        let mut body = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            Error::Stage { service, stage, source } => {
                body["service"] = json!(service);
                body["stage"] = json!(stage);
                body["cause"] = json!(source.kind());
                if let Error::Search(SearchError::MissingField(names)) = source.as_ref() {
                    body["missing"] = json!(names);
                }
            }
            Error::Registry(RegistryError::NotExecutable { function, missing }) => {
                body["function"] = json!(function);
                body["missing"] = json!(missing);
            }
            Error::Search(SearchError::MissingField(names)) => body["missing"] = json!(names),
            Error::Clp(ClpError::LanguageMismatch(ids)) => body["doc_ids"] = json!(ids),
            _ => {}
        }
        body
    }

    /// Innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
