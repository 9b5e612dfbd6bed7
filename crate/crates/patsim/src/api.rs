//! HTTP/JSON front end.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use patsim_core::clp::PhraseConfig;
use patsim_core::coordinator::ServiceDescriptor;
use patsim_core::trainer::TrainingConfig;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::engine::{Engine, Upload};
use crate::error::Error;

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(Error::BadRequest(r.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{}", self.0);
        }
        (status, Json(self.0.to_json())).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body extractor whose rejections use the API error shape.
pub struct Body<T>(T);

impl<S, T> axum::extract::FromRequest<S> for Body<T>
where
    Json<T>: axum::extract::FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        Ok(Body(Json::<T>::from_request(req, state).await?.0))
    }
}

/// Runs blocking engine work off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(Error::Internal(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/documents", post(post_document))
        .route("/documents/{id}", get(get_document))
        .route("/corpus/build", post(build_corpus))
        .route("/model/train", post(train))
        .route("/model/status", get(model_status))
        .route("/model/init", post(init_model))
        .route("/similarity", get(similarity))
        .route("/associates", get(associates))
        .route("/n-similarity", post(n_similarity))
        .route("/cluster-center", post(cluster_center))
        .route("/patents", get(list_patents))
        .route("/search", post(search))
        .route("/functions", get(list_functions))
        .route("/functions/{id}/execute", post(execute))
        .route("/services", get(list_services))
        .route("/services/{id}", post(register_service))
        .with_state(engine)
}

async fn post_document(State(e): State<Arc<Engine>>, Body(upload): Body<Upload>) -> ApiResult<impl IntoResponse> {
    let doc = blocking(move || e.ingest(&upload)).await?;
    Ok((StatusCode::CREATED, Json(doc)))
}

async fn get_document(State(e): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.document(&id)).await?))
}

#[derive(Deserialize)]
struct BuildRequest {
    #[serde(default)]
    doc_ids: Vec<String>,
    #[serde(default)]
    phrase_config: Option<PhraseConfig>,
}

async fn build_corpus(State(e): State<Arc<Engine>>, Body(req): Body<BuildRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.build_corpus(&req.doc_ids, req.phrase_config)).await?))
}

/// Fields absent from the body keep the configured defaults.
async fn train(State(e): State<Arc<Engine>>, Body(overrides): Body<Value>) -> ApiResult<impl IntoResponse> {
    let mut cfg = serde_json::to_value(e.training_defaults()).map_err(|x| Error::Internal(x.to_string()))?;
    match overrides {
        Value::Object(map) => cfg.as_object_mut().expect("config serializes to an object").extend(map),
        Value::Null => {}
        _ => return Err(Error::BadRequest("training config must be an object".into()).into()),
    }
    let cfg: TrainingConfig =
        serde_json::from_value(cfg).map_err(|x| Error::BadRequest(format!("training config: {x}")))?;
    e.start_training(cfg)?;
    Ok((StatusCode::ACCEPTED, Json(e.training_status())))
}

async fn model_status(State(e): State<Arc<Engine>>) -> impl IntoResponse {
    Json(e.training_status())
}

#[derive(Deserialize)]
struct InitRequest {
    model_path: PathBuf,
}

async fn init_model(State(e): State<Arc<Engine>>, Body(req): Body<InitRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.init_model(&req.model_path)).await?))
}

#[derive(Deserialize)]
struct PairQuery {
    a: String,
    b: String,
}

async fn similarity(State(e): State<Arc<Engine>>, Query(q): Query<PairQuery>) -> ApiResult<impl IntoResponse> {
    let score = e.similarity(&q.a, &q.b)?;
    Ok(Json(json!({ "a": q.a, "b": q.b, "score": score })))
}

#[derive(Deserialize)]
struct AssociatesQuery {
    term: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    10
}

async fn associates(State(e): State<Arc<Engine>>, Query(q): Query<AssociatesQuery>) -> ApiResult<impl IntoResponse> {
    let found = e.associates(&q.term, q.k)?;
    let list: Vec<Value> = found.into_iter().map(|(t, s)| json!({ "term": t, "score": s })).collect();
    Ok(Json(json!({ "term": q.term, "associates": list })))
}

#[derive(Deserialize)]
struct SetsRequest {
    set_a: Vec<String>,
    set_b: Vec<String>,
}

async fn n_similarity(State(e): State<Arc<Engine>>, Body(req): Body<SetsRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({ "score": e.n_similarity(&req.set_a, &req.set_b)? })))
}

#[derive(Deserialize)]
struct TermsRequest {
    terms: Vec<String>,
}

async fn cluster_center(State(e): State<Arc<Engine>>, Body(req): Body<TermsRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(json!({ "center": e.cluster_center(&req.terms)? })))
}

async fn list_patents(State(e): State<Arc<Engine>>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.patents()).await?))
}

#[derive(Deserialize)]
struct SearchRequest {
    text: String,
    #[serde(default = "default_k")]
    k: usize,
}

async fn search(State(e): State<Arc<Engine>>, Body(req): Body<SearchRequest>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.search_text(&req.text, req.k)).await?))
}

async fn list_functions(State(e): State<Arc<Engine>>) -> impl IntoResponse {
    let reg = e.registry();
    let list: Vec<Value> = reg
        .functions()
        .map(|f| json!({ "id": f.id, "services": f.services, "executable": f.executable, "missing": reg.missing_services(f) }))
        .collect();
    Json(list)
}

async fn execute(
    State(e): State<Arc<Engine>>,
    Path(id): Path<String>,
    Body(task): Body<Option<Value>>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(move || e.execute(&id, task.unwrap_or(Value::Null))).await?))
}

async fn list_services(State(e): State<Arc<Engine>>) -> impl IntoResponse {
    let reg = e.registry();
    let list: Vec<Value> = reg
        .services()
        .map(|(id, d)| json!({ "id": id, "purpose": id.purpose(), "status": d.status, "endpoint": d.endpoint }))
        .collect();
    Json(list)
}

async fn register_service(
    State(e): State<Arc<Engine>>,
    Path(id): Path<String>,
    Body(descriptor): Body<ServiceDescriptor>,
) -> ApiResult<impl IntoResponse> {
    e.with_registry(|r| r.register_service(&id, descriptor)).map_err(Error::from)?;
    Ok(StatusCode::NO_CONTENT)
}
