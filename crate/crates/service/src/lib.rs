//! Read-only HTTP API over an index and usage log loaded once at startup.
//!
//! | route                                   | response                          |
//! |-----------------------------------------|-----------------------------------|
//! | `GET /v1/recommendations/{doc_id}`      | recommendation set                |
//! | `GET /v1/similar/{doc_id}?k=`           | nearest same-cluster documents    |
//! | `GET /v1/health`                        | index identity and uptime         |
//!
//! `/v1/recommendations` accepts `group_size` and `session_gap` (hours).

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use litrec_core::index::Index;
use litrec_core::recommender::{recommend, Query, RecommenderConfig};
use litrec_core::usage::{load_usage, ReaderFilter, Readership, UsageLog};
use litrec_core::Error;
use serde::Serialize;
use serde_json::json;

pub const DEFAULT_SIMILAR_K: usize = 10;

/// Immutable snapshot served by every request.
pub struct ServiceState {
    pub index: Index,
    pub readership: Readership,
    pub config: RecommenderConfig,
    pub started: Instant,
}

impl ServiceState {
    pub fn new(index: Index, log: UsageLog) -> Self {
        ServiceState {
            index,
            readership: Readership::new(log, ReaderFilter::default()),
            config: RecommenderConfig::default(),
            started: Instant::now(),
        }
    }

    pub fn load(index_dir: &Path, usage: Option<&Path>) -> litrec_core::Result<Self> {
        let index = Index::load(index_dir)?;
        let log = match usage {
            Some(p) => load_usage(p)?,
            None => UsageLog::default(),
        };
        Ok(ServiceState::new(index, log))
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/recommendations/{doc_id}", get(recommendations))
        .route("/v1/similar/{doc_id}", get(similar))
        .route("/v1/health", get(health))
        .with_state(state)
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, code: &str, detail: Option<String>) -> Response {
    let body = match detail {
        Some(d) => json!({ "error": code, "detail": d }),
        None => json!({ "error": code }),
    };
    json_body(status, body.to_string())
}

fn bad_request(detail: impl Into<String>) -> Response {
    error(StatusCode::BAD_REQUEST, "bad_request", Some(detail.into()))
}

fn from_core(e: Error) -> Response {
    match e {
        Error::NotFound(_) => error(StatusCode::NOT_FOUND, "unknown_document", None),
        Error::NoSignal(m) => error(StatusCode::UNPROCESSABLE_ENTITY, "no_signal", Some(m)),
        Error::InvalidArgument(m) => bad_request(m),
        other => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", Some(other.to_string())),
    }
}

fn param<T: std::str::FromStr>(params: &HashMap<String, String>, name: &str) -> Result<Option<T>, String> {
    params
        .get(name)
        .map(|v| v.parse::<T>().map_err(|_| format!("invalid {name}: {v:?}")))
        .transpose()
}

async fn recommendations(
    State(state): State<Arc<ServiceState>>,
    UrlPath(doc_id): UrlPath<String>,
    UrlQuery(params): UrlQuery<HashMap<String, String>>,
) -> Response {
    let mut cfg = state.config;
    match param::<usize>(&params, "group_size") {
        Ok(Some(g)) => cfg.group_size = g,
        Ok(None) => {}
        Err(m) => return bad_request(m),
    }
    match param::<f64>(&params, "session_gap") {
        Ok(Some(h)) if h.is_finite() && h >= 0.0 => cfg.session_gap = Duration::from_secs((h * 3600.0).round() as u64),
        Ok(Some(h)) => return bad_request(format!("invalid session_gap: {h}")),
        Ok(None) => {}
        Err(m) => return bad_request(m),
    }
    let result = tokio::task::spawn_blocking(move || {
        recommend(&state.index, &state.readership, &Query::Doc(doc_id), &cfg)
    })
    .await;
    match result {
        Ok(Ok(set)) => json_body(StatusCode::OK, set.to_json() + "\n"),
        Ok(Err(e)) => from_core(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", Some(e.to_string())),
    }
}

#[derive(Serialize)]
struct Neighbor<'a> {
    doc_id: &'a str,
    similarity: f64,
}

async fn similar(
    State(state): State<Arc<ServiceState>>,
    UrlPath(doc_id): UrlPath<String>,
    UrlQuery(params): UrlQuery<HashMap<String, String>>,
) -> Response {
    let k = match param::<usize>(&params, "k") {
        Ok(Some(0)) => return bad_request("k must be at least 1"),
        Ok(k) => k.unwrap_or(DEFAULT_SIMILAR_K),
        Err(m) => return bad_request(m),
    };
    let index = &state.index;
    if !index.corpus.contains(&doc_id) {
        return error(StatusCode::NOT_FOUND, "unknown_document", None);
    }
    let Some(v) = index.vectors.get(&doc_id) else {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "no_signal",
            Some(format!("document {doc_id:?} has no topic vector")),
        );
    };
    let cluster = index.clusters.cluster_of(&doc_id).unwrap_or_else(|| index.clusters.assign_cluster(v));
    let ranked = match index.clusters.nearest_in_cluster(&index.vectors, v, Some(&doc_id), cluster, k) {
        Ok(r) => r,
        Err(e) => return from_core(e),
    };
    let neighbors: Vec<Neighbor> = ranked
        .iter()
        .map(|(id, s)| Neighbor {
            doc_id: id,
            similarity: *s,
        })
        .collect();
    let body = json!({ "doc_id": doc_id, "cluster": cluster, "neighbors": neighbors });
    json_body(StatusCode::OK, body.to_string() + "\n")
}

async fn health(State(state): State<Arc<ServiceState>>) -> Response {
    let m = &state.index.manifest;
    let body = json!({
        "status": "ok",
        "corpus_checksum": m.corpus_checksum,
        "doc_count": m.doc_count,
        "clusters": m.clusters,
        "dims": m.dims,
        "frequent_readers": state.readership.readers().len(),
        "uptime_secs": state.started.elapsed().as_secs(),
    });
    json_body(StatusCode::OK, body.to_string() + "\n")
}
