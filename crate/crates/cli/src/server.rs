//! Read-only HTTP search endpoint.

use std::collections::HashMap;
use std::future::IntoFuture;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use gsn_core::config::Config;
use gsn_core::Error;

use crate::search::SearchService;

/// Service slot shared by all handlers; `None` until loading finishes.
pub type SharedService = Arc<RwLock<Option<SearchService>>>;

pub const DEFAULT_K: usize = 10;

pub fn router(state: SharedService) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/healthz", get(healthz))
        .with_state(state)
}

async fn healthz() -> &'static str {
    "ok"
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": message.into() }).to_string();
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn search(State(state): State<SharedService>, Query(params): Query<HashMap<String, String>>) -> Response {
    let q = match params.get("q") {
        Some(q) if !q.trim().is_empty() => q,
        _ => return error(StatusCode::BAD_REQUEST, "missing query parameter `q`"),
    };
    let k = match params.get("k").map(|k| k.parse::<usize>()) {
        None => DEFAULT_K,
        Some(Ok(k)) if k >= 1 => k,
        Some(_) => return error(StatusCode::BAD_REQUEST, "`k` must be a positive integer"),
    };
    let guard = state.read().unwrap_or_else(|p| p.into_inner());
    let Some(service) = guard.as_ref() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "index not loaded yet");
    };
    match service.search(q, k) {
        Ok(hits) => {
            let body = serde_json::to_string(&hits).expect("hits serialize");
            ([(header::CONTENT_TYPE, "application/json")], body).into_response()
        }
        Err(e @ (Error::InvalidArgument(_) | Error::EmptyInput | Error::EmptySequence | Error::EmptyGraph)) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Binds `config.host:config.port`, loads the service in the background and
/// serves until interrupted. `on_ready` receives the bound address.
pub fn serve(config: &Config, on_ready: impl FnOnce(SocketAddr)) -> gsn_core::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let state: SharedService = Arc::new(RwLock::new(None));
        let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
        on_ready(listener.local_addr()?);
        let loader = {
            let state = state.clone();
            let config = config.clone();
            tokio::task::spawn_blocking(move || {
                let service = SearchService::load(&config)?;
                *state.write().unwrap_or_else(|p| p.into_inner()) = Some(service);
                Ok::<_, Error>(())
            })
        };
        let server = tokio::spawn(
            axum::serve(listener, router(state)).with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .into_future(),
        );
        loader.await.map_err(|e| Error::Io(std::io::Error::other(e)))??;
        server.await.map_err(|e| Error::Io(std::io::Error::other(e)))?.map_err(Error::Io)
    })
}
