use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use super::{FixtureStore, SpecialistError, SpecialistKind, SpecialistRequest};

/// A running fixture server. Dropping the handle also stops it.
pub struct FixtureServer {
    addr: SocketAddr,
    stop: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl FixtureServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL for client endpoints, e.g. `http://127.0.0.1:8099`.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.stop.send(());
        self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }

    /// Runs until the server task ends, which without a shutdown call is never.
    pub async fn wait(self) -> std::io::Result<()> {
        let FixtureServer { stop, task, .. } = self;
        let result = task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        drop(stop);
        result
    }
}

async fn answer(
    State(store): State<Arc<FixtureStore>>,
    Path(kind): Path<String>,
    Json(request): Json<SpecialistRequest>,
) -> Response {
    let Ok(kind) = kind.parse::<SpecialistKind>() else {
        return (
            StatusCode::NOT_FOUND,
            Json(json!({"error": "unknown_kind", "detail": kind})),
        )
            .into_response();
    };
    match store.lookup(kind, &request) {
        Ok(doc) => Json(doc.clone()).into_response(),
        Err(SpecialistError::FixtureMiss { key, .. }) => (
            StatusCode::NOT_FOUND,
            Json(json!({"error": "fixture_miss", "detail": key})),
        )
            .into_response(),
        Err(other) => (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": other.class(), "detail": other.to_string()})),
        )
            .into_response(),
    }
}

pub fn fixture_router(store: Arc<FixtureStore>) -> Router {
    Router::new()
        .route("/v1/{kind}", post(answer))
        .with_state(store)
}

/// Serves the specialist wire protocol from `store` on `addr` (port 0 picks
/// a free port).
pub async fn serve_fixtures(store: Arc<FixtureStore>, addr: SocketAddr) -> std::io::Result<FixtureServer> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = fixture_router(store);
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    tracing::info!(%addr, "fixture server listening");
    Ok(FixtureServer { addr, stop, task })
}
