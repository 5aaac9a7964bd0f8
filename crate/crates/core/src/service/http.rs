//! JSON-over-HTTP front end for [`EpisodeStore`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{EpisodeStore, EvaluatorChoice, ServiceError, TaskSpec};
use crate::reward::RewardWeights;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::State(_) => StatusCode::CONFLICT,
            ServiceError::Request(_) => StatusCode::BAD_REQUEST,
            ServiceError::Storage(_) | ServiceError::Scoring(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct TurnBody {
    text: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct ScoreBody {
    evaluator: Option<EvaluatorChoice>,
    weights: Option<RewardWeights>,
}

#[derive(Debug, Deserialize)]
#[serde(default)]
struct PersistBody {
    file: String,
}

impl Default for PersistBody {
    fn default() -> Self {
        Self { file: "rollouts.jsonl".into() }
    }
}

fn body<T: DeserializeOwned + Default>(bytes: &[u8], optional: bool) -> Result<T, ServiceError> {
    if optional && bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ServiceError::Request(format!("invalid JSON body: {e}")))
}

/// Runs store work off the async threads; scoring may block on HTTP.
async fn blocking<T: Serialize + Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<Json<T>, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(format!("worker panicked: {e}")))?
        .map(Json)
}

type St = State<Arc<EpisodeStore>>;

async fn create(State(store): St, bytes: Bytes) -> Result<Response, ServiceError> {
    let spec: TaskSpec = serde_json::from_slice(&bytes)
        .map_err(|e| ServiceError::Request(format!("invalid task spec: {e}")))?;
    let created = blocking(move || store.create_episode(&spec)).await?;
    Ok((StatusCode::CREATED, created).into_response())
}

async fn turn(State(store): St, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ServiceError> {
    let text = serde_json::from_slice::<TurnBody>(&bytes)
        .map_err(|e| ServiceError::Request(format!("expected {{\"text\": ...}}: {e}")))?
        .text;
    Ok(blocking(move || store.submit_turn(&id, &text)).await?.into_response())
}

async fn view(State(store): St, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(blocking(move || store.view(&id)).await?.into_response())
}

async fn score(State(store): St, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ServiceError> {
    let b: ScoreBody = body(&bytes, true)?;
    let choice = b.evaluator.unwrap_or(EvaluatorChoice::Stub);
    Ok(blocking(move || store.score_episode(&id, b.weights, choice)).await?.into_response())
}

async fn persist(State(store): St, Path(id): Path<String>, bytes: Bytes) -> Result<Response, ServiceError> {
    let b: PersistBody = body(&bytes, true)?;
    Ok(blocking(move || store.persist_episode(&id, &b.file)).await?.into_response())
}

pub fn router(store: Arc<EpisodeStore>) -> Router {
    Router::new()
        .route("/episodes", post(create))
        .route("/episodes/{id}", get(view))
        .route("/episodes/{id}/turns", post(turn))
        .route("/episodes/{id}/score", post(score))
        .route("/episodes/{id}/persist", post(persist))
        .with_state(store)
}

pub async fn serve(listener: tokio::net::TcpListener, store: Arc<EpisodeStore>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}

/// A server on its own thread and runtime, for callers without one.
/// Dropping the handle stops it.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

pub fn spawn_server(addr: SocketAddr, store: Arc<EpisodeStore>) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            axum::serve(listener, router(store))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}
