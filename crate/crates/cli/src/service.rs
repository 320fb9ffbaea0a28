//! HTTP session service: clients act as the comparison oracle.
//!
//! Datasets, rank tables and trees are built once at startup and shared
//! read-only. Sessions live in memory and expire after a period without
//! requests.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ranknet::bench::{AlgoName, Prepared};
use ranknet::search::{NoiseParams, SessionState};
use ranknet::{Answer, Session};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

pub struct DatasetEntry {
    pub name: String,
    pub prepared: Prepared,
}

impl DatasetEntry {
    pub fn new(name: impl Into<String>, prepared: Prepared) -> Self {
        DatasetEntry {
            name: name.into(),
            prepared,
        }
    }

    fn view(&self) -> DatasetView {
        let ds = &self.prepared.dataset;
        DatasetView {
            name: self.name.clone(),
            n: ds.len(),
            dim: ds.dim(),
            items: (0..ds.len())
                .map(|id| {
                    let f = ds.item(id);
                    ItemView {
                        id,
                        features: f.to_vec(),
                        projection: match f.len() {
                            1 => Some([f[0], 0.0]),
                            2 => Some([f[0], f[1]]),
                            _ => None,
                        },
                        prior_mass: self.prepared.prior.mass(id),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetView {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub items: Vec<ItemView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemView {
    pub id: usize,
    pub features: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub projection: Option<[f64; 2]>,
    pub prior_mass: f64,
}

struct StoredSession {
    session: Session,
    touched: Instant,
}

pub struct AppState {
    datasets: BTreeMap<String, Arc<DatasetEntry>>,
    sessions: Mutex<HashMap<Uuid, StoredSession>>,
    ttl: Duration,
}

impl AppState {
    pub fn new(datasets: impl IntoIterator<Item = DatasetEntry>, ttl: Duration) -> Self {
        AppState {
            datasets: datasets
                .into_iter()
                .map(|d| (d.name.clone(), Arc::new(d)))
                .collect(),
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session store").len()
    }

    /// Drops sessions idle for longer than the ttl.
    pub fn expire(&self) {
        let ttl = self.ttl;
        self.sessions
            .lock()
            .expect("session store")
            .retain(|_, s| s.touched.elapsed() <= ttl);
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        self.expire();
        let id =
            Uuid::parse_str(id).map_err(|_| ApiError::not_found(format!("no session {id}")))?;
        let mut sessions = self.sessions.lock().expect("session store");
        let stored = sessions
            .get_mut(&id)
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))?;
        stored.touched = Instant::now();
        f(&mut stored.session)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<ranknet::Error> for ApiError {
    fn from(e: ranknet::Error) -> Self {
        let status = match e {
            ranknet::Error::SessionFinished => StatusCode::CONFLICT,
            ranknet::Error::Unknown { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionParams {
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub params: SessionParams,
}

fn default_algorithm() -> String {
    "tree".into()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: Uuid,
    pub dataset: String,
    pub algorithm: String,
    pub state: SessionState,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    /// The first item of the pair is closer to the target.
    First,
    Second,
}

#[derive(Debug, Deserialize)]
pub struct AnswerBody {
    pub choice: Choice,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(state)
}

async fn list_datasets(State(app): State<Arc<AppState>>) -> Json<Vec<DatasetView>> {
    Json(app.datasets.values().map(|d| d.view()).collect())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let entry = app
        .datasets
        .get(&req.dataset)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset {:?}", req.dataset)))?;
    let name: AlgoName = req
        .algorithm
        .parse()
        .map_err(|e: ranknet::Error| ApiError::bad_request(e.to_string()))?;
    let noise = match (req.params.epsilon, req.params.delta) {
        (None, None) => None,
        (eps, delta) => Some(NoiseParams::new(eps.unwrap_or(0.1), delta.unwrap_or(0.1))?),
    };
    let session = Session::new(&entry.prepared.context, name.algorithm(noise)?)?;
    let state = session.state();
    let id = Uuid::new_v4();
    app.expire();
    app.sessions.lock().expect("session store").insert(
        id,
        StoredSession {
            session,
            touched: Instant::now(),
        },
    );
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id,
            dataset: entry.name.clone(),
            algorithm: name.to_string(),
            state,
        }),
    ))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    app.with_session(&id, |s| Ok(Json(s.state())))
}

async fn answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionState>, ApiError> {
    app.with_session(&id, |s| {
        if s.is_finished() {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "session already finished",
            ));
        }
        let body: AnswerBody = parse_body(&body)?;
        s.answer(match body.choice {
            Choice::First => Answer::Plus,
            Choice::Second => Answer::Minus,
        })?;
        Ok(Json(s.state()))
    })
}

async fn transcript(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let text = app.with_session(&id, |s| Ok(s.transcript()))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

/// Serves until ctrl-c. Expired sessions are swept once a minute.
pub async fn serve(app: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let sweeper = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.expire();
        }
    });
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
