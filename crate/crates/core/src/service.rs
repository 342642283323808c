//! HTTP strength-meter backend.
//!
//! | route            | body                                             | result                      |
//! |------------------|--------------------------------------------------|-----------------------------|
//! | `POST /evaluate` | `{"password"}`                                   | [`EvaluateResponse`]        |
//! | `POST /kb/update`| `{"passwords", "source", "idempotency_key"?}`    | [`KbUpdateResponse`] or 204 |
//! | `GET /health`    |                                                  | [`HealthResponse`]          |
//!
//! `/kb/update` requires `Authorization: Bearer <token>`. Request bodies
//! are never logged, and error bodies never echo them.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::Password;
use crate::dpg::{update_store, CrackEvent, UpdatePolicy};
use crate::error::{Error, Result};
use crate::fusion::{FusedModel, FusionPolicy};
use crate::knowledge::{KnowledgeStore, SharedStore, Snapshot};
use crate::markov::MarkovModel;
use crate::strength::{evaluate_password, Bucket, MonteCarloRank, StrengthReport};

#[derive(Debug, Deserialize)]
pub struct EvaluateRequest {
    pub password: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub per_char_probs: Vec<f64>,
    pub color_scalars: Vec<f64>,
    pub total_prob: f64,
    /// `null` when the model assigns zero probability.
    pub guess_number: Option<f64>,
    pub bucket: Bucket,
    pub suggestions: Vec<String>,
    pub suggestions_timed_out: bool,
    pub epoch: u64,
}

#[derive(Debug, Deserialize)]
pub struct KbUpdateRequest {
    pub passwords: Vec<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KbUpdateResponse {
    pub epoch: u64,
    pub accepted: usize,
    pub rejected: usize,
    /// False when the idempotency key was already applied.
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub name: String,
    pub version: String,
    pub epoch: u64,
    pub store_entries: usize,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    rule: String,
}

/// Produces candidate replacements for a password.
pub trait SuggestionProvider: Send + Sync {
    fn suggest(&self, password: &str) -> Vec<String>;
}

/// Character substitutions plus length extension, keyed on a hash of the
/// input so repeated calls agree.
#[derive(Clone, Copy, Debug, Default)]
pub struct StubSuggestions;

const SUBSTITUTIONS: [(char, char); 7] = [
    ('a', '@'),
    ('o', '0'),
    ('e', '3'),
    ('i', '!'),
    ('s', '$'),
    ('l', '1'),
    ('t', '7'),
];
const EXTENSION_POOL: &[u8] = b"#%&*+=?^~_-;:<>|/Zq7Xk9Vw3Jp";

impl StubSuggestions {
    fn fnv(s: &str) -> u64 {
        s.bytes()
            .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
    }

    fn extension(seed: u64, len: usize) -> String {
        let mut h = seed;
        (0..len)
            .map(|_| {
                h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                EXTENSION_POOL[(h >> 33) as usize % EXTENSION_POOL.len()] as char
            })
            .collect()
    }
}

impl SuggestionProvider for StubSuggestions {
    fn suggest(&self, password: &str) -> Vec<String> {
        let seed = Self::fnv(password);
        let substituted: String = password
            .chars()
            .map(|c| SUBSTITUTIONS.iter().find(|(from, _)| *from == c).map_or(c, |(_, to)| *to))
            .collect();
        let mut capitalized: String = password.chars().rev().collect();
        if let Some(first) = capitalized.get(..1) {
            capitalized = first.to_ascii_uppercase() + &capitalized[1..];
        }
        vec![
            format!("{substituted}{}", Self::extension(seed, 3)),
            format!("{password}{}", Self::extension(seed ^ 1, 6)),
            format!("{}{capitalized}{}", Self::extension(seed ^ 2, 2), Self::extension(seed ^ 3, 3)),
            substituted,
        ]
    }
}

pub struct ServiceState {
    model: MarkovModel,
    store: SharedStore,
    rank: MonteCarloRank,
    policy: FusionPolicy,
    update: UpdatePolicy,
    token: Option<String>,
    suggester: Option<Arc<dyn SuggestionProvider>>,
    suggestion_timeout: Duration,
    applied_keys: Mutex<HashMap<String, u64>>,
}

impl std::fmt::Debug for ServiceState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServiceState")
            .field("epoch", &self.store.load().epoch)
            .field("policy", &self.policy)
            .field("suggestions", &self.suggester.is_some())
            .finish_non_exhaustive()
    }
}

impl ServiceState {
    pub fn new(
        model: MarkovModel,
        store: KnowledgeStore,
        rank: MonteCarloRank,
        policy: FusionPolicy,
        update: UpdatePolicy,
    ) -> Result<Self> {
        FusedModel::try_new(&model, &store, policy)?;
        update.validate()?;
        Ok(Self {
            model,
            store: SharedStore::new(store),
            rank,
            policy,
            update,
            token: None,
            suggester: Some(Arc::new(StubSuggestions)),
            suggestion_timeout: Duration::from_millis(50),
            applied_keys: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    /// `None` disables suggestions.
    pub fn with_suggestions(mut self, provider: Option<Arc<dyn SuggestionProvider>>, timeout: Duration) -> Self {
        self.suggester = provider;
        self.suggestion_timeout = timeout;
        self
    }

    /// Loads model, store and rank table from the configured paths. A
    /// missing `paths.kb` starts from an empty store.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let model = MarkovModel::load(&Config::require(&cfg.paths.model, "model")?)?;
        let store = match &cfg.paths.kb {
            Some(p) => KnowledgeStore::load(p)?.with_k(cfg.k),
            None => KnowledgeStore::empty(model.alphabet(), cfg.k),
        };
        let rank = MonteCarloRank::load(&Config::require(&cfg.paths.rank, "rank")?)?;
        let provider: Option<Arc<dyn SuggestionProvider>> = if cfg.suggestions.enabled {
            Some(Arc::new(StubSuggestions))
        } else {
            None
        };
        Ok(Self::new(model, store, rank, cfg.fusion, cfg.update)?
            .with_token(cfg.resolve_token())
            .with_suggestions(provider, Duration::from_millis(cfg.suggestions.timeout_ms)))
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.store.load()
    }

    pub fn epoch(&self) -> u64 {
        self.store.load().epoch
    }

    /// Scores `password` against one snapshot.
    pub fn evaluate(&self, snapshot: &Snapshot, password: &str) -> Result<StrengthReport> {
        let scorer = FusedModel::new(&self.model, &snapshot.store, self.policy);
        evaluate_password(&scorer, &self.rank, password)
    }

    fn validate_input(&self, password: &str) -> std::result::Result<(), &'static str> {
        if password.is_empty() {
            return Err("empty");
        }
        if self.model.alphabet().encode_str(password).is_err() {
            return Err("charset");
        }
        Ok(())
    }

    /// Suggestions rated at least as strong as `report`, excluding the input.
    fn filtered_suggestions(&self, snapshot: &Snapshot, password: &str, report: &StrengthReport) -> Vec<String> {
        let Some(provider) = &self.suggester else {
            return Vec::new();
        };
        let mut out: Vec<String> = Vec::new();
        for candidate in provider.suggest(password) {
            if candidate == password || out.contains(&candidate) || self.validate_input(&candidate).is_err() {
                continue;
            }
            if let Ok(r) = self.evaluate(snapshot, &candidate) {
                if r.bucket >= report.bucket {
                    out.push(candidate);
                }
            }
        }
        out
    }

    /// Folds cleaned registration passwords into the store. Returns the
    /// response, or `None` when nothing survives cleaning.
    pub fn apply_update(&self, req: KbUpdateRequest) -> Result<Option<KbUpdateResponse>> {
        let alphabet = self.model.alphabet();
        let total = req.passwords.len();
        let events: Vec<CrackEvent> = req
            .passwords
            .into_iter()
            .filter(|p| Password::parse(p).is_ok() && alphabet.encode_str(p).is_ok())
            .map(|password| CrackEvent { password, guesses: 0 })
            .collect();
        let accepted = events.len();
        let rejected = total - accepted;
        if events.is_empty() {
            return Ok(None);
        }
        let mut keys = self.applied_keys.lock().expect("idempotency lock poisoned");
        if let Some(key) = &req.idempotency_key {
            if let Some(&epoch) = keys.get(key) {
                return Ok(Some(KbUpdateResponse {
                    epoch,
                    accepted,
                    rejected,
                    applied: false,
                }));
            }
        }
        let mut failure = None;
        let snapshot = self.store.update(|store| match update_store(store, &events, &self.update) {
            Ok(next) => next,
            Err(e) => {
                failure = Some(e);
                None
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some(key) = req.idempotency_key {
            keys.insert(key, snapshot.epoch);
        }
        Ok(Some(KbUpdateResponse {
            epoch: snapshot.epoch,
            accepted,
            rejected,
            applied: true,
        }))
    }

    fn authorized(&self, headers: &HeaderMap) -> bool {
        let Some(expected) = &self.token else {
            return false;
        };
        let Some(given) = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
        else {
            return false;
        };
        given.len() == expected.len()
            && given
                .bytes()
                .zip(expected.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

fn error_response(status: StatusCode, error: &'static str, rule: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error, rule: rule.into() })).into_response()
}

async fn evaluate(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let started = Instant::now();
    let req: EvaluateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(_) => return error_response(StatusCode::BAD_REQUEST, "malformed", "body must be {\"password\": string}"),
    };
    if let Err(rule) = state.validate_input(&req.password) {
        return error_response(StatusCode::UNPROCESSABLE_ENTITY, "invalid_password", rule);
    }
    let snapshot = state.snapshot();
    let password = Arc::new(req.password);
    let scored = {
        let (state, snapshot, password) = (state.clone(), snapshot.clone(), password.clone());
        tokio::task::spawn_blocking(move || state.evaluate(&snapshot, &password)).await
    };
    let report = match scored {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => return error_response(StatusCode::UNPROCESSABLE_ENTITY, "invalid_password", e.kind()),
        Err(_) => return error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", "evaluation failed"),
    };
    let (suggestions, timed_out) = if state.suggester.is_some() {
        let timeout = state.suggestion_timeout;
        let (st, snap, pwd, rep) = (state.clone(), snapshot.clone(), password.clone(), report.clone());
        let task = tokio::task::spawn_blocking(move || st.filtered_suggestions(&snap, &pwd, &rep));
        match tokio::time::timeout(timeout, task).await {
            Ok(Ok(list)) => (list, false),
            _ => (Vec::new(), true),
        }
    } else {
        (Vec::new(), false)
    };
    tracing::debug!(epoch = snapshot.epoch, micros = started.elapsed().as_micros() as u64, "evaluate");
    Json(EvaluateResponse {
        per_char_probs: report.per_char_probs,
        color_scalars: report.color_scalars,
        total_prob: report.total_prob,
        guess_number: report.guess_number.is_finite().then_some(report.guess_number),
        bucket: report.bucket,
        suggestions,
        suggestions_timed_out: timed_out,
        epoch: snapshot.epoch,
    })
    .into_response()
}

async fn kb_update(State(state): State<Arc<ServiceState>>, headers: HeaderMap, body: Bytes) -> Response {
    if !state.authorized(&headers) {
        return error_response(StatusCode::UNAUTHORIZED, "unauthorized", "bearer token required");
    }
    let req: KbUpdateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(_) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                "malformed",
                "body must be {\"passwords\": [string], \"source\": string}",
            )
        }
    };
    let source = req.source.clone().unwrap_or_default();
    let count = req.passwords.len();
    let st = state.clone();
    match tokio::task::spawn_blocking(move || st.apply_update(req)).await {
        Ok(Ok(None)) => StatusCode::NO_CONTENT.into_response(),
        Ok(Ok(Some(resp))) => {
            tracing::info!(epoch = resp.epoch, count, source = %source, applied = resp.applied, "kb update");
            Json(resp).into_response()
        }
        Ok(Err(e)) => error_response(StatusCode::UNPROCESSABLE_ENTITY, "update_failed", e.kind()),
        Err(_) => error_response(StatusCode::INTERNAL_SERVER_ERROR, "internal", "update failed"),
    }
}

async fn health(State(state): State<Arc<ServiceState>>) -> Json<HealthResponse> {
    let snapshot = state.snapshot();
    Json(HealthResponse {
        name: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        epoch: snapshot.epoch,
        store_entries: snapshot.store.len(),
    })
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/evaluate", post(evaluate))
        .route("/kb/update", post(kb_update))
        .route("/health", get(health))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<ServiceState>, listen: &str) -> Result<()> {
    let addr: SocketAddr = listen
        .parse()
        .map_err(|_| Error::Config(format!("invalid listen address {listen:?}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::io(listen, e))?;
    tracing::info!(%addr, epoch = state.epoch(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
