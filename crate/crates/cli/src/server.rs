//! HTTP/JSON front end of the listening-test bench.
//!
//! Participants only ever see opaque stimulus ids, WAV bytes and blinded
//! receipts; condition labels and SNRs stay on the server.

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::{Context, anyhow};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{Value, json};

use wssdrc_core::audio;
use wssdrc_core::bench::{Bench, BenchError, CorpusStimuli, Next, Phase};
use wssdrc_core::corpus::{Manifest, Split};
use wssdrc_core::evaluation::Group;
use wssdrc_core::masking::{self, NoiseCondition};
use wssdrc_core::ssdrc::SAMPLE_RATE_HZ;

use crate::ServeArgs;
use crate::commands::load_16k;

pub type AppState = Arc<Bench>;

#[derive(Debug)]
pub enum ApiError {
    Bench(BenchError),
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::BadRequest(e.body_text())
    }
}

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        ApiError::Bench(e)
    }
}

pub fn status_of(e: &BenchError) -> StatusCode {
    use BenchError::*;
    match e {
        UnknownSession(_) | UnknownStimulus(_) => StatusCode::NOT_FOUND,
        SessionDone | ResponsePending | AlreadyAnswered | Incomplete(_) => StatusCode::CONFLICT,
        AlreadyPlayed => StatusCode::GONE,
        InsufficientSentences { .. } | Eval(_) => StatusCode::UNPROCESSABLE_ENTITY,
        NoAudio | MissingAudio { .. } => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::Bench(e) => {
                let s = status_of(&e);
                if s.is_server_error() {
                    log::error!("{e}");
                }
                (s, e.to_string())
            }
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Bench calls take locks and may touch the disk or render audio.
async fn blocking<T: Send + 'static>(
    bench: &AppState,
    f: impl FnOnce(&Bench) -> Result<T, BenchError> + Send + 'static,
) -> ApiResult<T> {
    let b = bench.clone();
    tokio::task::spawn_blocking(move || f(&b)).await.map_err(|e| ApiError::Internal(e.to_string()))?.map_err(Into::into)
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub listener_id: String,
    pub group: Group,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ResponseBody {
    pub stimulus_id: String,
    pub response_text: String,
}

#[derive(Debug, Deserialize)]
pub struct StimulusQuery {
    pub session: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct Exclusion {
    pub excluded: bool,
}

/// FNV-1a, so a listener id alone gives a reproducible plan.
fn default_seed(listener_id: &str) -> u64 {
    listener_id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

async fn create_session(
    State(b): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(req) = body?;
    if req.listener_id.trim().is_empty() {
        return Err(ApiError::BadRequest("listener_id is empty".into()));
    }
    let seed = req.seed.unwrap_or_else(|| default_seed(&req.listener_id));
    let s = blocking(&b, move |b| b.create_session(&req.listener_id, req.group, seed)).await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "session_id": s.session_id,
            "listener_id": s.listener_id,
            "group": s.group,
            "phase": s.phase,
            "total": s.plan.len(),
        })),
    ))
}

async fn list_sessions(State(b): State<AppState>) -> ApiResult<Json<Value>> {
    let rows = blocking(&b, |b| {
        b.session_ids()
            .into_iter()
            .map(|id| {
                let s = b.session(&id)?;
                Ok(json!({
                    "session_id": s.session_id,
                    "listener_id": s.listener_id,
                    "group": s.group,
                    "phase": s.phase,
                    "srt_db": s.srt_db,
                    "excluded": s.excluded,
                }))
            })
            .collect::<Result<Vec<_>, BenchError>>()
    })
    .await?;
    Ok(Json(Value::Array(rows)))
}

async fn next(State(b): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let sid = id.clone();
    let n = blocking(&b, move |b| b.next_stimulus(&sid)).await?;
    let mut v = serde_json::to_value(&n).map_err(|e| ApiError::Internal(e.to_string()))?;
    if let Next::Stimulus { stimulus_id, .. } = &n {
        v["audio_url"] = json!(format!("/stimuli/{stimulus_id}.wav?session={id}"));
    }
    Ok(Json(v))
}

async fn stimulus(
    State(b): State<AppState>,
    Path(file): Path<String>,
    Query(q): Query<StimulusQuery>,
) -> ApiResult<Response> {
    let id = file.strip_suffix(".wav").ok_or_else(|| ApiError::NotFound(file.clone()))?.to_owned();
    let bytes = blocking(&b, move |b| {
        if let Some(sid) = q.session
            && b.stimulus_owner(&id)? != sid
        {
            return Err(BenchError::UnknownStimulus(id));
        }
        let w = b.stimulus_audio(&id)?;
        Ok(audio::encode_wav(&w)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav"), (header::CACHE_CONTROL, "no-store")], bytes).into_response())
}

async fn respond(
    State(b): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ResponseBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let r = blocking(&b, move |b| {
        b.submit_response(&id, &req.stimulus_id, &req.response_text)?;
        b.receipt(&id, &req.stimulus_id)
    })
    .await?;
    Ok(Json(serde_json::to_value(r).map_err(|e| ApiError::Internal(e.to_string()))?))
}

async fn exclude(
    State(b): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Exclusion>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let Json(req) = body?;
    blocking(&b, move |b| b.set_excluded(&id, req.excluded)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn session_report(State(b): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let r = blocking(&b, move |b| b.finalize_report(&id)).await?;
    Ok(Json(serde_json::to_value(r).map_err(|e| ApiError::Internal(e.to_string()))?))
}

async fn group_report(State(b): State<AppState>, Path(g): Path<String>) -> ApiResult<Json<Value>> {
    let group = Group::parse(&g).ok_or_else(|| ApiError::BadRequest(format!("unknown group {g}")))?;
    let r = blocking(&b, move |b| b.group_report(group)).await?;
    Ok(Json(serde_json::to_value(r).map_err(|e| ApiError::Internal(e.to_string()))?))
}

pub fn router(bench: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/responses", post(respond))
        .route("/sessions/{id}/excluded", put(exclude))
        .route("/sessions/{id}/report", get(session_report))
        .route("/stimuli/{file}", get(stimulus))
        .route("/groups/{group}/report", get(group_report))
        .with_state(bench)
}

/// Builds the stimulus source and opens the session store for `serve`.
pub fn open_bench(a: &ServeArgs) -> anyhow::Result<Bench> {
    let manifest = Manifest::load(&a.manifest).with_context(|| format!("loading {}", a.manifest.display()))?;
    let test: Vec<_> = manifest.split(Split::Test).collect();
    let noise = match &a.noise_wav {
        Some(p) => load_16k(p)?,
        None => {
            let mut longest = 0;
            for e in &test {
                longest = longest.max(load_16k(&e.wav_path)?.len());
            }
            let clips =
                manifest.split(Split::Train).map(|e| load_16k(&e.wav_path)).collect::<anyhow::Result<Vec<_>>>()?;
            let clips = if clips.is_empty() {
                test.iter().map(|e| load_16k(&e.wav_path)).collect::<anyhow::Result<Vec<_>>>()?
            } else {
                clips
            };
            let dur = longest as f64 / SAMPLE_RATE_HZ as f64 + 1.0;
            masking::synth_ssn(&masking::estimate_ltass(&clips)?, dur, &NoiseCondition::new(0.0, a.ssn_seed))?
        }
    };
    let dirs: BTreeMap<_, _> = a.enhanced.iter().cloned().collect();
    for c in [wssdrc_core::evaluation::Condition::Ssdrc, wssdrc_core::evaluation::Condition::Wssdrc] {
        if !dirs.contains_key(&c) {
            log::warn!("no --enhanced directory for {c}; its stimuli will fail to render");
        }
    }
    let cache = a.data_dir.join("stimuli");
    std::fs::create_dir_all(&cache)?;
    let source = CorpusStimuli::new(&manifest, dirs, noise, Some(cache));
    Ok(Bench::open(&a.data_dir, Arc::new(source))?)
}

pub fn serve(a: &ServeArgs) -> anyhow::Result<()> {
    let bench = Arc::new(open_bench(a)?);
    let open = bench.session_ids().iter().filter(|id| bench.session(id).is_ok_and(|s| s.phase != Phase::Done)).count();
    log::info!("{} sessions loaded, {open} in progress", bench.session_ids().len());
    let mut app = router(bench);
    if a.cors {
        app = app.layer(tower_http::cors::CorsLayer::permissive());
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let addr = format!("{}:{}", a.bind, a.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| anyhow!(e))
    })
}
