//! HTTP API.
//!
//! | route                          | body                                                      |
//! |--------------------------------|-----------------------------------------------------------|
//! | `GET  /api/health`             |                                                           |
//! | `GET  /api/models`             |                                                           |
//! | `POST /api/generate`           | `{model, labels, seed?}`                                  |
//! | `POST /api/optimize`           | `{model, labels, z?, constraints?, options?, stream?, run_id?}` |
//! | `GET  /api/runs`               |                                                           |
//! | `GET  /api/runs/{id}`          |                                                           |
//! | `POST /api/runs/{id}/resume`   | `{constraints?, options?, stream?, run_id?}`              |
//!
//! Optimize responses are the solve report with a `run_id` field added. With
//! `stream: true` the response is newline-delimited JSON: one
//! `{"event": "snapshot", "iteration": ...}` line per outer iteration, then
//! `{"event": "final", "run_id": ..., "report": ...}`.

use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use latentlayout::constraints::{Constraint, ConstraintSet};
use latentlayout::net::{GeneratorHandle, LatentCodes};
use latentlayout::optim::{clg_lo_solve_with, SolveOptions, SolveReport};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{AppError, FieldErrors, Result};
use crate::model::ModelRegistry;
use crate::request::{resolve_labels, validate_solve, Fields, LabelToken, SolveRequest};
use crate::store::{new_run_id, valid_run_id, RunRecord, RunStore};

#[derive(Debug)]
pub struct AppState {
    pub store: RunStore,
    pub models: ModelRegistry,
    pub workspace: PathBuf,
}

impl AppState {
    /// Opens (creating if needed) `workspace/runs` and `workspace/models`.
    pub fn open(workspace: impl Into<PathBuf>) -> Result<Arc<Self>> {
        let workspace = workspace.into();
        let models = workspace.join("models");
        std::fs::create_dir_all(&models)
            .map_err(|e| AppError::io(format!("creating {}", models.display()), e))?;
        Ok(Arc::new(AppState {
            store: RunStore::open(&workspace)?,
            models: ModelRegistry::new(models),
            workspace,
        }))
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let (status, body) = match &self {
            AppError::Fields(fields) => (
                StatusCode::BAD_REQUEST,
                json!({"error": "validation failed", "fields": fields}),
            ),
            AppError::NotFound(_) => (StatusCode::NOT_FOUND, json!({"error": self.to_string()})),
            AppError::Conflict(_) => (StatusCode::CONFLICT, json!({"error": self.to_string()})),
            e if e.is_client_error() => {
                (StatusCode::BAD_REQUEST, json!({"error": self.to_string()}))
            }
            _ => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({"error": self.to_string()}),
            ),
        };
        (status, Json(body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/models", get(models))
        .route("/api/generate", post(generate))
        .route("/api/optimize", post(optimize))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/resume", post(resume))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::io("solver task", std::io::Error::other(e.to_string())))?
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}))
}

async fn models(State(state): State<Arc<AppState>>) -> Result<Json<Value>> {
    let list = blocking(move || Ok(state.models.list())).await?;
    Ok(Json(json!({ "models": list })))
}

async fn load_model(state: &Arc<AppState>, id: String) -> Result<(String, Arc<GeneratorHandle>)> {
    let state = state.clone();
    blocking(move || {
        let (r, h) = state.models.get(&id)?;
        Ok((r.descriptor(), h))
    })
    .await
}

fn model_field(fields: &mut Fields) -> Result<String> {
    let mut errors = FieldErrors::default();
    let model = fields.required::<String>("model", &mut errors);
    errors.finish()?;
    Ok(model.expect("checked"))
}

#[derive(Serialize)]
struct Generated {
    layout: latentlayout::layout::Layout,
    z: LatentCodes,
}

async fn generate(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Generated>> {
    let mut fields = Fields::new(&body, &["model", "labels", "seed"])?;
    let model = model_field(&mut fields)?;
    let (_, handle) = load_model(&state, model).await?;
    let mut errors = FieldErrors::default();
    let tokens: Option<Vec<LabelToken>> = fields.required("labels", &mut errors);
    let seed: u64 = fields.optional("seed", &mut errors).unwrap_or(0);
    let labels = tokens.map(|t| resolve_labels(&t, handle.vocab(), &mut errors));
    if labels.as_ref().is_some_and(|l| l.len() > latentlayout::layout::DEFAULT_MAX_ELEMENTS) {
        errors.add("labels", "too many labels");
    }
    errors.finish()?;
    let labels = labels.expect("checked");
    let (layout, z) = handle.sample(&labels, seed)?;
    Ok(Json(Generated { layout, z }))
}

struct Job {
    request: SolveRequest,
    model_ref: String,
    handle: Arc<GeneratorHandle>,
    parent: Option<String>,
    run_id: String,
    stream: bool,
}

fn requested_run_id(state: &AppState, fields: &mut Fields, errors: &mut FieldErrors) -> String {
    match fields.optional::<String>("run_id", errors) {
        Some(id) if !valid_run_id(&id) || id == "index" => {
            errors.add("run_id", "run ids use 1-64 characters from [A-Za-z0-9_-]");
            id
        }
        Some(id) => id,
        None => loop {
            let id = new_run_id();
            if !state.store.exists(&id) {
                break id;
            }
        },
    }
}

async fn optimize(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response> {
    let mut fields = Fields::new(
        &body,
        &["model", "labels", "z", "constraints", "options", "stream", "run_id"],
    )?;
    let model = model_field(&mut fields)?;
    let (model_ref, handle) = load_model(&state, model.clone()).await?;
    let mut errors = FieldErrors::default();
    let tokens: Option<Vec<LabelToken>> = fields.required("labels", &mut errors);
    let z: Option<LatentCodes> = fields.optional("z", &mut errors);
    let constraints: ConstraintSet = fields.optional("constraints", &mut errors).unwrap_or_default();
    let options: SolveOptions = fields.optional("options", &mut errors).unwrap_or_default();
    let stream = fields.optional::<bool>("stream", &mut errors).unwrap_or(false);
    let run_id = requested_run_id(&state, &mut fields, &mut errors);
    let labels = tokens
        .map(|t| resolve_labels(&t, handle.vocab(), &mut errors))
        .unwrap_or_default();
    if errors.is_empty() {
        validate_solve(&handle, &labels, z.as_ref(), &constraints, &options, &mut errors);
    }
    errors.finish()?;
    let request = SolveRequest {
        model,
        labels,
        z,
        constraints,
        options,
    };
    run_job(
        state,
        Job {
            request,
            model_ref,
            handle,
            parent: None,
            run_id,
            stream,
        },
    )
    .await
}

async fn resume(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response> {
    let parent = {
        let state = state.clone();
        let id = id.clone();
        blocking(move || state.store.get(&id)).await?
    };
    let body = if body.is_empty() { Bytes::from_static(b"{}") } else { body };
    let mut fields = Fields::new(&body, &["constraints", "options", "stream", "run_id"])?;
    let (model_ref, handle) = load_model(&state, parent.request.model.clone()).await?;
    let mut errors = FieldErrors::default();
    let extra: Vec<Constraint> = match fields.optional::<Value>("constraints", &mut errors) {
        None => Vec::new(),
        Some(v) => {
            let parsed = serde_json::from_value::<ConstraintSet>(v).map(|s| s.constraints);
            errors.take("constraints", parsed).unwrap_or_default()
        }
    };
    let options: SolveOptions = fields
        .optional("options", &mut errors)
        .unwrap_or_else(|| parent.request.options.clone());
    let stream = fields.optional::<bool>("stream", &mut errors).unwrap_or(false);
    let run_id = requested_run_id(&state, &mut fields, &mut errors);

    let mut constraints = parent.request.constraints.clone();
    let offset = constraints.len();
    constraints.extend(extra);
    let z = Some(parent.report.final_state.z.clone());
    let labels = parent.request.labels.clone();
    if errors.is_empty() {
        let mut check = FieldErrors::default();
        validate_solve(&handle, &labels, z.as_ref(), &constraints, &options, &mut check);
        // Report extra constraints under their position in the request body.
        if let Err(AppError::Fields(map)) = check.finish() {
            for (k, v) in map {
                let key = match k
                    .strip_prefix("constraints[")
                    .and_then(|r| r.strip_suffix(']'))
                    .and_then(|i| i.parse::<usize>().ok())
                {
                    Some(i) if i >= offset => format!("constraints[{}]", i - offset),
                    _ => k,
                };
                errors.add(key, v);
            }
        }
    }
    errors.finish()?;
    let request = SolveRequest {
        model: parent.request.model.clone(),
        labels,
        z,
        constraints,
        options,
    };
    run_job(
        state,
        Job {
            request,
            model_ref,
            handle,
            parent: Some(id),
            run_id,
            stream,
        },
    )
    .await
}

/// Solves a validated request and persists the run.
pub fn execute(
    handle: &GeneratorHandle,
    request: &SolveRequest,
    on_iteration: impl FnMut(&latentlayout::optim::OuterIteration) -> latentlayout::Result<()>,
) -> latentlayout::Result<SolveReport> {
    clg_lo_solve_with(
        handle,
        &request.labels,
        &request.constraints,
        &request.options,
        request.z.clone(),
        on_iteration,
    )
}

fn report_body(run_id: &str, report: &SolveReport) -> Value {
    let mut v = serde_json::to_value(report).expect("reports serialize");
    v.as_object_mut()
        .expect("report is an object")
        .insert("run_id".into(), Value::String(run_id.to_string()));
    v
}

async fn run_job(state: Arc<AppState>, job: Job) -> Result<Response> {
    if state.store.exists(&job.run_id) {
        return Err(AppError::Conflict(format!("run `{}` already exists", job.run_id)));
    }
    if !job.stream {
        let record = blocking(move || {
            let report = execute(&job.handle, &job.request, |_| Ok(()))?;
            let record = RunRecord {
                run_id: job.run_id,
                created_at: Utc::now(),
                model_ref: job.model_ref,
                parent: job.parent,
                request: job.request,
                report,
            };
            state.store.insert(&record)?;
            Ok(record)
        })
        .await?;
        return Ok(Json(report_body(&record.run_id, &record.report)).into_response());
    }

    let (tx, rx) = tokio::sync::mpsc::channel::<String>(8);
    tokio::task::spawn_blocking(move || {
        let line = |v: Value| format!("{v}\n");
        let result = execute(&job.handle, &job.request, |it| {
            tx.blocking_send(line(json!({"event": "snapshot", "iteration": it})))
                .map_err(|_| latentlayout::Error::Validation("client disconnected".into()))
        })
        .map_err(AppError::from)
        .and_then(|report| {
            let record = RunRecord {
                run_id: job.run_id.clone(),
                created_at: Utc::now(),
                model_ref: job.model_ref,
                parent: job.parent,
                request: job.request,
                report,
            };
            state.store.insert(&record)?;
            Ok(record)
        });
        let last = match result {
            Ok(record) => json!({"event": "final", "run_id": record.run_id, "report": record.report}),
            Err(e) => json!({"event": "error", "error": e.to_string()}),
        };
        let _ = tx.blocking_send(line(last));
    });
    let body = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|l| (Ok::<_, Infallible>(l), rx))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(body),
    )
        .into_response())
}

async fn list_runs(State(state): State<Arc<AppState>>) -> Result<Json<Value>> {
    let runs = blocking(move || state.store.list()).await?;
    Ok(Json(json!({ "runs": runs })))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<RunRecord>> {
    Ok(Json(blocking(move || state.store.get(&id)).await?))
}

/// Binds `addr` and serves until the process exits.
pub async fn serve(state: Arc<AppState>, addr: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::io(format!("binding {addr}"), e))?;
    let local = listener
        .local_addr()
        .map_err(|e| AppError::io("reading bound address", e))?;
    eprintln!(
        "serving on http://{local} (workspace {})",
        state.workspace.display()
    );
    axum::serve(listener, router(state))
        .await
        .map_err(|e| AppError::io("serving", e))
}
