//! HTTP/JSON interface to design runs.
//!
//! One process serves every run under a store directory. Mutations of a run
//! are serialized through its slot; `advance` runs on a blocking worker and
//! is polled through the `busy` field of `GET /runs/{id}/state`. Reads come
//! from the run's materialised `state.json` and never take the run lock.

mod error;
pub mod views;

use std::collections::HashMap;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use foilset_core::geometry::{export_coordinates, export_obj, generate_airfoil, Spacing, DEFAULT_SURFACE_POINTS};
use foilset_core::pipeline::pca::project_pca2;
use foilset_core::pipeline::run::{EventKind, RunState, StepSummary};
use foilset_core::pipeline::store::{RunDir, RunStore};
use foilset_core::pipeline::{run_report, ReviewDecision, RunConfig};
use foilset_core::sampling::{DesignCandidate, DesignId};

pub use error::{ApiError, ApiResult, ErrorBody};
use views::*;

/// Port used when `FOILSET_PORT` is unset.
pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "FOILSET_PORT";
/// Actor recorded for mutations that do not name one.
pub const API_ACTOR: &str = "api";

#[derive(Default)]
struct RunSlot {
    dir: Mutex<Option<RunDir>>,
    busy: AtomicBool,
    last: Mutex<(Option<StepSummary>, Option<String>)>,
}

/// Clears the slot's busy flag when dropped.
struct BusyGuard(Arc<RunSlot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::SeqCst);
    }
}

impl RunSlot {
    fn claim(self: &Arc<Self>) -> ApiResult<BusyGuard> {
        self.busy
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .map(|_| BusyGuard(self.clone()))
            .map_err(|_| ApiError::busy("another mutation of this run is in progress"))
    }

    /// Runs `f` on the open run directory, opening it on first use.
    fn with_dir<T>(
        &self,
        store: &RunStore,
        id: &str,
        f: impl FnOnce(&mut RunDir) -> foilset_core::Result<T>,
    ) -> ApiResult<T> {
        let mut guard = self.dir.lock().expect("run slot poisoned");
        if guard.is_none() {
            *guard = Some(store.open(id)?);
        }
        Ok(f(guard.as_mut().expect("opened"))?)
    }
}

#[derive(Clone)]
pub struct AppState {
    store: RunStore,
    slots: Arc<Mutex<HashMap<String, Arc<RunSlot>>>>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> foilset_core::Result<Self> {
        Ok(Self {
            store: RunStore::new(root)?,
            slots: Arc::default(),
        })
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<RunSlot>> {
        let mut slots = self.slots.lock().expect("slot table poisoned");
        if let Some(s) = slots.get(id) {
            return Ok(s.clone());
        }
        if !self.store.list()?.iter().any(|r| r == id) {
            return Err(ApiError::not_found(format!("run '{id}'")));
        }
        Ok(slots.entry(id.to_string()).or_default().clone())
    }

    fn is_busy(&self, id: &str) -> bool {
        self.slots
            .lock()
            .expect("slot table poisoned")
            .get(id)
            .is_some_and(|s| s.busy.load(Ordering::SeqCst))
    }

    fn read(&self, id: &str) -> ApiResult<RunState> {
        Ok(self.store.state(id)?)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}/state", get(get_state))
        .route("/runs/{id}/advance", post(advance))
        .route("/runs/{id}/candidates", get(list_candidates))
        .route("/runs/{id}/candidates/{cid}", get(get_candidate))
        .route("/runs/{id}/candidates/{cid}/geometry.dat", get(geometry_dat))
        .route("/runs/{id}/candidates/{cid}/geometry.obj", get(geometry_obj))
        .route("/runs/{id}/decisions", post(post_decision))
        .route("/runs/{id}/iterate", post(iterate))
        .route("/runs/{id}/converge", post(converge))
        .route("/runs/{id}/report", get(get_report))
        .route("/runs/{id}/sensitivity", get(get_sensitivity))
        .with_state(state)
}

/// Loopback address on `FOILSET_PORT`, or the default port.
pub fn default_addr() -> Result<SocketAddr, String> {
    let port = match std::env::var(PORT_ENV) {
        Ok(v) => v.parse::<u16>().map_err(|e| format!("{PORT_ENV}='{v}': {e}"))?,
        Err(_) => DEFAULT_PORT,
    };
    Ok(SocketAddr::from((Ipv4Addr::LOCALHOST, port)))
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(root: impl Into<PathBuf>, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(root).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn list_runs(State(app): State<AppState>) -> ApiResult<Json<Vec<RunSummary>>> {
    let ids = app.store.list()?;
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let st = app.read(&id)?;
        out.push(RunSummary::new(&id, &st, app.is_busy(&id)));
    }
    Ok(Json(out))
}

async fn create_run(
    State(app): State<AppState>,
    body: Result<Json<RunConfig>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(config) = body?;
    let (id, dir) = blocking({
        let app = app.clone();
        move || Ok(app.store.create(config, API_ACTOR)?)
    })
    .await?;
    let run = RunSummary::new(&id, dir.state(), false);
    let slot = RunSlot {
        dir: Mutex::new(Some(dir)),
        ..RunSlot::default()
    };
    app.slots
        .lock()
        .expect("slot table poisoned")
        .insert(id.clone(), Arc::new(slot));
    Ok((StatusCode::CREATED, Json(Created { id, run })))
}

async fn get_state(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StateView>> {
    let st = app.read(&id)?;
    let (busy, last) = match app.slots.lock().expect("slot table poisoned").get(&id) {
        Some(s) => (
            s.busy.load(Ordering::SeqCst),
            s.last.lock().expect("slot poisoned").clone(),
        ),
        None => (false, (None, None)),
    };
    Ok(Json(StateView::new(&id, &st, busy, last.0, last.1)))
}

#[derive(Debug, Deserialize)]
struct AdvanceQuery {
    #[serde(default)]
    wait: bool,
}

/// Starts the next phase. Returns 202 at once, or 200 with the step summary
/// when `?wait=true`.
async fn advance(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<AdvanceQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let slot = app.slot(&id)?;
    let guard = slot.claim()?;
    let phase = slot.with_dir(&app.store, &id, |run| {
        run.engine().check(&EventKind::Advance)?;
        Ok(run.state().next_phase)
    })?;
    let task = {
        let (app, id, slot) = (app.clone(), id.clone(), slot.clone());
        move || {
            let _guard = guard;
            let out = slot.with_dir(&app.store, &id, |run| run.commit(EventKind::Advance, API_ACTOR));
            let mut last = slot.last.lock().expect("slot poisoned");
            *last = match &out {
                Ok(s) => (Some(s.clone()), None),
                Err(e) => (last.0.clone(), Some(e.body.message.clone())),
            };
            out
        }
    };
    if q.wait {
        let summary = blocking(task).await?;
        return Ok(Json(summary).into_response());
    }
    tokio::task::spawn_blocking(task);
    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted {
            id,
            accepted: true,
            phase,
        }),
    )
        .into_response())
}

async fn mutate(app: AppState, id: String, kind: EventKind) -> ApiResult<StepSummary> {
    let slot = app.slot(&id)?;
    let guard = slot.claim()?;
    blocking(move || {
        let _guard = guard;
        let out = slot.with_dir(&app.store, &id, |run| run.commit(kind, API_ACTOR));
        if let Ok(s) = &out {
            *slot.last.lock().expect("slot poisoned") = (Some(s.clone()), None);
        }
        out
    })
    .await
}

async fn iterate(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StepSummary>> {
    Ok(Json(mutate(app, id, EventKind::Iterate).await?))
}

async fn converge(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StepSummary>> {
    Ok(Json(mutate(app, id, EventKind::Converge).await?))
}

async fn post_decision(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ReviewDecision>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<DecisionReceipt>)> {
    let Json(decision) = body?;
    let cid = decision.candidate.clone();
    let slot = app.slot(&id)?;
    let guard = slot.claim()?;
    let receipt = blocking(move || {
        let _guard = guard;
        slot.with_dir(&app.store, &id, |run| {
            let s = run.commit(EventKind::Decision { decision }, API_ACTOR)?;
            let m = run
                .state()
                .current_set()
                .and_then(|set| set.get(&cid))
                .expect("decided member exists");
            Ok(DecisionReceipt {
                seq: s.seq,
                candidate: cid.to_string(),
                status: m.status,
                verdict: m.evaluations.verdict.clone(),
            })
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(receipt)))
}

#[derive(Debug, Deserialize)]
struct StageQuery {
    stage: Option<usize>,
}

async fn list_candidates(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<StageQuery>, QueryRejection>,
) -> ApiResult<Json<CandidateList>> {
    let Query(q) = query?;
    let st = app.read(&id)?;
    let rec = match q.stage {
        Some(k) => st.stage(k).ok_or_else(|| ApiError::not_found(format!("stage {k}")))?,
        None => st
            .current()
            .ok_or_else(|| ApiError::not_found("run has no stages yet"))?,
    };
    Ok(Json(CandidateList {
        stage: rec.index,
        name: rec.name.clone(),
        candidates: rec.set.members.iter().map(CandidateRow::from).collect(),
        removed: rec.removed.iter().map(CandidateRow::from).collect(),
    }))
}

fn find(st: &RunState, cid: &str) -> ApiResult<(usize, DesignCandidate)> {
    st.find_candidate(&DesignId(cid.to_string()))
        .map(|(k, c)| (k, c.clone()))
        .ok_or_else(|| ApiError::not_found(format!("candidate '{cid}'")))
}

fn in_latest(st: &RunState, cid: &str) -> bool {
    st.current_set()
        .is_some_and(|s| s.get(&DesignId(cid.to_string())).is_some())
}

async fn get_candidate(
    State(app): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
) -> ApiResult<Json<CandidateDetail>> {
    let st = app.read(&id)?;
    let (stage, c) = find(&st, &cid)?;
    let geom = generate_airfoil(&c.cst(), DEFAULT_SURFACE_POINTS, Spacing::Cosine)?;
    let sets: Vec<_> = st
        .stages
        .iter()
        .filter(|s| s.name != "generate")
        .map(|s| &s.set)
        .collect();
    let pca = project_pca2(&sets).and_then(|p| p.point(&c.id));
    let e = c.evaluations;
    Ok(Json(CandidateDetail {
        in_latest_set: in_latest(&st, &cid),
        id: c.id.to_string(),
        stage,
        status: c.status,
        params: c.params.to_vec(),
        param_names: st.config.design_space.names().iter().map(|s| s.to_string()).collect(),
        lineage: c.lineage,
        outline: geom.outline,
        prediction: e.prediction,
        utility: e.utility,
        risk: e.risk,
        cp: e.cp,
        benchmark_cp: st.benchmark_cp.clone(),
        rating: e.rating,
        assessment: e.assessment,
        verdict: e.verdict,
        error: e.error,
        pca,
    }))
}

fn latest_geometry(app: &AppState, id: &str, cid: &str) -> ApiResult<foilset_core::geometry::AirfoilGeometry> {
    let st = app.read(id)?;
    if !in_latest(&st, cid) {
        return Err(ApiError::not_found(format!(
            "candidate '{cid}' is not in the current set"
        )));
    }
    let (_, c) = find(&st, cid)?;
    Ok(generate_airfoil(&c.cst(), DEFAULT_SURFACE_POINTS, Spacing::Cosine)?)
}

async fn geometry_dat(State(app): State<AppState>, Path((id, cid)): Path<(String, String)>) -> ApiResult<Response> {
    let g = latest_geometry(&app, &id, &cid)?;
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        export_coordinates(&g, &cid),
    )
        .into_response())
}

async fn geometry_obj(State(app): State<AppState>, Path((id, cid)): Path<(String, String)>) -> ApiResult<Response> {
    let g = latest_geometry(&app, &id, &cid)?;
    let obj = export_obj(&g, 1.0)?;
    Ok(([(header::CONTENT_TYPE, "model/obj")], obj).into_response())
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn get_report(
    State(app): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = query?;
    let report = run_report(&app.read(&id)?);
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("md" | "markdown") => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            report.to_markdown(),
        )
            .into_response()),
        Some(f) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid",
            format!("unknown format '{f}'"),
        )),
    }
}

async fn get_sensitivity(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let st = app.read(&id)?;
    let rep = st
        .sensitivity
        .ok_or_else(|| ApiError::not_found("sensitivity analysis has not run yet"))?;
    Ok(Json(rep).into_response())
}
