//! Northbound HTTP API over a live emulation. Requests are answered with
//! 503 until bring-up and provisioning have finished.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lightline_core::emu::{FailureInjection, FailureKind};
use lightline_core::oonc::{Lightpath, OoncError, TrafficRequest};
use lightline_core::pipeline::{bring_up, Session};
use serde::{Deserialize, Serialize};

use crate::{load_scenario, runtime, CliError, ServeArgs};

#[derive(Clone, Default)]
pub struct AppState {
    session: Arc<Mutex<Option<Session>>>,
}

impl AppState {
    pub fn pending() -> Self {
        Self::default()
    }

    pub fn ready(session: Session) -> Self {
        let s = Self::default();
        s.install(session);
        s
    }

    pub fn install(&self, session: Session) {
        *self.lock() = Some(session);
    }

    fn lock(&self) -> MutexGuard<'_, Option<Session>> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` on the provisioned session, or answers 503.
    fn with<T: Serialize>(&self, f: impl FnOnce(&mut Session) -> Result<T, ApiError>) -> Response {
        let mut guard = self.lock();
        let Some(session) = guard.as_mut() else {
            return ApiError(StatusCode::SERVICE_UNAVAILABLE, "provisioning in progress".into()).into_response();
        };
        match f(session) {
            Ok(v) => Json(v).into_response(),
            Err(e) => e.into_response(),
        }
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

impl From<OoncError> for ApiError {
    fn from(e: OoncError) -> Self {
        let code = match e {
            OoncError::UnknownRequest(_) => StatusCode::NOT_FOUND,
            OoncError::UnknownNode(_) | OoncError::UnknownLink(_) | OoncError::InvalidRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            OoncError::NotProvisioned => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

#[derive(Debug, Deserialize)]
pub struct NewRequest {
    pub src: String,
    pub dst: String,
    pub rate_gbps: u32,
}

#[derive(Debug, Deserialize)]
pub struct LinkFailure {
    pub link: String,
    #[serde(default)]
    pub span: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RequestView {
    pub request: TrafficRequest,
    pub lightpaths: Vec<Lightpath>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/requests", post(create_request))
        .route("/requests/{id}", get(get_request))
        .route("/topology", get(topology))
        .route("/routing-space", get(routing_space))
        .route("/events/link-failure", post(link_failure))
        .route("/lightpaths", get(lightpaths))
        .with_state(state)
}

async fn create_request(State(st): State<AppState>, Json(body): Json<NewRequest>) -> Response {
    let mut res = st.with(|s| Ok(s.controller.submit_request(&body.src, &body.dst, body.rate_gbps)?));
    if res.status() == StatusCode::OK {
        *res.status_mut() = StatusCode::CREATED;
    }
    res
}

async fn get_request(State(st): State<AppState>, Path(id): Path<String>) -> Response {
    st.with(|s| {
        let ctl = &s.controller;
        let request = ctl.request(&id).cloned().ok_or(OoncError::UnknownRequest(id.clone()))?;
        Ok(RequestView {
            request,
            lightpaths: ctl.lightpaths_of(&id).into_iter().cloned().collect(),
        })
    })
}

async fn topology(State(st): State<AppState>) -> Response {
    st.with(|s| Ok(s.controller.abstraction().cloned().ok_or(OoncError::NotProvisioned)?))
}

async fn routing_space(State(st): State<AppState>) -> Response {
    st.with(|s| Ok(s.controller.routing_space()?))
}

async fn lightpaths(State(st): State<AppState>) -> Response {
    st.with(|s| Ok(s.controller.lightpaths().cloned().collect::<Vec<_>>()))
}

async fn link_failure(State(st): State<AppState>, Json(body): Json<LinkFailure>) -> Response {
    st.with(|s| {
        s.controller
            .abstraction()
            .ok_or(OoncError::NotProvisioned)?
            .link(&body.link)?;
        let at = s.controller.nos().now().map_err(OoncError::from)?;
        s.emulator()
            .inject_failure(FailureInjection {
                link: body.link.clone(),
                kind: FailureKind::FiberCut,
                at,
                span: body.span,
            })
            .map_err(OoncError::from)?;
        s.controller.detect_failures(2)?;
        Ok(s.controller.handle_failure(&body.link)?)
    })
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let scenario = load_scenario(args.common.scenario.as_deref())?;
    let options = args.common.options();
    let data_dir: Option<PathBuf> = args.common.data_dir.clone();
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.bind, args.port)
            .parse()
            .map_err(|e| CliError::Validation(format!("bind address: {e}")))?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| runtime(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{local}");

        let state = AppState::pending();
        let bring = state.clone();
        let setup = tokio::task::spawn_blocking(move || -> Result<(), CliError> {
            let session = bring_up(&scenario, &options).map_err(runtime)?;
            bring.install(session);
            println!("provisioned");
            Ok(())
        });
        let app = router(state.clone());
        let server = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        });
        server.await.map_err(runtime)?;
        setup.await.map_err(runtime)??;

        if let (Some(dir), Some(session)) = (data_dir, state.lock().as_ref()) {
            std::fs::create_dir_all(&dir).map_err(runtime)?;
            let f = std::fs::File::create(dir.join("events.jsonl")).map_err(runtime)?;
            session.log.write_jsonl(std::io::BufWriter::new(f)).map_err(runtime)?;
        }
        Ok(())
    })
}
