//! JSON-over-HTTP service for the dashboard. Reads open the workspace per
//! request; mutations go through [`Workspace::transact`] with the client's
//! `If-Match` version.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use riskcore::hazard_log::Stamp;
use riskcore::ontology::{MeasureProposal, RiskValue, SeverityClass};
use riskcore::quantity::{EventsPerHour, Exact, Probability};
use riskcore::rmc::{hazard_log_report, latest_verdicts};
use riskcore::treatment::{predicted_residual, ResidualModel};
use riskcore::workspace::{Mutation, Workspace};
use riskcore::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

const VERSION_HEADER: &str = "x-workspace-version";
const DASHBOARD: &str = include_str!("dashboard.html");

struct AppState {
    root: PathBuf,
    /// Serializes writers of this process; other processes meet the
    /// workspace lock file instead.
    writer: Mutex<()>,
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": msg.into() }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Validation(report) => {
                return ApiError {
                    status: StatusCode::UNPROCESSABLE_ENTITY,
                    body: serde_json::to_value(report).unwrap_or(Value::Null),
                }
            }
            Error::Locked(_)
            | Error::VersionConflict { .. }
            | Error::Precondition(_)
            | Error::IllegalTransition(_)
            | Error::MissingInputs(_)
            | Error::NotAccepted => StatusCode::CONFLICT,
            Error::Io { .. } | Error::Json { .. } | Error::NotAWorkspace(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError {
            status,
            body: json!({ "error": e.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// A JSON body tagged with the workspace version it reflects.
struct Versioned<T>(u64, T);

impl<T: Serialize> IntoResponse for Versioned<T> {
    fn into_response(self) -> Response {
        let mut res = Json(self.1).into_response();
        set_version(res.headers_mut(), self.0);
        res
    }
}

fn set_version(h: &mut HeaderMap, version: u64) {
    h.insert(header::ETAG, HeaderValue::from_str(&format!("\"{version}\"")).expect("ascii"));
    h.insert(VERSION_HEADER, HeaderValue::from(version));
}

type ApiResult<T> = Result<Versioned<T>, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: json!({ "error": e.to_string() }),
    })?
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid payload: {e}")))
}

/// Accepts `5`, `"5"` and `W/"5"`.
fn if_match(headers: &HeaderMap) -> Result<u64, ApiError> {
    let raw = headers
        .get(header::IF_MATCH)
        .ok_or_else(|| ApiError::bad_request("If-Match with the workspace version is required"))?;
    let text = raw.to_str().unwrap_or_default().trim();
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse()
        .map_err(|_| ApiError::bad_request(format!("If-Match `{text}` is not a workspace version")))
}

async fn read<T: Serialize + Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&Workspace) -> T + Send + 'static,
) -> ApiResult<T> {
    let root = state.root.clone();
    blocking(move || {
        let ws = Workspace::open(&root)?;
        Ok(Versioned(ws.version(), f(&ws)))
    })
    .await
}

async fn mutate(state: &Shared, headers: &HeaderMap, mutation: Mutation) -> ApiResult<Value> {
    let expected = if_match(headers)?;
    let _guard = state.writer.lock().await;
    let root = state.root.clone();
    blocking(move || {
        let mut ws = Workspace::open(&root)?;
        let c = ws.transact(Some(expected), mutation, &Stamp::now("http"))?;
        let body = serde_json::to_value(&c.outcome).map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(Versioned(c.version, body))
    })
    .await
}

async fn hazard_log(State(s): State<Shared>) -> impl IntoResponse {
    read(&s, |ws| hazard_log_report(ws.project())).await
}

async fn reports(State(s): State<Shared>) -> impl IntoResponse {
    read(&s, |ws| ws.report()).await
}

#[derive(Serialize)]
struct SpecBody {
    spec_version: u64,
    text: String,
}

async fn spec(State(s): State<Shared>) -> impl IntoResponse {
    read(&s, |ws| SpecBody {
        spec_version: ws.model().spec.version,
        text: riskcore::dsl::serialize_spec(&ws.model().spec),
    })
    .await
}

async fn verdicts(State(s): State<Shared>) -> impl IntoResponse {
    read(&s, |ws| latest_verdicts(ws.project())).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRequest {
    proposal: MeasureProposal,
    #[serde(default)]
    apply: bool,
}

async fn measures(State(s): State<Shared>, headers: HeaderMap, body: Bytes) -> impl IntoResponse {
    let req: MeasureRequest = parse(&body)?;
    let mutation = Mutation::ProposeMeasure {
        proposal: req.proposal,
        apply: req.apply,
    };
    mutate(&s, &headers, mutation).await
}

async fn iterate(State(s): State<Shared>, headers: HeaderMap) -> impl IntoResponse {
    mutate(&s, &headers, Mutation::Step).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIf {
    initial: Exact,
    effectiveness: Exact,
    integrity: Exact,
    #[serde(default)]
    corrupt: Exact,
    #[serde(default)]
    min: Exact,
    #[serde(default = "default_severity")]
    severity: SeverityClass,
}

fn default_severity() -> SeverityClass {
    SeverityClass::S3
}

#[derive(Serialize)]
struct WhatIfBody {
    residual: Exact,
    residual_f64: f64,
    severity_class: SeverityClass,
}

fn residual_of(w: WhatIf) -> Result<WhatIfBody, Error> {
    let r = predicted_residual(&ResidualModel {
        initial: RiskValue {
            rate: EventsPerHour::new(w.initial)?,
            severity_class: w.severity,
        },
        minimum_achievable_rate: EventsPerHour::new(w.min)?,
        reduction_effectiveness: Probability::new(w.effectiveness)?,
        integrity: Probability::new(w.integrity)?,
        corrupt_risk_rate: EventsPerHour::new(w.corrupt)?,
    });
    Ok(WhatIfBody {
        residual_f64: r.rate.value().to_f64(),
        residual: r.rate.value().clone(),
        severity_class: r.severity_class,
    })
}

/// Residual preview. Reads only the version; never writes.
async fn whatif(State(s): State<Shared>, body: Bytes) -> Result<Versioned<WhatIfBody>, ApiError> {
    let w: WhatIf = parse(&body)?;
    let out = residual_of(w).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let Versioned(version, ()) = read(&s, |_| ()).await?;
    Ok(Versioned(version, out))
}

async fn dashboard() -> Html<&'static str> {
    Html(DASHBOARD)
}

/// Stamps error responses with the current version too.
async fn version_headers(State(s): State<Shared>, req: Request, next: Next) -> Response {
    let mut res = next.run(req).await;
    if !res.headers().contains_key(VERSION_HEADER) {
        let root = s.root.clone();
        let version = tokio::task::spawn_blocking(move || Workspace::open(&root).map(|ws| ws.version()))
            .await
            .ok()
            .and_then(Result::ok);
        if let Some(v) = version {
            set_version(res.headers_mut(), v);
        }
    }
    res
}

pub fn router(root: PathBuf) -> Router {
    let state = Arc::new(AppState {
        root,
        writer: Mutex::new(()),
    });
    Router::new()
        .route("/", get(dashboard))
        .route("/api/hazard-log", get(hazard_log))
        .route("/api/reports", get(reports))
        .route("/api/spec", get(spec))
        .route("/api/verdicts", get(verdicts))
        .route("/api/measures", post(measures))
        .route("/api/iterate", post(iterate))
        .route("/api/whatif", post(whatif))
        .layer(middleware::from_fn_with_state(state.clone(), version_headers))
        .with_state(state)
}

pub async fn serve(root: PathBuf, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("serving {} on http://{}", root.display(), listener.local_addr()?);
    axum::serve(listener, router(root)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn headers(v: &str) -> HeaderMap {
        let mut h = HeaderMap::new();
        h.insert(header::IF_MATCH, HeaderValue::from_str(v).unwrap());
        h
    }

    #[test]
    fn if_match_forms() {
        assert_eq!(if_match(&headers("4")).unwrap(), 4);
        assert_eq!(if_match(&headers("\"4\"")).unwrap(), 4);
        assert_eq!(if_match(&headers("W/\"4\"")).unwrap(), 4);
        assert_eq!(if_match(&headers("*")).unwrap_err().status, StatusCode::BAD_REQUEST);
        assert_eq!(if_match(&HeaderMap::new()).unwrap_err().status, StatusCode::BAD_REQUEST);
    }

    #[test]
    fn error_statuses() {
        let status = |e: Error| ApiError::from(e).status;
        assert_eq!(status(Error::Locked("w".into())), StatusCode::CONFLICT);
        assert_eq!(status(Error::VersionConflict { expected: 1, found: 2 }), StatusCode::CONFLICT);
        assert_eq!(status(Error::Validation(Default::default())), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(status(Error::UnknownEntity("x".into())), StatusCode::BAD_REQUEST);
    }
}
