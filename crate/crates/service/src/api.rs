//! HTTP endpoints and the server-sent event stream.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use futures::{stream, Stream, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;

use crate::engine::{Diagnostic, RtfsService, ServiceEvent, WhatIfError, WhatIfRequest};
use crate::view::{ResultSummary, TransportResult, MAX_TRANSPORT_POINTS};

pub fn router(svc: Arc<RtfsService>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/result/latest", get(latest))
        .route("/result/history", get(history))
        .route("/whatif", post(whatif))
        .route("/stream", get(events))
        .with_state(svc)
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    diagnostics: &'a [Diagnostic],
}

fn error(status: StatusCode, message: &str) -> Response {
    (status, Json(ErrorBody { error: message, diagnostics: &[] })).into_response()
}

async fn status(State(svc): State<Arc<RtfsService>>) -> Response {
    Json(svc.status()).into_response()
}

async fn latest(State(svc): State<Arc<RtfsService>>) -> Response {
    match svc.state().latest.clone() {
        Some(r) => Json(TransportResult::new(&r, MAX_TRANSPORT_POINTS)).into_response(),
        None => error(StatusCode::NOT_FOUND, "no result calculated yet"),
    }
}

#[derive(Debug, Deserialize)]
struct Window {
    from: Option<String>,
    to: Option<String>,
}

fn parse_time(name: &str, v: Option<&str>) -> Result<Option<DateTime<Utc>>, Response> {
    v.map(|s| {
        DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| error(StatusCode::BAD_REQUEST, &format!("`{name}`: {e}")))
    })
    .transpose()
}

async fn history(State(svc): State<Arc<RtfsService>>, Query(w): Query<Window>) -> Response {
    let (from, to) = match (parse_time("from", w.from.as_deref()), parse_time("to", w.to.as_deref())) {
        (Ok(f), Ok(t)) => (f, t),
        (Err(r), _) | (_, Err(r)) => return r,
    };
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return error(StatusCode::BAD_REQUEST, "`from` is after `to`");
        }
    }
    let store = svc.clone();
    let loaded = tokio::task::spawn_blocking(move || store.store().load_history(from, to)).await;
    match loaded {
        Ok(Ok(results)) => Json(results.iter().map(ResultSummary::from).collect::<Vec<_>>()).into_response(),
        Ok(Err(e)) => error(StatusCode::SERVICE_UNAVAILABLE, &format!("results store unavailable: {e}")),
        Err(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "history query failed"),
    }
}

async fn whatif(State(svc): State<Arc<RtfsService>>, body: Bytes) -> Response {
    let req: WhatIfRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, &format!("malformed body: {e}")),
    };
    let run = tokio::task::spawn_blocking(move || svc.whatif(&req)).await;
    match run {
        Ok(Ok(r)) => Json(TransportResult::new(&r, MAX_TRANSPORT_POINTS)).into_response(),
        Ok(Err(WhatIfError::NoBase)) => error(StatusCode::CONFLICT, &WhatIfError::NoBase.to_string()),
        Ok(Err(WhatIfError::Rejected(d))) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(ErrorBody {
                error: "redispatch rejected",
                diagnostics: &d,
            }),
        )
            .into_response(),
        Ok(Err(e @ WhatIfError::Calculation(_))) => error(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
        Err(_) => error(StatusCode::INTERNAL_SERVER_ERROR, "what-if calculation failed"),
    }
}

fn sse(event: &ServiceEvent) -> Event {
    let (name, data) = match event {
        ServiceEvent::Status(s) => ("status", json!(s)),
        ServiceEvent::Result(r) => ("result", json!(r)),
    };
    Event::default().event(name).data(data.to_string())
}

async fn events(State(svc): State<Arc<RtfsService>>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    // subscribe first so nothing published after the initial status is lost
    let rx = svc.subscribe();
    let first = sse(&ServiceEvent::Status(svc.status()));
    let rest = BroadcastStream::new(rx).filter_map(|m| async move { m.ok().map(|e| sse(&e)) });
    Sse::new(stream::once(async move { first }).chain(rest).map(Ok)).keep_alive(KeepAlive::default())
}
