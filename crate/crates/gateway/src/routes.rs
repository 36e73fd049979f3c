//! HTTP routes.
//!
//! | method | path | operation |
//! |---|---|---|
//! | GET | `/health` | health |
//! | GET | `/instruments` | instruments |
//! | GET | `/portfolios` | list_portfolios |
//! | GET | `/portfolios/{pid}/positions` | list_positions |
//! | POST | `/portfolios/{pid}/positions` | add_position |
//! | DELETE | `/portfolios/{pid}/positions/{instrument}` | delete_position |
//! | POST | `/var-estimate` | var_estimate |
//! | GET | `/olhc/{product}` | olhc (query: interval_ms, from, to, lookback_ms) |
//! | GET | `/volsurface/{underlying}` | volsurface |
//! | POST | `/ticks` | publish |
//! | POST | `/rpc` | any, as an [`ApiRequest`] envelope |
//! | GET | `/ws` | WebSocket streams |
//!
//! The request id comes from the `x-request-id` header (or the envelope's
//! `request_id`) and is generated when absent; it is echoed in the body and
//! the response header.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State, WebSocketUpgrade};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::api::{ApiRequest, ApiResponse, OlhcParams, Operation, PositionPayload};
use crate::error::ApiError;
use crate::service::{dispatch, AppState};
use crate::ws::handle_socket;

const REQUEST_ID: &str = "x-request-id";

type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/instruments", get(instruments))
        .route("/portfolios", get(list_portfolios))
        .route("/portfolios/{pid}/positions", get(list_positions).post(add_position))
        .route("/portfolios/{pid}/positions/{instrument}", delete(delete_position))
        .route("/var-estimate", post(var_estimate))
        .route("/olhc/{product}", get(olhc))
        .route("/volsurface/{underlying}", get(volsurface))
        .route("/ticks", post(publish))
        .route("/rpc", post(rpc))
        .route("/ws", get(ws))
        .with_state(state)
}

fn request_id(headers: &HeaderMap) -> String {
    headers
        .get(REQUEST_ID)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string())
}

fn respond(body: ApiResponse) -> Response {
    let status = StatusCode::from_u16(body.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut res = (status, Json(&body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&body.request_id) {
        res.headers_mut().insert(REQUEST_ID, v);
    }
    res
}

async fn run(state: Arc<AppState>, id: String, name: &str, op: Result<Operation, ApiError>) -> Response {
    let result = match op {
        Ok(op) => dispatch(state, op).await,
        Err(e) => Err(e),
    };
    respond(match result {
        Ok(r) => ApiResponse::success(id, name, r.data, r.timings),
        Err(e) => ApiResponse::failure(id, name, &e),
    })
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn health(State(s): Shared, h: HeaderMap) -> Response {
    run(s, request_id(&h), "health", Ok(Operation::Health)).await
}

async fn instruments(State(s): Shared, h: HeaderMap) -> Response {
    run(s, request_id(&h), "instruments", Ok(Operation::Instruments)).await
}

async fn list_portfolios(State(s): Shared, h: HeaderMap) -> Response {
    run(s, request_id(&h), "list_portfolios", Ok(Operation::ListPortfolios)).await
}

async fn list_positions(State(s): Shared, h: HeaderMap, Path(pid): Path<String>) -> Response {
    run(s, request_id(&h), "list_positions", Ok(Operation::ListPositions { pid })).await
}

async fn add_position(State(s): Shared, h: HeaderMap, Path(pid): Path<String>, b: Bytes) -> Response {
    let op = body::<PositionPayload>(&b).map(|position| Operation::AddPosition { pid, position });
    run(s, request_id(&h), "add_position", op).await
}

async fn delete_position(State(s): Shared, h: HeaderMap, Path((pid, instrument)): Path<(String, String)>) -> Response {
    run(s, request_id(&h), "delete_position", Ok(Operation::DeletePosition { pid, instrument })).await
}

async fn var_estimate(State(s): Shared, h: HeaderMap, b: Bytes) -> Response {
    run(s, request_id(&h), "var_estimate", body(&b).map(Operation::VarEstimate)).await
}

async fn olhc(State(s): Shared, h: HeaderMap, Path(product): Path<String>, Query(q): Query<HashMap<String, String>>) -> Response {
    let mut params = serde_json::Map::new();
    params.insert("product".into(), Value::String(product));
    for (k, v) in q {
        let n: Result<i64, _> = v.parse();
        params.insert(k, n.map(Value::from).unwrap_or(Value::String(v)));
    }
    let op = serde_json::from_value::<OlhcParams>(Value::Object(params))
        .map(Operation::Olhc)
        .map_err(|e| ApiError::BadRequest(e.to_string()));
    run(s, request_id(&h), "olhc", op).await
}

async fn volsurface(State(s): Shared, h: HeaderMap, Path(underlying): Path<String>) -> Response {
    run(s, request_id(&h), "volsurface", Ok(Operation::VolSurface { underlying })).await
}

async fn publish(State(s): Shared, h: HeaderMap, b: Bytes) -> Response {
    run(s, request_id(&h), "publish", body(&b).map(Operation::Publish)).await
}

async fn rpc(State(s): Shared, h: HeaderMap, b: Bytes) -> Response {
    match body::<ApiRequest>(&b) {
        Ok(req) => {
            let id = req.request_id.clone().unwrap_or_else(|| request_id(&h));
            let op = Operation::from_request(&req.operation, req.payload);
            let name = op.as_ref().map(Operation::name).unwrap_or("unknown");
            // Keep the caller's spelling of the operation in the reply.
            let name = if op.is_ok() { name.to_string() } else { req.operation.clone() };
            run(s, id, &name, op).await
        }
        Err(e) => respond(ApiResponse::failure(request_id(&h), "unknown", &e)),
    }
}

async fn ws(State(s): Shared, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| handle_socket(socket, s))
}
