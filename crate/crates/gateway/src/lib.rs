//! Network and operator surface of the VaR engine: a JSON HTTP API for
//! portfolios and VaR requests, WebSocket streams of candles, volatility
//! surfaces and pinned-portfolio VaR, and the latency bench harness used by
//! the `cryptovar` CLI.

pub mod api;
pub mod bench;
mod error;
pub mod queue;
pub mod routes;
pub mod service;
pub mod snapshot;
pub mod ws;

pub use api::{ApiRequest, ApiResponse, ErrorBody, Operation};
pub use error::ApiError;
pub use routes::router;
pub use service::{AppState, GatewayConfig};
