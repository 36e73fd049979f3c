//! Request and response envelopes.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cryptovar_core::var::{LatencyReport, Stage};
use cryptovar_core::{EpochMillis, Tick};

use crate::error::ApiError;

/// RPC form of every operation: `{"request_id", "operation", "payload"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiRequest {
    #[serde(default)]
    pub request_id: Option<String>,
    pub operation: String,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub status: u16,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiResponse {
    pub request_id: String,
    pub operation: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    /// Server-side stage timings; only on successful VaR responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<LatencyReport>,
}

impl ApiResponse {
    pub fn success(request_id: String, operation: &str, data: Value, timings: Option<LatencyReport>) -> Self {
        ApiResponse {
            request_id,
            operation: operation.to_string(),
            ok: true,
            data: Some(data),
            error: None,
            timings,
        }
    }

    pub fn failure(request_id: String, operation: &str, err: &ApiError) -> Self {
        ApiResponse {
            request_id,
            operation: operation.to_string(),
            ok: false,
            data: None,
            error: Some(ErrorBody {
                code: err.code().to_string(),
                status: err.status(),
                message: err.to_string(),
                stage: err.stage(),
            }),
            timings: None,
        }
    }

    pub fn status(&self) -> u16 {
        self.error.as_ref().map_or(200, |e| e.status)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarEstimatePayload {
    pub pid: String,
    pub confidence: f64,
    pub horizon_days: f64,
    /// Case-insensitive model name; HAR when absent.
    #[serde(default)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionPayload {
    pub instrument: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OlhcParams {
    pub product: String,
    #[serde(default = "default_interval")]
    pub interval_ms: EpochMillis,
    #[serde(default)]
    pub from: Option<EpochMillis>,
    #[serde(default)]
    pub to: Option<EpochMillis>,
    /// Window length when `from` is absent.
    #[serde(default = "default_lookback")]
    pub lookback_ms: EpochMillis,
}

fn default_interval() -> EpochMillis {
    60_000
}

fn default_lookback() -> EpochMillis {
    3_600_000
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Health,
    Instruments,
    ListPortfolios,
    ListPositions { pid: String },
    AddPosition { pid: String, position: PositionPayload },
    DeletePosition { pid: String, instrument: String },
    VarEstimate(VarEstimatePayload),
    Olhc(OlhcParams),
    VolSurface { underlying: String },
    Publish(Vec<Tick>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PidOnly {
    pid: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PidPosition {
    pid: String,
    instrument: String,
    #[serde(default)]
    quantity: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Underlying {
    underlying: String,
}

fn parse<T: serde::de::DeserializeOwned>(payload: Value) -> Result<T, ApiError> {
    serde_json::from_value(payload).map_err(|e| ApiError::BadRequest(e.to_string()))
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Health => "health",
            Operation::Instruments => "instruments",
            Operation::ListPortfolios => "list_portfolios",
            Operation::ListPositions { .. } => "list_positions",
            Operation::AddPosition { .. } => "add_position",
            Operation::DeletePosition { .. } => "delete_position",
            Operation::VarEstimate(_) => "var_estimate",
            Operation::Olhc(_) => "olhc",
            Operation::VolSurface { .. } => "volsurface",
            Operation::Publish(_) => "publish",
        }
    }

    /// Decodes the RPC form.
    pub fn from_request(operation: &str, payload: Value) -> Result<Self, ApiError> {
        Ok(match operation {
            "health" => Operation::Health,
            "instruments" => Operation::Instruments,
            "list_portfolios" => Operation::ListPortfolios,
            "list_positions" => Operation::ListPositions {
                pid: parse::<PidOnly>(payload)?.pid,
            },
            "add_position" => {
                let p: PidPosition = parse(payload)?;
                let quantity = p.quantity.ok_or_else(|| ApiError::BadRequest("missing field `quantity`".into()))?;
                Operation::AddPosition {
                    pid: p.pid,
                    position: PositionPayload {
                        instrument: p.instrument,
                        quantity,
                    },
                }
            }
            "delete_position" => {
                let p: PidPosition = parse(payload)?;
                Operation::DeletePosition {
                    pid: p.pid,
                    instrument: p.instrument,
                }
            }
            "var_estimate" => Operation::VarEstimate(parse(payload)?),
            "olhc" => Operation::Olhc(parse(payload)?),
            "volsurface" => Operation::VolSurface {
                underlying: parse::<Underlying>(payload)?.underlying,
            },
            "publish" => Operation::Publish(parse(payload)?),
            other => return Err(ApiError::BadRequest(format!("unknown operation {other:?}"))),
        })
    }
}
