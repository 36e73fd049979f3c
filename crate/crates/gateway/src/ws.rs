//! WebSocket streams.
//!
//! Client messages: `{"op":"subscribe","channel":"olhc|volsurface|var","params":{...}}`
//! and `{"op":"unsubscribe","id":n}`. Server frames: `{"channel","seq","data"}`.
//! Each subscription is a task that recomputes its payload every
//! `params.cadence_ms` and pushes it into the connection's bounded queue.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::task::JoinHandle;

use crate::api::{OlhcParams, VarEstimatePayload};
use crate::queue::FrameQueue;
use crate::service::AppState;

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum ClientMessage {
    Subscribe {
        channel: String,
        #[serde(default)]
        params: Value,
    },
    Unsubscribe {
        id: u64,
    },
}

#[derive(Debug, Clone)]
enum Stream {
    Olhc(OlhcParams),
    VolSurface(String),
    Var(VarEstimatePayload),
}

fn take_cadence(params: &mut Value, default_ms: u64) -> Result<Duration, String> {
    let ms = match params.as_object_mut().and_then(|m| m.remove("cadence_ms")) {
        None => default_ms,
        Some(v) => v.as_u64().ok_or("cadence_ms must be a positive integer")?,
    };
    Ok(Duration::from_millis(ms.max(10)))
}

fn parse_stream(channel: &str, params: Value) -> Result<Stream, String> {
    let bad = |e: serde_json::Error| e.to_string();
    match channel {
        "olhc" => serde_json::from_value(params).map(Stream::Olhc).map_err(bad),
        "volsurface" => {
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct P {
                underlying: String,
            }
            serde_json::from_value::<P>(params).map(|p| Stream::VolSurface(p.underlying)).map_err(bad)
        }
        "var" => serde_json::from_value(params).map(Stream::Var).map_err(bad),
        other => Err(format!("unknown channel {other:?}")),
    }
}

fn compute(state: &AppState, s: &Stream) -> Value {
    match s {
        Stream::Olhc(p) => state.olhc(p),
        Stream::VolSurface(u) => state.vol_surface(u),
        Stream::Var(p) => match state.estimate(p) {
            Ok(r) => serde_json::to_value(&r).expect("serializable"),
            Err(e) => json!({ "pid": p.pid, "error": { "code": e.code(), "status": e.status(), "message": e.to_string() } }),
        },
    }
}

fn spawn_producer(state: Arc<AppState>, queue: Arc<FrameQueue>, channel: String, stream: Stream, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            let (st, s) = (state.clone(), stream.clone());
            let Ok(data) = tokio::task::spawn_blocking(move || compute(&st, &s)).await else {
                break;
            };
            queue.push(&channel, data);
        }
    })
}

pub async fn handle_socket(mut socket: WebSocket, state: Arc<AppState>) {
    let queue = Arc::new(FrameQueue::new(state.config.ws_queue_capacity));
    let mut subs: HashMap<u64, JoinHandle<()>> = HashMap::new();
    let mut next_id = 1u64;
    loop {
        tokio::select! {
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(ClientMessage::Subscribe { channel, mut params }) => {
                        let parsed = take_cadence(&mut params, state.config.default_cadence_ms)
                            .and_then(|every| parse_stream(&channel, params).map(|s| (every, s)));
                        match parsed {
                            Ok((every, stream)) => {
                                let id = next_id;
                                next_id += 1;
                                queue.push("subscribed", json!({ "id": id, "channel": channel }));
                                subs.insert(id, spawn_producer(state.clone(), queue.clone(), channel, stream, every));
                            }
                            Err(e) => {
                                queue.push("error", json!({ "message": e }));
                            }
                        }
                    }
                    Ok(ClientMessage::Unsubscribe { id }) => match subs.remove(&id) {
                        Some(h) => {
                            h.abort();
                            queue.push("unsubscribed", json!({ "id": id }));
                        }
                        None => {
                            queue.push("error", json!({ "message": format!("no subscription {id}") }));
                        }
                    },
                    Err(e) => {
                        queue.push("error", json!({ "message": format!("bad message: {e}") }));
                    }
                }
            }
            _ = queue.ready() => {
                let mut failed = false;
                for f in queue.drain() {
                    let text = serde_json::to_string(&f).expect("frames serialize");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        failed = true;
                        break;
                    }
                }
                if failed {
                    break;
                }
            }
        }
    }
    queue.close();
    for (_, h) in subs {
        h.abort();
    }
}
