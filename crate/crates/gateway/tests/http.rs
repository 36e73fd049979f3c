use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

use cryptovar_core::var::{estimate_var, Model, VarRequest};
use cryptovar_core::Tick;
use cryptovar_gateway::bench::{self, BenchSetup};
use cryptovar_gateway::{router, AppState, GatewayConfig};
use cryptovar_tick::TickEngine;

struct Server {
    base: String,
    ws: String,
    state: Arc<AppState>,
}

async fn serve(engine: Arc<TickEngine>) -> Server {
    let config = GatewayConfig {
        default_cadence_ms: 50,
        ..GatewayConfig::default()
    };
    let state = AppState::new(engine, config);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        ws: format!("ws://{addr}/ws"),
        state,
    }
}

fn market() -> BenchSetup {
    bench::setup(17, 11).unwrap()
}

async fn post(c: &reqwest::Client, url: String, body: Value) -> (u16, Value) {
    let r = c.post(url).json(&body).send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn get(c: &reqwest::Client, url: String) -> (u16, Value) {
    let r = c.get(url).send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn var_estimate_over_http_matches_the_library() {
    let setup = market();
    let srv = serve(setup.engine.clone()).await;
    let c = reqwest::Client::new();
    let (a, b) = (&setup.universe[0].id, &setup.universe[700].id);
    for (inst, q) in [(a, 2.0), (b, 3.0)] {
        let (s, body) = post(&c, format!("{}/portfolios/p1/positions", srv.base), json!({"instrument": inst, "quantity": q})).await;
        assert_eq!(s, 200, "{body}");
    }
    let (s, body) = get(&c, format!("{}/portfolios/p1/positions", srv.base)).await;
    assert_eq!(s, 200);
    assert_eq!(body["data"]["positions"].as_array().unwrap().len(), 2);

    let r = c
        .post(format!("{}/var-estimate", srv.base))
        .header("x-request-id", "req-42")
        .json(&json!({"pid": "p1", "confidence": 0.99, "horizon_days": 1.0, "model": "ewma"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert_eq!(r.headers()["x-request-id"], "req-42");
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["request_id"], "req-42");
    assert_eq!(body["operation"], "var_estimate");
    assert_eq!(body["ok"], true);
    assert!(body["timings"]["total_ms"].as_f64().unwrap() >= 0.0);
    let data = &body["data"];
    assert_eq!(data["model"], "EWMA");
    assert!(data["var_value"].as_f64().unwrap() < 0.0, "long book loses in the left tail: {data}");

    let positions = srv.state.book.read().unwrap().list("p1").unwrap();
    let req = VarRequest {
        pid: "p1".into(),
        confidence: 0.99,
        horizon_days: 1.0,
        model: Model::Ewma,
    };
    let latest = setup.engine.latest().clone();
    let direct = estimate_var(&req, &positions, setup.as_of, &*setup.engine, &latest, &Default::default()).unwrap();
    assert_eq!(data["q_return"].as_f64().unwrap(), direct.q_return);
    assert_eq!(data["var_value"].as_f64().unwrap(), direct.var_value);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_map_to_statuses() {
    let setup = market();
    let srv = serve(setup.engine.clone()).await;
    let c = reqwest::Client::new();
    let inst = &setup.universe[3].id;
    post(&c, format!("{}/portfolios/p/positions", srv.base), json!({"instrument": inst, "quantity": 1.0})).await;

    let var = |pid: &str, model: &str, conf: f64| json!({"pid": pid, "confidence": conf, "horizon_days": 1.0, "model": model});
    let url = format!("{}/var-estimate", srv.base);

    let (s, b) = post(&c, url.clone(), var("p", "LSTM", 0.99)).await;
    assert_eq!((s, b["error"]["code"].as_str()), (400, Some("bad_request")));
    assert!(b.get("timings").is_none());

    let (s, b) = post(&c, url.clone(), var("p", "HAR", 1.5)).await;
    assert_eq!((s, b["error"]["code"].as_str()), (400, Some("validation")));

    let (s, b) = post(&c, url.clone(), var("nobody", "HAR", 0.99)).await;
    assert_eq!((s, b["error"]["code"].as_str()), (404, Some("unknown_portfolio")));

    let (s, _) = post(&c, format!("{}/portfolios/p/positions", srv.base), json!({"instrument": "BTC-99XXX24", "quantity": 1.0})).await;
    assert_eq!(s, 400);

    let r = c.delete(format!("{}/portfolios/p/positions/{inst}", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let r = c.delete(format!("{}/portfolios/p/positions/{inst}", srv.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 404);

    let (s, b) = post(&c, url.clone(), var("p", "HAR", 0.99)).await;
    assert_eq!((s, b["error"]["code"].as_str()), (409, Some("degenerate_portfolio")));
    assert!(b.get("timings").is_none());

    let (s, b) = post(&c, url, json!({"pid": "p"})).await;
    assert_eq!((s, b["error"]["code"].as_str()), (400, Some("bad_request")));
}

#[tokio::test(flavor = "multi_thread")]
async fn no_market_data_is_unavailable() {
    let srv = serve(Arc::new(TickEngine::in_memory())).await;
    let c = reqwest::Client::new();
    post(&c, format!("{}/portfolios/p/positions", srv.base), json!({"instrument": "BTC-29MAR24", "quantity": 1.0})).await;
    let (s, b) = post(&c, format!("{}/var-estimate", srv.base), json!({"pid": "p", "confidence": 0.99, "horizon_days": 1.0})).await;
    assert_eq!(s, 503);
    assert_eq!(b["error"]["code"], "stale_market_data");

    // Ticks published through the gateway make the clock move.
    let t = Tick::new("btc_usd", 1_704_067_200_000, 42_000.0);
    let (s, b) = post(&c, format!("{}/ticks", srv.base), json!([t])).await;
    assert_eq!(s, 200, "{b}");
    assert_eq!(b["data"]["count"], 1);
    let (_, h) = get(&c, format!("{}/health", srv.base)).await;
    assert_eq!(h["data"]["clock"], "2024-01-01T00:00:00.000Z");
    assert_eq!(h["data"]["next_seq"], 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn rpc_envelope_and_generated_ids() {
    let setup = market();
    let srv = serve(setup.engine.clone()).await;
    let c = reqwest::Client::new();
    let (s, b) = post(&c, format!("{}/rpc", srv.base), json!({"request_id": "abc", "operation": "instruments", "payload": null})).await;
    assert_eq!(s, 200);
    assert_eq!(b["request_id"], "abc");
    let groups = b["data"]["underlyings"].as_array().unwrap();
    assert_eq!(groups.len(), 2);
    assert!(groups.iter().all(|g| g["index_price"].as_f64().unwrap() > 0.0));

    let (s, b) = post(&c, format!("{}/rpc", srv.base), json!({"operation": "teleport"})).await;
    assert_eq!(s, 400);
    assert_eq!(b["operation"], "teleport");
    assert!(!b["request_id"].as_str().unwrap().is_empty());

    let (a, b2) = (get(&c, format!("{}/health", srv.base)).await.1, get(&c, format!("{}/health", srv.base)).await.1);
    assert_ne!(a["request_id"], b2["request_id"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn olhc_and_surface_over_http() {
    let setup = market();
    let srv = serve(setup.engine.clone()).await;
    let c = reqwest::Client::new();
    let product = setup.universe.iter().find(|i| i.is_option()).unwrap().id.clone();
    let (s, b) = get(&c, format!("{}/olhc/{product}?interval_ms=300000", srv.base)).await;
    assert_eq!(s, 200);
    let candles = b["data"]["candles"].as_array().unwrap();
    assert_eq!(candles.len(), 1);
    assert!(b["data"].get("warning").is_none());

    let (s, b) = get(&c, format!("{}/olhc/NOPE-1JAN24", srv.base)).await;
    assert_eq!(s, 200);
    assert!(b["data"]["candles"].as_array().unwrap().is_empty());
    assert!(b["data"]["warning"].as_str().unwrap().contains("NOPE-1JAN24"));

    let (s, b) = get(&c, format!("{}/olhc/{product}?interval_ms=abc", srv.base)).await;
    assert_eq!(s, 400, "{b}");

    let (s, b) = get(&c, format!("{}/volsurface/btc", srv.base)).await;
    assert_eq!(s, 200);
    assert_eq!(b["data"]["underlying"], "BTC");
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next_frame(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn frame_on(ws: &mut Ws, channel: &str) -> Value {
    loop {
        let f = next_frame(ws).await;
        if f["channel"] == channel {
            return f;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn websocket_streams() {
    let setup = market();
    let srv = serve(setup.engine.clone()).await;
    let product = setup.universe[10].id.clone();
    let to = setup.as_of;
    let from = to - 3_600_000;
    let sub = json!({"op": "subscribe", "channel": "olhc",
        "params": {"product": product, "interval_ms": 600000, "from": from, "to": to, "cadence_ms": 20}});

    let (mut a, _) = tokio_tungstenite::connect_async(&srv.ws).await.unwrap();
    let (mut b, _) = tokio_tungstenite::connect_async(&srv.ws).await.unwrap();
    for ws in [&mut a, &mut b] {
        ws.send(Message::text(sub.to_string())).await.unwrap();
        let ack = next_frame(ws).await;
        assert_eq!(ack["channel"], "subscribed");
        assert_eq!(ack["data"]["id"], 1);
    }
    let fa = frame_on(&mut a, "olhc").await;
    let fb = frame_on(&mut b, "olhc").await;
    assert_eq!(fa["data"], fb["data"]);
    let expected = serde_json::to_value(setup.engine.olhc(&product, 600_000, from, to)).unwrap();
    assert_eq!(fa["data"]["candles"], expected);
    let later = frame_on(&mut a, "olhc").await;
    assert!(later["seq"].as_u64() > fa["seq"].as_u64());

    a.send(Message::text(r#"{"op":"subscribe","channel":"candles","params":{}}"#)).await.unwrap();
    let err = frame_on(&mut a, "error").await;
    assert!(err["data"]["message"].as_str().unwrap().contains("unknown channel"));
    a.send(Message::text("not json")).await.unwrap();
    frame_on(&mut a, "error").await;

    a.send(Message::text(r#"{"op":"unsubscribe","id":1}"#)).await.unwrap();
    let un = frame_on(&mut a, "unsubscribed").await;
    assert_eq!(un["data"]["id"], 1);

    // VaR stream reports failures in-band.
    b.send(Message::text(r#"{"op":"subscribe","channel":"var","params":{"pid":"ghost","confidence":0.99,"horizon_days":1.0,"cadence_ms":20}}"#))
        .await
        .unwrap();
    let v = frame_on(&mut b, "var").await;
    assert_eq!(v["data"]["error"]["status"], 404);
}

#[test]
fn cli_reports_bad_config_with_exit_code() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_cryptovar"))
        .args(["backtest", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("here.toml"));
}

#[test]
fn cli_replay_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let feed = dir.path().join("feed.jsonl");
    let exe = env!("CARGO_BIN_EXE_cryptovar");
    let ok = std::process::Command::new(exe)
        .args(["gen-feed", feed.to_str().unwrap(), "--days", "1", "--products", "5", "--index-ticks-per-minute", "2"])
        .status()
        .unwrap();
    assert!(ok.success());
    let digest = |root: &str| -> Value {
        let out = std::process::Command::new(exe)
            .args(["--data-root", dir.path().join(root).to_str().unwrap(), "replay", feed.to_str().unwrap(), "--batch", "777"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let (x, y) = (digest("a"), digest("b"));
    assert_eq!(x["digest"], y["digest"]);
    assert!(x["published"].as_u64().unwrap() > 2 * 1440);
}
