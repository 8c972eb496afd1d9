use std::net::SocketAddr;
use std::path::Path;
use std::time::{Duration, Instant};

use cablesim::sim::{presets, replay, RunMeta, Scenario};
use cablesim_bridge::{serve, BridgeConfig, BridgeError, SessionSummary};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Session {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    handle: JoinHandle<Result<SessionSummary, BridgeError>>,
}

impl Session {
    async fn start(scenario: Scenario, config: BridgeConfig) -> Session {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel();
        let handle = tokio::spawn(serve(scenario, config, listener, async {
            let _ = rx.await;
        }));
        Session {
            addr,
            stop: Some(tx),
            handle,
        }
    }

    async fn connect(&self) -> Client {
        connect_async(format!("ws://{}/session", self.addr)).await.unwrap().0
    }

    async fn finish(mut self) -> SessionSummary {
        let _ = self.stop.take().unwrap().send(());
        tokio::time::timeout(Duration::from_secs(10), self.handle)
            .await
            .expect("server stops promptly")
            .unwrap()
            .unwrap()
    }
}

fn hold(duration: f64) -> Scenario {
    let mut s = presets::hold().unwrap();
    s.duration = duration;
    s
}

async fn send(ws: &mut Client, kind: &str, seq: u64, payload: Value) {
    let text = json!({"type": kind, "seq": seq, "v": 1, "payload": payload}).to_string();
    ws.send(Message::Text(text.into())).await.unwrap();
}

async fn next_json(ws: &mut Client) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("message within 5 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Next message that is not a state snapshot.
async fn next_reply(ws: &mut Client) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] != "state" {
            return v;
        }
    }
}

async fn next_state(ws: &mut Client) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == "state" {
            return v;
        }
    }
}

/// Read for `window` and return the last state snapshot seen.
async fn latest_state_after(ws: &mut Client, window: Duration) -> Value {
    let start = Instant::now();
    let mut last = next_state(ws).await;
    while start.elapsed() < window {
        last = next_state(ws).await;
    }
    last
}

fn csv_column(dir: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("run.csv")).unwrap();
    let mut lines = text.lines();
    let col = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn hello_advertises_scenario_and_limits() {
    let session = Session::start(hold(30.0), BridgeConfig::default()).await;
    let mut ws = session.connect().await;
    let hello = next_json(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["v"], 1);
    assert_eq!(hello["seq"], 1);
    let p = &hello["payload"];
    assert_eq!(p["scenario"], "hold");
    assert_eq!(p["role"], "control");
    assert_eq!(p["modules"].as_array().unwrap().len(), 4);
    assert_eq!(p["limits"]["max_force"], 200.0);
    assert_eq!(p["limits"]["max_moment"], 50.0);
    assert!((p["payload_weight"].as_f64().unwrap() - 27.2 * 9.81).abs() < 1e-9);
    let state = next_state(&mut ws).await;
    assert!(state["seq"].as_u64().unwrap() > 1);
    for key in ["tick", "time", "pose", "twist", "modules", "w_des", "w_ext", "w_ext_estimate", "mode", "paused"] {
        assert!(!state["payload"][key].is_null(), "state lacks {key}");
    }
    session.finish().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pulse_lands_in_log_at_acknowledged_tick() {
    let dir = tempfile::tempdir().unwrap();
    let config = BridgeConfig {
        output: Some(dir.path().to_path_buf()),
        ..BridgeConfig::default()
    };
    // amplify with zero gain: gravity compensation only
    let mut scenario = presets::teleop().unwrap();
    scenario.duration = 30.0;
    let session = Session::start(scenario, config).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    tokio::time::sleep(Duration::from_millis(200)).await;
    send(&mut ws, "apply_wrench", 7, json!({"fx": 30.0, "fz": 0.0, "my": 0.0, "hold_ms": 500})).await;
    let ack = next_reply(&mut ws).await;
    assert_eq!(ack["type"], "ack", "{ack}");
    assert_eq!(ack["payload"]["ack"], 7);
    assert_eq!(ack["payload"]["clamped"], false);
    let tick = ack["payload"]["tick"].as_u64().unwrap();

    // the first snapshot past the acknowledged tick already carries the pulse
    let seen = loop {
        let s = next_state(&mut ws).await;
        if s["payload"]["tick"].as_u64().unwrap() > tick {
            break s;
        }
    };
    assert!(seen["payload"]["tick"].as_u64().unwrap() <= tick + 300);
    assert_eq!(seen["payload"]["w_ext"]["fx"], 30.0);

    tokio::time::sleep(Duration::from_millis(800)).await;
    drop(ws);
    let summary = session.finish().await;
    let tick = tick as usize;
    assert!(summary.ticks as usize > tick + 600);

    let fx = csv_column(dir.path(), "w_ext_fx");
    assert_eq!(fx.len() as u64, summary.ticks);
    assert_eq!(fx[tick - 1], 0.0);
    assert!(fx[tick..tick + 500].iter().all(|&v| v == 30.0));
    assert!(fx[tick + 501] < 30.0 && fx[tick + 501] > 0.0);
    assert_eq!(fx[tick + 600], 0.0);
    let vx = csv_column(dir.path(), "vx");
    assert!(vx[tick + 500] > vx[tick] + 0.05, "payload accelerates along +x: {} -> {}", vx[tick], vx[tick + 500]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn ten_second_session_streams_three_hundred_snapshots() {
    let session = Session::start(hold(10.0), BridgeConfig::default()).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    let mut count = 0;
    let mut last_time = f64::NEG_INFINITY;
    loop {
        match tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap() {
            Some(Ok(Message::Text(t))) => {
                let v: Value = serde_json::from_str(t.as_str()).unwrap();
                if v["type"] == "state" {
                    let time = v["payload"]["time"].as_f64().unwrap();
                    assert!(time >= last_time, "time went backwards");
                    last_time = time;
                    count += 1;
                }
            }
            Some(Ok(_)) => {}
            _ => break,
        }
    }
    let summary = tokio::time::timeout(Duration::from_secs(5), session.handle).await.unwrap().unwrap().unwrap();
    assert_eq!(summary.ticks, 10_000);
    assert!((298..=302).contains(&count), "{count} snapshots");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn oversized_wrench_is_clamped_and_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let config = BridgeConfig {
        output: Some(dir.path().to_path_buf()),
        ..BridgeConfig::default()
    };
    let session = Session::start(hold(30.0), config).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    send(&mut ws, "apply_wrench", 1, json!({"fx": 1000.0, "hold_ms": 100})).await;
    let ack = next_reply(&mut ws).await;
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["payload"]["clamped"], true);
    let tick = ack["payload"]["tick"].as_u64().unwrap() as usize;
    tokio::time::sleep(Duration::from_millis(300)).await;
    drop(ws);
    session.finish().await;
    let fx = csv_column(dir.path(), "w_ext_fx");
    assert_eq!(fx[tick], 200.0);
    assert!(fx.iter().all(|&v| v <= 200.0));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_messages_get_errors_and_session_survives() {
    let session = Session::start(hold(30.0), BridgeConfig::default()).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;

    ws.send(Message::Text("{not json".into())).await.unwrap();
    let e = next_reply(&mut ws).await;
    assert_eq!(e["type"], "error");
    assert_eq!(e["payload"]["code"], "malformed");

    send(&mut ws, "teleport", 3, json!({})).await;
    let e = next_reply(&mut ws).await;
    assert_eq!(e["payload"]["code"], "unknown_type");
    assert_eq!(e["payload"]["ack"], 3);

    let text = json!({"type": "pause", "seq": 4, "v": 9}).to_string();
    ws.send(Message::Text(text.into())).await.unwrap();
    assert_eq!(next_reply(&mut ws).await["payload"]["code"], "unsupported_version");

    send(&mut ws, "set_mode", 5, json!({"mode": "amplify", "gain": -1.0})).await;
    assert_eq!(next_reply(&mut ws).await["payload"]["code"], "invalid_payload");

    send(&mut ws, "set_target", 6, json!({"x": 2.1, "z": 0.5})).await;
    let ack = next_reply(&mut ws).await;
    assert_eq!(ack["type"], "ack");
    assert_eq!(ack["payload"]["ack"], 6);
    let t0 = next_state(&mut ws).await["payload"]["time"].as_f64().unwrap();
    let t1 = latest_state_after(&mut ws, Duration::from_millis(200)).await["payload"]["time"].as_f64().unwrap();
    assert!(t1 > t0, "simulation keeps running");
    session.finish().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshots_arrive_near_configured_rate() {
    let session = Session::start(hold(30.0), BridgeConfig::default()).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    next_state(&mut ws).await;
    let start = Instant::now();
    let mut count = 0;
    while start.elapsed() < Duration::from_secs(2) {
        next_state(&mut ws).await;
        count += 1;
    }
    let rate = count as f64 / start.elapsed().as_secs_f64();
    assert!((24.0..=36.0).contains(&rate), "snapshot rate {rate}");
    session.finish().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pause_freezes_simulated_time() {
    let session = Session::start(hold(30.0), BridgeConfig::default()).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    tokio::time::sleep(Duration::from_millis(100)).await;
    send(&mut ws, "pause", 1, Value::Null).await;
    let ack = next_reply(&mut ws).await;
    assert_eq!(ack["type"], "ack");
    let paused_at = ack["payload"]["tick"].as_u64().unwrap();
    let s = latest_state_after(&mut ws, Duration::from_millis(300)).await;
    assert_eq!(s["payload"]["paused"], true);
    assert_eq!(s["payload"]["tick"].as_u64().unwrap(), paused_at);

    send(&mut ws, "resume", 2, Value::Null).await;
    let resumed = next_reply(&mut ws).await["payload"]["tick"].as_u64().unwrap();
    assert_eq!(resumed, paused_at);
    let s = latest_state_after(&mut ws, Duration::from_millis(300)).await;
    assert_eq!(s["payload"]["paused"], false);
    let advanced = s["payload"]["tick"].as_u64().unwrap() - paused_at;
    assert!((150..=600).contains(&advanced), "advanced {advanced} ticks in ~300 ms");
    session.finish().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_client_is_an_observer() {
    let session = Session::start(hold(30.0), BridgeConfig::default()).await;
    let mut first = session.connect().await;
    assert_eq!(next_json(&mut first).await["payload"]["role"], "control");
    let mut second = session.connect().await;
    assert_eq!(next_json(&mut second).await["payload"]["role"], "observer");
    send(&mut second, "apply_wrench", 1, json!({"fx": 10.0, "hold_ms": 10})).await;
    let e = next_reply(&mut second).await;
    assert_eq!(e["payload"]["code"], "read_only");
    next_state(&mut second).await;

    first.close(None).await.unwrap();
    drop(first);
    tokio::time::sleep(Duration::from_millis(200)).await;
    let mut third = session.connect().await;
    assert_eq!(next_json(&mut third).await["payload"]["role"], "control");
    session.finish().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn offline_replay_reproduces_session_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = BridgeConfig {
        output: Some(dir.path().to_path_buf()),
        ..BridgeConfig::default()
    };
    let session = Session::start(hold(30.0), config).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    let script = [
        ("apply_wrench", json!({"fx": 40.0, "fz": -20.0, "my": 3.0, "hold_ms": 150})),
        ("set_target", json!({"x": 2.05, "z": 0.45})),
        ("set_mode", json!({"mode": "amplify", "gain": 1.5})),
        ("apply_wrench", json!({"fx": -25.0, "hold_ms": 80})),
        ("set_mode", json!({"mode": "hold"})),
    ];
    for (seq, (kind, payload)) in script.into_iter().enumerate() {
        tokio::time::sleep(Duration::from_millis(120)).await;
        send(&mut ws, kind, seq as u64 + 1, payload).await;
        assert_eq!(next_reply(&mut ws).await["type"], "ack");
    }
    tokio::time::sleep(Duration::from_millis(200)).await;
    drop(ws);
    let summary = session.finish().await;
    assert_eq!(summary.timeline.len(), 5);

    let scenario = Scenario::load(dir.path().join("scenario.toml")).unwrap();
    let timeline: Vec<cablesim::sim::TimedCommand> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("commands.json")).unwrap()).unwrap();
    let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(timeline, summary.timeline);
    let offline = replay(&scenario, &timeline, summary.ticks).unwrap();
    let live = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(offline.to_csv_string(), live);
    assert_eq!(offline.meta, meta);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_closes_clients_and_flushes_log() {
    let dir = tempfile::tempdir().unwrap();
    let config = BridgeConfig {
        output: Some(dir.path().to_path_buf()),
        ..BridgeConfig::default()
    };
    let session = Session::start(hold(600.0), config).await;
    let mut ws = session.connect().await;
    next_json(&mut ws).await;
    tokio::time::sleep(Duration::from_millis(300)).await;
    let summary = session.finish().await;
    loop {
        match tokio::time::timeout(Duration::from_secs(2), ws.next()).await.unwrap() {
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        }
    }
    let rows = csv_column(dir.path(), "time");
    assert_eq!(rows.len() as u64, summary.ticks);
    assert!(summary.ticks > 100 && summary.ticks < 5000);
    let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(dir.path().join("meta.json")).unwrap()).unwrap();
    assert!((meta.duration - summary.ticks as f64 * 1e-3).abs() < 1e-12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn session_ends_with_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let config = BridgeConfig {
        output: Some(dir.path().to_path_buf()),
        realtime: false,
        ..BridgeConfig::default()
    };
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let summary = tokio::time::timeout(
        Duration::from_secs(30),
        serve(hold(2.0), config, listener, std::future::pending()),
    )
    .await
    .expect("unpaced session finishes")
    .unwrap();
    assert_eq!(summary.ticks, 2000);
    assert_eq!(csv_column(dir.path(), "time").len(), 2000);
}
