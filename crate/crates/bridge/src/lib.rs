//! Real-time session host: runs one simulation and exposes it to a browser
//! console over a WebSocket at `/session`.
//!
//! The simulation lives on its own thread. Connections talk to it only by
//! message passing: commands go in over a channel and are applied at the
//! next tick boundary; state comes out through a latest-value cell that each
//! connection samples at the snapshot rate, so a slow client only ever
//! misses snapshots and never builds a backlog.

// `!(a > b)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod protocol;
mod worker;

use std::future::Future;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{Sink, SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};

use cablesim::sim::{Scenario, Simulation};

use protocol::{decode, Ack, ClientCommand, Envelope, ErrorReply, Hello, Limits, ModuleInfo, StateSnapshot};
use worker::{WorkerConfig, WorkerMsg};

pub use worker::SessionSummary;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error(transparent)]
    Sim(#[from] cablesim::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("simulation worker failed: {0}")]
    Worker(String),
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub limits: Limits,
    pub snapshot_hz: f64,
    /// Pace the simulation against the wall clock.
    pub realtime: bool,
    /// Directory for `run.csv`, `commands.json`, `meta.json` and `scenario.toml`.
    pub output: Option<PathBuf>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            limits: Limits::default(),
            snapshot_hz: 30.0,
            realtime: true,
            output: None,
        }
    }
}

struct Shared {
    hello: Hello,
    limits: Limits,
    snapshot_hz: f64,
    inbox: mpsc::Sender<WorkerMsg>,
    snapshots: watch::Receiver<StateSnapshot>,
    closing: watch::Receiver<bool>,
    controller: Mutex<Option<u64>>,
    next_id: AtomicU64,
}

/// Run `scenario` and serve it on `listener` until the scenario ends or
/// `shutdown` resolves. The session log is flushed before returning.
pub async fn serve(
    scenario: Scenario,
    config: BridgeConfig,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<SessionSummary, BridgeError> {
    if !(config.snapshot_hz > 0.0 && config.snapshot_hz.is_finite()) {
        return Err(BridgeError::Worker(format!("invalid snapshot rate {}", config.snapshot_hz)));
    }
    let sim = Simulation::new(scenario)?;
    let s = sim.scenario();
    let hello = Hello {
        scenario: s.name.clone(),
        description: s.description.clone(),
        payload_mass: sim.payload().mass,
        payload_weight: sim.payload().weight(),
        modules: s
            .modules
            .iter()
            .map(|m| ModuleInfo {
                anchor: [m.anchor.x, m.anchor.y],
                t_min: m.t_min,
                t_max: m.t_max,
            })
            .collect(),
        limits: config.limits,
        snapshot_hz: config.snapshot_hz,
        inner_hz: s.rates.inner_hz,
        role: String::new(),
    };
    let publish_every = (s.rates.inner_hz as f64 / (2.0 * config.snapshot_hz)).floor().max(1.0) as u64;

    let (snap_tx, snap_rx) = watch::channel(worker::snapshot(&sim, false, 1.0));
    let (inbox_tx, inbox_rx) = mpsc::channel();
    let (closing_tx, closing_rx) = watch::channel(false);
    let (done_tx, done_rx) = oneshot::channel::<()>();
    let stop = Arc::new(AtomicBool::new(false));

    let worker_config = WorkerConfig {
        realtime: config.realtime,
        output: config.output.clone(),
        publish_every,
    };
    let worker_stop = stop.clone();
    let worker = tokio::task::spawn_blocking(move || {
        let r = worker::run(sim, inbox_rx, snap_tx, worker_config, worker_stop);
        let _ = done_tx.send(());
        r
    });

    let shared = Arc::new(Shared {
        hello,
        limits: config.limits,
        snapshot_hz: config.snapshot_hz,
        inbox: inbox_tx,
        snapshots: snap_rx,
        closing: closing_rx,
        controller: Mutex::new(None),
        next_id: AtomicU64::new(1),
    });
    let app = Router::new().route("/session", get(upgrade)).with_state(shared);

    let stop_server = stop.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            tokio::select! {
                _ = shutdown => log::info!("shutdown requested"),
                _ = done_rx => log::info!("scenario finished"),
            }
            stop_server.store(true, Ordering::Relaxed);
            let _ = closing_tx.send(true);
        })
        .await?;

    stop.store(true, Ordering::Relaxed);
    worker.await.map_err(|e| BridgeError::Worker(e.to_string()))?
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

/// Outgoing message before sequencing.
struct Outgoing {
    kind: &'static str,
    payload: serde_json::Value,
}

impl Outgoing {
    fn new(kind: &'static str, payload: impl Serialize) -> Self {
        Outgoing {
            kind,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let controls = {
        let mut c = shared.controller.lock().expect("controller lock");
        if c.is_none() {
            *c = Some(id);
        }
        *c == Some(id)
    };
    log::info!("client {id} connected as {}", if controls { "controller" } else { "observer" });

    let (sink, mut stream) = socket.split();
    let (out_tx, out_rx) = tokio::sync::mpsc::channel::<Outgoing>(64);

    let mut hello = shared.hello.clone();
    hello.role = if controls { "control" } else { "observer" }.into();
    let snapshots = shared.snapshots.clone();
    let closing = closed(shared.closing.clone());
    let period = Duration::from_secs_f64(1.0 / shared.snapshot_hz);
    let writer = tokio::spawn(write_loop(sink, hello, snapshots, out_rx, closing, period));

    let closing = closed(shared.closing.clone());
    tokio::pin!(closing);
    loop {
        let frame = tokio::select! {
            f = stream.next() => f,
            _ = &mut closing => break,
        };
        let reply = match frame {
            Some(Ok(Message::Text(t))) => handle_text(&shared, controls, t.as_str()).await,
            Some(Ok(Message::Binary(_))) => Outgoing::new(
                "error",
                ErrorReply {
                    ack: None,
                    code: "malformed".into(),
                    message: "binary frames are not part of the protocol".into(),
                },
            ),
            Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
            Some(Ok(_)) => continue,
        };
        if out_tx.send(reply).await.is_err() {
            break;
        }
    }
    drop(out_tx);
    let _ = writer.await;

    let mut c = shared.controller.lock().expect("controller lock");
    if *c == Some(id) {
        *c = None;
    }
    log::info!("client {id} disconnected");
}

/// Per-connection sender: the hello, then the latest snapshot once per
/// `period` interleaved with replies. A slow peer makes `send` wait, and
/// ticks missed meanwhile are skipped, so snapshots are dropped rather than
/// queued.
async fn write_loop<S>(
    mut sink: S,
    hello: Hello,
    snapshots: watch::Receiver<StateSnapshot>,
    mut out_rx: tokio::sync::mpsc::Receiver<Outgoing>,
    closing: impl Future<Output = ()>,
    period: Duration,
) where
    S: Sink<Message> + Unpin,
{
    let mut seq = 0u64;
    let mut text = |kind: &str, payload: serde_json::Value| {
        seq += 1;
        Message::Text(
            Envelope {
                kind: kind.to_string(),
                seq,
                v: protocol::PROTOCOL_VERSION,
                payload,
            }
            .to_text()
            .into(),
        )
    };
    if sink.send(text("hello", serde_json::to_value(&hello).expect("hello"))).await.is_err() {
        return;
    }
    tokio::pin!(closing);
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        let msg = tokio::select! {
            _ = ticker.tick() => {
                let snap = snapshots.borrow().clone();
                text("state", serde_json::to_value(&snap).expect("snapshot"))
            }
            out = out_rx.recv() => match out {
                Some(o) => text(o.kind, o.payload),
                None => break,
            },
            _ = &mut closing => {
                let _ = sink.send(Message::Close(None)).await;
                break;
            }
        };
        if sink.send(msg).await.is_err() {
            break;
        }
    }
}

/// Resolves once the server starts shutting down.
async fn closed(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|c| *c).await;
}

async fn handle_text(shared: &Shared, controls: bool, text: &str) -> Outgoing {
    let error = |ack: Option<u64>, code: &str, message: String| {
        Outgoing::new(
            "error",
            ErrorReply {
                ack,
                code: code.into(),
                message,
            },
        )
    };
    let (seq, cmd) = match decode(text, &shared.limits) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("rejected client message: {e}");
            return Outgoing::new("error", e.reply());
        }
    };
    if !controls {
        return error(Some(seq), "read_only", "another client holds control".into());
    }
    let ended = || error(Some(seq), "session_ended", "the simulation has stopped".into());
    match cmd {
        ClientCommand::Sim { command, clamped } => {
            if clamped {
                log::warn!("command {seq} clamped to safety limits");
            }
            let (tx, rx) = oneshot::channel();
            if shared.inbox.send(WorkerMsg::Command { command, reply: tx }).is_err() {
                return ended();
            }
            match rx.await {
                Ok(Ok(tick)) => Outgoing::new("ack", Ack { ack: seq, tick, clamped }),
                Ok(Err(msg)) => error(Some(seq), "rejected", msg),
                Err(_) => ended(),
            }
        }
        ClientCommand::Pause | ClientCommand::Resume => {
            let (tx, rx) = oneshot::channel();
            let msg = if matches!(cmd, ClientCommand::Pause) {
                WorkerMsg::Pause { reply: tx }
            } else {
                WorkerMsg::Resume { reply: tx }
            };
            if shared.inbox.send(msg).is_err() {
                return ended();
            }
            match rx.await {
                Ok(tick) => Outgoing::new(
                    "ack",
                    Ack {
                        ack: seq,
                        tick,
                        clamped: false,
                    },
                ),
                Err(_) => ended(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cablesim::sim::presets;
    use std::time::Instant;

    /// A reader that takes 100 ms per message while the simulation publishes
    /// every millisecond: the writer must send only fresh snapshots.
    #[tokio::test(flavor = "multi_thread", worker_threads = 2)]
    async fn slow_peer_gets_latest_snapshots_without_backlog() {
        let mut sim = Simulation::new(presets::hold().unwrap()).unwrap();
        let (snap_tx, snap_rx) = watch::channel(worker::snapshot(&sim, false, 1.0));
        let producer = std::thread::spawn(move || {
            let start = Instant::now();
            while start.elapsed() < Duration::from_millis(1500) {
                sim.step().unwrap();
                let _ = snap_tx.send(worker::snapshot(&sim, false, 1.0));
                std::thread::sleep(Duration::from_millis(1));
            }
        });

        let live = snap_rx.clone();
        let received = Arc::new(Mutex::new(Vec::<(u64, u64)>::new()));
        let log = received.clone();
        let sink = futures_util::sink::unfold((), move |(), msg: Message| {
            let log = log.clone();
            let live = live.clone();
            async move {
                if let Message::Text(t) = msg {
                    let v: serde_json::Value = serde_json::from_str(t.as_str()).unwrap();
                    if v["type"] == "state" {
                        let now = live.borrow().sim.tick;
                        log.lock().unwrap().push((v["payload"]["tick"].as_u64().unwrap(), now));
                    }
                }
                tokio::time::sleep(Duration::from_millis(100)).await;
                Ok::<_, std::convert::Infallible>(())
            }
        });
        let (_out_tx, out_rx) = tokio::sync::mpsc::channel(4);
        let hello = Hello {
            scenario: "hold".into(),
            description: String::new(),
            payload_mass: 27.2,
            payload_weight: 266.832,
            modules: Vec::new(),
            limits: Limits::default(),
            snapshot_hz: 30.0,
            inner_hz: 1000,
            role: "control".into(),
        };
        let writer = tokio::spawn(write_loop(
            Box::pin(sink),
            hello,
            snap_rx,
            out_rx,
            tokio::time::sleep(Duration::from_millis(1200)),
            Duration::from_secs_f64(1.0 / 30.0),
        ));
        writer.await.unwrap();
        producer.join().unwrap();

        let got = received.lock().unwrap().clone();
        // ~1.1 s of 100 ms sends: far fewer than the 36 a 30 Hz stream would queue
        assert!((8..=13).contains(&got.len()), "{} snapshots", got.len());
        for (sent, live) in &got {
            assert!(live - sent <= 60, "snapshot {} ticks stale", live - sent);
        }
        assert!(got.windows(2).all(|w| w[1].0 > w[0].0));
    }
}
