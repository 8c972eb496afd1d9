//! The simulation thread: owns the [`Simulation`], applies commands at tick
//! boundaries, paces against the wall clock and streams the log to disk.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use cablesim::sim::log::{write_csv_header, write_csv_row};
use cablesim::sim::{Command, RunMeta, Simulation, TimedCommand};
use tokio::sync::{oneshot, watch};

use crate::protocol::StateSnapshot;
use crate::BridgeError;

pub(crate) enum WorkerMsg {
    Command {
        command: Command,
        reply: oneshot::Sender<Result<u64, String>>,
    },
    Pause {
        reply: oneshot::Sender<u64>,
    },
    Resume {
        reply: oneshot::Sender<u64>,
    },
}

pub(crate) struct WorkerConfig {
    pub realtime: bool,
    pub output: Option<PathBuf>,
    /// Publish a snapshot every this many ticks.
    pub publish_every: u64,
}

/// What a finished session leaves behind.
#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub ticks: u64,
    pub timeline: Vec<TimedCommand>,
    pub meta: RunMeta,
    pub output: Option<PathBuf>,
}

struct Pacer {
    wall: Instant,
    tick: u64,
}

pub(crate) fn snapshot(sim: &Simulation, paused: bool, realtime_factor: f64) -> StateSnapshot {
    StateSnapshot {
        sim: sim.snapshot(),
        paused,
        realtime_factor,
    }
}

pub(crate) fn run(
    mut sim: Simulation,
    inbox: Receiver<WorkerMsg>,
    snapshots: watch::Sender<StateSnapshot>,
    config: WorkerConfig,
    stop: Arc<AtomicBool>,
) -> Result<SessionSummary, BridgeError> {
    let dt = sim.scenario().rates.dt();
    let total = sim.scenario().ticks();
    let mut csv = match &config.output {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("run.csv"))?);
            write_csv_header(&mut w, sim.modules().len())?;
            Some(w)
        }
        None => None,
    };

    let mut paused = false;
    let mut pacer = Pacer {
        wall: Instant::now(),
        tick: sim.tick(),
    };
    let mut factor = 1.0;
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            break Ok(());
        }
        loop {
            match inbox.try_recv() {
                Ok(WorkerMsg::Command { command, reply }) => {
                    let r = sim.queue_command(command).map(|_| sim.tick()).map_err(|e| e.to_string());
                    let _ = reply.send(r);
                }
                Ok(WorkerMsg::Pause { reply }) => {
                    paused = true;
                    let _ = snapshots.send(snapshot(&sim, true, factor));
                    let _ = reply.send(sim.tick());
                }
                Ok(WorkerMsg::Resume { reply }) => {
                    if paused {
                        paused = false;
                        pacer = Pacer {
                            wall: Instant::now(),
                            tick: sim.tick(),
                        };
                    }
                    let _ = reply.send(sim.tick());
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    stop.store(true, Ordering::Relaxed);
                    break;
                }
            }
        }
        if paused {
            std::thread::sleep(Duration::from_millis(2));
            continue;
        }
        if sim.tick() >= total {
            break Ok(());
        }
        let record = match sim.step() {
            Ok(r) => r,
            Err(e) => break Err(BridgeError::Sim(e)),
        };
        if let Some(w) = csv.as_mut() {
            write_csv_row(w, &record)?;
        }
        let elapsed = pacer.wall.elapsed().as_secs_f64();
        let simulated = (sim.tick() - pacer.tick) as f64 * dt;
        if elapsed > 0.0 {
            factor = (simulated / elapsed).min(1.0e6);
        }
        if sim.tick().is_multiple_of(config.publish_every) {
            let _ = snapshots.send(snapshot(&sim, false, if config.realtime { factor.min(1.0) } else { factor }));
        }
        if config.realtime && simulated > elapsed {
            std::thread::sleep(Duration::from_secs_f64(simulated - elapsed));
        }
    };

    let _ = snapshots.send(snapshot(&sim, paused, factor));
    let mut meta = sim.meta();
    meta.duration = sim.tick() as f64 * dt;
    if let (Some(mut w), Some(dir)) = (csv, &config.output) {
        w.flush()?;
        fs::write(dir.join("commands.json"), serde_json::to_string_pretty(sim.timeline())?)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        fs::write(dir.join("scenario.toml"), sim.scenario().to_toml_string()?)?;
        log::info!("session log flushed to {}", dir.display());
    }
    result?;
    Ok(SessionSummary {
        ticks: sim.tick(),
        timeline: sim.timeline().to_vec(),
        meta,
        output: config.output,
    })
}
