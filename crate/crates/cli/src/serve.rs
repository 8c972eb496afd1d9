use std::path::PathBuf;

use anyhow::{Context, Result};
use cablesim_bridge::protocol::Limits;
use cablesim_bridge::BridgeConfig;
use tokio::net::TcpListener;

use crate::run::load_scenario;
use crate::ServeArgs;

pub fn serve(args: ServeArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario, &args.adjust)?;
    let mut limits = Limits::default();
    if let Some(f) = args.max_force {
        limits.max_force = f;
    }
    if let Some(m) = args.max_moment {
        limits.max_moment = m;
    }
    let output = args
        .output
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-session", scenario.name)));
    let config = BridgeConfig {
        limits,
        snapshot_hz: args.snapshot_hz,
        realtime: !args.unpaced,
        output: Some(output.clone()),
    };

    let runtime = tokio::runtime::Runtime::new()?;
    let summary = runtime.block_on(async {
        let listener = TcpListener::bind((args.host.as_str(), args.port))
            .await
            .with_context(|| format!("binding {}:{}", args.host, args.port))?;
        println!("listening on ws://{}/session", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        cablesim_bridge::serve(scenario, config, listener, shutdown)
            .await
            .map_err(anyhow::Error::from)
    })?;
    println!(
        "session ended after {:.3} s, {} commands; log in {}",
        summary.meta.duration,
        summary.timeline.len(),
        output.display()
    );
    Ok(())
}
