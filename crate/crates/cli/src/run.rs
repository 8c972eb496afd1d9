use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cablesim::sim::{compare_scaling, compute_metrics, replay, run_scenario, RunLog, RunMeta, Scenario, TimedCommand};

use crate::{CompareArgs, RunArgs, ScenarioArgs};

const KG_PER_LB: f64 = 0.453_592_37;

pub fn lb_to_kg(lb: f64) -> f64 {
    lb * KG_PER_LB
}

/// Load a scenario file and apply overrides and flags.
pub fn load_scenario(path: &Path, adjust: &ScenarioArgs) -> Result<Scenario> {
    let mut s = Scenario::load(path)?;
    for o in &adjust.overrides {
        s = s.apply_override(o).with_context(|| format!("override `{o}`"))?;
    }
    if let Some(seed) = adjust.seed {
        s.seed = seed;
    }
    if let Some(d) = adjust.duration {
        s.duration = d;
    }
    if let Some(lb) = adjust.payload_lb {
        s.payload.mass = lb_to_kg(lb);
    }
    if adjust.ideal_actuators {
        s.ideal_actuators = true;
    }
    if let Some(n) = adjust.modules {
        s = s.with_modules(n)?;
    }
    s.validate()?;
    Ok(s)
}

/// Write `run.csv`, `metrics.txt`, `metrics.json`, `meta.json` and the
/// resolved `scenario.toml`; returns the metrics text.
pub fn write_run(dir: &Path, scenario: &Scenario, log: &RunLog) -> Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let metrics = compute_metrics(log, &scenario.payload_model()?)?;
    let csv = fs::File::create(dir.join("run.csv")).context("creating run.csv")?;
    log.write_csv(std::io::BufWriter::new(csv)).context("writing run.csv")?;
    let text = metrics.to_text();
    fs::write(dir.join("metrics.txt"), &text)?;
    fs::write(dir.join("metrics.json"), metrics.to_json())?;
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&log.meta)?)?;
    fs::write(dir.join("scenario.toml"), scenario.to_toml_string()?)?;
    Ok(text)
}

pub fn run(args: RunArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario, &args.adjust)?;
    scenario.record_solve_time = args.timing;
    let log = match &args.commands {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let timeline: Vec<TimedCommand> =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            replay(&scenario, &timeline, scenario.ticks())?
        }
        None => run_scenario(&scenario)?,
    };
    let dir = args.output.unwrap_or_else(|| PathBuf::from("runs").join(&scenario.name));
    let text = write_run(&dir, &scenario, &log)?;
    print!("{text}");
    println!("output = {}", dir.display());
    Ok(())
}

/// Read a run directory written by `run` or `serve`.
pub fn load_run_dir(dir: &Path) -> Result<RunLog> {
    let meta: RunMeta = serde_json::from_str(
        &fs::read_to_string(dir.join("meta.json")).with_context(|| format!("reading {}/meta.json", dir.display()))?,
    )?;
    let csv = fs::read_to_string(dir.join("run.csv")).with_context(|| format!("reading {}/run.csv", dir.display()))?;
    Ok(RunLog::read_csv(&csv, meta)?)
}

fn load_or_run(path: &Path) -> Result<RunLog> {
    if path.is_dir() {
        load_run_dir(path)
    } else {
        Ok(run_scenario(&Scenario::load(path)?)?)
    }
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let few = load_or_run(&args.few)?;
    let many = load_or_run(&args.many)?;
    if few.meta.modules > many.meta.modules {
        bail!(
            "first run has {} modules and second has {}; pass the smaller module set first",
            few.meta.modules,
            many.meta.modules
        );
    }
    let report = compare_scaling(&few, &many)?;
    let text = report.to_text();
    if let Some(dir) = &args.output {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("scaling.txt"), &text)?;
        fs::write(dir.join("scaling.json"), serde_json::to_string_pretty(&report)?)?;
    }
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pounds_convert_to_kilograms() {
        assert!((lb_to_kg(60.0) - 27.215_542_2).abs() < 1e-6);
    }

    #[test]
    fn flags_apply_after_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hold.toml");
        fs::write(&path, cablesim::sim::presets::HOLD).unwrap();
        let adjust = ScenarioArgs {
            overrides: vec!["duration=3".into(), "seed=4".into()],
            seed: Some(9),
            modules: Some(2),
            ideal_actuators: true,
            ..Default::default()
        };
        let s = load_scenario(&path, &adjust).unwrap();
        assert_eq!(s.duration, 3.0);
        assert_eq!(s.seed, 9);
        assert_eq!(s.modules.len(), 2);
        assert!(s.ideal_actuators);

        let bad = ScenarioArgs {
            overrides: vec!["duration=-1".into()],
            ..Default::default()
        };
        assert!(load_scenario(&path, &bad).is_err());
    }
}
