use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use cablesim::actuator::ActuatorConfig;
use cablesim::experiments;
use cablesim::sim::presets;

use crate::run::write_run;
use crate::{ExperimentArgs, Suite};

pub fn run(args: ExperimentArgs) -> Result<()> {
    let name = match args.suite {
        Suite::Step => "step",
        Suite::Backdrive => "backdrive",
        Suite::Square => "square",
        Suite::Amplify => "amplify",
    };
    let dir = args.output.unwrap_or_else(|| PathBuf::from("experiments").join(name));
    fs::create_dir_all(&dir)?;
    let report = match args.suite {
        Suite::Step => step(&dir)?,
        Suite::Backdrive => backdrive(&dir)?,
        Suite::Square => square(&dir)?,
        Suite::Amplify => amplify(&dir)?,
    };
    fs::write(dir.join("report.txt"), &report)?;
    print!("{report}");
    println!("output = {}", dir.display());
    Ok(())
}

fn ms(v: Option<f64>) -> String {
    v.map(|s| format!("{:.1}", s * 1e3)).unwrap_or_else(|| "not reached".into())
}

fn step(dir: &Path) -> Result<String> {
    let e = experiments::step(&ActuatorConfig::default());
    let mut csv = String::from("time,tension\n");
    for (k, t) in e.trace.iter().enumerate() {
        let _ = writeln!(csv, "{:.3},{t:.8e}", k as f64 * 1e-3);
    }
    fs::write(dir.join("step.csv"), csv)?;
    let mut r = String::new();
    let _ = writeln!(r, "step_n = {} -> {}", e.from, e.to);
    let _ = writeln!(r, "rise_time_ms = {}", ms(e.response.rise_time));
    let _ = writeln!(r, "settling_time_ms = {} (band {} N)", ms(e.response.settling_time), experiments::STEP_BAND);
    let _ = writeln!(r, "overshoot_n = {:.3}", e.response.overshoot);
    Ok(r)
}

fn backdrive(dir: &Path) -> Result<String> {
    let cfg = ActuatorConfig::default();
    let e = experiments::backdrive(&cfg);
    let mut csv = String::from("time,velocity");
    for l in &e.levels {
        let _ = write!(csv, ",error_{}", l.commanded);
    }
    csv.push('\n');
    for (k, v) in e.velocity.iter().enumerate() {
        let _ = write!(csv, "{:.3},{v:.8e}", k as f64 * 1e-3);
        for err in &e.errors {
            let _ = write!(csv, ",{:.8e}", err[k]);
        }
        csv.push('\n');
    }
    fs::write(dir.join("backdrive.csv"), csv)?;
    let mut r = String::new();
    let _ = writeln!(r, "stiction_band_n = {}", cfg.stiction_band);
    for l in &e.levels {
        let s = &l.stats;
        let _ = writeln!(
            r,
            "level_{}_n: slow_error_max = {:.3}, mean = {:.3}, std = {:.3}, p01 = {:.3}, p99 = {:.3}",
            l.commanded, l.slow_error_max, s.mean, s.std, s.p01, s.p99
        );
    }
    let _ = writeln!(r, "level_spread_n = {:.4}", e.spread);
    Ok(r)
}

fn square(dir: &Path) -> Result<String> {
    let (few, many) = (presets::square(2)?, presets::square(4)?);
    let e = experiments::square_with(few.clone(), many.clone())?;
    write_run(&dir.join("two_modules"), &few, &e.few)?;
    write_run(&dir.join("four_modules"), &many, &e.many)?;
    let text = e.scaling.to_text();
    fs::write(dir.join("scaling.txt"), &text)?;
    let mut r = text;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(r, "tracking_error_max_m_four = {}", opt(e.many_metrics.tracking_error_max));
    let _ = writeln!(r, "tracking_error_max_m_two = {}", opt(e.few_metrics.tracking_error_max));
    let _ = writeln!(r, "stick_slip_pauses_four = {}", e.many_metrics.stick_slip_pauses);
    let _ = writeln!(r, "stick_slip_pauses_two = {}", e.few_metrics.stick_slip_pauses);
    Ok(r)
}

fn amplify(dir: &Path) -> Result<String> {
    let scenario = presets::amplify()?;
    let e = experiments::amplify_with(scenario.clone())?;
    let mut ideal = scenario.clone();
    ideal.ideal_actuators = true;
    write_run(&dir.join("stiction"), &scenario, &e.stiction)?;
    write_run(&dir.join("ideal"), &ideal, &e.ideal)?;
    let mut r = String::new();
    for (label, m) in [("stiction", &e.stiction_metrics), ("ideal", &e.ideal_metrics)] {
        let _ = writeln!(
            r,
            "{label}: operator_mean = {:.2} N ({:.1} % of weight), operator_peak = {:.2} N ({:.1} %)",
            m.operator_force_mean,
            100.0 * m.operator_mean_ratio,
            m.operator_force_max,
            100.0 * m.operator_max_ratio
        );
    }
    Ok(r)
}
