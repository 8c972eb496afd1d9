use std::path::Path;
use std::time::Instant;

use cablesim::sim::{compute_metrics, run_scenario, Scenario};

fn shipped() -> Vec<(String, Scenario)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut out: Vec<(String, Scenario)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), Scenario::load(&p).unwrap()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn every_shipped_scenario_round_trips() {
    let all = shipped();
    assert!(all.len() >= 5);
    for (file, s) in all {
        let back = Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, s, "{file}");
    }
}

#[test]
fn every_shipped_scenario_runs_within_a_minute() {
    for (file, s) in shipped() {
        let started = Instant::now();
        let log = run_scenario(&s).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert!(started.elapsed().as_secs_f64() < 60.0, "{file}");
        assert_eq!(log.records.len() as u64, s.ticks());
        log.check_bounds().unwrap();
        let m = compute_metrics(&log, &s.payload_model().unwrap()).unwrap();
        assert!(m.residual_force_max.is_finite(), "{file}");
    }
}
