//! Canned characterization suites: actuator step and backdrive, the
//! two-versus-four module square trajectory, and operator-guided amplify.

use serde::{Deserialize, Serialize};

use crate::actuator::{
    analyze_step, backdrive_profile, simulate_backdrive, simulate_step, ActuatorConfig, ErrorStats, StepResponse,
};
use crate::error::Result;
use crate::sim::metrics::{compute_metrics, compare_scaling, MetricsReport, ScalingReport};
use crate::sim::{presets, run_scenario, RunLog, Scenario};

pub const STEP_FROM: f64 = 30.0;
pub const STEP_TO: f64 = 80.0;
/// Settling band for the step test (N).
pub const STEP_BAND: f64 = 2.0;
pub const BACKDRIVE_LEVELS: [f64; 4] = [50.0, 100.0, 150.0, 200.0];
/// Peak drag speed (m/s) and period (s) of the backdrive profile.
pub const BACKDRIVE_AMPLITUDE: f64 = 0.05;
pub const BACKDRIVE_PERIOD: f64 = 4.0;

const DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepExperiment {
    pub from: f64,
    pub to: f64,
    pub response: StepResponse,
    /// Delivered tension each millisecond after the step.
    pub trace: Vec<f64>,
}

pub fn step(config: &ActuatorConfig) -> StepExperiment {
    let trace = simulate_step(config, STEP_FROM, STEP_TO, DT, 0.5);
    StepExperiment {
        from: STEP_FROM,
        to: STEP_TO,
        response: analyze_step(&trace, DT, STEP_FROM, STEP_TO, STEP_BAND),
        trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackdriveLevel {
    pub commanded: f64,
    pub stats: ErrorStats,
    /// Largest |error| while the cable moves slower than the stick threshold.
    pub slow_error_max: f64,
    /// Fraction of slow ticks where the delivered tension is off the command.
    pub offset_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackdriveExperiment {
    pub velocity: Vec<f64>,
    pub levels: Vec<BackdriveLevel>,
    /// Largest difference of any error statistic between two levels (N).
    pub spread: f64,
    /// Tension error per level, aligned with `velocity`.
    pub errors: Vec<Vec<f64>>,
}

pub fn backdrive(config: &ActuatorConfig) -> BackdriveExperiment {
    let velocity = backdrive_profile(BACKDRIVE_AMPLITUDE, BACKDRIVE_PERIOD, DT, 2.0 * BACKDRIVE_PERIOD);
    let mut levels = Vec::new();
    let mut errors = Vec::new();
    for &commanded in &BACKDRIVE_LEVELS {
        let err = simulate_backdrive(config, commanded, &velocity, DT);
        let slow: Vec<f64> = err
            .iter()
            .zip(&velocity)
            .filter(|(_, v)| v.abs() < config.v_stick)
            .map(|(e, _)| *e)
            .collect();
        let offset = slow.iter().filter(|e| e.abs() > 1e-12).count();
        levels.push(BackdriveLevel {
            commanded,
            stats: ErrorStats::of(&err),
            slow_error_max: slow.iter().fold(0.0, |m, e| m.max(e.abs())),
            offset_fraction: offset as f64 / slow.len().max(1) as f64,
        });
        errors.push(err);
    }
    let spread = levels
        .iter()
        .flat_map(|a| levels.iter().map(move |b| a.stats.max_difference(&b.stats)))
        .fold(0.0, f64::max);
    BackdriveExperiment {
        velocity,
        levels,
        spread,
        errors,
    }
}

#[derive(Debug, Clone)]
pub struct SquareExperiment {
    pub few: RunLog,
    pub many: RunLog,
    pub few_metrics: MetricsReport,
    pub many_metrics: MetricsReport,
    pub scaling: ScalingReport,
}

/// Run the square trajectory with the upper pair and with all four modules.
pub fn square() -> Result<SquareExperiment> {
    square_with(presets::square(2)?, presets::square(4)?)
}

pub fn square_with(few: Scenario, many: Scenario) -> Result<SquareExperiment> {
    let few_log = run_scenario(&few)?;
    let many_log = run_scenario(&many)?;
    Ok(SquareExperiment {
        few_metrics: compute_metrics(&few_log, &few.payload_model()?)?,
        many_metrics: compute_metrics(&many_log, &many.payload_model()?)?,
        scaling: compare_scaling(&few_log, &many_log)?,
        few: few_log,
        many: many_log,
    })
}

#[derive(Debug, Clone)]
pub struct AmplifyExperiment {
    pub stiction: RunLog,
    pub ideal: RunLog,
    pub stiction_metrics: MetricsReport,
    pub ideal_metrics: MetricsReport,
}

/// Run the scripted operator profile with stiction and with ideal actuators.
pub fn amplify() -> Result<AmplifyExperiment> {
    amplify_with(presets::amplify()?)
}

pub fn amplify_with(scenario: Scenario) -> Result<AmplifyExperiment> {
    let mut real = scenario.clone();
    real.ideal_actuators = false;
    let mut ideal = scenario;
    ideal.ideal_actuators = true;
    let stiction = run_scenario(&real)?;
    let ideal_log = run_scenario(&ideal)?;
    Ok(AmplifyExperiment {
        stiction_metrics: compute_metrics(&stiction, &real.payload_model()?)?,
        ideal_metrics: compute_metrics(&ideal_log, &ideal.payload_model()?)?,
        stiction,
        ideal: ideal_log,
    })
}
