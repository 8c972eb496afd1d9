//! Non-ideal tension source for one module.
//!
//! Each module runs a tension loop at the base rate: feedforward of the
//! commanded tension plus PID on the load-cell error. The output is then
//! shaped by a stick/slip latch, backdrive friction, reflected inertia of the
//! drum, a slew limit and saturation.
//!
//! Cable velocity is the reel-in speed: positive while the cable is being
//! wound onto the drum, negative while the payload pulls it out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActuatorConfig {
    pub kp: f64,
    /// Integral gain (1/s).
    pub ki: f64,
    /// Derivative gain (s).
    pub kd: f64,
    /// Feedforward gain on the commanded tension.
    pub k_ff: f64,
    /// Breakaway tension error (N).
    pub stiction_band: f64,
    /// Velocity below which the output may stick (m/s).
    pub v_stick: f64,
    /// Viscous damping at the cable (N·s/m).
    pub viscous: f64,
    /// Apparent drum mass at the cable (kg).
    pub reflected_inertia: f64,
    /// Motor command saturation (N).
    pub t_min: f64,
    pub t_max: f64,
    /// Output slew limit (N/s).
    pub max_rate: f64,
}

impl Default for ActuatorConfig {
    /// Gains tuned for a 50 N step to rise (10–90 %) within 75 ms and settle
    /// to ±2 N within 100 ms against the default 10 N stiction band.
    fn default() -> Self {
        ActuatorConfig {
            kp: 2.0,
            ki: 10.0,
            kd: 0.0,
            k_ff: 1.0,
            stiction_band: 10.0,
            v_stick: 1e-3,
            viscous: 20.0,
            reflected_inertia: 2.0,
            t_min: 0.0,
            t_max: 300.0,
            max_rate: 2000.0,
        }
    }
}

impl ActuatorConfig {
    /// A pure tension source: output equals command after a rate-limited
    /// transient, with no friction or inertia.
    pub fn ideal(t_max: f64) -> Self {
        ActuatorConfig {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            k_ff: 1.0,
            stiction_band: 0.0,
            v_stick: 1e-3,
            viscous: 0.0,
            reflected_inertia: 0.0,
            t_min: 0.0,
            t_max,
            max_rate: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.kp,
            self.ki,
            self.kd,
            self.k_ff,
            self.stiction_band,
            self.v_stick,
            self.viscous,
            self.reflected_inertia,
            self.t_min,
            self.t_max,
            self.max_rate,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite
            || self.stiction_band < 0.0
            || self.v_stick < 0.0
            || self.viscous < 0.0
            || self.reflected_inertia < 0.0
            || !(self.t_min < self.t_max)
            || !(self.max_rate > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid actuator config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActuatorState {
    /// Accumulated tension error (N·s).
    pub integrator: f64,
    pub prev_error: f64,
    /// Tension currently delivered to the cable (N).
    pub applied_tension: f64,
    /// Stick/slip latch.
    pub stuck: bool,
    /// Reel-in speed seen on the previous step, for the drum inertia term.
    pub prev_velocity: f64,
}

impl ActuatorState {
    /// Start at rest, already delivering `tension`.
    pub fn at(tension: f64) -> Self {
        ActuatorState {
            applied_tension: tension,
            ..Default::default()
        }
    }
}

/// Tension lost to friction while the cable moves. Depends on velocity
/// only, never on the tension level.
pub fn backdrive_disturbance(config: &ActuatorConfig, cable_velocity: f64) -> f64 {
    if cable_velocity == 0.0 {
        return 0.0;
    }
    let ramp = if config.v_stick > 0.0 {
        (cable_velocity.abs() / config.v_stick).min(1.0)
    } else {
        1.0
    };
    cable_velocity.signum() * config.stiction_band * ramp + config.viscous * cable_velocity
}

pub fn step_actuator(
    state: &ActuatorState,
    config: &ActuatorConfig,
    commanded: f64,
    measured: f64,
    cable_velocity: f64,
    dt: f64,
) -> (ActuatorState, f64) {
    debug_assert!(dt > 0.0 && commanded.is_finite());

    let error = commanded - measured;
    let derivative = (error - state.prev_error) / dt;
    let feedforward = config.k_ff * commanded;

    let mut integrator = state.integrator + error * dt;
    let unsaturated = feedforward + config.kp * error + config.ki * integrator + config.kd * derivative;
    // clamping anti-windup: stop integrating while pushing further into saturation
    if (unsaturated > config.t_max && error > 0.0) || (unsaturated < config.t_min && error < 0.0) {
        integrator = state.integrator;
    }
    let control = (feedforward + config.kp * error + config.ki * integrator + config.kd * derivative)
        .clamp(config.t_min, config.t_max);

    let applied = state.applied_tension;
    let stuck = cable_velocity.abs() < config.v_stick && (control - applied).abs() < config.stiction_band;

    let output = if stuck {
        applied
    } else {
        let accel = (cable_velocity - state.prev_velocity) / dt;
        let target = control - backdrive_disturbance(config, cable_velocity) - config.reflected_inertia * accel;
        let max_step = config.max_rate * dt;
        (applied + (target - applied).clamp(-max_step, max_step)).clamp(0.0, config.t_max)
    };

    (
        ActuatorState {
            integrator,
            prev_error: error,
            applied_tension: output,
            stuck,
            prev_velocity: cable_velocity,
        },
        output,
    )
}

/// Step-response figures of a sampled trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    /// 10 % → 90 % rise time (s), if reached.
    pub rise_time: Option<f64>,
    /// Time after the step from which the trace stays within the band (s).
    pub settling_time: Option<f64>,
    /// Peak overshoot past the final value (N).
    pub overshoot: f64,
}

/// Analyze a trace sampled every `dt` starting at the step instant.
pub fn analyze_step(trace: &[f64], dt: f64, from: f64, to: f64, band: f64) -> StepResponse {
    let span = to - from;
    let level = |frac: f64| from + frac * span;
    let crossed = |frac: f64| {
        trace
            .iter()
            .position(|v| (v - level(frac)) * span.signum() >= 0.0)
            .map(|i| i as f64 * dt)
    };
    let rise_time = match (crossed(0.1), crossed(0.9)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    let settling_time = match trace.iter().rposition(|v| (v - to).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < trace.len() => Some((i + 1) as f64 * dt),
        Some(_) => None,
    };
    let overshoot = trace
        .iter()
        .map(|v| (v - to) * span.signum())
        .fold(0.0, f64::max);
    StepResponse {
        rise_time,
        settling_time,
        overshoot,
    }
}

/// Drive an actuator clamped to a rigid environment (zero cable velocity)
/// through a step from `from` to `to` and return the delivered tension at
/// each tick after the step.
pub fn simulate_step(config: &ActuatorConfig, from: f64, to: f64, dt: f64, duration: f64) -> Vec<f64> {
    let mut state = ActuatorState::at(from);
    let ticks = (duration / dt).round() as usize;
    (0..ticks)
        .map(|_| {
            let (next, out) = step_actuator(&state, config, to, state.applied_tension, 0.0, dt);
            state = next;
            out
        })
        .collect()
}

/// Hold `commanded` while the cable is dragged along `velocities` and return
/// the tension error (delivered − commanded) at each tick.
pub fn simulate_backdrive(config: &ActuatorConfig, commanded: f64, velocities: &[f64], dt: f64) -> Vec<f64> {
    let mut state = ActuatorState::at(commanded);
    velocities
        .iter()
        .map(|&v| {
            let (next, out) = step_actuator(&state, config, commanded, state.applied_tension, v, dt);
            state = next;
            out - commanded
        })
        .collect()
}

/// Slowly varying manual drag: a sinusoid of `amplitude` m/s and `period` s.
pub fn backdrive_profile(amplitude: f64, period: f64, dt: f64, duration: f64) -> Vec<f64> {
    let ticks = (duration / dt).round() as usize;
    (0..ticks)
        .map(|k| amplitude * (2.0 * std::f64::consts::PI * k as f64 * dt / period).sin())
        .collect()
}

/// Summary of a tension-error trace (N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub p01: f64,
    pub p50: f64,
    pub p99: f64,
}

impl ErrorStats {
    pub fn of(errors: &[f64]) -> Self {
        assert!(!errors.is_empty());
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = (errors.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        ErrorStats {
            mean,
            std,
            p01: q(0.01),
            p50: q(0.5),
            p99: q(0.99),
        }
    }

    pub fn max_difference(&self, other: &ErrorStats) -> f64 {
        [
            self.mean - other.mean,
            self.std - other.std,
            self.p01 - other.p01,
            self.p50 - other.p50,
            self.p99 - other.p99,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}
