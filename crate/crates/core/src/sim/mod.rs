//! Multi-rate closed-loop simulation.
//!
//! One base tick (1 ms by default) runs, in order: queued commands, the
//! pose loop if due, the allocation loop if due, every actuator, then the
//! payload dynamics and the external-wrench estimator. Loops are phased so
//! they all fire on tick 0.

pub mod log;
pub mod metrics;
pub mod presets;
pub mod scenario;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::actuator::{step_actuator, ActuatorConfig, ActuatorState};
use crate::allocator::Allocator;
use crate::control::{
    estimate_external_wrench, ControlMode, Controller, ExternalWrenchEstimator, PlanarAccel, WrenchProfile,
};
use crate::dynamics::{step_dynamics, DynamicsState};
use crate::error::{Error, Result};
use crate::kinematics::{build_jacobian, compute_cable_states};
use crate::model::{ModuleGeometry, PayloadModel, PlanarPose, PlanarTwist, TensionVector, Wrench};

pub use self::log::{RunLog, RunMeta, TickRecord};
pub use self::metrics::{compare_scaling, compute_metrics, MetricsReport, ScalingReport};
pub use self::scenario::{ModeSpec, NoiseSpec, OperatorSpec, PayloadSpec, Rates, Scenario};

/// Length of the linear fade after an applied wrench is released (s).
pub const PULSE_DECAY: f64 = 0.1;

/// Mode switch requested at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModeRequest {
    Hold,
    /// Restart the scenario's trajectory from the current time.
    Trajectory,
    /// Pass through the scenario's wrench stream (or nothing).
    Teleop,
    Amplify {
        #[serde(default)]
        gain: f64,
    },
}

/// Runtime input, applied at the next tick boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    /// Push on the payload with `wrench` for `hold` seconds, then fade out.
    ApplyWrench { wrench: Wrench, hold: f64 },
    SetTarget { x: f64, z: f64 },
    SetMode { request: ModeRequest },
}

/// A command stamped with the base tick at which it took effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCommand {
    pub tick: u64,
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pulse {
    wrench: Wrench,
    start: f64,
    hold: f64,
}

impl Pulse {
    fn sample(&self, t: f64) -> Wrench {
        let since = t - self.start;
        if since < 0.0 {
            Wrench::ZERO
        } else if since < self.hold {
            self.wrench
        } else if since < self.hold + PULSE_DECAY {
            self.wrench * (1.0 - (since - self.hold) / PULSE_DECAY)
        } else {
            Wrench::ZERO
        }
    }
}

/// Spring-damper hand following eased waypoints.
#[derive(Debug, Clone)]
struct Operator {
    keys: Vec<(f64, PlanarPose)>,
    stiffness: f64,
    damping: f64,
    max_force: f64,
}

impl Operator {
    fn new(spec: &OperatorSpec) -> Self {
        Operator {
            keys: spec
                .waypoints
                .iter()
                .map(|w| (w.t, PlanarPose::new(w.x, w.z, 0.0)))
                .collect(),
            stiffness: spec.stiffness,
            damping: spec.damping,
            max_force: spec.max_force,
        }
    }

    /// Reference point and velocity with cosine easing on every segment, so
    /// the hand starts and stops each move smoothly.
    fn reference(&self, t: f64) -> (PlanarPose, PlanarTwist) {
        let n = self.keys.len();
        if t <= self.keys[0].0 {
            return (self.keys[0].1, PlanarTwist::default());
        }
        if t >= self.keys[n - 1].0 {
            return (self.keys[n - 1].1, PlanarTwist::default());
        }
        let i = self.keys.partition_point(|(kt, _)| *kt <= t);
        let ((t0, a), (t1, b)) = (self.keys[i - 1], self.keys[i]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let ease = 0.5 * (1.0 - (PI * s).cos());
        let rate = 0.5 * PI * (PI * s).sin() / h;
        (
            PlanarPose::new(a.x + (b.x - a.x) * ease, a.z + (b.z - a.z) * ease, 0.0),
            PlanarTwist {
                vx: (b.x - a.x) * rate,
                vz: (b.z - a.z) * rate,
                omega: 0.0,
            },
        )
    }

    fn force(&self, t: f64, pose: &PlanarPose, twist: &PlanarTwist) -> Wrench {
        let (r, v) = self.reference(t);
        let fx = self.stiffness * (r.x - pose.x) + self.damping * (v.vx - twist.vx);
        let fz = self.stiffness * (r.z - pose.z) + self.damping * (v.vz - twist.vz);
        let norm = fx.hypot(fz);
        let scale = if norm > self.max_force { self.max_force / norm } else { 1.0 };
        Wrench {
            fx: fx * scale,
            fz: fz * scale,
            ..Wrench::ZERO
        }
    }
}

/// Per-module view for snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleSnapshot {
    pub anchor: [f64; 2],
    /// World-frame attachment point.
    pub attachment: [f64; 2],
    pub commanded: f64,
    pub applied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub time: f64,
    pub pose: PlanarPose,
    pub twist: PlanarTwist,
    pub modules: Vec<ModuleSnapshot>,
    pub w_des: Wrench,
    pub w_ext: Wrench,
    pub w_ext_estimate: Wrench,
    pub mode: String,
}

/// Closed-loop simulation state. Owned by one thread; step it with
/// [`Simulation::step`].
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    payload: PayloadModel,
    actuator: ActuatorConfig,
    trajectory: Option<ControlMode>,
    teleop_stream: WrenchProfile,
    external: WrenchProfile,
    operator: Option<Operator>,
    plant: DynamicsState,
    actuators: Vec<ActuatorState>,
    allocator: Allocator,
    controller: Controller,
    estimator: ExternalWrenchEstimator,
    rng: ChaCha8Rng,
    pose_noise: Normal<f64>,
    theta_noise: Normal<f64>,
    feedback: PlanarPose,
    reference: Option<PlanarPose>,
    w_des: Wrench,
    commanded: TensionVector,
    residual: Wrench,
    w_ext: Wrench,
    pulse: Option<Pulse>,
    pending: Vec<Command>,
    timeline: Vec<TimedCommand>,
    tick: u64,
    pose_updates: u64,
    qp_solves: u64,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let payload = scenario.payload_model()?;
        let mode = scenario.control_mode()?;
        let trajectory = matches!(mode, ControlMode::Trajectory(_)).then(|| mode.clone());
        let teleop_stream = match &mode {
            ControlMode::Teleop(s) => s.clone(),
            _ => WrenchProfile::default(),
        };
        let external = WrenchProfile::new(&scenario.external)?;
        let operator = scenario.operator.as_ref().map(Operator::new);
        let actuator = scenario.actuator_config();
        let pose_noise = Normal::new(0.0, scenario.noise.pose_sigma)
            .map_err(|e| Error::Scenario(format!("noise.pose_sigma: {e}")))?;
        let theta_noise = Normal::new(0.0, scenario.noise.theta_sigma)
            .map_err(|e| Error::Scenario(format!("noise.theta_sigma: {e}")))?;

        let pose = scenario.initial_pose;
        let mut controller = Controller::new(mode, scenario.gains, scenario.hold_target());
        let mut allocator = Allocator::default();
        let mut estimator = ExternalWrenchEstimator::new(scenario.estimator_cutoff_hz);
        estimator.value = Wrench::ZERO;

        let regulated = matches!(controller.mode, ControlMode::Hold | ControlMode::Trajectory(_));
        let dt_pose = 1.0 / scenario.rates.pose_hz as f64;
        let mut probe = controller.clone();
        let w0 = probe.update(0.0, &pose, &payload, &Wrench::ZERO, dt_pose).w_des;
        let mut initial = allocator.allocate(&pose, &payload, &scenario.modules, &w0, &scenario.weights)?;
        if regulated {
            // Pre-distort the request so the regularized allocation delivers
            // exactly the balancing wrench: a balanced start is then an exact
            // equilibrium rather than a slow drift the integrator must absorb.
            let mut trim = Wrench::ZERO;
            for _ in 0..50 {
                let miss = w0 - initial.achieved_wrench;
                let masked = Wrench::from_array(std::array::from_fn(|i| {
                    if scenario.weights.w_cart[i] > 0.0 {
                        miss[i]
                    } else {
                        0.0
                    }
                }));
                if masked.max_abs() <= 1e-13 * payload.weight().max(1.0) {
                    break;
                }
                trim += masked;
                controller.set_trim(trim);
                let mut probe = controller.clone();
                let w = probe.update(0.0, &pose, &payload, &Wrench::ZERO, dt_pose).w_des;
                initial = allocator.allocate(&pose, &payload, &scenario.modules, &w, &scenario.weights)?;
            }
        }
        allocator.prime(initial.tensions.clone());
        let actuators = initial.tensions.iter().map(|&t| ActuatorState::at(t)).collect();

        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            payload,
            actuator,
            trajectory,
            teleop_stream,
            external,
            operator,
            plant: DynamicsState::at_rest(pose),
            actuators,
            allocator,
            controller,
            estimator,
            pose_noise,
            theta_noise,
            feedback: pose,
            reference: None,
            w_des: w0,
            commanded: initial.tensions,
            residual: initial.residual,
            w_ext: Wrench::ZERO,
            pulse: None,
            pending: Vec::new(),
            timeline: Vec::new(),
            tick: 0,
            pose_updates: 0,
            qp_solves: 0,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn payload(&self) -> &PayloadModel {
        &self.payload
    }

    pub fn modules(&self) -> &[ModuleGeometry] {
        &self.scenario.modules
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.scenario.rates.dt()
    }

    pub fn state(&self) -> &DynamicsState {
        &self.plant
    }

    pub fn mode(&self) -> &ControlMode {
        &self.controller.mode
    }

    pub fn pose_updates(&self) -> u64 {
        self.pose_updates
    }

    pub fn qp_solves(&self) -> u64 {
        self.qp_solves
    }

    /// Commands that have taken effect so far, with their ticks.
    pub fn timeline(&self) -> &[TimedCommand] {
        &self.timeline
    }

    /// Check a command and queue it for the next tick boundary.
    pub fn queue_command(&mut self, command: Command) -> Result<()> {
        match &command {
            Command::ApplyWrench { wrench, hold } => {
                if !(wrench.is_finite() && hold.is_finite() && *hold >= 0.0) {
                    return Err(Error::InvalidArgument("wrench and hold time must be finite, hold >= 0".into()));
                }
            }
            Command::SetTarget { x, z } => {
                if !(x.is_finite() && z.is_finite()) {
                    return Err(Error::InvalidArgument("target must be finite".into()));
                }
            }
            Command::SetMode { request } => match request {
                ModeRequest::Trajectory if self.trajectory.is_none() => {
                    return Err(Error::InvalidArgument("scenario defines no trajectory".into()));
                }
                ModeRequest::Amplify { gain } if !(gain.is_finite() && *gain >= 0.0) => {
                    return Err(Error::InvalidArgument(format!("gain must be >= 0, got {gain}")));
                }
                _ => {}
            },
        }
        self.pending.push(command);
        Ok(())
    }

    fn apply(&mut self, command: Command) {
        let now = self.time();
        match command {
            Command::ApplyWrench { wrench, hold } => {
                self.pulse = Some(Pulse {
                    wrench,
                    start: now,
                    hold,
                });
            }
            Command::SetTarget { x, z } => {
                let theta = self.controller.hold_target().theta;
                self.controller.set_target(PlanarPose::new(x, z, theta), now);
            }
            Command::SetMode { request } => {
                let mode = match request {
                    ModeRequest::Hold => ControlMode::Hold,
                    ModeRequest::Trajectory => self.trajectory.clone().expect("checked when queued"),
                    ModeRequest::Teleop => ControlMode::Teleop(self.teleop_stream.clone()),
                    ModeRequest::Amplify { gain } => ControlMode::Amplify { gain },
                };
                let feedback = self.feedback;
                self.controller.set_mode(mode, now, &feedback);
            }
        }
        self.timeline.push(TimedCommand {
            tick: self.tick,
            command,
        });
    }

    /// Advance one base tick and return its record.
    pub fn step(&mut self) -> Result<TickRecord> {
        let tick = self.tick;
        self.step_inner().map_err(|e| e.at_tick(tick))
    }

    fn step_inner(&mut self) -> Result<TickRecord> {
        let rates = self.scenario.rates;
        let dt = rates.dt();
        let now = self.time();
        for command in std::mem::take(&mut self.pending) {
            self.apply(command);
        }

        if rates.due(rates.pose_hz, self.tick) {
            let noise = (
                self.pose_noise.sample(&mut self.rng),
                self.pose_noise.sample(&mut self.rng),
                self.theta_noise.sample(&mut self.rng),
            );
            let truth = self.plant.pose;
            self.feedback = PlanarPose::new(truth.x + noise.0, truth.z + noise.1, truth.theta + noise.2);
            let out = self.controller.update(
                now,
                &self.feedback,
                &self.payload,
                &self.estimator.value,
                1.0 / rates.pose_hz as f64,
            );
            self.w_des = out.w_des;
            self.reference = out.reference;
            self.pose_updates += 1;
        }

        let (mut iterations, mut solve_time) = (0, 0.0);
        if rates.due(rates.qp_hz, self.tick) {
            let r = self.allocator.allocate(
                &self.feedback,
                &self.payload,
                &self.scenario.modules,
                &self.w_des,
                &self.scenario.weights,
            )?;
            self.commanded = r.tensions;
            self.residual = r.residual;
            iterations = r.iterations;
            if self.scenario.record_solve_time {
                solve_time = r.solve_time;
            }
            self.qp_solves += 1;
        }

        let cables = compute_cable_states(&self.plant.pose, &self.payload, &self.scenario.modules)?;
        let mut applied = Vec::with_capacity(cables.len());
        for (i, cable) in cables.iter().enumerate() {
            let state = &self.actuators[i];
            let speed = cable.reel_in_speed(&self.plant.twist);
            let (next, out) = step_actuator(state, &self.actuator, self.commanded[i], state.applied_tension, speed, dt);
            self.actuators[i] = next;
            applied.push(out);
        }
        let applied = TensionVector::new(applied)?;

        let mut w_ext = self.external.sample(now);
        if let Some(op) = &self.operator {
            w_ext += op.force(now, &self.plant.pose, &self.plant.twist);
        }
        if let Some(p) = &self.pulse {
            w_ext += p.sample(now);
        }
        self.w_ext = w_ext;

        let cable_wrench = build_jacobian(&cables).apply(&applied);
        let net = cable_wrench + self.payload.gravity_wrench() + w_ext;
        let next = step_dynamics(&self.plant, &net, &self.payload, dt)?;
        let accel = PlanarAccel::from_twists(&self.plant.twist, &next.twist, dt);
        let raw = estimate_external_wrench(&accel, &self.payload, &cable_wrench);
        self.estimator.update(&raw, dt);
        self.plant = next;
        self.tick += 1;

        Ok(TickRecord {
            time: self.plant.time,
            pose: self.plant.pose,
            twist: self.plant.twist,
            feedback: self.feedback,
            reference: self.reference,
            w_des: self.w_des,
            commanded: self.commanded.as_slice().to_vec(),
            applied: applied.as_slice().to_vec(),
            w_ext,
            w_ext_estimate: self.estimator.value,
            residual: self.residual,
            solve_time,
            iterations,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        let modules = self
            .scenario
            .modules
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let at = self.plant.pose.transform(&m.attachment);
                ModuleSnapshot {
                    anchor: [m.anchor.x, m.anchor.y],
                    attachment: [at.x, at.y],
                    commanded: self.commanded[i],
                    applied: self.actuators[i].applied_tension,
                }
            })
            .collect();
        Snapshot {
            tick: self.tick,
            time: self.time(),
            pose: self.plant.pose,
            twist: self.plant.twist,
            modules,
            w_des: self.w_des,
            w_ext: self.w_ext,
            w_ext_estimate: self.estimator.value,
            mode: self.controller.mode.name().to_string(),
        }
    }

    /// Metadata describing this run so far.
    pub fn meta(&self) -> RunMeta {
        RunMeta {
            scenario: self.scenario.name.clone(),
            modules: self.scenario.modules.len(),
            duration: self.scenario.duration,
            seed: self.scenario.seed,
            rates: self.scenario.rates,
            trajectory_fingerprint: self.scenario.trajectory_fingerprint(),
            payload_mass: self.payload.mass,
            payload_weight: self.payload.weight(),
            t_max: self.scenario.modules.iter().map(|m| m.t_max).collect(),
            t_min: self.scenario.modules.iter().map(|m| m.t_min).collect(),
            ideal_actuators: self.scenario.ideal_actuators,
            pose_updates: self.pose_updates,
            qp_solves: self.qp_solves,
        }
    }
}

/// Run a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunLog> {
    run_with_commands(scenario, &[])
}

/// Run a scenario to completion, injecting recorded commands at their ticks.
pub fn run_with_commands(scenario: &Scenario, timeline: &[TimedCommand]) -> Result<RunLog> {
    replay(scenario, timeline, scenario.ticks())
}

/// Run `ticks` base ticks, injecting recorded commands at their ticks.
/// Replaying a live session's timeline reproduces its log exactly.
pub fn replay(scenario: &Scenario, timeline: &[TimedCommand], ticks: u64) -> Result<RunLog> {
    let mut sim = Simulation::new(scenario.clone())?;
    let mut records = Vec::with_capacity(ticks as usize);
    let mut next = 0;
    for _ in 0..ticks {
        while next < timeline.len() && timeline[next].tick <= sim.tick() {
            sim.queue_command(timeline[next].command)?;
            next += 1;
        }
        records.push(sim.step()?);
    }
    let mut meta = sim.meta();
    meta.duration = ticks as f64 * scenario.rates.dt();
    let log = RunLog { meta, records };
    log.check_bounds()?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{Waypoint, WrenchKey};
    use nalgebra::Vector2;

    pub(crate) fn base_scenario(mode: ModeSpec) -> Scenario {
        let module = |x: f64, z: f64| ModuleGeometry::new(Vector2::new(x, z), Vector2::zeros(), 30.0, 300.0).unwrap();
        Scenario {
            name: "test".into(),
            description: String::new(),
            seed: 1,
            duration: 1.0,
            payload: PayloadSpec {
                mass: 27.2,
                inertia_yy: 1.133,
                gravity: 9.81,
            },
            initial_pose: PlanarPose::new(2.0, 0.6, 0.0),
            modules: vec![module(0.0, 2.5), module(4.0, 2.5), module(0.0, 1.75), module(4.0, 1.75)],
            mode,
            weights: Default::default(),
            gains: Default::default(),
            actuator: Default::default(),
            ideal_actuators: true,
            external: vec![],
            operator: None,
            noise: Default::default(),
            rates: Default::default(),
            estimator_cutoff_hz: 10.0,
            record_solve_time: false,
        }
    }

    #[test]
    fn hold_is_a_fixed_point_with_ideal_actuators() {
        let mut s = base_scenario(ModeSpec::Hold { target: None });
        s.duration = 2.0;
        let log = run_scenario(&s).unwrap();
        let drift = log
            .records
            .iter()
            .map(|r| r.pose.distance(&s.initial_pose))
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
        assert_eq!(log.records.len(), 2000);
    }

    #[test]
    fn rate_accounting() {
        let s = base_scenario(ModeSpec::Hold { target: None });
        let log = run_scenario(&s).unwrap();
        assert_eq!(log.meta.pose_updates, 200);
        assert_eq!(log.meta.qp_solves, 500);
        assert_eq!(log.records.iter().filter(|r| r.iterations > 0).count(), 500);
        assert!(log.records.windows(2).all(|w| w[1].time > w[0].time));
    }

    #[test]
    fn injected_wrench_is_estimated() {
        let mut s = base_scenario(ModeSpec::Amplify { gain: 0.0 });
        s.external = vec![WrenchKey { t: 0.0, fx: 10.0, fz: 0.0, my: 0.0 }];
        s.duration = 0.5;
        let log = run_scenario(&s).unwrap();
        let last = log.records.last().unwrap();
        assert!((last.w_ext_estimate.fx - 10.0).abs() < 0.5, "{:?}", last.w_ext_estimate);
        assert!(last.w_ext_estimate.fz.abs() < 0.5);
        // pushed along +x against weightless compensation
        assert!(last.twist.vx > 0.0);
    }

    #[test]
    fn apply_wrench_pulse_plateau_and_decay() {
        let s = base_scenario(ModeSpec::Amplify { gain: 0.0 });
        let push = Wrench { fx: 30.0, ..Wrench::ZERO };
        let timeline = [TimedCommand {
            tick: 100,
            command: Command::ApplyWrench { wrench: push, hold: 0.5 },
        }];
        let log = run_with_commands(&s, &timeline).unwrap();
        let w = |k: usize| log.records[k].w_ext.fx;
        assert_eq!(w(99), 0.0);
        assert_eq!(w(100), 30.0);
        assert_eq!(w(599), 30.0);
        assert!((w(650) - 15.0).abs() < 1e-9);
        assert_eq!(w(700), 0.0);
        assert!(log.records[600].twist.vx > 0.0);
    }

    #[test]
    fn mode_switch_to_hold_uses_gravity_plus_pid() {
        let s = base_scenario(ModeSpec::Amplify { gain: 0.0 });
        let mut sim = Simulation::new(s).unwrap();
        for _ in 0..10 {
            sim.step().unwrap();
        }
        sim.queue_command(Command::SetMode { request: ModeRequest::Hold }).unwrap();
        let r = sim.step().unwrap();
        assert_eq!(sim.mode().name(), "hold");
        assert!(r.reference.is_some());
        assert!(sim
            .queue_command(Command::SetMode { request: ModeRequest::Trajectory })
            .is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut s = base_scenario(ModeSpec::Trajectory {
            waypoints: vec![
                Waypoint { t: 0.0, x: 2.0, z: 0.6, theta: 0.0 },
                Waypoint { t: 1.0, x: 2.1, z: 0.6, theta: 0.0 },
            ],
        });
        s.ideal_actuators = false;
        s.noise.pose_sigma = 5e-4;
        let a = run_scenario(&s).unwrap().to_csv_string();
        let b = run_scenario(&s).unwrap().to_csv_string();
        assert_eq!(a, b);
        s.seed = 2;
        assert_ne!(a, run_scenario(&s).unwrap().to_csv_string());
    }

    #[test]
    fn replay_reproduces_a_live_session() {
        let s = base_scenario(ModeSpec::Amplify { gain: 0.0 });
        let mut sim = Simulation::new(s.clone()).unwrap();
        let mut live = vec![];
        for k in 0..s.ticks() {
            if k == 123 {
                sim.queue_command(Command::ApplyWrench {
                    wrench: Wrench { fz: 20.0, ..Wrench::ZERO },
                    hold: 0.2,
                })
                .unwrap();
            }
            if k == 600 {
                sim.queue_command(Command::SetTarget { x: 2.0, z: 0.6 }).unwrap();
            }
            live.push(sim.step().unwrap());
        }
        let live = RunLog {
            meta: sim.meta(),
            records: live,
        };
        let replay = run_with_commands(&s, sim.timeline()).unwrap();
        assert_eq!(live.to_csv_string(), replay.to_csv_string());
    }
}
