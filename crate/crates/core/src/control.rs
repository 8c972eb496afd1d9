//! Outer controllers producing the desired payload wrench.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PayloadModel, PlanarPose, PlanarTwist, Wrench};

/// Gains per axis, ordered `(x, z, theta)`. Position gains map metres to
/// newtons; the theta gains map radians to N·m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosePidGains {
    pub kp: [f64; 3],
    pub ki: [f64; 3],
    pub kd: [f64; 3],
    /// Clamp on the magnitude of each integral contribution (N or N·m).
    pub integrator_limit: [f64; 3],
    /// Cutoff of the first-order filter on the measured rate (Hz).
    pub derivative_cutoff_hz: f64,
}

impl Default for PosePidGains {
    /// Tuned once on the square-trajectory scenario; theta control is off.
    fn default() -> Self {
        PosePidGains {
            kp: [1500.0, 1500.0, 0.0],
            ki: [300.0, 300.0, 0.0],
            kd: [300.0, 300.0, 0.0],
            integrator_limit: [60.0, 60.0, 10.0],
            derivative_cutoff_hz: 20.0,
        }
    }
}

impl PosePidGains {
    pub fn validate(&self) -> Result<()> {
        let gains_ok = self
            .kp
            .iter()
            .chain(&self.ki)
            .chain(&self.kd)
            .all(|g| g.is_finite() && *g >= 0.0);
        let limits_ok = self.integrator_limit.iter().all(|l| l.is_finite() && *l > 0.0);
        if !gains_ok || !limits_ok || !(self.derivative_cutoff_hz > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid pose PID gains: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PosePidState {
    /// Integrated error per axis.
    pub integral: [f64; 3],
    /// Low-passed measured rate per axis.
    pub rate: [f64; 3],
    prev_measured: Option<[f64; 3]>,
}

fn axes(p: &PlanarPose) -> [f64; 3] {
    [p.x, p.z, p.theta]
}

fn wrap(e: f64) -> f64 {
    crate::model::normalize_angle(e)
}

/// `(0, +m·g, 0)`: holds the payload against its own weight.
pub fn gravity_compensation(payload: &PayloadModel) -> Wrench {
    Wrench {
        fz: payload.weight(),
        ..Wrench::ZERO
    }
}

/// Feedback part of the Cartesian loop. The derivative acts on the filtered
/// measured rate against `target_rate`, so target steps do not kick.
pub fn pose_pid(
    target: &PlanarPose,
    target_rate: &PlanarTwist,
    measured: &PlanarPose,
    gains: &PosePidGains,
    state: &mut PosePidState,
    dt: f64,
) -> Wrench {
    debug_assert!(dt > 0.0);
    let m = axes(measured);
    let t = axes(target);
    let error = [t[0] - m[0], t[1] - m[1], wrap(t[2] - m[2])];
    let ref_rate = [target_rate.vx, target_rate.vz, target_rate.omega];

    let tau = 1.0 / (2.0 * PI * gains.derivative_cutoff_hz);
    let alpha = dt / (dt + tau);
    if let Some(prev) = state.prev_measured {
        for i in 0..3 {
            let delta = if i == 2 { wrap(m[i] - prev[i]) } else { m[i] - prev[i] };
            state.rate[i] += alpha * (delta / dt - state.rate[i]);
        }
    }
    state.prev_measured = Some(m);

    let mut out = [0.0; 3];
    for i in 0..3 {
        if gains.ki[i] > 0.0 {
            let bound = gains.integrator_limit[i] / gains.ki[i];
            state.integral[i] = (state.integral[i] + error[i] * dt).clamp(-bound, bound);
        } else {
            state.integral[i] = 0.0;
        }
        out[i] = gains.kp[i] * error[i] + gains.ki[i] * state.integral[i] + gains.kd[i] * (ref_rate[i] - state.rate[i]);
    }
    // theta is counterclockwise; my is right-handed about +y
    Wrench {
        fx: out[0],
        fz: out[1],
        my: -out[2],
        ..Wrench::ZERO
    }
}

/// Gravity compensation plus `gain` times the sensed operator wrench. With
/// `gain = 0` the payload is simply weightless.
pub fn amplify(payload: &PayloadModel, w_ext_estimate: &Wrench, gain: f64) -> Wrench {
    debug_assert!(gain >= 0.0);
    if gain == 0.0 {
        return gravity_compensation(payload);
    }
    gravity_compensation(payload) + *w_ext_estimate * gain
}

/// Planar acceleration `(ax, az, alpha)` with `alpha` counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarAccel {
    pub ax: f64,
    pub az: f64,
    pub alpha: f64,
}

impl PlanarAccel {
    pub fn from_twists(prev: &PlanarTwist, next: &PlanarTwist, dt: f64) -> Self {
        PlanarAccel {
            ax: (next.vx - prev.vx) / dt,
            az: (next.vz - prev.vz) / dt,
            alpha: (next.omega - prev.omega) / dt,
        }
    }
}

/// Inverse-dynamics residual: what must have pushed the payload, given its
/// observed acceleration and the wrench the cables delivered.
pub fn estimate_external_wrench(accel: &PlanarAccel, payload: &PayloadModel, cable_wrench: &Wrench) -> Wrench {
    let inertial = Wrench {
        fx: payload.mass * accel.ax,
        fz: payload.mass * accel.az,
        my: -payload.inertia_yy * accel.alpha,
        ..Wrench::ZERO
    };
    inertial - payload.gravity_wrench() - *cable_wrench
}

/// First-order low-pass over the raw external wrench estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalWrenchEstimator {
    pub cutoff_hz: f64,
    pub value: Wrench,
}

impl ExternalWrenchEstimator {
    pub const DEFAULT_CUTOFF_HZ: f64 = 10.0;

    pub fn new(cutoff_hz: f64) -> Self {
        ExternalWrenchEstimator {
            cutoff_hz,
            value: Wrench::ZERO,
        }
    }

    pub fn update(&mut self, raw: &Wrench, dt: f64) -> Wrench {
        let tau = 1.0 / (2.0 * PI * self.cutoff_hz);
        let alpha = dt / (dt + tau);
        self.value = self.value + (*raw - self.value) * alpha;
        self.value
    }
}

impl Default for ExternalWrenchEstimator {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CUTOFF_HZ)
    }
}

/// Timed keyframes, linearly interpolated and held at both ends.
pub fn interpolate<T: Copy>(keys: &[(f64, T)], t: f64, lerp: impl Fn(&T, &T, f64) -> T) -> Option<T> {
    let first = keys.first()?;
    if t <= first.0 {
        return Some(first.1);
    }
    let last = keys.last()?;
    if t >= last.0 {
        return Some(last.1);
    }
    let i = keys.partition_point(|(kt, _)| *kt <= t);
    let (t0, a) = keys[i - 1];
    let (t1, b) = keys[i];
    Some(lerp(&a, &b, (t - t0) / (t1 - t0)))
}

/// Timed waypoints followed by piecewise-linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub z: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    keys: Vec<(f64, PlanarPose)>,
}

impl Trajectory {
    pub fn new(waypoints: &[Waypoint]) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::InvalidArgument("waypoint times must be strictly increasing".into()));
        }
        if waypoints.iter().any(|w| !(w.t.is_finite() && w.x.is_finite() && w.z.is_finite() && w.theta.is_finite())) {
            return Err(Error::InvalidArgument("waypoints must be finite".into()));
        }
        Ok(Trajectory {
            keys: waypoints.iter().map(|w| (w.t, PlanarPose { x: w.x, z: w.z, theta: w.theta })).collect(),
        })
    }

    pub fn end_time(&self) -> f64 {
        self.keys.last().map(|k| k.0).unwrap_or(0.0)
    }

    /// Reference pose and its velocity at time `t` from the start.
    pub fn sample(&self, t: f64) -> (PlanarPose, PlanarTwist) {
        let pose = interpolate(&self.keys, t, |a, b, s| PlanarPose {
            x: a.x + (b.x - a.x) * s,
            z: a.z + (b.z - a.z) * s,
            theta: a.theta + (b.theta - a.theta) * s,
        })
        .expect("trajectory is non-empty");
        let n = self.keys.len();
        let twist = if n < 2 || t < self.keys[0].0 || t >= self.keys[n - 1].0 {
            PlanarTwist::default()
        } else {
            let i = self.keys.partition_point(|(kt, _)| *kt <= t).clamp(1, n - 1);
            let ((t0, a), (t1, b)) = (self.keys[i - 1], self.keys[i]);
            let h = t1 - t0;
            PlanarTwist {
                vx: (b.x - a.x) / h,
                vz: (b.z - a.z) / h,
                omega: (b.theta - a.theta) / h,
            }
        };
        (PlanarPose::new(pose.x, pose.z, pose.theta), twist)
    }
}

/// Timed wrench keyframes (`fx, fz, my`), linearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WrenchKey {
    pub t: f64,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fz: f64,
    #[serde(default)]
    pub my: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WrenchProfile {
    keys: Vec<(f64, Wrench)>,
}

impl WrenchProfile {
    pub fn new(keys: &[WrenchKey]) -> Result<Self> {
        if keys.windows(2).any(|w| !(w[1].t >= w[0].t)) {
            return Err(Error::InvalidArgument("wrench profile times must be nondecreasing".into()));
        }
        let keys = keys
            .iter()
            .map(|k| Ok((k.t, crate::model::planar_wrench(k.fx, k.fz, k.my)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(WrenchProfile { keys })
    }

    /// Zero outside an empty profile; otherwise interpolated and held.
    pub fn sample(&self, t: f64) -> Wrench {
        interpolate(&self.keys, t, |a, b, s| *a + (*b - *a) * s).unwrap_or(Wrench::ZERO)
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// What the outer loop is doing.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMode {
    Hold,
    Trajectory(Trajectory),
    Teleop(WrenchProfile),
    Amplify { gain: f64 },
}

impl ControlMode {
    pub fn name(&self) -> &'static str {
        match self {
            ControlMode::Hold => "hold",
            ControlMode::Trajectory(_) => "trajectory",
            ControlMode::Teleop(_) => "teleop",
            ControlMode::Amplify { .. } => "amplify",
        }
    }
}

/// Output of one outer-loop update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub w_des: Wrench,
    /// Pose the loop is regulating toward, when it has one.
    pub reference: Option<PlanarPose>,
}

/// The Cartesian loop: mode logic, pose PID and gravity compensation.
#[derive(Debug, Clone)]
pub struct Controller {
    pub mode: ControlMode,
    pub gains: PosePidGains,
    pid: PosePidState,
    hold_target: PlanarPose,
    mode_start: f64,
    trim: Wrench,
}

impl Controller {
    pub fn new(mode: ControlMode, gains: PosePidGains, hold_target: PlanarPose) -> Self {
        Controller {
            mode,
            gains,
            pid: PosePidState::default(),
            hold_target,
            mode_start: 0.0,
            trim: Wrench::ZERO,
        }
    }

    /// Constant wrench added to the regulated modes so that the allocation
    /// residual at the starting pose is cancelled.
    pub fn set_trim(&mut self, trim: Wrench) {
        self.trim = trim;
    }

    pub fn trim(&self) -> Wrench {
        self.trim
    }

    pub fn hold_target(&self) -> PlanarPose {
        self.hold_target
    }

    pub fn set_mode(&mut self, mode: ControlMode, now: f64, measured: &PlanarPose) {
        if matches!(mode, ControlMode::Hold) && !matches!(self.mode, ControlMode::Hold) {
            self.hold_target = *measured;
        }
        self.mode = mode;
        self.mode_start = now;
        self.pid = PosePidState::default();
    }

    pub fn set_target(&mut self, target: PlanarPose, now: f64) {
        if !matches!(self.mode, ControlMode::Hold) {
            self.mode = ControlMode::Hold;
            self.mode_start = now;
            self.pid = PosePidState::default();
        }
        self.hold_target = target;
    }

    pub fn update(
        &mut self,
        now: f64,
        measured: &PlanarPose,
        payload: &PayloadModel,
        w_ext_estimate: &Wrench,
        dt: f64,
    ) -> ControlOutput {
        let gravity = gravity_compensation(payload);
        match &self.mode {
            ControlMode::Hold => {
                let target = self.hold_target;
                let fb = pose_pid(&target, &PlanarTwist::default(), measured, &self.gains, &mut self.pid, dt);
                ControlOutput {
                    w_des: gravity + self.trim + fb,
                    reference: Some(target),
                }
            }
            ControlMode::Trajectory(traj) => {
                let (target, rate) = traj.sample(now - self.mode_start);
                let fb = pose_pid(&target, &rate, measured, &self.gains, &mut self.pid, dt);
                ControlOutput {
                    w_des: gravity + self.trim + fb,
                    reference: Some(target),
                }
            }
            ControlMode::Teleop(stream) => ControlOutput {
                w_des: gravity + stream.sample(now - self.mode_start),
                reference: None,
            },
            ControlMode::Amplify { gain } => ControlOutput {
                w_des: amplify(payload, w_ext_estimate, *gain),
                reference: None,
            },
        }
    }
}
