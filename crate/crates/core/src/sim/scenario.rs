//! Scenario definition and its TOML file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actuator::ActuatorConfig;
use crate::allocator::AllocationWeights;
use crate::control::{ControlMode, PosePidGains, Trajectory, Waypoint, WrenchKey, WrenchProfile};
use crate::dynamics::MAX_DT;
use crate::error::{Error, Result};
use crate::model::{ModuleGeometry, PayloadModel, PlanarPose, STANDARD_GRAVITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub inertia_yy: f64,
    /// m/s², along −z
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

/// Initial control mode as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Hold {
        /// Defaults to the initial pose.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<PlanarPose>,
    },
    Trajectory {
        waypoints: Vec<Waypoint>,
    },
    Teleop {
        #[serde(default)]
        stream: Vec<WrenchKey>,
    },
    Amplify {
        #[serde(default)]
        gain: f64,
    },
}

/// Gaussian noise on the fed-back pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// m, per axis
    pub pose_sigma: f64,
    /// rad
    pub theta_sigma: f64,
}

/// Loop rates in Hz. The inner rate is the base tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub pose_hz: u32,
    pub qp_hz: u32,
    pub inner_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            pose_hz: 200,
            qp_hz: 500,
            inner_hz: 1000,
        }
    }
}

impl Rates {
    pub fn dt(&self) -> f64 {
        1.0 / self.inner_hz as f64
    }

    /// Whether a loop at `rate` fires on base tick `tick`. Every loop fires
    /// on tick 0, then whenever `⌊tick·rate/base⌋` advances.
    pub fn due(&self, rate: u32, tick: u64) -> bool {
        let base = self.inner_hz as u64;
        tick == 0 || (tick * rate as u64) / base != ((tick - 1) * rate as u64) / base
    }
}

/// A scripted human: a spring-damper dragging the payload toward a point
/// that moves between waypoints with eased (cosine) segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub waypoints: Vec<Waypoint>,
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Hand force limit (N).
    #[serde(default = "default_operator_limit")]
    pub max_force: f64,
}

fn default_operator_limit() -> f64 {
    400.0
}

fn default_estimator_cutoff() -> f64 {
    crate::control::ExternalWrenchEstimator::DEFAULT_CUTOFF_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Seed for the pose-noise generator.
    #[serde(default)]
    pub seed: u64,
    /// s
    pub duration: f64,
    pub payload: PayloadSpec,
    pub initial_pose: PlanarPose,
    /// Upper modules first: `--modules 2` keeps the first two.
    pub modules: Vec<ModuleGeometry>,
    pub mode: ModeSpec,
    #[serde(default)]
    pub weights: AllocationWeights,
    #[serde(default)]
    pub gains: PosePidGains,
    #[serde(default)]
    pub actuator: ActuatorConfig,
    /// Replace every actuator with a pure tension source.
    #[serde(default)]
    pub ideal_actuators: bool,
    /// External wrench keyframes, linearly interpolated.
    #[serde(default)]
    pub external: Vec<WrenchKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub rates: Rates,
    /// Hz
    #[serde(default = "default_estimator_cutoff")]
    pub estimator_cutoff_hz: f64,
    /// Log measured QP wall-clock time. Off by default so logs stay
    /// reproducible byte for byte.
    #[serde(default)]
    pub record_solve_time: bool,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Scenario(msg));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0 s, got {}", self.duration));
        }
        if self.modules.len() < 2 {
            return bad(format!("need at least two modules, got {}", self.modules.len()));
        }
        for (i, m) in self.modules.iter().enumerate() {
            m.validate().map_err(|e| Error::Scenario(format!("modules[{i}]: {e}")))?;
        }
        self.payload_model()?;
        if !self.initial_pose.is_finite() {
            return bad("initial_pose must be finite".into());
        }
        self.weights.validate()?;
        if !(self.weights.w_t > 0.0) {
            return bad("weights.w_t must be > 0".into());
        }
        self.gains.validate()?;
        self.actuator.validate()?;
        let r = self.rates;
        if r.inner_hz == 0 || r.pose_hz == 0 || r.qp_hz == 0 || r.pose_hz > r.inner_hz || r.qp_hz > r.inner_hz {
            return bad(format!("rates must be positive and no faster than inner_hz: {r:?}"));
        }
        if r.dt() > MAX_DT {
            return bad(format!("inner_hz must be at least {} Hz", 1.0 / MAX_DT));
        }
        if !(self.noise.pose_sigma >= 0.0 && self.noise.theta_sigma >= 0.0) {
            return bad("noise sigmas must be >= 0".into());
        }
        if !(self.estimator_cutoff_hz > 0.0 && self.estimator_cutoff_hz.is_finite()) {
            return bad("estimator_cutoff_hz must be > 0".into());
        }
        WrenchProfile::new(&self.external).map_err(|e| Error::Scenario(format!("external: {e}")))?;
        if let Some(op) = &self.operator {
            Trajectory::new(&op.waypoints).map_err(|e| Error::Scenario(format!("operator: {e}")))?;
            if !(op.stiffness >= 0.0 && op.damping >= 0.0 && op.max_force > 0.0) {
                return bad("operator stiffness/damping must be >= 0 and max_force > 0".into());
            }
        }
        self.control_mode()?;
        Ok(())
    }

    /// Payload with every module's attachment point.
    pub fn payload_model(&self) -> Result<PayloadModel> {
        PayloadModel::new(
            self.payload.mass,
            self.payload.inertia_yy,
            self.modules.iter().map(|m| m.attachment).collect(),
            self.payload.gravity,
        )
        .map_err(|e| Error::Scenario(format!("payload: {e}")))
    }

    pub fn control_mode(&self) -> Result<ControlMode> {
        let wrap = |e: Error| Error::Scenario(format!("mode: {e}"));
        Ok(match &self.mode {
            ModeSpec::Hold { .. } => ControlMode::Hold,
            ModeSpec::Trajectory { waypoints } => ControlMode::Trajectory(Trajectory::new(waypoints).map_err(wrap)?),
            ModeSpec::Teleop { stream } => ControlMode::Teleop(WrenchProfile::new(stream).map_err(wrap)?),
            ModeSpec::Amplify { gain } => {
                if !(*gain >= 0.0 && gain.is_finite()) {
                    return Err(Error::Scenario(format!("mode.gain must be >= 0, got {gain}")));
                }
                ControlMode::Amplify { gain: *gain }
            }
        })
    }

    pub fn hold_target(&self) -> PlanarPose {
        match &self.mode {
            ModeSpec::Hold { target: Some(t) } => *t,
            _ => self.initial_pose,
        }
    }

    pub fn actuator_config(&self) -> ActuatorConfig {
        if self.ideal_actuators {
            ActuatorConfig::ideal(self.actuator.t_max)
        } else {
            self.actuator
        }
    }

    /// Number of base ticks in the run.
    pub fn ticks(&self) -> u64 {
        (self.duration * self.rates.inner_hz as f64).round() as u64
    }

    /// Keep only the first `n` modules.
    pub fn with_modules(mut self, n: usize) -> Result<Self> {
        if n < 2 || n > self.modules.len() {
            return Err(Error::Scenario(format!(
                "cannot use {n} modules from a scenario with {}",
                self.modules.len()
            )));
        }
        self.modules.truncate(n);
        Ok(self)
    }

    /// Set one field through a dotted path, e.g. `duration=20`,
    /// `actuator.stiction_band=5` or `modules.1.t_max=250`. The value is
    /// parsed as a TOML literal, falling back to a bare string.
    pub fn apply_override(&self, assignment: &str) -> Result<Self> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Scenario(format!("override `{assignment}` is not key=value")))?;
        let path = path.trim();
        let value = parse_literal(raw.trim());

        let mut root = toml::Value::try_from(self).map_err(|e| Error::Scenario(e.to_string()))?;
        let mut slot = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (depth, key) in keys.iter().enumerate() {
            let last = depth + 1 == keys.len();
            slot = match slot {
                toml::Value::Table(t) => {
                    if last {
                        t.insert(key.to_string(), value.clone());
                        break;
                    }
                    t.entry(key.to_string())
                        .or_insert_with(|| toml::Value::Table(Default::default()))
                }
                toml::Value::Array(a) => {
                    let i: usize = key
                        .parse()
                        .map_err(|_| Error::Scenario(format!("override `{path}`: `{key}` is not an index")))?;
                    let len = a.len();
                    let item = a
                        .get_mut(i)
                        .ok_or_else(|| Error::Scenario(format!("override `{path}`: index {i} out of {len}")))?;
                    if last {
                        *item = value.clone();
                        break;
                    }
                    item
                }
                _ => return Err(Error::Scenario(format!("override `{path}`: `{key}` is not a table"))),
            };
        }
        let s: Scenario = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Scenario(format!("override `{path}`: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// Stable hash of everything that defines the commanded motion and the
    /// load, but not the module set, so 2- and 4-module runs of the same
    /// experiment compare equal.
    pub fn trajectory_fingerprint(&self) -> String {
        let key = serde_json::json!({
            "initial_pose": self.initial_pose,
            "mode": self.mode,
            "external": self.external,
            "operator": self.operator,
            "duration": self.duration,
            "payload": self.payload,
            "rates": self.rates,
        });
        format!("{:016x}", fnv1a(key.to_string().as_bytes()))
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, b| (h ^ *b as u64).wrapping_mul(0x100000001b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOLD: &str = r#"
name = "hold"
duration = 1.0
initial_pose = { x = 2.0, z = 0.5 }

[payload]
mass = 27.2
inertia_yy = 1.13

[[modules]]
anchor = [0.0, 2.5]
t_max = 300.0

[[modules]]
anchor = [4.0, 2.5]
t_max = 300.0

[mode]
kind = "hold"
"#;

    #[test]
    fn parses_minimal_file_with_defaults() {
        let s = Scenario::from_toml_str(HOLD).unwrap();
        assert_eq!(s.modules.len(), 2);
        assert_eq!(s.modules[0].t_min, 30.0);
        assert_eq!(s.rates, Rates::default());
        assert_eq!(s.payload.gravity, 9.81);
        assert_eq!(s.ticks(), 1000);
        assert_eq!(s.hold_target(), PlanarPose::new(2.0, 0.5, 0.0));
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let err = Scenario::from_toml_str(&format!("{HOLD}\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = Scenario::from_toml_str(&HOLD.replace("mass = 27.2\n", "")).unwrap_err();
        assert!(err.to_string().contains("mass"), "{err}");
        let err = Scenario::from_toml_str(&HOLD.replace("kind = \"hold\"", "kind = \"hold\"\nspeed = 2")).unwrap_err();
        assert!(err.to_string().contains("speed"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut s = Scenario::from_toml_str(HOLD).unwrap();
        s.mode = ModeSpec::Trajectory {
            waypoints: vec![
                Waypoint { t: 0.0, x: 2.0, z: 0.5, theta: 0.0 },
                Waypoint { t: 1.0, x: 2.1, z: 0.5, theta: 0.0 },
            ],
        };
        s.external = vec![WrenchKey { t: 0.5, fx: 1.0, fz: 0.0, my: 0.0 }];
        s.operator = Some(OperatorSpec {
            waypoints: vec![Waypoint { t: 0.0, x: 2.0, z: 0.5, theta: 0.0 }],
            stiffness: 400.0,
            damping: 100.0,
            max_force: 300.0,
        });
        s.noise.pose_sigma = 1e-3 / 3.0;
        let text = s.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn overrides() {
        let s = Scenario::from_toml_str(HOLD).unwrap();
        assert_eq!(s.apply_override("duration=20").unwrap().duration, 20.0);
        assert_eq!(s.apply_override("actuator.stiction_band = 4.5").unwrap().actuator.stiction_band, 4.5);
        assert_eq!(s.apply_override("modules.1.t_max=250").unwrap().modules[1].t_max, 250.0);
        assert_eq!(s.apply_override("name=other").unwrap().name, "other");
        assert!(s.apply_override("duration=-1").is_err());
        assert!(s.apply_override("duration").is_err());
        assert!(s.apply_override("nonsense.key=1").is_err());
        assert!(s.apply_override("modules.7.t_max=1").is_err());
    }

    #[test]
    fn rate_schedule_counts() {
        let r = Rates::default();
        let count = |rate| (0..10_000u64).filter(|&k| r.due(rate, k)).count();
        assert_eq!(count(200), 2000);
        assert_eq!(count(500), 5000);
        assert_eq!(count(1000), 10_000);
        assert!(r.due(200, 0) && r.due(200, 5) && !r.due(200, 4));
        assert!(r.due(500, 0) && r.due(500, 2) && !r.due(500, 1));
        let odd = Rates { pose_hz: 300, qp_hz: 700, inner_hz: 1000 };
        assert_eq!((0..1000u64).filter(|&k| odd.due(300, k)).count(), 300);
        assert_eq!((0..1000u64).filter(|&k| odd.due(700, k)).count(), 700);
    }

    #[test]
    fn fingerprint_ignores_modules() {
        let mut s = Scenario::from_toml_str(HOLD).unwrap();
        let a = s.trajectory_fingerprint();
        s.modules.push(s.modules[0].clone());
        assert_eq!(a, s.trajectory_fingerprint());
        s.duration = 2.0;
        assert_ne!(a, s.trajectory_fingerprint());
    }
}
