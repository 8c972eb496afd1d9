//! Wire format: one JSON object per WebSocket text frame,
//! `{"type": ..., "seq": ..., "v": 1, "payload": {...}}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cablesim::sim::{Command, ModeRequest, Snapshot};
use cablesim::Wrench;

pub const PROTOCOL_VERSION: u32 = 1;

/// Safety limits advertised in the handshake and enforced on every command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    /// Largest accepted force magnitude `|(fx, fz)|` (N).
    pub max_force: f64,
    /// Largest accepted `|my|` (N·m).
    pub max_moment: f64,
    /// Longest accepted hold (ms).
    pub max_hold_ms: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_force: 200.0,
            max_moment: 50.0,
            max_hold_ms: 10_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    pub v: u32,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: &str, seq: u64, payload: impl Serialize) -> Self {
        Envelope {
            kind: kind.to_string(),
            seq,
            v: PROTOCOL_VERSION,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleInfo {
    pub anchor: [f64; 2],
    pub t_min: f64,
    pub t_max: f64,
}

/// Payload of the `hello` message sent on connect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub scenario: String,
    pub description: String,
    pub payload_mass: f64,
    pub payload_weight: f64,
    pub modules: Vec<ModuleInfo>,
    pub limits: Limits,
    pub snapshot_hz: f64,
    pub inner_hz: u32,
    /// `control` for the first client, `observer` for the rest.
    pub role: String,
}

/// Payload of the `state` message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    #[serde(flatten)]
    pub sim: Snapshot,
    pub paused: bool,
    /// Simulated over wall-clock time since the last resume; 1 when keeping up.
    pub realtime_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// `seq` of the acknowledged client message.
    pub ack: u64,
    /// Base tick at whose boundary the command takes effect.
    pub tick: u64,
    /// The command exceeded a safety limit and was scaled back.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    /// `seq` of the offending message, when it could be read.
    pub ack: Option<u64>,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyWrenchPayload {
    #[serde(default)]
    fx: f64,
    #[serde(default)]
    fz: f64,
    #[serde(default)]
    my: f64,
    hold_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetTargetPayload {
    x: f64,
    z: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetModePayload {
    mode: String,
    #[serde(default)]
    gain: Option<f64>,
}

/// A decoded client message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClientCommand {
    Sim { command: Command, clamped: bool },
    Pause,
    Resume,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    pub seq: Option<u64>,
    pub code: &'static str,
    pub message: String,
}

impl ProtocolError {
    fn new(seq: Option<u64>, code: &'static str, message: impl Into<String>) -> Self {
        ProtocolError {
            seq,
            code,
            message: message.into(),
        }
    }

    pub fn reply(&self) -> ErrorReply {
        ErrorReply {
            ack: self.seq,
            code: self.code.to_string(),
            message: self.message.clone(),
        }
    }
}

/// Scale an applied wrench back inside `limits`. Returns the wrench, the
/// hold time in seconds and whether anything was cut.
pub fn clamp_wrench(fx: f64, fz: f64, my: f64, hold_ms: f64, limits: &Limits) -> (Wrench, f64, bool) {
    let mut clamped = false;
    let norm = fx.hypot(fz);
    let scale = if norm > limits.max_force {
        clamped = true;
        limits.max_force / norm
    } else {
        1.0
    };
    let my_c = my.clamp(-limits.max_moment, limits.max_moment);
    clamped |= my_c != my;
    let hold_c = hold_ms.min(limits.max_hold_ms);
    clamped |= hold_c != hold_ms;
    (
        Wrench {
            fx: fx * scale,
            fz: fz * scale,
            my: my_c,
            ..Wrench::ZERO
        },
        hold_c / 1000.0,
        clamped,
    )
}

/// Parse and check one text frame.
pub fn decode(text: &str, limits: &Limits) -> Result<(u64, ClientCommand), ProtocolError> {
    let env: Envelope =
        serde_json::from_str(text).map_err(|e| ProtocolError::new(None, "malformed", e.to_string()))?;
    let seq = Some(env.seq);
    if env.v != PROTOCOL_VERSION {
        return Err(ProtocolError::new(
            seq,
            "unsupported_version",
            format!("protocol version {} is not supported (expected {PROTOCOL_VERSION})", env.v),
        ));
    }
    let payload = |v: Value| if v.is_null() { Value::Object(Default::default()) } else { v };
    let invalid = |e: serde_json::Error| ProtocolError::new(seq, "invalid_payload", e.to_string());
    let cmd = match env.kind.as_str() {
        "apply_wrench" => {
            let p: ApplyWrenchPayload = serde_json::from_value(payload(env.payload)).map_err(invalid)?;
            if ![p.fx, p.fz, p.my, p.hold_ms].iter().all(|v| v.is_finite()) || p.hold_ms < 0.0 {
                return Err(ProtocolError::new(seq, "invalid_payload", "values must be finite and hold_ms >= 0"));
            }
            let (wrench, hold, clamped) = clamp_wrench(p.fx, p.fz, p.my, p.hold_ms, limits);
            ClientCommand::Sim {
                command: Command::ApplyWrench { wrench, hold },
                clamped,
            }
        }
        "set_target" => {
            let p: SetTargetPayload = serde_json::from_value(payload(env.payload)).map_err(invalid)?;
            if !(p.x.is_finite() && p.z.is_finite()) {
                return Err(ProtocolError::new(seq, "invalid_payload", "target must be finite"));
            }
            ClientCommand::Sim {
                command: Command::SetTarget { x: p.x, z: p.z },
                clamped: false,
            }
        }
        "set_mode" => {
            let p: SetModePayload = serde_json::from_value(payload(env.payload)).map_err(invalid)?;
            let request = match (p.mode.as_str(), p.gain) {
                ("hold", None) => ModeRequest::Hold,
                ("trajectory", None) => ModeRequest::Trajectory,
                ("teleop", None) => ModeRequest::Teleop,
                ("amplify", gain) => {
                    let gain = gain.unwrap_or(0.0);
                    if !(gain.is_finite() && gain >= 0.0) {
                        return Err(ProtocolError::new(seq, "invalid_payload", "gain must be >= 0"));
                    }
                    ModeRequest::Amplify { gain }
                }
                (m, Some(_)) if ["hold", "trajectory", "teleop"].contains(&m) => {
                    return Err(ProtocolError::new(seq, "invalid_payload", format!("mode `{m}` takes no gain")));
                }
                (m, _) => return Err(ProtocolError::new(seq, "invalid_payload", format!("unknown mode `{m}`"))),
            };
            ClientCommand::Sim {
                command: Command::SetMode { request },
                clamped: false,
            }
        }
        "pause" => ClientCommand::Pause,
        "resume" => ClientCommand::Resume,
        other => {
            return Err(ProtocolError::new(seq, "unknown_type", format!("unknown message type `{other}`")));
        }
    };
    Ok((env.seq, cmd))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limits() -> Limits {
        Limits::default()
    }

    #[test]
    fn decodes_apply_wrench() {
        let (seq, cmd) = decode(
            r#"{"type":"apply_wrench","seq":4,"v":1,"payload":{"fx":30,"fz":0,"my":0,"hold_ms":500}}"#,
            &limits(),
        )
        .unwrap();
        assert_eq!(seq, 4);
        assert_eq!(
            cmd,
            ClientCommand::Sim {
                command: Command::ApplyWrench {
                    wrench: Wrench { fx: 30.0, ..Wrench::ZERO },
                    hold: 0.5
                },
                clamped: false
            }
        );
    }

    #[test]
    fn clamps_large_wrench() {
        let (_, cmd) = decode(
            r#"{"type":"apply_wrench","seq":1,"v":1,"payload":{"fx":1000,"hold_ms":100}}"#,
            &limits(),
        )
        .unwrap();
        match cmd {
            ClientCommand::Sim {
                command: Command::ApplyWrench { wrench, .. },
                clamped,
            } => {
                assert!(clamped);
                assert!((wrench.fx - 200.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let (w, _, c) = clamp_wrench(120.0, 160.0, 0.0, 0.0, &limits());
        assert!(!c && w.fx == 120.0 && w.fz == 160.0);
        let (w, _, c) = clamp_wrench(300.0, 400.0, 80.0, 0.0, &limits());
        assert!(c);
        assert!((w.fx.hypot(w.fz) - 200.0).abs() < 1e-9);
        assert_eq!(w.my, 50.0);
        assert!((w.fz / w.fx - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_messages() {
        let l = limits();
        assert_eq!(decode("{not json", &l).unwrap_err().code, "malformed");
        assert_eq!(decode(r#"{"type":"pause","seq":1,"v":2}"#, &l).unwrap_err().code, "unsupported_version");
        assert_eq!(decode(r#"{"type":"dance","seq":1,"v":1}"#, &l).unwrap_err().code, "unknown_type");
        let e = decode(r#"{"type":"apply_wrench","seq":9,"v":1,"payload":{"fx":1}}"#, &l).unwrap_err();
        assert_eq!((e.code, e.seq), ("invalid_payload", Some(9)));
        let e = decode(r#"{"type":"apply_wrench","seq":9,"v":1,"payload":{"fx":1,"hold_ms":-5}}"#, &l).unwrap_err();
        assert_eq!(e.code, "invalid_payload");
        let e = decode(r#"{"type":"set_mode","seq":9,"v":1,"payload":{"mode":"fly"}}"#, &l).unwrap_err();
        assert_eq!(e.code, "invalid_payload");
        let e = decode(r#"{"type":"set_target","seq":9,"v":1,"payload":{"x":1,"z":1,"y":0}}"#, &l).unwrap_err();
        assert_eq!(e.code, "invalid_payload");
    }

    #[test]
    fn decodes_modes_and_lifecycle() {
        let l = limits();
        let mode = |text: &str| match decode(text, &l).unwrap().1 {
            ClientCommand::Sim {
                command: Command::SetMode { request },
                ..
            } => request,
            other => panic!("{other:?}"),
        };
        assert_eq!(mode(r#"{"type":"set_mode","seq":1,"v":1,"payload":{"mode":"hold"}}"#), ModeRequest::Hold);
        assert_eq!(
            mode(r#"{"type":"set_mode","seq":1,"v":1,"payload":{"mode":"amplify","gain":0.5}}"#),
            ModeRequest::Amplify { gain: 0.5 }
        );
        assert_eq!(decode(r#"{"type":"pause","seq":2,"v":1}"#, &l).unwrap().1, ClientCommand::Pause);
        assert_eq!(
            decode(r#"{"type":"resume","seq":3,"v":1,"payload":{}}"#, &l).unwrap().1,
            ClientCommand::Resume
        );
    }

    #[test]
    fn envelope_shape() {
        let text = Envelope::new(
            "ack",
            7,
            Ack {
                ack: 3,
                tick: 120,
                clamped: true,
            },
        )
        .to_text();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "ack");
        assert_eq!(v["seq"], 7);
        assert_eq!(v["v"], 1);
        assert_eq!(v["payload"]["clamped"], true);
    }
}
