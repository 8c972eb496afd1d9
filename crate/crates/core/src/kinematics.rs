//! Cable geometry and the tension-to-wrench map.
//!
//! Column `i` of the wrench Jacobian is the wrench produced on the payload by
//! a unit tension in cable `i`: the cable direction stacked on top of the
//! moment `r_i × u_i`. The planar moment uses the right-handed y component,
//! `my = r_z·u_x − r_x·u_z`. Because pose angles are counterclockwise in the
//! x-right/z-up drawing, a positive `my` drives `theta` negative (see
//! [`crate::dynamics`]).

use nalgebra::{DMatrix, Vector2};

use crate::error::{Error, Result};
use crate::model::{ModuleGeometry, PayloadModel, PlanarPose, PlanarTwist, TensionVector, Wrench};

/// Cables shorter than this are treated as degenerate.
pub const MIN_CABLE_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CableState {
    /// World-frame direction from payload attachment toward the anchor.
    pub unit_vector: Vector2<f64>,
    /// Attachment point relative to the center of mass, in world frame.
    pub moment_arm: Vector2<f64>,
    pub length: f64,
}

impl CableState {
    /// Rate at which the cable is being wound in (m/s) for the given payload
    /// twist. Positive when the attachment moves toward the anchor.
    pub fn reel_in_speed(&self, twist: &PlanarTwist) -> f64 {
        let r = self.moment_arm;
        let point_vel = twist.linear() + twist.omega * Vector2::new(-r.y, r.x);
        self.unit_vector.dot(&point_vel)
    }
}

pub fn compute_cable_states(
    pose: &PlanarPose,
    payload: &PayloadModel,
    modules: &[ModuleGeometry],
) -> Result<Vec<CableState>> {
    if modules.is_empty() {
        return Err(Error::InvalidArgument("at least one module is required".into()));
    }
    if !pose.is_finite() {
        return Err(Error::InvalidArgument(format!("pose must be finite, got {pose:?}")));
    }
    payload.check_module_count(modules.len())?;

    modules
        .iter()
        .zip(&payload.attachments)
        .enumerate()
        .map(|(i, (module, attachment))| {
            let moment_arm = pose.rotate(attachment);
            let span = module.anchor - (pose.position() + moment_arm);
            let length = span.norm();
            if !(length >= MIN_CABLE_LENGTH) {
                return Err(Error::DegenerateGeometry { cable: i, length });
            }
            Ok(CableState {
                unit_vector: span / length,
                moment_arm,
                length,
            })
        })
        .collect()
}

/// Linear map from cable tensions to the wrench they apply on the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct WrenchJacobian {
    pub columns: Vec<Wrench>,
}

impl WrenchJacobian {
    pub fn cables(&self) -> usize {
        self.columns.len()
    }

    /// `J · T`.
    pub fn apply(&self, tensions: &TensionVector) -> Wrench {
        self.apply_slice(tensions.as_slice())
    }

    pub fn apply_slice(&self, t: &[f64]) -> Wrench {
        debug_assert_eq!(t.len(), self.columns.len());
        self.columns
            .iter()
            .zip(t)
            .fold(Wrench::ZERO, |acc, (col, ti)| acc + *col * *ti)
    }

    /// Dense 6×n matrix form.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(6, self.columns.len(), |r, c| self.columns[c][r])
    }
}

pub fn build_jacobian(cables: &[CableState]) -> WrenchJacobian {
    let columns = cables
        .iter()
        .map(|c| {
            let (u, r) = (c.unit_vector, c.moment_arm);
            Wrench {
                fx: u.x,
                fz: u.y,
                my: r.y * u.x - r.x * u.y,
                ..Wrench::ZERO
            }
        })
        .collect();
    WrenchJacobian { columns }
}

/// Planar forward kinematics from two cable lengths, treating the payload as
/// a point hanging below the line through the two anchors. The returned
/// `theta` is always zero.
///
/// When the anchor line is vertical the solution on the +x side is returned.
pub fn estimate_pose_from_lengths(lengths: [f64; 2], anchors: [Vector2<f64>; 2]) -> Result<PlanarPose> {
    let [l1, l2] = lengths;
    let baseline = anchors[1] - anchors[0];
    let d = baseline.norm();
    if !(d > 0.0) {
        return Err(Error::InvalidArgument("forward-kinematics anchors coincide".into()));
    }
    if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
        return Err(Error::InvalidArgument(format!("cable lengths must be positive, got {l1}, {l2}")));
    }
    let slack = 1e-12 * (d + l1 + l2);
    if d > l1 + l2 + slack || d < (l1 - l2).abs() - slack {
        return Err(Error::NoSolution(format!(
            "lengths {l1} and {l2} cannot reach anchors {d} m apart"
        )));
    }

    let dir = baseline / d;
    // distance from anchor 0 to the chord midpoint, and half-chord height
    let a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d);
    let h = (l1 * l1 - a * a).max(0.0).sqrt();

    let mut normal = Vector2::new(dir.y, -dir.x);
    if normal.y > 0.0 || (normal.y == 0.0 && normal.x < 0.0) {
        normal = -normal;
    }
    let p = anchors[0] + dir * a + normal * h;
    Ok(PlanarPose::new(p.x, p.y, 0.0))
}
