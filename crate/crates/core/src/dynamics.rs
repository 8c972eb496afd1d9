//! Planar rigid-body plant: payload under cable tensions, gravity and any
//! external wrench, integrated with semi-implicit Euler.
//!
//! Cables act purely as force channels; their kinematic constraint is not
//! enforced. Pose angles are counterclockwise in the x-right/z-up drawing
//! while `my` is the right-handed moment about +y, so `θ̈ = −my / I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{build_jacobian, compute_cable_states};
use crate::model::{normalize_angle, ModuleGeometry, PayloadModel, PlanarPose, PlanarTwist, TensionVector, Wrench};

pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsState {
    pub pose: PlanarPose,
    pub twist: PlanarTwist,
    pub time: f64,
}

impl DynamicsState {
    pub fn at_rest(pose: PlanarPose) -> Self {
        DynamicsState {
            pose,
            ..Default::default()
        }
    }

    /// Kinetic plus gravitational potential energy (J), zero potential at z = 0.
    pub fn energy(&self, payload: &PayloadModel) -> f64 {
        let v2 = self.twist.vx * self.twist.vx + self.twist.vz * self.twist.vz;
        0.5 * payload.mass * v2
            + 0.5 * payload.inertia_yy * self.twist.omega * self.twist.omega
            + payload.mass * payload.gravity * self.pose.z
    }
}

/// `J(pose)·T + gravity + w_ext`.
pub fn net_wrench(
    pose: &PlanarPose,
    payload: &PayloadModel,
    modules: &[ModuleGeometry],
    tensions: &TensionVector,
    w_ext: &Wrench,
) -> Result<Wrench> {
    if tensions.len() != modules.len() {
        return Err(Error::InvalidArgument(format!(
            "{} tensions for {} modules",
            tensions.len(),
            modules.len()
        )));
    }
    let cables = compute_cable_states(pose, payload, modules)?;
    Ok(build_jacobian(&cables).apply(tensions) + payload.gravity_wrench() + *w_ext)
}

pub fn step_dynamics(state: &DynamicsState, net: &Wrench, payload: &PayloadModel, dt: f64) -> Result<DynamicsState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidArgument(format!("dt must be in (0, {MAX_DT}], got {dt}")));
    }
    let twist = PlanarTwist {
        vx: state.twist.vx + net.fx / payload.mass * dt,
        vz: state.twist.vz + net.fz / payload.mass * dt,
        omega: state.twist.omega - net.my / payload.inertia_yy * dt,
    };
    let pose = PlanarPose {
        x: state.pose.x + twist.vx * dt,
        z: state.pose.z + twist.vz * dt,
        theta: normalize_angle(state.pose.theta + twist.omega * dt),
    };
    let next = DynamicsState {
        pose,
        twist,
        time: state.time + dt,
    };
    if !(next.pose.is_finite() && next.twist.is_finite()) {
        return Err(Error::Diverged {
            last_good: Box::new(*state),
        });
    }
    Ok(next)
}
