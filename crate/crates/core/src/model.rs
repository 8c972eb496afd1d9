//! Shared domain types.
//!
//! All quantities are SI (N, m, kg, s, rad). The working plane is x-z with z
//! up; the only out-of-plane moment that matters is `my`. A [`Wrench`] always
//! carries all six components so that the allocation cost can sum over every
//! direction, with unused directions weighted to zero.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravitational acceleration used by default scenarios (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Default lower tension bound (N). Cables are never commanded below this.
pub const DEFAULT_T_MIN: f64 = 30.0;

/// Generalized force `[fx, fy, fz, mx, my, mz]` acting on the payload.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        fx: 0.0,
        fy: 0.0,
        fz: 0.0,
        mx: 0.0,
        my: 0.0,
        mz: 0.0,
    };

    pub fn from_array(a: [f64; 6]) -> Self {
        Wrench {
            fx: a[0],
            fy: a[1],
            fz: a[2],
            mx: a[3],
            my: a[4],
            mz: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    /// Planar components `(fx, fz, my)`.
    pub fn planar(self) -> (f64, f64, f64) {
        (self.fx, self.fz, self.my)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Magnitude of the force part.
    pub fn force_norm(&self) -> f64 {
        (self.fx * self.fx + self.fy * self.fy + self.fz * self.fz).sqrt()
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.to_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<usize> for Wrench {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.fx,
            1 => &self.fy,
            2 => &self.fz,
            3 => &self.mx,
            4 => &self.my,
            5 => &self.mz,
            _ => panic!("wrench index {i} out of range"),
        }
    }
}

impl Add for Wrench {
    type Output = Wrench;

    fn add(self, rhs: Wrench) -> Wrench {
        let (a, b) = (self.to_array(), rhs.to_array());
        Wrench::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        *self = *self + rhs;
    }
}

impl Sub for Wrench {
    type Output = Wrench;

    fn sub(self, rhs: Wrench) -> Wrench {
        self + (-rhs)
    }
}

impl Neg for Wrench {
    type Output = Wrench;

    fn neg(self) -> Wrench {
        Wrench::from_array(self.to_array().map(|v| -v))
    }
}

impl Mul<f64> for Wrench {
    type Output = Wrench;

    fn mul(self, k: f64) -> Wrench {
        Wrench::from_array(self.to_array().map(|v| v * k))
    }
}

/// Embed a planar force/moment triple into a full wrench (`fy = mx = mz = 0`).
pub fn planar_wrench(fx: f64, fz: f64, my: f64) -> Result<Wrench> {
    if !(fx.is_finite() && fz.is_finite() && my.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "planar wrench components must be finite, got ({fx}, {fz}, {my})"
        )));
    }
    Ok(Wrench {
        fx,
        fz,
        my,
        ..Wrench::ZERO
    })
}

/// Wrap an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Payload pose in the x-z plane. `theta` is counterclockwise-positive when
/// drawn with x to the right and z up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarPose {
    pub x: f64,
    pub z: f64,
    #[serde(default)]
    pub theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, z: f64, theta: f64) -> Self {
        PlanarPose {
            x,
            z,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.z)
    }

    /// Rotate a body-frame vector into the world frame.
    pub fn rotate(&self, body: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(c * body.x - s * body.y, s * body.x + c * body.y)
    }

    /// World-frame location of a body-frame point.
    pub fn transform(&self, body: &Vector2<f64>) -> Vector2<f64> {
        self.position() + self.rotate(body)
    }

    pub fn distance(&self, other: &PlanarPose) -> f64 {
        (self.position() - other.position()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarTwist {
    pub vx: f64,
    pub vz: f64,
    pub omega: f64,
}

impl PlanarTwist {
    pub fn linear(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vz)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vz)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vz.is_finite() && self.omega.is_finite()
    }
}

/// One cable module: where its cable leaves the environment, where it
/// connects on the payload, and the tension range it may be commanded over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleGeometry {
    /// World-frame cable exit point (x, z).
    pub anchor: Vector2<f64>,
    /// Payload body-frame connection point.
    #[serde(default = "Vector2::zeros")]
    pub attachment: Vector2<f64>,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    pub t_max: f64,
}

fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}

impl ModuleGeometry {
    pub fn new(anchor: Vector2<f64>, attachment: Vector2<f64>, t_min: f64, t_max: f64) -> Result<Self> {
        let m = ModuleGeometry {
            anchor,
            attachment,
            t_min,
            t_max,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.anchor.iter().chain(self.attachment.iter()).all(|v| v.is_finite());
        if !finite || !(self.t_min >= 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "module needs finite geometry and 0 <= t_min < t_max, got t_min = {}, t_max = {}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadModel {
    pub mass: f64,
    /// Rotational inertia about the out-of-plane axis (kg·m²).
    pub inertia_yy: f64,
    /// Body-frame attachment point per module.
    pub attachments: Vec<Vector2<f64>>,
    /// Gravitational acceleration magnitude, acting along -z.
    pub gravity: f64,
}

impl PayloadModel {
    pub fn new(mass: f64, inertia_yy: f64, attachments: Vec<Vector2<f64>>, gravity: f64) -> Result<Self> {
        let p = PayloadModel {
            mass,
            inertia_yy,
            attachments,
            gravity,
        };
        p.validate()?;
        Ok(p)
    }

    /// Point-mass style payload with every cable attached at the center of mass.
    pub fn point(mass: f64, inertia_yy: f64, modules: usize) -> Result<Self> {
        Self::new(mass, inertia_yy, vec![Vector2::zeros(); modules], STANDARD_GRAVITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) || !(self.inertia_yy > 0.0 && self.inertia_yy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "payload mass and inertia must be positive, got m = {}, I = {}",
                self.mass, self.inertia_yy
            )));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(Error::InvalidArgument(format!("gravity must be >= 0, got {}", self.gravity)));
        }
        if self.attachments.iter().flat_map(|a| a.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("attachment points must be finite".into()));
        }
        Ok(())
    }

    pub fn check_module_count(&self, n: usize) -> Result<()> {
        if self.attachments.len() != n {
            return Err(Error::InvalidArgument(format!(
                "payload has {} attachments but there are {n} modules",
                self.attachments.len()
            )));
        }
        Ok(())
    }

    /// Weight magnitude m·g (N).
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Gravity acting on the payload, as a wrench.
    pub fn gravity_wrench(&self) -> Wrench {
        Wrench {
            fz: -self.weight(),
            ..Wrench::ZERO
        }
    }
}

/// Cable tension magnitudes, one per module. Cables only pull, so every
/// element is non-negative.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TensionVector(Vec<f64>);

impl TensionVector {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = t.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "tension {i} must be finite and non-negative, got {v}"
            )));
        }
        Ok(TensionVector(t))
    }

    pub fn zeros(n: usize) -> Self {
        TensionVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.0.iter()
    }
}

impl TryFrom<Vec<f64>> for TensionVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TensionVector::new(v)
    }
}

impl From<TensionVector> for Vec<f64> {
    fn from(t: TensionVector) -> Vec<f64> {
        t.0
    }
}

impl Index<usize> for TensionVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
