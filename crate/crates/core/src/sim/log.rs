//! Per-tick run records and their CSV form.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::scenario::Rates;
use crate::error::{Error, Result};
use crate::model::{PlanarPose, PlanarTwist, Wrench};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub modules: usize,
    pub duration: f64,
    pub seed: u64,
    pub rates: Rates,
    pub trajectory_fingerprint: String,
    pub payload_mass: f64,
    pub payload_weight: f64,
    pub t_min: Vec<f64>,
    pub t_max: Vec<f64>,
    pub ideal_actuators: bool,
    pub pose_updates: u64,
    pub qp_solves: u64,
}

/// State at the end of one base tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub pose: PlanarPose,
    pub twist: PlanarTwist,
    /// Pose the controller saw at its latest update.
    pub feedback: PlanarPose,
    /// Pose the controller is regulating toward, if any.
    pub reference: Option<PlanarPose>,
    pub w_des: Wrench,
    pub commanded: Vec<f64>,
    pub applied: Vec<f64>,
    /// True external wrench acting this tick.
    pub w_ext: Wrench,
    pub w_ext_estimate: Wrench,
    /// Latest allocation residual.
    pub residual: Wrench,
    /// QP wall-clock time (s); zero when not recorded or not solved this tick.
    pub solve_time: f64,
    /// QP iterations this tick; zero when the QP did not run.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<TickRecord>,
}

fn planar(prefix: &str) -> [String; 3] {
    [format!("{prefix}_fx"), format!("{prefix}_fz"), format!("{prefix}_my")]
}

impl RunLog {
    pub fn modules(&self) -> usize {
        self.meta.modules
    }

    pub fn csv_header(modules: usize) -> Vec<String> {
        let mut h: Vec<String> = ["time", "x", "z", "theta", "vx", "vz", "omega", "fb_x", "fb_z", "fb_theta", "ref_x", "ref_z", "ref_theta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(planar("w_des"));
        h.extend((0..modules).map(|i| format!("cmd_{i}")));
        h.extend((0..modules).map(|i| format!("app_{i}")));
        h.extend(planar("w_ext"));
        h.extend(planar("w_est"));
        h.extend(planar("residual"));
        h.push("solve_time".into());
        h.push("iterations".into());
        h
    }

    /// Header row plus one row per tick; floats carry 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write_csv_header(&mut out, self.modules())?;
        for r in &self.records {
            write_csv_row(&mut out, r)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Parse a log written by [`RunLog::write_csv`].
    pub fn read_csv(text: &str, meta: RunMeta) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty log".into()))?
            .split(',')
            .collect();
        let n = meta.modules;
        if header != Self::csv_header(n) {
            return Err(Error::InvalidArgument(format!("log header does not match {n} modules")));
        }
        let mut records = Vec::new();
        for (row, line) in lines.enumerate() {
            let bad = |what: &str| Error::InvalidArgument(format!("log row {}: {what}", row + 2));
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad("wrong column count"));
            }
            let v: Vec<f64> = cells[..cells.len() - 1]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| bad(c)))
                .collect::<Result<_>>()?;
            let iterations = cells[cells.len() - 1].parse().map_err(|_| bad("iterations"))?;
            let pose = |i: usize| PlanarPose { x: v[i], z: v[i + 1], theta: v[i + 2] };
            let wrench = |i: usize| Wrench { fx: v[i], fz: v[i + 1], my: v[i + 2], ..Wrench::ZERO };
            let c = 16;
            records.push(TickRecord {
                time: v[0],
                pose: pose(1),
                twist: PlanarTwist { vx: v[4], vz: v[5], omega: v[6] },
                feedback: pose(7),
                reference: (!v[10].is_nan()).then(|| pose(10)),
                w_des: wrench(13),
                commanded: v[c..c + n].to_vec(),
                applied: v[c + n..c + 2 * n].to_vec(),
                w_ext: wrench(c + 2 * n),
                w_ext_estimate: wrench(c + 2 * n + 3),
                residual: wrench(c + 2 * n + 6),
                solve_time: v[c + 2 * n + 9],
                iterations,
            });
        }
        Ok(RunLog { meta, records })
    }

    /// Scan for non-finite values and tension-bound violations.
    pub fn check_bounds(&self) -> Result<()> {
        let tol = 1e-9;
        for (k, r) in self.records.iter().enumerate() {
            let finite = r.pose.is_finite()
                && r.twist.is_finite()
                && r.w_des.is_finite()
                && r.w_ext.is_finite()
                && r.residual.is_finite()
                && r.commanded.iter().chain(&r.applied).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Scenario(format!("non-finite value in log at tick {k}")));
            }
            for i in 0..self.meta.modules {
                let (lo, hi) = (self.meta.t_min[i], self.meta.t_max[i]);
                if r.commanded[i] < lo - tol || r.commanded[i] > hi + tol {
                    return Err(Error::Scenario(format!(
                        "commanded tension {} on module {i} outside [{lo}, {hi}] at tick {k}",
                        r.commanded[i]
                    )));
                }
                if r.applied[i] < -tol || r.applied[i] > hi + tol {
                    return Err(Error::Scenario(format!(
                        "applied tension {} on module {i} outside [0, {hi}] at tick {k}",
                        r.applied[i]
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn write_csv_header<W: Write>(out: &mut W, modules: usize) -> io::Result<()> {
    writeln!(out, "{}", RunLog::csv_header(modules).join(","))
}

/// One CSV row, matching [`RunLog::csv_header`].
pub fn write_csv_row<W: Write>(out: &mut W, r: &TickRecord) -> io::Result<()> {
    let mut line = String::with_capacity(512);
    let mut push = |v: f64| {
        if !line.is_empty() {
            line.push(',');
        }
        let _ = write!(line, "{v:.8e}");
    };
    push(r.time);
    for v in [r.pose.x, r.pose.z, r.pose.theta, r.twist.vx, r.twist.vz, r.twist.omega] {
        push(v);
    }
    for v in [r.feedback.x, r.feedback.z, r.feedback.theta] {
        push(v);
    }
    for v in r.reference.map(|p| [p.x, p.z, p.theta]).unwrap_or([f64::NAN; 3]) {
        push(v);
    }
    for v in [r.w_des.fx, r.w_des.fz, r.w_des.my] {
        push(v);
    }
    for &v in r.commanded.iter().chain(&r.applied) {
        push(v);
    }
    for w in [r.w_ext, r.w_ext_estimate, r.residual] {
        for v in [w.fx, w.fz, w.my] {
            push(v);
        }
    }
    push(r.solve_time);
    let _ = write!(line, ",{}", r.iterations);
    writeln!(out, "{line}")
}
