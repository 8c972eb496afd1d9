//! Aggregate statistics over a run log.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::log::RunLog;
use crate::error::{Error, Result};
use crate::model::PayloadModel;

/// Payload speed under which the payload counts as stopped (m/s).
pub const PAUSE_SPEED: f64 = 1e-3;
/// Shortest stop counted as a stick-slip pause (ticks).
pub const PAUSE_MIN_TICKS: usize = 10;
/// Tracking error inside which the payload counts as settled (m).
pub const SETTLE_BAND: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub modules: usize,
    pub ticks: usize,
    pub duration: f64,
    /// Applied tension statistics (N).
    pub tension_mean: Vec<f64>,
    pub tension_max: Vec<f64>,
    pub tension_mean_all: f64,
    pub tension_max_all: f64,
    /// Distance from the reference (m), over ticks that have one.
    pub tracking_error_max: Option<f64>,
    pub tracking_error_mean: Option<f64>,
    pub tracking_error_final: Option<f64>,
    /// Time after which the tracking error stays within the settle band (s).
    pub settling_time: Option<f64>,
    /// Magnitude of the external force (N).
    pub operator_force_mean: f64,
    pub operator_force_max: f64,
    pub operator_mean_ratio: f64,
    pub operator_max_ratio: f64,
    /// Recorded QP wall-clock times (s); zero when timing was off.
    pub solve_time_mean: f64,
    pub solve_time_p99: f64,
    pub qp_solves: usize,
    pub qp_iterations_max: usize,
    pub stick_slip_pauses: usize,
    pub residual_force_max: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Nearest-rank percentile of `values` (`p` in [0, 1]).
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Stops of the payload while its reference keeps moving away: maximal runs
/// of at least [`PAUSE_MIN_TICKS`] ticks under [`PAUSE_SPEED`] with the
/// tracking error larger at the end than at the start.
pub fn count_stick_slip_pauses(log: &RunLog) -> usize {
    let mut count = 0;
    let mut start: Option<(usize, f64)> = None;
    let close = |start: Option<(usize, f64)>, end: usize, err: f64| match start {
        Some((s, e0)) if end - s >= PAUSE_MIN_TICKS && err > e0 => 1,
        _ => 0,
    };
    let mut last = (0, 0.0);
    for (k, r) in log.records.iter().enumerate() {
        let err = r.reference.map(|p| p.distance(&r.pose));
        match err {
            Some(e) if r.twist.speed() < PAUSE_SPEED => {
                if start.is_none() {
                    start = Some((k, e));
                }
                last = (k + 1, e);
            }
            _ => {
                count += close(start.take(), last.0, last.1);
            }
        }
    }
    count + close(start, last.0, last.1)
}

pub fn compute_metrics(log: &RunLog, payload: &PayloadModel) -> Result<MetricsReport> {
    if log.records.is_empty() {
        return Err(Error::InvalidArgument("empty log".into()));
    }
    let n = log.meta.modules;
    let column = |i: usize| log.records.iter().map(|r| r.applied[i]).collect::<Vec<_>>();
    let tension_mean: Vec<f64> = (0..n).map(|i| mean(&column(i))).collect();
    let tension_max: Vec<f64> = (0..n).map(|i| max(column(i))).collect();

    let errors: Vec<(f64, f64)> = log
        .records
        .iter()
        .filter_map(|r| r.reference.map(|p| (r.time, p.distance(&r.pose))))
        .collect();
    let (tracking_error_max, tracking_error_mean, tracking_error_final, settling_time) = if errors.is_empty() {
        (None, None, None, None)
    } else {
        let e: Vec<f64> = errors.iter().map(|x| x.1).collect();
        let settle = match errors.iter().rposition(|x| x.1 > SETTLE_BAND) {
            None => Some(0.0),
            Some(i) if i + 1 < errors.len() => Some(errors[i + 1].0),
            Some(_) => None,
        };
        (Some(max(e.iter().cloned())), Some(mean(&e)), e.last().cloned(), settle)
    };

    let force: Vec<f64> = log.records.iter().map(|r| r.w_ext.force_norm()).collect();
    let weight = payload.weight();
    let operator_force_mean = mean(&force);
    let operator_force_max = max(force.iter().cloned());
    let ratio = |f: f64| if weight > 0.0 { f / weight } else { 0.0 };

    let solves: Vec<&_> = log.records.iter().filter(|r| r.iterations > 0).collect();
    let times: Vec<f64> = solves.iter().map(|r| r.solve_time).collect();

    Ok(MetricsReport {
        scenario: log.meta.scenario.clone(),
        modules: n,
        ticks: log.records.len(),
        duration: log.records.last().map(|r| r.time).unwrap_or(0.0),
        tension_mean_all: mean(&tension_mean),
        tension_max_all: max(tension_max.iter().cloned()),
        tension_mean,
        tension_max,
        tracking_error_max,
        tracking_error_mean,
        tracking_error_final,
        settling_time,
        operator_force_mean,
        operator_force_max,
        operator_mean_ratio: ratio(operator_force_mean),
        operator_max_ratio: ratio(operator_force_max),
        solve_time_mean: if times.is_empty() { 0.0 } else { mean(&times) },
        solve_time_p99: percentile(&times, 0.99),
        qp_solves: solves.len(),
        qp_iterations_max: solves.iter().map(|r| r.iterations).max().unwrap_or(0),
        stick_slip_pauses: count_stick_slip_pauses(log),
        residual_force_max: max(log.records.iter().map(|r| r.residual.force_norm())),
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

impl MetricsReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "modules = {}", self.modules);
        let _ = writeln!(s, "ticks = {}", self.ticks);
        let _ = writeln!(s, "duration_s = {:.3}", self.duration);
        let _ = writeln!(s, "tension_mean_n = [{}]", list(&self.tension_mean));
        let _ = writeln!(s, "tension_max_n = [{}]", list(&self.tension_max));
        let _ = writeln!(s, "tension_mean_all_n = {:.6}", self.tension_mean_all);
        let _ = writeln!(s, "tension_max_all_n = {:.6}", self.tension_max_all);
        let _ = writeln!(s, "tracking_error_max_m = {}", opt(self.tracking_error_max));
        let _ = writeln!(s, "tracking_error_mean_m = {}", opt(self.tracking_error_mean));
        let _ = writeln!(s, "tracking_error_final_m = {}", opt(self.tracking_error_final));
        let _ = writeln!(s, "settling_time_s = {}", opt(self.settling_time));
        let _ = writeln!(s, "operator_force_mean_n = {:.6}", self.operator_force_mean);
        let _ = writeln!(s, "operator_force_max_n = {:.6}", self.operator_force_max);
        let _ = writeln!(s, "operator_mean_ratio = {:.6}", self.operator_mean_ratio);
        let _ = writeln!(s, "operator_max_ratio = {:.6}", self.operator_max_ratio);
        let _ = writeln!(s, "solve_time_mean_s = {:.3e}", self.solve_time_mean);
        let _ = writeln!(s, "solve_time_p99_s = {:.3e}", self.solve_time_p99);
        let _ = writeln!(s, "qp_solves = {}", self.qp_solves);
        let _ = writeln!(s, "qp_iterations_max = {}", self.qp_iterations_max);
        let _ = writeln!(s, "stick_slip_pauses = {}", self.stick_slip_pauses);
        let _ = writeln!(s, "residual_force_max_n = {:.6}", self.residual_force_max);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    /// Mean applied tension, 4-module run over 2-module run.
    pub avg_ratio: f64,
    /// Peak applied tension, 4-module run over 2-module run.
    pub max_ratio: f64,
    pub mean_few: f64,
    pub mean_many: f64,
    pub max_few: f64,
    pub max_many: f64,
    pub per_module_mean_few: Vec<f64>,
    pub per_module_mean_many: Vec<f64>,
    pub per_module_max_few: Vec<f64>,
    pub per_module_max_many: Vec<f64>,
}

impl ScalingReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "avg_ratio = {:.6}", self.avg_ratio);
        let _ = writeln!(s, "max_ratio = {:.6}", self.max_ratio);
        let _ = writeln!(s, "mean_tension_few_n = {:.6}", self.mean_few);
        let _ = writeln!(s, "mean_tension_many_n = {:.6}", self.mean_many);
        let _ = writeln!(s, "max_tension_few_n = {:.6}", self.max_few);
        let _ = writeln!(s, "max_tension_many_n = {:.6}", self.max_many);
        let _ = writeln!(s, "per_module_mean_few_n = [{}]", list(&self.per_module_mean_few));
        let _ = writeln!(s, "per_module_mean_many_n = [{}]", list(&self.per_module_mean_many));
        let _ = writeln!(s, "per_module_max_few_n = [{}]", list(&self.per_module_max_few));
        let _ = writeln!(s, "per_module_max_many_n = [{}]", list(&self.per_module_max_many));
        s
    }
}

/// Tension ratios between two runs of the same motion with different module
/// sets (`few` normally the upper pair, `many` all four).
pub fn compare_scaling(few: &RunLog, many: &RunLog) -> Result<ScalingReport> {
    let (a, b) = (&few.meta, &many.meta);
    if a.trajectory_fingerprint != b.trajectory_fingerprint || a.duration != b.duration || a.rates != b.rates {
        return Err(Error::Incomparable(format!(
            "runs `{}` ({}) and `{}` ({}) do not share a trajectory",
            a.scenario, a.trajectory_fingerprint, b.scenario, b.trajectory_fingerprint
        )));
    }
    if few.records.is_empty() || many.records.is_empty() {
        return Err(Error::Incomparable("empty log".into()));
    }
    let stats = |log: &RunLog| {
        let n = log.meta.modules;
        let means: Vec<f64> = (0..n)
            .map(|i| log.records.iter().map(|r| r.applied[i]).sum::<f64>() / log.records.len() as f64)
            .collect();
        let maxes: Vec<f64> = (0..n).map(|i| max(log.records.iter().map(|r| r.applied[i]))).collect();
        (means, maxes)
    };
    let (mean_f, max_f) = stats(few);
    let (mean_m, max_m) = stats(many);
    let mean_few = mean(&mean_f);
    let mean_many = mean(&mean_m);
    let max_few = max(max_f.iter().cloned());
    let max_many = max(max_m.iter().cloned());
    Ok(ScalingReport {
        avg_ratio: mean_many / mean_few,
        max_ratio: max_many / max_few,
        mean_few,
        mean_many,
        max_few,
        max_many,
        per_module_mean_few: mean_f,
        per_module_mean_many: mean_m,
        per_module_max_few: max_f,
        per_module_max_many: max_m,
    })
}
