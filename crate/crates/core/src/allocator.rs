//! Tension allocation as a box-constrained quadratic program.
//!
//! The cost is the weighted wrench error plus a tension regularizer,
//!
//! ```text
//! Σ_k w_k (W_des,k − (J T)_k)²  +  w_t Σ_j T_j²
//! ```
//!
//! which expands to `½ Tᵀ P T + qᵀ T + const` with `P = 2(Jᵀ Λ J + w_t I)`
//! and `q = −2 Jᵀ Λ W_des`, where `Λ = diag(w_cart)`. Tension bounds are a
//! box, solved with a primal active-set method that warm-starts from the
//! previous control tick.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{build_jacobian, compute_cable_states, WrenchJacobian};
use crate::model::{ModuleGeometry, PayloadModel, PlanarPose, TensionVector, Wrench};

pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocationWeights {
    /// Per-component wrench error weights, ordered `[fx, fy, fz, mx, my, mz]`.
    pub w_cart: [f64; 6],
    /// Tension regularization weight.
    pub w_t: f64,
}

impl Default for AllocationWeights {
    fn default() -> Self {
        AllocationWeights {
            w_cart: [1000.0, 0.0, 1000.0, 0.0, 0.0, 0.0],
            w_t: 1.0,
        }
    }
}

impl AllocationWeights {
    pub fn new(w_cart: [f64; 6], w_t: f64) -> Result<Self> {
        let w = AllocationWeights { w_cart, w_t };
        w.validate()?;
        Ok(w)
    }

    /// Rejects negative or non-finite weights and an all-zero `w_cart`. A
    /// regularizer heavier than a tenth of the largest Cartesian weight is
    /// allowed but logged.
    pub fn validate(&self) -> Result<()> {
        let all = self.w_cart.iter().chain(std::iter::once(&self.w_t));
        if all.clone().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("allocation weights must be finite and >= 0: {self:?}")));
        }
        let max_cart = self.max_cart();
        if !(max_cart > 0.0) {
            return Err(Error::InvalidArgument("at least one Cartesian weight must be positive".into()));
        }
        if self.w_t > max_cart / 10.0 {
            log::warn!(
                "tension weight {} is within an order of magnitude of the Cartesian weights (max {max_cart}); wrench tracking will suffer",
                self.w_t
            );
        }
        Ok(())
    }

    pub fn max_cart(&self) -> f64 {
        self.w_cart.iter().cloned().fold(0.0, f64::max)
    }
}

/// `min ½ xᵀ P x + qᵀ x  s.t.  lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpStandardForm {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpStandardForm {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.q
    }

    /// The box written as a general inequality `A x ≤ b` with `A = [I; −I]`
    /// and `b = [upper; −lower]`.
    pub fn general_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(n + i, i)] = -1.0;
            b[i] = self.upper[i];
            b[n + i] = -self.lower[i];
        }
        (a, b)
    }

    /// KKT tolerance `1e−6·(1 + ‖q‖∞)`.
    pub fn kkt_tolerance(&self) -> f64 {
        1e-6 * (1.0 + self.q.amax())
    }

    /// Worst violation of the box-QP optimality conditions at `x`: zero
    /// gradient on free coordinates, non-negative at a lower bound, non-positive
    /// at an upper bound, and feasibility.
    pub fn kkt_violation(&self, x: &DVector<f64>) -> f64 {
        let g = self.gradient(x);
        let scale = 1.0 + self.lower.amax().max(self.upper.amax());
        let on_bound = 1e-9 * scale;
        (0..self.dim())
            .map(|i| {
                let infeasible = (self.lower[i] - x[i]).max(x[i] - self.upper[i]).max(0.0);
                let stationarity = if (x[i] - self.lower[i]).abs() <= on_bound {
                    (-g[i]).max(0.0)
                } else if (x[i] - self.upper[i]).abs() <= on_bound {
                    g[i].max(0.0)
                } else {
                    g[i].abs()
                };
                infeasible.max(stationarity)
            })
            .fold(0.0, f64::max)
    }
}

pub fn formulate(
    jacobian: &WrenchJacobian,
    w_des: &Wrench,
    weights: &AllocationWeights,
    modules: &[ModuleGeometry],
) -> Result<QpStandardForm> {
    let n = jacobian.cables();
    if n == 0 || modules.len() != n {
        return Err(Error::InvalidArgument(format!(
            "jacobian has {n} columns but {} modules were given",
            modules.len()
        )));
    }
    let j = jacobian.to_matrix();
    let lambda = DMatrix::from_diagonal(&DVector::from_row_slice(&weights.w_cart));
    let w = DVector::from_row_slice(&w_des.to_array());

    let jt_l = j.transpose() * &lambda;
    let mut p = &jt_l * &j;
    for i in 0..n {
        p[(i, i)] += weights.w_t;
    }
    p *= 2.0;
    // exact symmetry regardless of rounding order
    let p = (&p + p.transpose()) * 0.5;
    let q = -2.0 * (&jt_l * w);

    Ok(QpStandardForm {
        p,
        q,
        lower: DVector::from_iterator(n, modules.iter().map(|m| m.t_min)),
        upper: DVector::from_iterator(n, modules.iter().map(|m| m.t_max)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpSolution {
    pub x: TensionVector,
    pub iterations: usize,
    pub objective: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Primal active-set solve of a strictly convex box QP.
pub fn solve_box_qp(
    qp: &QpStandardForm,
    warm_start: Option<&TensionVector>,
    options: &SolverOptions,
) -> Result<BoxQpSolution> {
    let n = qp.dim();
    if qp.p.nrows() != n || qp.p.ncols() != n || qp.lower.len() != n || qp.upper.len() != n {
        return Err(Error::InvalidProblem("inconsistent QP dimensions".into()));
    }
    if (0..n).any(|i| !(qp.lower[i] < qp.upper[i])) {
        return Err(Error::InvalidProblem("empty tension box".into()));
    }
    check_positive_definite(&qp.p)?;

    let mut x = match warm_start {
        Some(w) if w.len() == n => DVector::from_row_slice(w.as_slice()),
        _ => qp.lower.clone(),
    };
    for i in 0..n {
        x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
    }

    let g = qp.gradient(&x);
    let mut state: Vec<Bound> = (0..n)
        .map(|i| {
            if x[i] <= qp.lower[i] && g[i] >= 0.0 {
                Bound::Lower
            } else if x[i] >= qp.upper[i] && g[i] <= 0.0 {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();

    let mult_tol = 1e-12 * (1.0 + qp.q.amax());
    for iteration in 1..=options.max_iterations {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();

        if !free.is_empty() {
            let target = subspace_minimizer(qp, &x, &free)?;
            let mut alpha = 1.0;
            let mut blocking = None;
            for (k, &i) in free.iter().enumerate() {
                let step = target[k] - x[i];
                let limit = if step < 0.0 {
                    (qp.lower[i] - x[i]) / step
                } else if step > 0.0 {
                    (qp.upper[i] - x[i]) / step
                } else {
                    continue;
                };
                if limit < alpha {
                    alpha = limit.max(0.0);
                    blocking = Some((i, if step < 0.0 { Bound::Lower } else { Bound::Upper }));
                }
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] += alpha * (target[k] - x[i]);
                x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
            }
            if let Some((i, side)) = blocking {
                x[i] = if side == Bound::Lower { qp.lower[i] } else { qp.upper[i] };
                state[i] = side;
                continue;
            }
        }

        // At the minimizer of the current face: release the worst bound whose
        // multiplier has the wrong sign, or stop.
        let g = qp.gradient(&x);
        let release = (0..n)
            .filter_map(|i| match state[i] {
                Bound::Lower if g[i] < -mult_tol => Some((i, -g[i])),
                Bound::Upper if g[i] > mult_tol => Some((i, g[i])),
                _ => None,
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match release {
            Some((i, _)) => state[i] = Bound::Free,
            None => {
                let objective = qp.objective(&x);
                return Ok(BoxQpSolution {
                    x: TensionVector::new(x.iter().cloned().collect())?,
                    iterations: iteration,
                    objective,
                });
            }
        }
    }

    Err(Error::Nonconvergence {
        iterations: options.max_iterations,
        best: TensionVector::new(x.iter().map(|v| v.max(0.0)).collect())?,
    })
}

fn check_positive_definite(p: &DMatrix<f64>) -> Result<()> {
    let n = p.nrows();
    let max_diag = (0..n).map(|i| p[(i, i)]).fold(0.0, f64::max);
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("P is not positive definite".into()))?;
    let l = chol.l_dirty();
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * max_diag) {
        return Err(Error::InvalidProblem(format!(
            "P is singular (pivot {min_pivot:.3e}); a positive tension weight is required"
        )));
    }
    Ok(())
}

/// Minimize over the free coordinates with the others fixed at `x`.
fn subspace_minimizer(qp: &QpStandardForm, x: &DVector<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let n = qp.dim();
    let m = free.len();
    let mut pff = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            pff[(a, b)] = qp.p[(i, j)];
        }
        let mut r = -qp.q[i];
        for j in 0..n {
            if !free.contains(&j) {
                r -= qp.p[(i, j)] * x[j];
            }
        }
        rhs[a] = r;
    }
    let chol = pff
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("negative curvature on the free subspace".into()))?;
    Ok(chol.solve(&rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub tensions: TensionVector,
    /// `J · tensions`.
    pub achieved_wrench: Wrench,
    /// Desired minus achieved.
    pub residual: Wrench,
    pub iterations: usize,
    /// Wall-clock solve time (s).
    pub solve_time: f64,
}

/// One-shot allocation: geometry → Jacobian → QP → solve.
pub fn allocate(
    pose: &PlanarPose,
    payload: &PayloadModel,
    modules: &[ModuleGeometry],
    w_des: &Wrench,
    weights: &AllocationWeights,
    warm_start: Option<&TensionVector>,
) -> Result<AllocationResult> {
    allocate_with(pose, payload, modules, w_des, weights, warm_start, &SolverOptions::default())
}

pub fn allocate_with(
    pose: &PlanarPose,
    payload: &PayloadModel,
    modules: &[ModuleGeometry],
    w_des: &Wrench,
    weights: &AllocationWeights,
    warm_start: Option<&TensionVector>,
    options: &SolverOptions,
) -> Result<AllocationResult> {
    if !(weights.w_t > 0.0) {
        return Err(Error::InvalidProblem(
            "tension weight must be positive for a unique allocation".into(),
        ));
    }
    let started = Instant::now();
    let cables = compute_cable_states(pose, payload, modules)?;
    let jacobian = build_jacobian(&cables);
    let qp = formulate(&jacobian, w_des, weights, modules)?;
    let sol = solve_box_qp(&qp, warm_start, options)?;
    let solve_time = started.elapsed().as_secs_f64();

    let achieved_wrench = jacobian.apply(&sol.x);
    Ok(AllocationResult {
        residual: *w_des - achieved_wrench,
        achieved_wrench,
        tensions: sol.x,
        iterations: sol.iterations,
        solve_time,
    })
}

/// Allocation state for one control loop: remembers the previous solution
/// and warm-starts from it.
#[derive(Debug, Clone, Default)]
pub struct Allocator {
    pub options: SolverOptions,
    previous: Option<TensionVector>,
}

impl Allocator {
    pub fn new(options: SolverOptions) -> Self {
        Allocator {
            options,
            previous: None,
        }
    }

    pub fn allocate(
        &mut self,
        pose: &PlanarPose,
        payload: &PayloadModel,
        modules: &[ModuleGeometry],
        w_des: &Wrench,
        weights: &AllocationWeights,
    ) -> Result<AllocationResult> {
        let result = allocate_with(pose, payload, modules, w_des, weights, self.previous.as_ref(), &self.options)?;
        self.previous = Some(result.tensions.clone());
        Ok(result)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Warm-start the next solve from `tensions`.
    pub fn prime(&mut self, tensions: TensionVector) {
        self.previous = Some(tensions);
    }
}
