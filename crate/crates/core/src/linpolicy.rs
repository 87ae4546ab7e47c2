//! Centralized planning of the linear policy
//! `x_i = alpha_i D + beta_i delta_i + gamma_i` jointly with the capacity.
//!
//! The expected cost is an exact quadratic in `(alpha, beta, gamma)` built
//! from weighted second moments of `(D, delta, 1)`. The worst-case capacity
//! constraints over the support box are linear after lifting each
//! coordinate's extremum into an auxiliary variable: the maximum of
//! `c * v` over `v in [lo, hi]` is `max(c lo, c hi)`, so two inequalities per
//! auxiliary describe it exactly.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::model::{
    check_policy, weighted_moment_matrix, CostModel, CustomerId, LseView, PolicyParams, ScenarioSet, SupportBox,
};
use crate::numerics::{QpSettings, QpSolver, QuadraticProgram, SolveStatus};

/// Tolerance on realized residuals when checking a policy against `kappa`.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Curvature on `kappa` relative to `c_g`.
pub const KAPPA_RIDGE: f64 = 1e-6;

/// Position of every decision variable in the assembled program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinLayout {
    pub n: usize,
}

impl LinLayout {
    pub fn alpha(&self, i: usize) -> usize {
        3 * i
    }
    pub fn beta(&self, i: usize) -> usize {
        3 * i + 1
    }
    pub fn gamma(&self, i: usize) -> usize {
        3 * i + 2
    }
    pub fn kappa(&self) -> usize {
        3 * self.n
    }
    /// Upper extremum of the `D` term.
    pub fn s_d_plus(&self) -> usize {
        3 * self.n + 1
    }
    pub fn s_d_minus(&self) -> usize {
        3 * self.n + 2
    }
    pub fn s_plus(&self, i: usize) -> usize {
        3 * self.n + 3 + 2 * i
    }
    pub fn s_minus(&self, i: usize) -> usize {
        3 * self.n + 4 + 2 * i
    }
    pub fn num_vars(&self) -> usize {
        3 * self.n + 1 + 2 * (self.n + 1)
    }
    pub fn num_constraints(&self) -> usize {
        4 * (self.n + 1) + 3
    }

    /// Reads the policy and capacity back from a primal vector.
    pub fn extract(&self, x: &[f64]) -> (PolicyParams, f64) {
        let mut p = PolicyParams::zeros(self.n);
        for i in 0..self.n {
            p.set_triple(i, [x[self.alpha(i)], x[self.beta(i)], x[self.gamma(i)]]);
        }
        (p, x[self.kappa()])
    }

    /// Primal vector for a policy, with auxiliaries at their tight values.
    pub fn pack(&self, p: &PolicyParams, kappa: f64, box_: &SupportBox) -> Vec<f64> {
        let mut x = vec![0.0; self.num_vars()];
        for i in 0..self.n {
            x[self.alpha(i)] = p.alpha[i];
            x[self.beta(i)] = p.beta[i];
            x[self.gamma(i)] = p.gamma[i];
            let (hi, lo) = extremes(-p.beta[i], box_.delta_lo[i], box_.delta_hi[i]);
            x[self.s_plus(i)] = hi;
            x[self.s_minus(i)] = lo;
        }
        let c = 1.0 - p.alpha.iter().sum::<f64>();
        let (hi, lo) = extremes(c, box_.d_lo, box_.d_hi);
        x[self.s_d_plus()] = hi;
        x[self.s_d_minus()] = lo;
        x[self.kappa()] = kappa;
        x
    }
}

/// `(max, min)` of `c v` over `v in [lo, hi]`.
fn extremes(c: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (u, v) = (c * lo, c * hi);
    (u.max(v), u.min(v))
}

/// Worst-case residual `y = (1 - sum alpha) D - sum beta_i delta_i - sum gamma_i`
/// over the box, as `(y_max, y_min)`.
pub fn worst_case_bounds(p: &PolicyParams, box_: &SupportBox) -> Result<(f64, f64)> {
    check_policy(p, box_.customers())?;
    let c = 1.0 - p.alpha.iter().sum::<f64>();
    let (mut hi, mut lo) = extremes(c, box_.d_lo, box_.d_hi);
    for i in 0..p.customers() {
        let (h, l) = extremes(-p.beta[i], box_.delta_lo[i], box_.delta_hi[i]);
        hi += h;
        lo += l;
    }
    let g: f64 = p.gamma.iter().sum();
    Ok((hi - g, lo - g))
}

/// Read access to the mismatch columns shared by the full scenario set and
/// the LSE's view of it.
pub trait MismatchData {
    fn customers(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn d(&self, t: usize) -> f64;
    fn delta(&self, t: usize) -> &[f64];
    fn weight(&self, t: usize) -> f64;
}

impl MismatchData for ScenarioSet {
    fn customers(&self) -> usize {
        ScenarioSet::customers(self)
    }
    fn len(&self) -> usize {
        ScenarioSet::len(self)
    }
    fn d(&self, t: usize) -> f64 {
        ScenarioSet::d(self, t)
    }
    fn delta(&self, t: usize) -> &[f64] {
        ScenarioSet::delta(self, t)
    }
    fn weight(&self, t: usize) -> f64 {
        ScenarioSet::weight(self, t)
    }
}

impl MismatchData for LseView {
    fn customers(&self) -> usize {
        LseView::customers(self)
    }
    fn len(&self) -> usize {
        LseView::len(self)
    }
    fn d(&self, t: usize) -> f64 {
        LseView::d(self, t)
    }
    fn delta(&self, t: usize) -> &[f64] {
        LseView::delta(self, t)
    }
    fn weight(&self, t: usize) -> f64 {
        LseView::weight(self, t)
    }
}

/// Weighted first and second moments of `(D, delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchMoments {
    pub n: usize,
    pub weight_sum: f64,
    pub dd: f64,
    pub d: f64,
    pub d_delta: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_delta: DMatrix<f64>,
}

impl MismatchMoments {
    pub fn new<S: MismatchData + ?Sized>(s: &S) -> Self {
        let n = s.customers();
        let mut m = Self {
            n,
            weight_sum: 0.0,
            dd: 0.0,
            d: 0.0,
            d_delta: vec![0.0; n],
            delta: vec![0.0; n],
            delta_delta: DMatrix::zeros(n, n),
        };
        for t in 0..s.len() {
            let w = s.weight(t);
            let d = s.d(t);
            let delta = s.delta(t);
            m.weight_sum += w;
            m.dd += w * d * d;
            m.d += w * d;
            for i in 0..n {
                m.d_delta[i] += w * d * delta[i];
                m.delta[i] += w * delta[i];
            }
            for j in 0..n {
                let wj = w * delta[j];
                if wj == 0.0 {
                    continue;
                }
                for i in j..n {
                    m.delta_delta[(i, j)] += wj * delta[i];
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                m.delta_delta[(i, j)] = m.delta_delta[(j, i)];
            }
        }
        m
    }

    /// `E[z_i z_j^T]` with `z_i = (D, delta_i, 1)`.
    pub fn cross(&self, i: usize, j: usize) -> Matrix3<f64> {
        Matrix3::new(
            self.dd,
            self.d_delta[j],
            self.d,
            self.d_delta[i],
            self.delta_delta[(i, j)],
            self.delta[i],
            self.d,
            self.delta[j],
            self.weight_sum,
        )
    }

    /// `E[D z_i]`.
    pub fn d_times(&self, i: usize) -> [f64; 3] {
        [self.dd, self.d_delta[i], self.d]
    }
}

/// Quadratic pieces of a linear-policy program before the capacity
/// constraints are attached.
pub(crate) struct LinObjectiveParts<'a> {
    pub moments: &'a MismatchMoments,
    /// Per-customer `E[a_i z_i z_i^T]`; `None` when the customers' costs are
    /// unknown to the assembler (the LSE's own problem).
    pub customer: Option<&'a [Matrix3<f64>]>,
    /// Linear term added per customer triple.
    pub linear: Option<&'a [[f64; 3]]>,
    /// Diagonal ridge on each customer's triple.
    pub ridge: &'a [[f64; 3]],
    pub aux_ridge: f64,
}

pub(crate) fn assemble(parts: &LinObjectiveParts<'_>, box_: &SupportBox, cm: &CostModel) -> Result<QuadraticProgram> {
    let n = parts.moments.n;
    if box_.customers() != n {
        return Err(Error::DimensionMismatch {
            what: "support box",
            expected: n,
            found: box_.customers(),
        });
    }
    let lay = LinLayout { n };
    let nv = lay.num_vars();
    let mut p = DMatrix::zeros(nv, nv);
    let mut q = DVector::zeros(nv);
    let cg = cm.c_g;
    for i in 0..n {
        for j in 0..=i {
            let mut block = parts.moments.cross(i, j) * cg;
            if i == j {
                if let Some(mc) = parts.customer {
                    block += mc[i];
                }
                for k in 0..3 {
                    block[(k, k)] += parts.ridge[i][k];
                }
            }
            for r in 0..3 {
                for c in 0..3 {
                    let v = 2.0 * block[(r, c)];
                    p[(3 * i + r, 3 * j + c)] = v;
                    p[(3 * j + c, 3 * i + r)] = v;
                }
            }
        }
        let dz = parts.moments.d_times(i);
        let extra = parts.linear.map_or([0.0; 3], |l| l[i]);
        for r in 0..3 {
            q[3 * i + r] = -2.0 * cg * dz[r] + extra[r];
        }
    }
    for k in lay.kappa()..nv {
        p[(k, k)] = 2.0 * parts.aux_ridge;
    }
    // select the smallest capacity among equal-cost policies
    p[(lay.kappa(), lay.kappa())] = 2.0 * parts.aux_ridge.max(KAPPA_RIDGE * cg);
    q[lay.kappa()] = cm.p_cap;

    let mut qp = QuadraticProgram::new(p, q)?;
    let alpha_sum = |coef: f64| -> Vec<(usize, f64)> { (0..n).map(|i| (lay.alpha(i), coef)).collect() };
    for bound in [box_.d_lo, box_.d_hi] {
        // s_D+ >= (1 - sum alpha) bound
        let mut row = alpha_sum(-bound);
        row.push((lay.s_d_plus(), -1.0));
        qp.add_constraint(&row, -bound)?;
    }
    for bound in [box_.d_lo, box_.d_hi] {
        // s_D- <= (1 - sum alpha) bound
        let mut row = alpha_sum(bound);
        row.push((lay.s_d_minus(), 1.0));
        qp.add_constraint(&row, bound)?;
    }
    for i in 0..n {
        for bound in [box_.delta_lo[i], box_.delta_hi[i]] {
            qp.add_constraint(&[(lay.beta(i), -bound), (lay.s_plus(i), -1.0)], 0.0)?;
        }
        for bound in [box_.delta_lo[i], box_.delta_hi[i]] {
            qp.add_constraint(&[(lay.beta(i), bound), (lay.s_minus(i), 1.0)], 0.0)?;
        }
    }
    // s_D+ + sum s_i+ - sum gamma <= kappa
    let mut upper = vec![(lay.s_d_plus(), 1.0), (lay.kappa(), -1.0)];
    // -(s_D- + sum s_i- - sum gamma) <= kappa
    let mut lower = vec![(lay.s_d_minus(), -1.0), (lay.kappa(), -1.0)];
    for i in 0..n {
        upper.push((lay.s_plus(i), 1.0));
        upper.push((lay.gamma(i), -1.0));
        lower.push((lay.s_minus(i), -1.0));
        lower.push((lay.gamma(i), 1.0));
    }
    qp.add_constraint(&upper, 0.0)?;
    qp.add_constraint(&lower, 0.0)?;
    qp.add_constraint(&[(lay.kappa(), -1.0)], 0.0)?;
    Ok(qp)
}

/// Per-customer `E[a_i z_i z_i^T]` without ridge.
pub fn customer_moments(s: &ScenarioSet) -> Vec<Matrix3<f64>> {
    (0..s.customers())
        .map(|i| weighted_moment_matrix(s, CustomerId(i), 0.0))
        .collect()
}

/// Assembles the convex QP over `(alpha, beta, gamma, kappa)` and the lifted
/// worst-case auxiliaries. `ridge` is applied to the policy coefficients and
/// (to select tight auxiliaries and the smallest capacity) to the remaining
/// variables.
pub fn assemble_lin_qp(s: &ScenarioSet, box_: &SupportBox, cm: &CostModel, ridge: f64) -> Result<QuadraticProgram> {
    let moments = MismatchMoments::new(s);
    let mc = customer_moments(s);
    let ridges = vec![[ridge; 3]; s.customers()];
    assemble(
        &LinObjectiveParts {
            moments: &moments,
            customer: Some(&mc),
            linear: None,
            ridge: &ridges,
            aux_ridge: ridge,
        },
        box_,
        cm,
    )
}

/// Exact expected social cost of a policy computed from moments.
pub(crate) fn planning_cost(
    moments: &MismatchMoments,
    customer: &[Matrix3<f64>],
    p: &PolicyParams,
    kappa: f64,
    cm: &CostModel,
) -> f64 {
    let n = moments.n;
    let theta: Vec<nalgebra::Vector3<f64>> = (0..n).map(|i| nalgebra::Vector3::from(p.triple(i))).collect();
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..n {
        quad += theta[i].dot(&(customer[i] * theta[i]));
        let mut acc = nalgebra::Vector3::zeros();
        for j in 0..n {
            acc += moments.cross(i, j) * theta[j];
        }
        quad += cm.c_g * theta[i].dot(&acc);
        let dz = moments.d_times(i);
        lin += dz[0] * theta[i][0] + dz[1] * theta[i][1] + dz[2] * theta[i][2];
    }
    cm.p_cap * kappa + quad - 2.0 * cm.c_g * lin + cm.c_g * moments.dd
}

/// Result of the centralized linear-policy planner.
#[derive(Debug, Clone, PartialEq)]
pub struct LinSolution {
    pub params: PolicyParams,
    pub kappa: f64,
    /// Expected social cost of the returned policy and capacity.
    pub expected_cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

/// Settings for [`solve_lin_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
}

impl Default for LinSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            ridge: crate::model::DEFAULT_RIDGE,
        }
    }
}

/// Solves the linear-policy planning problem with default ridge.
pub fn solve_lin(s: &ScenarioSet, box_: &SupportBox, cm: &CostModel, tol: f64) -> Result<LinSolution> {
    solve_lin_with(
        s,
        box_,
        cm,
        &LinSettings {
            tol,
            ..LinSettings::default()
        },
    )
}

pub fn solve_lin_with(
    s: &ScenarioSet,
    box_: &SupportBox,
    cm: &CostModel,
    settings: &LinSettings,
) -> Result<LinSolution> {
    let ridges = vec![[settings.ridge; 3]; s.customers()];
    solve_lin_ridged(s, box_, cm, settings, &ridges)
}

/// Variant with a diagonal ridge per customer coordinate, used to compare
/// against the regularized problem solved by the negotiation.
pub fn solve_lin_ridged(
    s: &ScenarioSet,
    box_: &SupportBox,
    cm: &CostModel,
    settings: &LinSettings,
    ridges: &[[f64; 3]],
) -> Result<LinSolution> {
    let n = s.customers();
    if ridges.len() != n {
        return Err(Error::DimensionMismatch {
            what: "ridges",
            expected: n,
            found: ridges.len(),
        });
    }
    let moments = MismatchMoments::new(s);
    let mc = customer_moments(s);
    let qp = assemble(
        &LinObjectiveParts {
            moments: &moments,
            customer: Some(&mc),
            linear: None,
            ridge: ridges,
            aux_ridge: settings.ridge,
        },
        box_,
        cm,
    )?;
    let mut solver = QpSolver::new(&qp, QpSettings::with_tol(settings.tol, settings.max_iter))?;
    let sol = solver.solve();
    if matches!(sol.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
        return Err(Error::Solver(sol.status));
    }
    let lay = LinLayout { n };
    let (params, kappa) = lay.extract(&sol.x);
    let kappa = tight_kappa(&params, kappa, box_)?;
    let expected_cost = planning_cost(&moments, &mc, &params, kappa, cm);
    Ok(LinSolution {
        params,
        kappa,
        expected_cost,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Raises `kappa` to cover the exact worst-case residual of `params`.
pub(crate) fn tight_kappa(params: &PolicyParams, kappa: f64, box_: &SupportBox) -> Result<f64> {
    let (hi, lo) = worst_case_bounds(params, box_)?;
    Ok(kappa.max(hi).max(-lo).max(0.0))
}

/// Realized expected social cost of a policy on a scenario set. Fails when
/// some scenario's residual exceeds `kappa`.
pub fn evaluate_policy(p: &PolicyParams, kappa: f64, s: &ScenarioSet, cm: &CostModel) -> Result<f64> {
    check_policy(p, s.customers())?;
    let tol = FEASIBILITY_TOL * (1.0 + kappa.abs());
    let mut total = 0.0;
    let (mut y_max, mut y_min) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..s.len() {
        let d = s.d(t);
        let (mut customers, mut served) = (0.0, 0.0);
        for (i, (&dl, &a)) in s.delta(t).iter().zip(s.a(t)).enumerate() {
            let x = p.response(i, d, dl);
            customers += a * x * x;
            served += x;
        }
        let y = d - served;
        y_max = y_max.max(y);
        y_min = y_min.min(y);
        total += s.weight(t) * (customers + cm.c_g * y * y);
    }
    if y_max > kappa + tol || y_min < -kappa - tol {
        return Err(Error::InfeasiblePolicy { y_max, y_min, kappa });
    }
    Ok(cm.p_cap * kappa + total)
}
