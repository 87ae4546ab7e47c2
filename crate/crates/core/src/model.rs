//! Domain types shared by every planner: scenarios, cost model, support
//! boxes, linear policies, and the expected social cost.
//!
//! Costs are quadratic throughout the planning paths: a customer providing
//! `x` kW of demand response in slot `t` pays `a_i(t) x^2`, the LSE pays
//! `c_g y^2` for a residual mismatch `y`, and capacity costs `p_cap` per kW.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::Matrix3;

use crate::error::{invalid, Error, Result};

/// Default ridge added to moment matrices and policy coefficients.
pub const DEFAULT_RIDGE: f64 = 1e-9;

/// Dense customer index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CustomerId(pub usize);

impl CustomerId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for CustomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Joint samples of the aggregate mismatch `D(t)`, the per-customer
/// mismatches `delta_i(t)`, the per-customer cost coefficients `a_i(t)` and
/// the LSE-side mismatch `r(t)`, with one probability weight per slot.
///
/// Per-customer data is stored row-major: slot `t` owns the range
/// `t*n..(t+1)*n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    n: usize,
    d: Vec<f64>,
    r: Vec<f64>,
    delta: Vec<f64>,
    a: Vec<f64>,
    weights: Vec<f64>,
}

impl ScenarioSet {
    /// Builds a scenario set from raw columns. Only dimensions are checked
    /// here; use [`validate_scenarios`] for the value invariants.
    pub fn new(n: usize, d: Vec<f64>, r: Vec<f64>, delta: Vec<f64>, a: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let t = d.len();
        check_len("r", t, r.len())?;
        check_len("weights", t, weights.len())?;
        check_len("delta", t * n, delta.len())?;
        check_len("a", t * n, a.len())?;
        Ok(Self {
            n,
            d,
            r,
            delta,
            a,
            weights,
        })
    }

    /// Builds a uniformly weighted set with `D(t) = sum_i delta_i(t) - r(t)`.
    pub fn from_mismatches(n: usize, delta: Vec<f64>, r: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let t = r.len();
        check_len("delta", t * n, delta.len())?;
        let d = (0..t)
            .map(|s| delta[s * n..(s + 1) * n].iter().sum::<f64>() - r[s])
            .collect();
        let weights = uniform_weights(t);
        Self::new(n, d, r, delta, a, weights)
    }

    /// A set with no scenarios at all.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            d: Vec::new(),
            r: Vec::new(),
            delta: Vec::new(),
            a: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn customers(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d(&self, t: usize) -> f64 {
        self.d[t]
    }

    pub fn r(&self, t: usize) -> f64 {
        self.r[t]
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t]
    }

    pub fn delta(&self, t: usize) -> &[f64] {
        &self.delta[t * self.n..(t + 1) * self.n]
    }

    pub fn a(&self, t: usize) -> &[f64] {
        &self.a[t * self.n..(t + 1) * self.n]
    }

    pub fn d_values(&self) -> &[f64] {
        &self.d
    }

    pub fn r_values(&self) -> &[f64] {
        &self.r
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Iterator over customer `i`'s cost coefficients across slots.
    pub fn a_of(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |t| self.a[t * self.n + i])
    }

    /// Iterator over customer `i`'s mismatches across slots.
    pub fn delta_of(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |t| self.delta[t * self.n + i])
    }

    /// Replaces the weights. Values are not validated.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        check_len("weights", self.len(), weights.len())?;
        self.weights = weights;
        Ok(self)
    }

    /// Copy of the set with the cost coefficients removed, i.e. the data the
    /// LSE is allowed to see during a negotiation.
    pub fn lse_view(&self) -> LseView {
        LseView {
            n: self.n,
            d: self.d.clone(),
            r: self.r.clone(),
            delta: self.delta.clone(),
            weights: self.weights.clone(),
        }
    }
}

/// Scenario data without customer cost coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LseView {
    n: usize,
    d: Vec<f64>,
    r: Vec<f64>,
    delta: Vec<f64>,
    weights: Vec<f64>,
}

impl LseView {
    pub fn customers(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn d(&self, t: usize) -> f64 {
        self.d[t]
    }

    pub fn r(&self, t: usize) -> f64 {
        self.r[t]
    }

    pub fn weight(&self, t: usize) -> f64 {
        self.weights[t]
    }

    pub fn delta(&self, t: usize) -> &[f64] {
        &self.delta[t * self.n..(t + 1) * self.n]
    }
}

pub(crate) fn uniform_weights(t: usize) -> Vec<f64> {
    if t == 0 {
        return Vec::new();
    }
    vec![1.0 / t as f64; t]
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

/// Quadratic cost instantiation: LSE mismatch coefficient, capacity price
/// and the emergency price charged for residual beyond the capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub c_g: f64,
    pub p_cap: f64,
    pub overflow_price: f64,
}

impl CostModel {
    pub fn new(c_g: f64, p_cap: f64, overflow_price: f64) -> Result<Self> {
        for (name, v) in [("c_g", c_g), ("p_cap", p_cap), ("overflow_price", overflow_price)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(alloc::format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(Self {
            c_g,
            p_cap,
            overflow_price,
        })
    }

    pub fn with_p_cap(self, p_cap: f64) -> Self {
        Self { p_cap, ..self }
    }
}

/// Box support for `(D, delta)` over which the worst-case capacity
/// constraints are enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    pub d_lo: f64,
    pub d_hi: f64,
    pub delta_lo: Vec<f64>,
    pub delta_hi: Vec<f64>,
}

impl SupportBox {
    pub fn new(d_lo: f64, d_hi: f64, delta_lo: Vec<f64>, delta_hi: Vec<f64>) -> Result<Self> {
        check_len("delta_hi", delta_lo.len(), delta_hi.len())?;
        if d_lo > d_hi || delta_lo.iter().zip(&delta_hi).any(|(l, h)| l > h) {
            return Err(invalid("support box has lo > hi"));
        }
        Ok(Self {
            d_lo,
            d_hi,
            delta_lo,
            delta_hi,
        })
    }

    /// The degenerate box `{0}` for `n` customers.
    pub fn zero(n: usize) -> Self {
        Self {
            d_lo: 0.0,
            d_hi: 0.0,
            delta_lo: vec![0.0; n],
            delta_hi: vec![0.0; n],
        }
    }

    pub fn customers(&self) -> usize {
        self.delta_lo.len()
    }

    /// Largest absolute aggregate mismatch in the box.
    pub fn max_abs_d(&self) -> f64 {
        self.d_lo.abs().max(self.d_hi.abs())
    }

    pub fn contains(&self, s: &ScenarioSet) -> bool {
        (0..s.len()).all(|t| {
            let d = s.d(t);
            d >= self.d_lo
                && d <= self.d_hi
                && s.delta(t)
                    .iter()
                    .enumerate()
                    .all(|(i, &x)| x >= self.delta_lo[i] && x <= self.delta_hi[i])
        })
    }
}

/// Coefficients of the linear policy `x_i = alpha_i D + beta_i delta_i + gamma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(n: usize) -> Self {
        Self {
            alpha: vec![0.0; n],
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
        }
    }

    pub fn customers(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_finite(&self) -> bool {
        self.alpha
            .iter()
            .chain(&self.beta)
            .chain(&self.gamma)
            .all(|v| v.is_finite())
    }

    /// Response of customer `i` to the realized mismatches.
    pub fn response(&self, i: usize, d: f64, delta: f64) -> f64 {
        self.alpha[i] * d + self.beta[i] * delta + self.gamma[i]
    }

    /// Triple `(alpha_i, beta_i, gamma_i)`.
    pub fn triple(&self, i: usize) -> [f64; 3] {
        [self.alpha[i], self.beta[i], self.gamma[i]]
    }

    pub fn set_triple(&mut self, i: usize, v: [f64; 3]) {
        self.alpha[i] = v[0];
        self.beta[i] = v[1];
        self.gamma[i] = v[2];
    }

    fn check(&self, n: usize) -> Result<()> {
        check_len("policy alpha", n, self.alpha.len())?;
        check_len("policy beta", n, self.beta.len())?;
        check_len("policy gamma", n, self.gamma.len())
    }
}

/// Reserve capacity purchased ahead of real time.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CapacityDecision {
    kappa: f64,
}

impl CapacityDecision {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(invalid(alloc::format!("kappa must be nonnegative, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    pub fn kappa(self) -> f64 {
        self.kappa
    }
}

/// A violated scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveCost { slot: usize, customer: usize, value: f64 },
    ConsistencyIdentity { slot: usize, residual: f64 },
    NegativeWeight { slot: usize, value: f64 },
    WeightSum { sum: f64 },
    NonFinite { slot: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveCost { slot, customer, value } => {
                write!(f, "nonpositive cost coefficient a[{customer}]={value} in slot {slot}")
            }
            Violation::ConsistencyIdentity { slot, residual } => write!(
                f,
                "consistency identity D = sum(delta) - r broken in slot {slot} (off by {residual})"
            ),
            Violation::NegativeWeight { slot, value } => {
                write!(f, "negative weight {value} in slot {slot}")
            }
            Violation::WeightSum { sum } => write!(f, "weights sum to {sum}, not 1"),
            Violation::NonFinite { slot } => write!(f, "non-finite value in slot {slot}"),
        }
    }
}

/// Outcome of [`validate_scenarios`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| alloc::format!("{v}")).collect()
    }
}

const IDENTITY_TOL: f64 = 1e-9;
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Checks the scenario invariants and reports every violation found.
pub fn validate_scenarios(s: &ScenarioSet) -> ValidationReport {
    let mut violations = Vec::new();
    for t in 0..s.len() {
        let delta = s.delta(t);
        let a = s.a(t);
        if !(s.d(t).is_finite() && s.r(t).is_finite() && s.weight(t).is_finite())
            || delta.iter().chain(a).any(|v| !v.is_finite())
        {
            violations.push(Violation::NonFinite { slot: t });
            continue;
        }
        for (i, &ai) in a.iter().enumerate() {
            if ai <= 0.0 {
                violations.push(Violation::NonPositiveCost {
                    slot: t,
                    customer: i,
                    value: ai,
                });
            }
        }
        let sum_delta: f64 = delta.iter().sum();
        let residual = s.d(t) - (sum_delta - s.r(t));
        let scale = 1.0 + s.d(t).abs() + delta.iter().map(|v| v.abs()).sum::<f64>() + s.r(t).abs();
        if residual.abs() > IDENTITY_TOL * scale {
            violations.push(Violation::ConsistencyIdentity { slot: t, residual });
        }
        if s.weight(t) < 0.0 {
            violations.push(Violation::NegativeWeight {
                slot: t,
                value: s.weight(t),
            });
        }
    }
    if !s.is_empty() {
        let sum: f64 = s.weights().iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            violations.push(Violation::WeightSum { sum });
        }
    }
    ValidationReport { violations }
}

/// `sum_t w(t) a_i(t) z(t) z(t)^T + ridge I` with `z(t) = (D(t), delta_i(t), 1)`.
pub fn weighted_moment_matrix(s: &ScenarioSet, i: CustomerId, ridge: f64) -> Matrix3<f64> {
    let i = i.index();
    let mut m = Matrix3::identity() * ridge;
    for t in 0..s.len() {
        let z = [s.d(t), s.delta(t)[i], 1.0];
        let c = s.weight(t) * s.a(t)[i];
        for r in 0..3 {
            for k in 0..3 {
                m[(r, k)] += c * z[r] * z[k];
            }
        }
    }
    m
}

/// Expected social cost of a dispatch given per slot in row-major order
/// (`dispatch[t*n + i]`). The capacity bound itself is not enforced.
pub fn social_cost(s: &ScenarioSet, dispatch: &[f64], kappa: f64, cm: &CostModel) -> Result<f64> {
    let n = s.customers();
    check_len("dispatch", s.len() * n, dispatch.len())?;
    let mut total = 0.0;
    for t in 0..s.len() {
        let x = &dispatch[t * n..(t + 1) * n];
        total += s.weight(t) * slot_cost(s.d(t), s.a(t), x, cm.c_g);
    }
    Ok(cm.p_cap * kappa + total)
}

/// `sum_i a_i x_i^2 + c_g (D - sum_i x_i)^2` for one slot.
pub(crate) fn slot_cost(d: f64, a: &[f64], x: &[f64], c_g: f64) -> f64 {
    let mut customers = 0.0;
    let mut served = 0.0;
    for (ai, xi) in a.iter().zip(x) {
        customers += ai * xi * xi;
        served += xi;
    }
    let y = d - served;
    customers + c_g * y * y
}

pub(crate) fn check_policy(p: &PolicyParams, n: usize) -> Result<()> {
    p.check(n)
}
