//! Optimal capacity under perfect real-time dispatch (the OPT benchmark).
//!
//! `F(kappa) = p_cap kappa + E[R(kappa; t)]` is convex; its subgradient is
//! `p_cap - E[theta(kappa; t)]`, so the optimum balances the capacity price
//! against the expected capacity multiplier.

use crate::error::Result;
use crate::model::{CostModel, ScenarioSet};
use crate::numerics::scalar_convex_min;
use crate::realtime::{dispatch_quadratic, dispatch_quadratic_into, DispatchResult};

/// Default bisection tolerance on `kappa` (kW).
pub const DEFAULT_KAPPA_TOL: f64 = 1e-9;
/// Outward factor applied to `max |D|` for the search interval.
pub const SEARCH_MARGIN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    pub kappa_star: f64,
    pub expected_r: f64,
    pub total_cost: f64,
    pub expected_theta: f64,
}

fn check_costs(s: &ScenarioSet) -> Result<()> {
    for t in 0..s.len() {
        // reuse the dispatch validation for positivity of a
        dispatch_quadratic(0.0, s.a(t), 0.0, 0.0)?;
    }
    Ok(())
}

fn expected_r_unchecked(kappa: f64, s: &ScenarioSet, cm: &CostModel) -> (f64, f64) {
    let mut scratch = DispatchResult {
        x: alloc::vec::Vec::with_capacity(s.customers()),
        y: 0.0,
        theta_lo: 0.0,
        theta_hi: 0.0,
        cost: 0.0,
    };
    let (mut cost, mut theta) = (0.0, 0.0);
    for t in 0..s.len() {
        dispatch_quadratic_into(s.d(t), s.a(t), cm.c_g, kappa, &mut scratch);
        cost += s.weight(t) * scratch.cost;
        theta += s.weight(t) * (scratch.theta_lo + scratch.theta_hi);
    }
    (cost, theta)
}

/// Weighted mean over scenarios of the slot cost `R(kappa; t)` and of the
/// capacity multiplier `theta_lo + theta_hi`.
pub fn expected_r(kappa: f64, s: &ScenarioSet, cm: &CostModel) -> Result<(f64, f64)> {
    check_costs(s)?;
    Ok(expected_r_unchecked(kappa, s, cm))
}

/// Minimizes `p_cap kappa + E[R(kappa)]`; returns the smallest minimizer.
pub fn optimize_capacity(s: &ScenarioSet, cm: &CostModel, tol: f64) -> Result<CapacityResult> {
    check_costs(s)?;
    let max_d = s.d_values().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let hi = SEARCH_MARGIN * max_d;
    let kappa = scalar_convex_min(|k| cm.p_cap - expected_r_unchecked(k, s, cm).1, 0.0, hi, tol);
    let (expected_r, expected_theta) = expected_r_unchecked(kappa, s, cm);
    Ok(CapacityResult {
        kappa_star: kappa,
        expected_r,
        total_cost: cm.p_cap * kappa + expected_r,
        expected_theta,
    })
}

/// Social cost of the OPT benchmark.
pub fn opt_benchmark(s: &ScenarioSet, cm: &CostModel) -> Result<f64> {
    Ok(optimize_capacity(s, cm, DEFAULT_KAPPA_TOL)?.total_cost)
}
