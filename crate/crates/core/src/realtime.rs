//! Real-time dispatch for one slot: given the realized mismatch `D` and a
//! purchased capacity `kappa`, split `D` between customer demand response
//! and an LSE residual `y = D - sum(x)` with `|y| <= kappa`.
//!
//! At an interior optimum every customer's marginal cost equals the LSE's
//! marginal mismatch cost. When the residual hits `+kappa` (`-kappa`) the
//! customers share `D - kappa` (`D + kappa`) at a common marginal cost and
//! the gap to the LSE's marginal cost is the multiplier `theta_hi`
//! (`theta_lo`). `-(theta_lo + theta_hi)` is a subgradient of the optimal
//! cost with respect to `kappa`.

use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::numerics::bisect_increasing;

/// Optimal dispatch of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchResult {
    pub x: Vec<f64>,
    pub y: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub cost: f64,
}

fn check_coefficients(a: &[f64]) -> Result<()> {
    match a.iter().position(|&ai| !(ai > 0.0)) {
        Some(i) => Err(Error::NonPositiveCost {
            customer: i,
            value: a[i],
        }),
        None => Ok(()),
    }
}

/// Closed-form dispatch for costs `a_i x_i^2` and `c_g y^2`.
pub fn dispatch_quadratic(d: f64, a: &[f64], c_g: f64, kappa: f64) -> Result<DispatchResult> {
    check_coefficients(a)?;
    let mut out = DispatchResult {
        x: Vec::with_capacity(a.len()),
        y: 0.0,
        theta_lo: 0.0,
        theta_hi: 0.0,
        cost: 0.0,
    };
    dispatch_quadratic_into(d, a, c_g, kappa, &mut out);
    Ok(out)
}

/// Allocation-free variant used in the scenario loops. Assumes `a_i > 0`.
pub(crate) fn dispatch_quadratic_into(d: f64, a: &[f64], c_g: f64, kappa: f64, out: &mut DispatchResult) {
    let h: f64 = a.iter().map(|ai| 1.0 / ai).sum();
    let y0 = d / (1.0 + c_g * h);
    out.x.clear();
    out.theta_lo = 0.0;
    out.theta_hi = 0.0;
    if y0.abs() <= kappa {
        out.y = y0;
        out.x.extend(a.iter().map(|ai| c_g / ai * y0));
    } else {
        let y = if y0 > 0.0 { kappa } else { -kappa };
        let share = d - y;
        out.y = y;
        out.x.extend(a.iter().map(|ai| share / (ai * h)));
        // common customer marginal 2 a_i x_i = 2 share / h
        let gap = 2.0 * share / h - 2.0 * c_g * y;
        if y0 > 0.0 {
            out.theta_hi = gap.max(0.0);
        } else {
            out.theta_lo = (-gap).max(0.0);
        }
    }
    out.cost = a.iter().zip(&out.x).map(|(ai, xi)| ai * xi * xi).sum::<f64>() + c_g * out.y * out.y;
}

/// A convex cost with a strictly increasing marginal.
pub trait ConvexCost {
    fn cost(&self, x: f64) -> f64;
    fn marginal(&self, x: f64) -> f64;
}

/// `a x^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost(pub f64);

impl ConvexCost for QuadraticCost {
    fn cost(&self, x: f64) -> f64 {
        self.0 * x * x
    }

    fn marginal(&self, x: f64) -> f64 {
        2.0 * self.0 * x
    }
}

/// Cost given by a pair of closures `(cost, marginal)`.
pub struct FnCost<C, M> {
    pub cost: C,
    pub marginal: M,
}

impl<C: Fn(f64) -> f64, M: Fn(f64) -> f64> ConvexCost for FnCost<C, M> {
    fn cost(&self, x: f64) -> f64 {
        (self.cost)(x)
    }

    fn marginal(&self, x: f64) -> f64 {
        (self.marginal)(x)
    }
}

/// Dispatch for general convex costs by searching the shared marginal price.
pub fn dispatch_general(
    d: f64,
    customers: &[&dyn ConvexCost],
    lse: &dyn ConvexCost,
    kappa: f64,
    tol: f64,
) -> Result<DispatchResult> {
    let inner_tol = tol * 1e-3;
    let response = |c: &dyn ConvexCost, price: f64| bisect_increasing(|x| c.marginal(x), price, 0.0, inner_tol);
    let total_dr =
        |price: f64| -> Result<f64> { customers.iter().try_fold(0.0, |acc, c| Ok(acc + response(*c, price)?)) };

    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let record = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    // interior: sum x(m) + y(m) = D, increasing in m
    let price = bisect_increasing(
        |m| record(total_dr(m).and_then(|s| Ok(s + response(lse, m)?))),
        d,
        0.0,
        tol,
    );
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    let price = price?;
    let y = response(lse, price)?;
    let (price, y, theta_lo, theta_hi) = if y.abs() <= kappa {
        (price, y, 0.0, 0.0)
    } else {
        let y_b = if y > 0.0 { kappa } else { -kappa };
        let p = bisect_increasing(|m| record(total_dr(m)), d - y_b, price, tol);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let p = p?;
        let gap = p - lse.marginal(y_b);
        if y_b > 0.0 {
            (p, y_b, 0.0, gap.max(0.0))
        } else {
            (p, y_b, (-gap).max(0.0), 0.0)
        }
    };
    let x = customers
        .iter()
        .map(|c| response(*c, price))
        .collect::<Result<Vec<f64>>>()?;
    let cost = customers.iter().zip(&x).map(|(c, xi)| c.cost(*xi)).sum::<f64>() + lse.cost(y);
    Ok(DispatchResult {
        x,
        y,
        theta_lo,
        theta_hi,
        cost,
    })
}

/// `-(theta_lo + theta_hi)`: a subgradient of the slot cost in `kappa`.
pub fn kappa_subgradient(res: &DispatchResult) -> f64 {
    -(res.theta_lo + res.theta_hi)
}
