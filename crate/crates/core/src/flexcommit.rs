//! LIN+(rho): the linear policy with a per-customer right to opt out of
//! demand response in up to a `1 - rho` fraction of slots, used on the
//! slots where the customer's own cost coefficient is highest.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linpolicy::LinSolution;
use crate::model::{check_policy, CostModel, PolicyParams, ScenarioSet};

/// Lower empirical `rho`-quantile: the `floor(rho T)`-th smallest sample,
/// or `-inf` when that index is zero. A customer opts out iff `a > threshold`.
pub fn optout_threshold(samples: &[f64], rho: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    check_rho(rho)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = libm::floor(rho * sorted.len() as f64 + 1e-9) as usize;
    Ok(if k == 0 {
        f64::NEG_INFINITY
    } else {
        sorted[k.min(sorted.len()) - 1]
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(invalid("rho must lie in [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinPlusOutcome {
    pub social_cost: f64,
    /// Fraction of slots in which each customer opted out.
    pub optout_fraction: Vec<f64>,
}

impl LinPlusOutcome {
    pub fn mean_optout_fraction(&self) -> f64 {
        if self.optout_fraction.is_empty() {
            0.0
        } else {
            self.optout_fraction.iter().sum::<f64>() / self.optout_fraction.len() as f64
        }
    }
}

/// Evaluates the policy with opt-outs. Residual beyond `kappa` is charged
/// linearly at the overflow price; `kappa` is not re-planned.
pub fn simulate_linplus(
    p: &PolicyParams,
    kappa: f64,
    s: &ScenarioSet,
    cm: &CostModel,
    rho: f64,
) -> Result<LinPlusOutcome> {
    let n = s.customers();
    check_policy(p, n)?;
    check_rho(rho)?;
    let t_len = s.len();
    let thresholds = if t_len == 0 {
        alloc::vec![f64::INFINITY; n]
    } else {
        (0..n)
            .map(|i| optout_threshold(&s.a_of(i).collect::<Vec<_>>(), rho))
            .collect::<Result<Vec<_>>>()?
    };
    let mut outs = alloc::vec![0usize; n];
    let mut total = 0.0;
    for t in 0..t_len {
        let d = s.d(t);
        let (mut customers, mut served) = (0.0, 0.0);
        for (i, (&dl, &a)) in s.delta(t).iter().zip(s.a(t)).enumerate() {
            if a > thresholds[i] {
                outs[i] += 1;
                continue;
            }
            let x = p.response(i, d, dl);
            customers += a * x * x;
            served += x;
        }
        let y = d - served;
        total += s.weight(t) * (customers + cm.c_g * y * y);
        let over = y.abs() - kappa;
        if over > 0.0 {
            total += s.weight(t) * cm.overflow_price * over;
        }
    }
    let denom = t_len.max(1) as f64;
    Ok(LinPlusOutcome {
        social_cost: cm.p_cap * kappa + total,
        optout_fraction: outs.iter().map(|&c| c as f64 / denom).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub rho: f64,
    pub social_cost: f64,
    pub mean_optout_fraction: f64,
}

/// `simulate_linplus` over a grid of commitment levels.
pub fn sweep_rho(lin: &LinSolution, s: &ScenarioSet, cm: &CostModel, grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(invalid("empty rho grid"));
    }
    grid.iter().try_for_each(|&r| check_rho(r))?;
    grid.iter()
        .map(|&rho| {
            let o = simulate_linplus(&lin.params, lin.kappa, s, cm, rho)?;
            Ok(SweepPoint {
                rho,
                social_cost: o.social_cost,
                mean_optout_fraction: o.mean_optout_fraction(),
            })
        })
        .collect()
}

/// `0, step, 2 step, ..., 1`.
pub fn default_grid(step: f64) -> Vec<f64> {
    let k = libm::round(1.0 / step) as usize;
    if (k as f64 * step - 1.0).abs() < 1e-9 {
        // exact fractions, so 0.95 is not 0.9500000000000001
        return (0..=k).map(|j| j as f64 / k as f64).collect();
    }
    (0..=k).map(|j| (j as f64 * step).min(1.0)).collect()
}
