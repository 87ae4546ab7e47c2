//! The sequential baseline: buy capacity for the worst mismatch, then post a
//! single demand-response price.

use crate::error::{invalid, Result};
use crate::model::{CostModel, ScenarioSet, SupportBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqResult {
    pub kappa_seq: f64,
    pub price: f64,
    pub social_cost: f64,
}

/// Capacity covering the largest absolute mismatch of the box.
pub fn seq_capacity(box_: &SupportBox) -> f64 {
    box_.max_abs_d()
}

/// Posted price whose expected aggregate response is `tau E|D|`.
///
/// A customer facing price `p` solves `min a x^2 - p x`, so responds with
/// `p / (2a)`.
pub fn seq_price(s: &ScenarioSet, tau: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid("target fraction must lie in [0, 1]"));
    }
    let (mut abs_d, mut inv) = (0.0, 0.0);
    for t in 0..s.len() {
        let w = s.weight(t);
        abs_d += w * s.d(t).abs();
        let mut h = 0.0;
        for (i, &a) in s.a(t).iter().enumerate() {
            if !(a > 0.0) {
                return Err(crate::Error::NonPositiveCost { customer: i, value: a });
            }
            h += 0.5 / a;
        }
        inv += w * h;
    }
    if tau == 0.0 || abs_d == 0.0 {
        return Ok(0.0);
    }
    if !(inv > 0.0) {
        return Err(invalid("no customer can respond"));
    }
    Ok(tau * abs_d / inv)
}

/// Runs the baseline with capacity `max |D|` over the scenarios. Residual in
/// excess of the capacity is charged at the overflow price.
pub fn simulate_seq(s: &ScenarioSet, cm: &CostModel, tau: f64) -> Result<SeqResult> {
    let kappa = s.d_values().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    simulate_seq_with_capacity(s, cm, tau, kappa)
}

pub fn simulate_seq_with_capacity(s: &ScenarioSet, cm: &CostModel, tau: f64, kappa: f64) -> Result<SeqResult> {
    let price = seq_price(s, tau)?;
    let mut total = 0.0;
    for t in 0..s.len() {
        let d = s.d(t);
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        let (mut customers, mut served) = (0.0, 0.0);
        for &a in s.a(t) {
            let x = sign * price / (2.0 * a);
            customers += a * x * x;
            served += x;
        }
        let y = d - served;
        total += s.weight(t) * (customers + cm.c_g * y * y + cm.overflow_price * (y.abs() - kappa).max(0.0));
    }
    Ok(SeqResult {
        kappa_seq: kappa,
        price,
        social_cost: cm.p_cap * kappa + total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    #[test]
    fn capacity_is_largest_endpoint() {
        let b = |lo, hi| SupportBox::new(lo, hi, vec![], vec![]).unwrap();
        assert_eq!(seq_capacity(&b(-2.0, 3.0)), 3.0);
        assert_eq!(seq_capacity(&b(0.0, 0.0)), 0.0);
        assert_eq!(seq_capacity(&b(-5.0, 1.0)), 5.0);
    }

    fn two_slots(a: f64) -> ScenarioSet {
        // D = +-1, two customers
        ScenarioSet::new(
            2,
            vec![1.0, -1.0],
            vec![0.0, 0.0],
            vec![0.5, 0.5, -0.5, -0.5],
            vec![a; 4],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn price_examples() {
        assert_relative_eq!(seq_price(&two_slots(1.0), 1.0).unwrap(), 1.0);
        assert_eq!(seq_price(&two_slots(1.0), 0.0).unwrap(), 0.0);
        assert_relative_eq!(seq_price(&two_slots(2.0), 1.0).unwrap(), 2.0);
        assert!(seq_price(&two_slots(1.0), 1.5).is_err());
    }

    #[test]
    fn simulate_examples() {
        let cm = CostModel::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(simulate_seq(&ScenarioSet::empty(3), &cm, 1.0).unwrap().social_cost, 0.0);
        let s = ScenarioSet::new(1, vec![2.0], vec![0.0], vec![2.0], vec![1.0], vec![1.0]).unwrap();
        let r = simulate_seq(&s, &cm, 1.0).unwrap();
        assert_relative_eq!(r.price, 4.0);
        assert_relative_eq!(r.social_cost, 4.0);
        let r1 = simulate_seq(&s, &cm.with_p_cap(1.0), 1.0).unwrap();
        assert_eq!(r1.kappa_seq, 2.0);
        assert_relative_eq!(r1.social_cost, 6.0);
    }

    #[test]
    fn affine_in_capacity_price() {
        let s = two_slots(1.0);
        let costs: Vec<f64> = [0.0, 1.0, 3.0]
            .iter()
            .map(|&p| {
                simulate_seq(&s, &CostModel::new(1.0, p, 0.0).unwrap(), 0.7)
                    .unwrap()
                    .social_cost
            })
            .collect();
        assert_relative_eq!(costs[1] - costs[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(costs[2] - costs[0], 3.0, epsilon = 1e-12);
    }
}
