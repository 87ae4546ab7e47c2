//! Brute-force oracles and instance generators shared by the integration
//! tests (also pulled into the drcap acceptance target by path).

#![allow(dead_code)]

use drcap_core::distributed::{negotiate, CustomerAgent, Loopback, NegotiationOutcome, NegotiationSettings};
use drcap_core::ingest::{estimate_support, synthesize, SynthConfig};
use drcap_core::model::{CostModel, PolicyParams, ScenarioSet, SupportBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One dispatch instance: `(D, a, c_g, kappa)` with `n <= 3`.
pub fn dispatch_instance(rng: &mut ChaCha8Rng) -> (f64, Vec<f64>, f64, f64) {
    let n = rng.random_range(1..=3);
    let d: f64 = rng.random_range(-3.0..3.0);
    let a = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
    let c_g = rng.random_range(0.1..3.0);
    let kappa = rng.random_range(0.0..1.2) * d.abs();
    (d, a, c_g, kappa)
}

fn slot_objective(d: f64, a: &[f64], c_g: f64, x: &[f64]) -> f64 {
    let served: f64 = x.iter().sum();
    a.iter().zip(x).map(|(ai, xi)| ai * xi * xi).sum::<f64>() + c_g * (d - served).powi(2)
}

/// Grid minimum of `f` over the box `[lo, hi]`; `f` returns `None` at
/// infeasible points. Each pass lays `points` per axis over a window and the
/// next window spans five spacings around the incumbent, until the spacing
/// is at most `step`. Exhaustive for convex `f`, whose sublevel sets keep the
/// minimizer near the incumbent.
pub fn grid_min(f: impl Fn(&[f64]) -> Option<f64>, lo: &[f64], hi: &[f64], points: usize, step: f64) -> f64 {
    let n = lo.len();
    let mut wlo = lo.to_vec();
    let mut whi = hi.to_vec();
    let mut best = f64::INFINITY;
    let mut best_x = wlo.clone();
    loop {
        let h: Vec<f64> = (0..n).map(|k| (whi[k] - wlo[k]) / (points - 1) as f64).collect();
        let mut idx = vec![0usize; n];
        'grid: loop {
            let x: Vec<f64> = (0..n).map(|k| wlo[k] + h[k] * idx[k] as f64).collect();
            if let Some(v) = f(&x) {
                if v < best {
                    best = v;
                    best_x = x;
                }
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < points {
                    continue 'grid;
                }
                *i = 0;
            }
            break;
        }
        if h.iter().all(|&hk| hk <= step) || !best.is_finite() {
            return best;
        }
        for k in 0..n {
            wlo[k] = (best_x[k] - 5.0 * h[k]).max(lo[k]);
            whi[k] = (best_x[k] + 5.0 * h[k]).min(hi[k]);
        }
    }
}

/// Grid search for `min sum a_i x_i^2 + c_g y^2` with `y = D - sum x`,
/// `|y| <= kappa`, over `(x_1, .., x_{n-1}, y)` so the capacity limit is a
/// box bound.
pub fn dispatch_grid_oracle(d: f64, a: &[f64], c_g: f64, kappa: f64, step: f64) -> f64 {
    let n = a.len();
    let reach = d.abs() + 1.0;
    let mut lo = vec![-reach; n];
    let mut hi = vec![reach; n];
    lo[n - 1] = -kappa.min(reach);
    hi[n - 1] = kappa.min(reach);
    let f = |z: &[f64]| {
        let y = z[n - 1];
        let mut x = z[..n - 1].to_vec();
        x.push(d - y - x.iter().sum::<f64>());
        Some(slot_objective(d, a, c_g, &x))
    };
    grid_min(f, &lo, &hi, 41, step)
}

/// `(y_max, y_min)` of the policy residual over all `2^(n+1)` box vertices.
pub fn vertex_bounds(p: &PolicyParams, b: &SupportBox) -> (f64, f64) {
    let n = p.alpha.len();
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for mask in 0u32..(1 << (n + 1)) {
        let d = if mask & 1 == 0 { b.d_lo } else { b.d_hi };
        let mut y = d;
        for i in 0..n {
            let delta = if mask >> (i + 1) & 1 == 0 {
                b.delta_lo[i]
            } else {
                b.delta_hi[i]
            };
            y -= p.alpha[i] * d + p.beta[i] * delta + p.gamma[i];
        }
        hi = hi.max(y);
        lo = lo.min(y);
    }
    (hi, lo)
}

pub fn random_policy(rng: &mut ChaCha8Rng, n: usize) -> PolicyParams {
    let mut draw = |scale: f64| (0..n).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>();
    PolicyParams {
        alpha: draw(1.0),
        beta: draw(1.0),
        gamma: draw(2.0),
    }
}

pub fn random_box(rng: &mut ChaCha8Rng, n: usize) -> SupportBox {
    let interval = |rng: &mut ChaCha8Rng| {
        let a: f64 = rng.random_range(-5.0..5.0);
        let b: f64 = rng.random_range(-5.0..5.0);
        (a.min(b), a.max(b))
    };
    let (d_lo, d_hi) = interval(rng);
    let (lo, hi): (Vec<_>, Vec<_>) = (0..n).map(|_| interval(rng)).unzip();
    SupportBox::new(d_lo, d_hi, lo, hi).unwrap()
}

/// Small synthetic planning instance with its support box.
pub fn planning_instance(rng: &mut ChaCha8Rng) -> (ScenarioSet, SupportBox, CostModel) {
    let cfg = SynthConfig {
        n: rng.random_range(1..=4),
        t: rng.random_range(5..=60),
        sigma_delta: rng.random_range(0.5..2.0),
        sigma_r: rng.random_range(0.5..3.0),
        a_mean: 1.0,
        a_rsd: rng.random_range(0.0..0.8),
        seed: rng.random(),
    };
    let s = synthesize(&cfg).unwrap();
    let b = estimate_support(&s, 1.1).unwrap();
    let c_g = rng.random_range(0.05..2.0);
    let max_d = s.d_values().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let cm = CostModel::new(c_g, rng.random_range(0.0..1.0), 10.0 * 2.0 * c_g * max_d).unwrap();
    (s, b, cm)
}

/// Negotiation instance with mismatch and DR costs of similar size
/// (`n <= 5`, `T <= 50`, `c_g` in `[0.5, 2]`, `a_mean = 1`).
pub fn negotiation_instance(rng: &mut ChaCha8Rng) -> (ScenarioSet, SupportBox, CostModel) {
    let cfg = SynthConfig {
        n: rng.random_range(1..=5),
        t: rng.random_range(10..=50),
        sigma_delta: 1.0,
        sigma_r: 1.0,
        a_mean: 1.0,
        a_rsd: 0.3,
        seed: rng.random(),
    };
    let s = synthesize(&cfg).unwrap();
    let b = estimate_support(&s, 1.1).unwrap();
    let cm = CostModel::new(rng.random_range(0.5..2.0), rng.random_range(0.0..1.2), 0.0).unwrap();
    (s, b, cm)
}

pub fn run_loopback(s: &ScenarioSet, b: &SupportBox, cm: &CostModel, st: &NegotiationSettings) -> NegotiationOutcome {
    let mut t = Loopback::new(CustomerAgent::from_scenarios(s, st.customer_ridge, st.proximal));
    negotiate(&s.lse_view(), b, cm, st, &mut t).unwrap()
}

/// `f(t x1 + (1 - t) x3) - (t f(x1) + (1 - t) f(x3))`, relative to the
/// chord value; positive means a convexity violation.
pub fn chord_excess(f1: f64, f2: f64, f3: f64, t: f64) -> f64 {
    let chord = t * f1 + (1.0 - t) * f3;
    (f2 - chord) / (1.0 + chord.abs())
}
