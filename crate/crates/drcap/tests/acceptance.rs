//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use drcap::config::ExperimentConfig;
use drcap::experiment::{load_scenarios, run_compare, run_rho_sweep};
use drcap::socket::TcpTransport;
use drcap_core::capacity::{expected_r, opt_benchmark, optimize_capacity};
use drcap_core::distributed::{negotiate, CustomerAgent, NegotiationSettings};
use drcap_core::linpolicy::{assemble_lin_qp, evaluate_policy, solve_lin, worst_case_bounds};
use drcap_core::model::{CostModel, ScenarioSet, SupportBox, DEFAULT_RIDGE};
use drcap_core::realtime::{dispatch_quadratic, kappa_subgradient};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dispatch_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = rng(101);
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let (d, a, c_g, kappa) = dispatch_instance(&mut rng);
        let got = dispatch_quadratic(d, &a, c_g, kappa).map_err(|e| e.to_string())?;
        let oracle = dispatch_grid_oracle(d, &a, c_g, kappa, 1e-3);
        check(got.cost <= oracle + 1e-9, || {
            format!("closed form {} above grid {oracle}", got.cost)
        })?;
        worst_gap = worst_gap.max(oracle - got.cost);
        // equal marginals, shifted by the capacity multiplier when clamped
        let shift = got.theta_hi - got.theta_lo;
        for (ai, xi) in a.iter().zip(&got.x) {
            worst_kkt = worst_kkt.max((2.0 * ai * xi - 2.0 * c_g * got.y - shift).abs() / (1.0 + d.abs()));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(worst_gap <= 1e-3, || format!("grid gap {worst_gap:.2e}"))?;
    check(worst_kkt <= 1e-8, || format!("marginal residual {worst_kkt:.2e}"))?;
    check(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "200 instances, max grid gap {worst_gap:.1e}, max marginal residual {worst_kkt:.1e}, {secs:.2}s"
    ))
}

fn lemma_subgradient() -> Outcome {
    let mut rng = rng(102);
    let h = 1e-6;
    let (mut n, mut worst) = (0, 0.0f64);
    while n < 100 {
        let (d, a, c_g, kappa) = dispatch_instance(&mut rng);
        let y0 = dispatch_quadratic(d, &a, c_g, f64::INFINITY).unwrap().y.abs();
        if (y0 - kappa).abs() < 10.0 * h || kappa < 10.0 * h {
            continue;
        }
        let r = dispatch_quadratic(d, &a, c_g, kappa).unwrap();
        let fd = (dispatch_quadratic(d, &a, c_g, kappa + h).unwrap().cost
            - dispatch_quadratic(d, &a, c_g, kappa - h).unwrap().cost)
            / (2.0 * h);
        let err = (fd - kappa_subgradient(&r)).abs() / (1.0 + r.cost.abs());
        worst = worst.max(err);
        n += 1;
    }
    check(worst <= 1e-4, || format!("relative error {worst:.2e}"))?;
    Ok(format!("100 pairs, max scaled error {worst:.1e}"))
}

fn stationarity() -> Outcome {
    let mut rng = rng(103);
    let mut worst = 0.0f64;
    let mut interior = 0;
    while interior < 50 {
        let (s, _, cm) = planning_instance(&mut rng);
        let r = optimize_capacity(&s, &cm, 1e-10).unwrap();
        let max_d = s.d_values().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if r.kappa_star <= 1e-9 || r.kappa_star >= max_d {
            continue;
        }
        interior += 1;
        worst = worst.max((cm.p_cap - r.expected_theta).abs() / (1.0 + cm.p_cap));
    }
    check(worst <= 1e-3, || format!("stationarity residual {worst:.2e}"))?;

    let s = ScenarioSet::from_mismatches(1, vec![2.0], vec![0.0], vec![1.0]).unwrap();
    let cm = CostModel::new(1.0, 0.5, 0.0).unwrap();
    let r = optimize_capacity(&s, &cm, 1e-10).unwrap();
    let grid = (0..=220_000)
        .map(|j| j as f64 * 1e-5)
        .map(|k| (k, cm.p_cap * k + expected_r(k, &s, &cm).unwrap().0))
        .fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    check((grid.0 - 0.875).abs() < 1e-4, || {
        format!("grid oracle kappa {}", grid.0)
    })?;
    check((r.kappa_star - 0.875).abs() < 1e-4, || {
        format!("kappa* {}", r.kappa_star)
    })?;
    check((r.total_cost - 2.46875).abs() < 1e-6, || {
        format!("total {}", r.total_cost)
    })?;
    Ok(format!(
        "50 interior optima, max residual {worst:.1e}; example kappa* {:.6}, total {:.8}",
        r.kappa_star, r.total_cost
    ))
}

fn lin_correctness() -> Outcome {
    let s = ScenarioSet::new(
        1,
        vec![-1.0, 1.0],
        vec![0.0, 0.0],
        vec![-1.0, 1.0],
        vec![1.0, 1.0],
        vec![0.5, 0.5],
    )
    .unwrap();
    let b = SupportBox::new(-1.0, 1.0, vec![-1.0], vec![1.0]).unwrap();
    let cm = CostModel::new(1.0, 0.0, 0.0).unwrap();
    let sol = solve_lin(&s, &b, &cm, 1e-9).unwrap();
    let g = sol.params.alpha[0] + sol.params.beta[0];
    check((g - 0.5).abs() < 1e-4, || format!("g = {g}"))?;
    check((sol.kappa - 0.5).abs() < 1e-4, || format!("kappa = {}", sol.kappa))?;
    check((sol.expected_cost - 0.5).abs() < 1e-6, || {
        format!("cost = {}", sol.expected_cost)
    })?;

    let mut rng = rng(104);
    let (mut below, mut consistency) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (s, b, cm) = planning_instance(&mut rng);
        let sol = solve_lin(&s, &b, &cm, 1e-9).unwrap();
        let opt = opt_benchmark(&s, &cm).unwrap();
        let eval = evaluate_policy(&sol.params, sol.kappa, &s, &cm).unwrap();
        below = below.max((opt - sol.expected_cost) / opt.abs().max(1e-12));
        consistency = consistency.max((eval - sol.expected_cost).abs() / eval.abs().max(1e-12));
    }
    check(below <= 1e-6, || format!("LIN below OPT by {below:.2e} rel"))?;
    check(consistency <= 1e-6, || {
        format!("plan vs evaluation {consistency:.2e} rel")
    })?;
    Ok(format!(
        "example g {g:.6} cost {:.8} kappa {:.6}; 50 instances, plan/eval max rel diff {consistency:.1e}",
        sol.expected_cost, sol.kappa
    ))
}

fn convergence() -> Outcome {
    let mut rng = rng(105);
    let (mut max_rounds, mut worst) = (0, 0.0f64);
    for j in 0..20 {
        let (s, b, cm) = negotiation_instance(&mut rng);
        let st = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
        check(st.max_rounds == 5000, || "round budget is not 5000".into())?;
        let out = run_loopback(&s, &b, &cm, &st);
        check(out.converged && out.state.gap_norm <= st.epsilon, || {
            format!(
                "instance {j}: gap {:.2e} > eps {:.2e} after {} rounds",
                out.state.gap_norm, st.epsilon, out.state.k
            )
        })?;
        let central = solve_lin(&s, &b, &cm, 1e-9).unwrap();
        let c = evaluate_policy(&central.params, central.kappa, &s, &cm).unwrap();
        let d = evaluate_policy(&out.solution.params, out.solution.kappa, &s, &cm).unwrap();
        let rel = (d - c).abs() / c.abs().max(1e-12);
        check(rel <= 5e-3, || format!("instance {j}: cost {d} vs centralized {c}"))?;
        worst = worst.max(rel);
        max_rounds = max_rounds.max(out.state.k);

        if j < 5 {
            let mut tcp =
                TcpTransport::spawn(CustomerAgent::from_scenarios(&s, st.customer_ridge, st.proximal)).unwrap();
            let over_tcp = negotiate(&s.lse_view(), &b, &cm, &st, &mut tcp).unwrap();
            check(over_tcp.state.trajectory == out.state.trajectory, || {
                format!("instance {j}: socket trajectory differs")
            })?;
        }
    }
    Ok(format!(
        "20 instances converged, max {max_rounds} rounds, max cost error {worst:.1e}; socket = loopback on 5"
    ))
}

fn fig1a_trend() -> Outcome {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::default();
    let s = load_scenarios(&cfg, None).unwrap();
    check((s.customers(), s.len()) == (300, 1000), || {
        "default instance is not 300 x 1000".into()
    })?;
    let rows = run_compare(&cfg, &s).unwrap();
    let mut worst_ratio = 0.0f64;
    for r in &rows {
        check(
            r.cost_opt <= r.cost_lin * (1.0 + 1e-9) && r.cost_lin <= r.cost_seq,
            || format!("order broken at p_cap {}: {r:?}", r.p_cap),
        )?;
        worst_ratio = worst_ratio.max(r.cost_lin / r.cost_opt);
    }
    let secs = t0.elapsed().as_secs_f64();
    check(worst_ratio <= 1.25, || format!("LIN/OPT {worst_ratio:.3}"))?;
    check(secs < 300.0, || format!("took {secs:.0}s"))?;
    Ok(format!(
        "{} grid points, max LIN/OPT {worst_ratio:.3}, {secs:.1}s",
        rows.len()
    ))
}

fn fig1b_trend() -> Outcome {
    let cfg = ExperimentConfig::default();
    let sweeps = run_rho_sweep(&cfg).unwrap();
    let pts = &sweeps[0].points;
    let full = pts
        .iter()
        .find(|p| p.rho == 1.0)
        .ok_or("grid lacks rho = 1")?
        .social_cost;
    let best = pts
        .iter()
        .min_by(|a, b| a.social_cost.total_cmp(&b.social_cost))
        .unwrap();
    let first = pts[0].social_cost;
    check(best.social_cost <= 0.97 * full, || {
        format!("min/cost(1) = {:.4}", best.social_cost / full)
    })?;
    check(first > best.social_cost, || "no rise at the smallest rho".into())?;
    Ok(format!(
        "a_rsd {:?}: min at rho {} = {:.4} x cost(1), cost(rho={}) = {:.2} x min",
        sweeps[0].a_rsd,
        best.rho,
        best.social_cost / full,
        pts[0].rho,
        first / best.social_cost
    ))
}

fn convexity() -> Outcome {
    let mut rng = rng(108);
    let mut worst = [0.0f64; 3];
    for _ in 0..1000 {
        let (d, a, c_g, _) = dispatch_instance(&mut rng);
        let (k1, k3): (f64, f64) = (rng.random_range(0.0..4.0), rng.random_range(0.0..4.0));
        let t: f64 = rng.random();
        let r = |k: f64| dispatch_quadratic(d, &a, c_g, k).unwrap().cost;
        worst[0] = worst[0].max(chord_excess(r(k1), r(t * k1 + (1.0 - t) * k3), r(k3), t));
    }
    let (s, _, cm) = planning_instance(&mut rng);
    for _ in 0..1000 {
        let (k1, k3): (f64, f64) = (rng.random_range(0.0..8.0), rng.random_range(0.0..8.0));
        let t: f64 = rng.random();
        let f = |k: f64| cm.p_cap * k + expected_r(k, &s, &cm).unwrap().0;
        worst[1] = worst[1].max(chord_excess(f(k1), f(t * k1 + (1.0 - t) * k3), f(k3), t));
    }
    let (s, b, cm) = planning_instance(&mut rng);
    let qp = assemble_lin_qp(&s, &b, &cm, DEFAULT_RIDGE).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = (0..qp.num_vars()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let z: Vec<f64> = (0..qp.num_vars()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t: f64 = rng.random();
        let m: Vec<f64> = x.iter().zip(&z).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        worst[2] = worst[2].max(chord_excess(qp.objective(&x), qp.objective(&m), qp.objective(&z), t));
    }
    check(worst.iter().all(|&w| w <= 1e-9), || {
        format!(
            "chord excess R {:.1e}, F {:.1e}, LIN {:.1e}",
            worst[0], worst[1], worst[2]
        )
    })?;
    Ok(format!(
        "3 x 1000 probes, max chord excess {:.1e}",
        worst.iter().fold(f64::NEG_INFINITY, |m, &w| m.max(w))
    ))
}

fn worst_case_oracle() -> Outcome {
    let mut rng = rng(109);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let p = random_policy(&mut rng, n);
        let b = random_box(&mut rng, n);
        let (hi, lo) = worst_case_bounds(&p, &b).unwrap();
        let (vh, vl) = vertex_bounds(&p, &b);
        worst = worst
            .max((hi - vh).abs() / (1.0 + vh.abs()))
            .max((lo - vl).abs() / (1.0 + vl.abs()));
    }
    check(worst <= 1e-12, || format!("max deviation {worst:.2e}"))?;
    Ok(format!("200 policies, max deviation {worst:.1e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("dispatch oracle", dispatch_oracle),
        ("capacity subgradient", lemma_subgradient),
        ("capacity stationarity", stationarity),
        ("LIN correctness", lin_correctness),
        ("negotiation convergence", convergence),
        ("OPT <= LIN <= SEQ trend", fig1a_trend),
        ("commitment sweep U-shape", fig1b_trend),
        ("convexity suites", convexity),
        ("worst-case bounds oracle", worst_case_oracle),
    ];
    // keep panic messages out of the report; they are folded into FAIL lines
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
