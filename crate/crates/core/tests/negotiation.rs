mod common;

use common::*;
use drcap_core::distributed::{negotiate, CustomerAgent, Loopback, NegotiationSettings};
use drcap_core::ingest::{estimate_support, synthesize, SynthConfig};
use drcap_core::linpolicy::{evaluate_policy, solve_lin, solve_lin_ridged, LinSettings, MismatchMoments};
use drcap_core::model::{weighted_moment_matrix, CostModel, CustomerId, ScenarioSet, DEFAULT_RIDGE};

#[test]
fn converges_to_centralized_plan() {
    let mut rng = rng(21);
    for _ in 0..8 {
        let (s, b, cm) = negotiation_instance(&mut rng);
        let st = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
        let out = run_loopback(&s, &b, &cm, &st);
        assert!(out.converged, "gap {} after {} rounds", out.state.gap_norm, out.state.k);
        assert!(out.state.gap_norm <= st.epsilon);
        assert!(out.state.k <= 5000);
        let central = solve_lin(&s, &b, &cm, 1e-9).unwrap();
        let c = evaluate_policy(&central.params, central.kappa, &s, &cm).unwrap();
        let d = evaluate_policy(&out.solution.params, out.solution.kappa, &s, &cm).unwrap();
        assert!((d - c).abs() / (1.0 + c) <= 5e-3, "{d} vs {c}");
    }
}

#[test]
fn replay_is_deterministic() {
    let (s, b, cm) = negotiation_instance(&mut rng(22));
    let st = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
    let first = run_loopback(&s, &b, &cm, &st);
    let second = run_loopback(&s, &b, &cm, &st);
    assert_eq!(first, second);
}

#[test]
fn stops_exactly_at_tolerance_or_reports_best_round() {
    let (s, b, cm) = negotiation_instance(&mut rng(23));
    let base = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
    let short = NegotiationSettings { max_rounds: 7, ..base };
    let out = run_loopback(&s, &b, &cm, &short);
    assert!(!out.converged);
    assert_eq!(out.state.trajectory.len(), 7);
    let best = out
        .state
        .trajectory
        .iter()
        .map(|r| r.gap_norm)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(out.state.gap_norm, best);

    let full = run_loopback(&s, &b, &cm, &base);
    assert!(full.converged);
    let rows = &full.state.trajectory;
    assert!(rows.last().unwrap().gap_norm <= base.epsilon);
    assert!(rows[..rows.len() - 1].iter().all(|r| r.gap_norm > base.epsilon));
    assert_eq!(rows.last().unwrap().eta, 0.0);
}

#[test]
fn static_dual_bounded_by_ridged_primal() {
    let mut rng = rng(24);
    for _ in 0..4 {
        let (s, b, cm) = negotiation_instance(&mut rng);
        let st = NegotiationSettings {
            proximal: false,
            max_rounds: 300,
            ..NegotiationSettings::for_instance(&s.lse_view(), &b, &cm)
        };
        let out = run_loopback(&s, &b, &cm, &st);

        // both sides' ridges act on the agreed policy
        let moments = MismatchMoments::new(&s);
        let ridges: Vec<[f64; 3]> = (0..s.customers())
            .map(|i| {
                let g = moments.cross(i, i);
                let m = weighted_moment_matrix(&s, CustomerId(i), 0.0);
                [0, 1, 2]
                    .map(|k| st.lse_ridge * cm.c_g * g[(k, k)] + st.customer_ridge * m[(k, k)] + 2.0 * DEFAULT_RIDGE)
            })
            .collect();
        let settings = LinSettings {
            tol: 1e-10,
            ..LinSettings::default()
        };
        let primal = solve_lin_ridged(&s, &b, &cm, &settings, &ridges).unwrap();
        let mut value = primal.expected_cost + 1e-6 * cm.c_g * primal.kappa * primal.kappa;
        for (i, r) in ridges.iter().enumerate() {
            let t = primal.params.triple(i);
            value += (0..3).map(|k| r[k] * t[k] * t[k]).sum::<f64>();
        }
        let best_dual = out
            .state
            .trajectory
            .iter()
            .map(|r| r.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            best_dual <= value + 1e-6 * (1.0 + value.abs()),
            "dual {best_dual} above primal {value}"
        );
    }
}

#[test]
fn identical_customers_get_identical_contracts() {
    let one = synthesize(&SynthConfig {
        n: 1,
        t: 30,
        sigma_delta: 1.0,
        sigma_r: 1.0,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    let t = one.len();
    let delta: Vec<f64> = (0..t).flat_map(|k| [one.delta(k)[0]; 2]).collect();
    let a: Vec<f64> = (0..t).flat_map(|k| [one.a(k)[0]; 2]).collect();
    let s = ScenarioSet::from_mismatches(2, delta, one.r_values().to_vec(), a).unwrap();
    let b = estimate_support(&s, 1.1).unwrap();
    let cm = CostModel::new(1.0, 0.3, 0.0).unwrap();
    let st = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
    let out = run_loopback(&s, &b, &cm, &st);
    assert!(out.converged);
    let p = &out.solution.params;
    for (u, v) in [
        (p.alpha[0], p.alpha[1]),
        (p.beta[0], p.beta[1]),
        (p.gamma[0], p.gamma[1]),
    ] {
        assert!((u - v).abs() <= 1e-6 * (1.0 + u.abs()), "{u} vs {v}");
    }
    assert!((out.payments[0] - out.payments[1]).abs() <= 1e-6 * (1.0 + out.payments[0].abs()));
}

#[test]
fn lse_never_sees_cost_coefficients() {
    // agents built from a copy with different a must change the outcome,
    // while the LSE input is only the view
    let (s, b, cm) = negotiation_instance(&mut rng(25));
    let st = NegotiationSettings::for_instance(&s.lse_view(), &b, &cm);
    let scaled: Vec<f64> = (0..s.len())
        .flat_map(|t| s.a(t).iter().map(|a| 2.0 * a).collect::<Vec<_>>())
        .collect();
    let delta: Vec<f64> = (0..s.len()).flat_map(|t| s.delta(t).to_vec()).collect();
    let s2 = ScenarioSet::from_mismatches(s.customers(), delta, s.r_values().to_vec(), scaled).unwrap();
    assert_eq!(s.lse_view(), s2.lse_view());
    let mut t2 = Loopback::new(CustomerAgent::from_scenarios(&s2, st.customer_ridge, st.proximal));
    let out2 = negotiate(&s.lse_view(), &b, &cm, &st, &mut t2).unwrap();
    let out1 = run_loopback(&s, &b, &cm, &st);
    assert_ne!(out1.solution.params, out2.solution.params);
}
