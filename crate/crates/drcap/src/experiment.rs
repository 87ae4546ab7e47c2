//! The three experiments behind the CLI and their CSV outputs.

use std::path::{Path, PathBuf};

use drcap_core::baselines::simulate_seq;
use drcap_core::capacity::{optimize_capacity, DEFAULT_KAPPA_TOL};
use drcap_core::distributed::{negotiate, CustomerAgent, Loopback, NegotiationOutcome, NegotiationSettings, Transport};
use drcap_core::flexcommit::{sweep_rho, SweepPoint};
use drcap_core::ingest::{build_residuals, estimate_support, synthesize, SynthConfig};
use drcap_core::linpolicy::{evaluate_policy, solve_lin, LinSolution};
use drcap_core::model::{CostModel, ScenarioSet, SupportBox};

use crate::config::{ExperimentConfig, ScenarioSource};
use crate::error::{Error, Result};
use crate::io::{contract_table, load_traces, num, read_scenarios, sweep_table, trajectory_table, Table};
use crate::socket::TcpTransport;

/// Scenario set for `cfg`, with `a_rsd` replacing the configured spread
/// when given (ignored for scenario files).
pub fn load_scenarios(cfg: &ExperimentConfig, a_rsd: Option<f64>) -> Result<ScenarioSet> {
    let synth = SynthConfig {
        a_rsd: a_rsd.unwrap_or(cfg.synth.a_rsd),
        ..cfg.synth
    };
    match &cfg.source {
        ScenarioSource::Synth => Ok(synthesize(&synth)?),
        ScenarioSource::Scenarios { path } => read_scenarios(path),
        ScenarioSource::Traces { path, period } => scenarios_from_traces(path, *period, &synth),
    }
}

/// Customer mismatches are trace residuals truncated to the shortest
/// series; `a` and `r` come from the synthetic generator.
fn scenarios_from_traces(path: &Path, period: usize, synth: &SynthConfig) -> Result<ScenarioSet> {
    let series = load_traces(path)?;
    if series.is_empty() {
        return Err(Error::config("traces.path", "trace file has no samples"));
    }
    let residuals = series
        .iter()
        .map(|s| build_residuals(s, period))
        .collect::<drcap_core::Result<Vec<_>>>()
        .map_err(|e| Error::config("traces.period", e.to_string()))?;
    let n = residuals.len();
    let t_len = residuals.iter().map(Vec::len).min().unwrap_or(0);
    let base = synthesize(&SynthConfig { n, t: t_len, ..*synth })?;
    let delta: Vec<f64> = (0..t_len).flat_map(|t| residuals.iter().map(move |r| r[t])).collect();
    let a: Vec<f64> = (0..t_len).flat_map(|t| base.a(t).to_vec()).collect();
    Ok(ScenarioSet::from_mismatches(n, delta, base.r_values().to_vec(), a)?)
}

/// Ten times the largest marginal mismatch cost `2 c_g max|D|`, unless
/// configured.
pub fn cost_model(cfg: &ExperimentConfig, s: &ScenarioSet, p_cap: f64) -> Result<CostModel> {
    let max_d = s.d_values().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let overflow = cfg.overflow_price.unwrap_or(10.0 * 2.0 * cfg.c_g * max_d);
    Ok(CostModel::new(cfg.c_g, p_cap, overflow)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub p_cap: f64,
    pub cost_opt: f64,
    pub cost_lin: f64,
    pub cost_seq: f64,
}

fn lin_cost(s: &ScenarioSet, cfg: &ExperimentConfig, cm: &CostModel) -> Result<(LinSolution, f64)> {
    let b = estimate_support(s, cfg.margin)?;
    let lin = solve_lin(s, &b, cm, cfg.lin_tol)?;
    let cost = evaluate_policy(&lin.params, lin.kappa, s, cm)?;
    Ok((lin, cost))
}

/// OPT, LIN and SEQ social cost for every capacity price of the grid. Grid
/// points are solved on separate threads.
pub fn run_compare(cfg: &ExperimentConfig, s: &ScenarioSet) -> Result<Vec<CompareRow>> {
    let row = |p_cap: f64| -> Result<CompareRow> {
        let cm = cost_model(cfg, s, p_cap)?;
        let opt = optimize_capacity(s, &cm, DEFAULT_KAPPA_TOL)?;
        let (_, lin) = lin_cost(s, cfg, &cm)?;
        let seq = simulate_seq(s, &cm, cfg.seq_tau)?;
        Ok(CompareRow {
            p_cap,
            cost_opt: opt.total_cost,
            cost_lin: lin,
            cost_seq: seq.social_cost,
        })
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.p_cap_grid.iter().map(|&p| scope.spawn(move || row(p))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("compare worker panicked"))
            .collect()
    })
}

/// `p_cap,cost_OPT,cost_LIN,cost_SEQ`, costs multiplied by `scale`.
pub fn compare_table(rows: &[CompareRow], scale: f64) -> Table {
    let mut t = Table::new(["p_cap", "cost_OPT", "cost_LIN", "cost_SEQ"]);
    for r in rows {
        t.push_f64(&[r.p_cap, r.cost_opt * scale, r.cost_lin * scale, r.cost_seq * scale]);
    }
    t
}

/// One sweep for a given cost-coefficient spread.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoSweep {
    /// `None` when the scenarios come from a file.
    pub a_rsd: Option<f64>,
    pub points: Vec<SweepPoint>,
}

impl RhoSweep {
    pub fn file_name(&self) -> String {
        match self.a_rsd {
            Some(r) => format!("rho_sweep_rsd_{r}.csv"),
            None => "rho_sweep.csv".into(),
        }
    }
}

/// LIN planned at `cost.p_cap`, then evaluated with opt-outs over the rho
/// grid, once per configured `a_rsd`.
pub fn run_rho_sweep(cfg: &ExperimentConfig) -> Result<Vec<RhoSweep>> {
    let rsds: Vec<Option<f64>> = match cfg.source {
        ScenarioSource::Scenarios { .. } => vec![None],
        _ => cfg.rho_rsd.iter().map(|&r| Some(r)).collect(),
    };
    rsds.into_iter()
        .map(|rsd| {
            let s = load_scenarios(cfg, rsd)?;
            let cm = cost_model(cfg, &s, cfg.p_cap)?;
            let (lin, _) = lin_cost(&s, cfg, &cm)?;
            Ok(RhoSweep {
                a_rsd: rsd,
                points: sweep_rho(&lin, &s, &cm, &cfg.rho_grid)?,
            })
        })
        .collect()
}

/// The leading `customers` customers and `slots` slots (0 keeps all), with
/// `D` recomputed from the kept customers and weights renormalized.
pub fn restrict(s: &ScenarioSet, customers: usize, slots: usize) -> Result<ScenarioSet> {
    let n = if customers == 0 {
        s.customers()
    } else {
        customers.min(s.customers())
    };
    let t_len = if slots == 0 { s.len() } else { slots.min(s.len()) };
    if n == s.customers() && t_len == s.len() {
        return Ok(s.clone());
    }
    let mut delta = Vec::with_capacity(n * t_len);
    let mut a = Vec::with_capacity(n * t_len);
    let mut d = Vec::with_capacity(t_len);
    for t in 0..t_len {
        delta.extend_from_slice(&s.delta(t)[..n]);
        a.extend_from_slice(&s.a(t)[..n]);
        d.push(s.delta(t)[..n].iter().sum::<f64>() - s.r(t));
    }
    let total: f64 = s.weights()[..t_len].iter().sum();
    let w = s.weights()[..t_len]
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 1.0 / t_len as f64 })
        .collect();
    Ok(ScenarioSet::new(n, d, s.r_values()[..t_len].to_vec(), delta, a, w)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationReport {
    pub outcome: NegotiationOutcome,
    pub epsilon: f64,
    /// Realized cost of the negotiated policy.
    pub cost_distributed: f64,
    pub cost_centralized: f64,
}

impl NegotiationReport {
    pub fn relative_gap(&self) -> f64 {
        (self.cost_distributed - self.cost_centralized).abs() / self.cost_centralized.abs().max(f64::MIN_POSITIVE)
    }

    pub fn customers(&self) -> usize {
        self.outcome.payments.len()
    }
}

/// Settings used by `run_negotiation` for scenario set `s`.
pub fn negotiation_settings(
    cfg: &ExperimentConfig,
    s: &ScenarioSet,
    b: &SupportBox,
    cm: &CostModel,
) -> NegotiationSettings {
    let mut st = NegotiationSettings::for_instance(&s.lse_view(), b, cm);
    if let Some(z) = cfg.negotiate.zeta {
        st.zeta = z;
    }
    if let Some(e) = cfg.negotiate.epsilon {
        st.epsilon = e;
    }
    st.max_rounds = cfg.negotiate.max_rounds;
    st.proximal = cfg.negotiate.proximal;
    st
}

/// Negotiates over the configured transport and solves the same instance
/// centrally for comparison. Uses `negotiate.c_g` in place of `cost.c_g`.
pub fn run_negotiation(cfg: &ExperimentConfig, s: &ScenarioSet) -> Result<NegotiationReport> {
    let s = restrict(s, cfg.negotiate.customers, cfg.negotiate.slots)?;
    let cfg = &ExperimentConfig {
        c_g: cfg.negotiate.c_g,
        ..cfg.clone()
    };
    let cm = cost_model(cfg, &s, cfg.p_cap)?;
    let b = estimate_support(&s, cfg.margin)?;
    let st = negotiation_settings(cfg, &s, &b, &cm);
    let agents = CustomerAgent::from_scenarios(&s, st.customer_ridge, st.proximal);
    let mut transport: Box<dyn Transport> = if cfg.negotiate.tcp {
        Box::new(TcpTransport::spawn(agents)?)
    } else {
        Box::new(Loopback::new(agents))
    };
    let outcome = negotiate(&s.lse_view(), &b, &cm, &st, transport.as_mut())?;
    let cost_distributed = evaluate_policy(&outcome.solution.params, outcome.solution.kappa, &s, &cm)?;
    let (_, cost_centralized) = lin_cost(&s, cfg, &cm)?;
    Ok(NegotiationReport {
        outcome,
        epsilon: st.epsilon,
        cost_distributed,
        cost_centralized,
    })
}

/// `status,rounds,gap_norm,epsilon,cost_distributed,cost_centralized,relative_gap`.
pub fn summary_table(r: &NegotiationReport, scale: f64) -> Table {
    let mut t = Table::new([
        "status",
        "rounds",
        "gap_norm",
        "epsilon",
        "cost_distributed",
        "cost_centralized",
        "relative_gap",
    ]);
    let status = if r.outcome.converged {
        "converged"
    } else {
        "not_converged"
    };
    t.push(vec![
        status.into(),
        r.outcome.state.k.to_string(),
        num(r.outcome.state.gap_norm),
        num(r.epsilon),
        num(r.cost_distributed * scale),
        num(r.cost_centralized * scale),
        num(r.relative_gap()),
    ]);
    t
}

fn write(out: &Path, name: &str, t: &Table, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = out.join(name);
    t.write(&p)?;
    written.push(p);
    Ok(())
}

/// Runs `compare` and writes `compare.csv`.
pub fn cmd_compare(cfg: &ExperimentConfig, out: &Path, scale: f64) -> Result<Vec<PathBuf>> {
    let s = load_scenarios(cfg, None)?;
    let rows = run_compare(cfg, &s)?;
    let mut w = Vec::new();
    write(out, "compare.csv", &compare_table(&rows, scale), &mut w)?;
    Ok(w)
}

/// Runs the rho sweep and writes one file per spread.
pub fn cmd_rho_sweep(cfg: &ExperimentConfig, out: &Path, scale: f64) -> Result<Vec<PathBuf>> {
    let mut w = Vec::new();
    for sw in run_rho_sweep(cfg)? {
        write(out, &sw.file_name(), &sweep_table(&sw.points, scale), &mut w)?;
    }
    Ok(w)
}

/// Writes `trajectory.csv`, `contract.csv` and `negotiation_summary.csv`;
/// fails with [`Error::NotConverged`] after writing when the gap never
/// reached epsilon.
pub fn cmd_negotiate(cfg: &ExperimentConfig, out: &Path, scale: f64) -> Result<Vec<PathBuf>> {
    let s = load_scenarios(cfg, None)?;
    let r = run_negotiation(cfg, &s)?;
    let mut w = Vec::new();
    write(
        out,
        "trajectory.csv",
        &trajectory_table(&r.outcome.state.trajectory, r.customers()),
        &mut w,
    )?;
    write(out, "contract.csv", &contract_table(&r.outcome), &mut w)?;
    write(out, "negotiation_summary.csv", &summary_table(&r, scale), &mut w)?;
    if !r.outcome.converged {
        return Err(Error::NotConverged {
            rounds: r.outcome.state.k,
            gap_norm: r.outcome.state.gap_norm,
        });
    }
    Ok(w)
}

/// Writes the scenario set of the configured source to `scenarios.csv`.
pub fn cmd_synth(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let s = load_scenarios(cfg, None)?;
    let mut w = Vec::new();
    write(out, "scenarios.csv", &crate::io::scenario_table(&s), &mut w)?;
    Ok(w)
}

/// Checks the scenario invariants; returns the violation messages.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let s = load_scenarios(cfg, None)?;
    Ok(drcap_core::model::validate_scenarios(&s).messages())
}
