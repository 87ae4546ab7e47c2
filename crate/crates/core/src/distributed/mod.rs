//! Price negotiation between the LSE and its customers.
//!
//! The LSE owns a copy `(alpha, beta, gamma)` of every customer's policy and
//! each customer owns `(u, v, w)`; prices are the multipliers of the
//! agreement constraint between the two copies. Each round the LSE solves
//! its priced planning problem, customers answer with their best response
//! from their private cost data, and prices move along the disagreement.
//!
//! Both sides carry a diagonal ridge scaled to their own curvature, which
//! makes each best response unique. By default the ridge is proximal: it is
//! centered at the side's previous answer, so it disappears at a fixed point
//! and the agreed policy solves the unregularized problem. With a fixed ridge
//! centered at zero the logged objective is the exact dual function of the
//! ridged problem instead.

pub mod wire;

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linpolicy::{
    assemble, planning_cost, tight_kappa, LinLayout, LinObjectiveParts, LinSolution, MismatchMoments,
};
use crate::model::{
    weighted_moment_matrix, CostModel, CustomerId, LseView, PolicyParams, ScenarioSet, SupportBox, DEFAULT_RIDGE,
};
use crate::numerics::{QpSettings, QpSolver, QuadraticProgram, SolveStatus};

/// Per-customer prices `(pi, lambda, mu)` on `(alpha, beta, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(pub Vec<[f64; 3]>);

impl PriceVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[0.0; 3]; n])
    }

    pub fn customers(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Per-customer replies `(u, v, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerReply(pub Vec<[f64; 3]>);

impl CustomerReply {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[0.0; 3]; n])
    }

    pub fn customers(&self) -> usize {
        self.0.len()
    }
}

/// Minimizer of `w^T (M + ridge I) w - prices . w`, i.e.
/// `w = (M + ridge I)^{-1} prices / 2`.
pub fn customer_best_response(m: &Matrix3<f64>, prices: [f64; 3], ridge: f64) -> Result<[f64; 3]> {
    let reg = m + Matrix3::identity() * ridge;
    let chol = reg.cholesky().ok_or(Error::Factorization)?;
    let w = chol.solve(&(Vector3::from(prices) * 0.5));
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::Factorization);
    }
    Ok([w[0], w[1], w[2]])
}

/// `(zeta / k) / gap_norm`.
pub fn stepsize(zeta: f64, k: usize, gap_norm: f64) -> Result<f64> {
    if k == 0 || !(gap_norm > 0.0) {
        return Err(crate::error::invalid("stepsize needs k >= 1 and a positive gap"));
    }
    Ok(zeta / k as f64 / gap_norm)
}

/// `prices + eta ((alpha, beta, gamma) - (u, v, w))`.
pub fn update_prices(prices: &PriceVector, lse: &PolicyParams, replies: &CustomerReply, eta: f64) -> PriceVector {
    PriceVector(
        prices
            .0
            .iter()
            .zip(&replies.0)
            .enumerate()
            .map(|(i, (p, r))| {
                let t = lse.triple(i);
                [
                    p[0] + eta * (t[0] - r[0]),
                    p[1] + eta * (t[1] - r[1]),
                    p[2] + eta * (t[2] - r[2]),
                ]
            })
            .collect(),
    )
}

/// Total payment `pi u + lambda v + mu w` to one customer.
pub fn payment(prices: [f64; 3], reply: [f64; 3]) -> f64 {
    prices[0] * reply[0] + prices[1] * reply[1] + prices[2] * reply[2]
}

/// `|| (alpha, beta, gamma) - (u, v, w) ||_2` over all customers.
pub fn gap_norm(lse: &PolicyParams, replies: &CustomerReply) -> f64 {
    let mut s = 0.0;
    for (i, r) in replies.0.iter().enumerate() {
        let t = lse.triple(i);
        for k in 0..3 {
            let d = t[k] - r[k];
            s += d * d;
        }
    }
    libm::sqrt(s)
}

/// A customer holding its private moment matrix `E[a_i z_i z_i^T]`.
///
/// The ridge is either fixed at zero or, in proximal mode, centered at the
/// agent's previous reply so it vanishes once replies stop moving.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerAgent {
    pub id: CustomerId,
    m: Matrix3<f64>,
    ridge: [f64; 3],
    center: Option<[f64; 3]>,
}

impl CustomerAgent {
    /// `ridge_rel` scales a ridge proportional to the diagonal of `moments`.
    pub fn new(id: CustomerId, moments: Matrix3<f64>, ridge_rel: f64, proximal: bool) -> Self {
        let mut m = moments;
        let mut ridge = [0.0; 3];
        for k in 0..3 {
            m[(k, k)] += DEFAULT_RIDGE;
            ridge[k] = ridge_rel * moments[(k, k)];
        }
        Self {
            id,
            m,
            ridge,
            center: proximal.then_some([0.0; 3]),
        }
    }

    /// Builds every customer's agent from the full scenario data; each agent
    /// only keeps its own cost moments.
    pub fn from_scenarios(s: &ScenarioSet, ridge_rel: f64, proximal: bool) -> Vec<Self> {
        (0..s.customers())
            .map(|i| {
                Self::new(
                    CustomerId(i),
                    weighted_moment_matrix(s, CustomerId(i), 0.0),
                    ridge_rel,
                    proximal,
                )
            })
            .collect()
    }

    pub fn respond(&mut self, prices: [f64; 3]) -> Result<[f64; 3]> {
        let mut m = self.m;
        let mut rhs = prices;
        for k in 0..3 {
            m[(k, k)] += self.ridge[k];
            if let Some(c) = self.center {
                rhs[k] += 2.0 * self.ridge[k] * c[k];
            }
        }
        let u = customer_best_response(&m, rhs, 0.0)?;
        if let Some(c) = self.center.as_mut() {
            *c = u;
        }
        Ok(u)
    }
}

/// Carries one round of prices to all customers and collects the replies in
/// customer order.
pub trait Transport {
    fn exchange(&mut self, round: usize, prices: &PriceVector) -> Result<CustomerReply>;
    /// Tells every agent that negotiation is over.
    fn terminate(&mut self) -> Result<()>;
}

/// In-process transport calling each agent directly.
#[derive(Debug, Clone)]
pub struct Loopback {
    agents: Vec<CustomerAgent>,
}

impl Loopback {
    pub fn new(agents: Vec<CustomerAgent>) -> Self {
        Self { agents }
    }
}

impl Transport for Loopback {
    fn exchange(&mut self, round: usize, prices: &PriceVector) -> Result<CustomerReply> {
        if prices.customers() != self.agents.len() {
            return Err(Error::Transport {
                round,
                reason: alloc::format!("{} prices for {} agents", prices.customers(), self.agents.len()),
            });
        }
        let replies = self
            .agents
            .iter_mut()
            .zip(&prices.0)
            .map(|(a, p)| a.respond(*p))
            .collect::<Result<Vec<_>>>()?;
        Ok(CustomerReply(replies))
    }

    fn terminate(&mut self) -> Result<()> {
        Ok(())
    }
}

/// The LSE's priced planning problem, kept factored across rounds.
pub struct LsePlanner {
    qp: QuadraticProgram,
    solver: QpSolver,
    base_q: Vec<f64>,
    layout: LinLayout,
    moments: MismatchMoments,
    constant: f64,
    cm: CostModel,
    box_: SupportBox,
    ridges: Vec<[f64; 3]>,
    center: Option<Vec<[f64; 3]>>,
}

/// The LSE's answer to one set of prices.
#[derive(Debug, Clone, PartialEq)]
pub struct LseIterate {
    pub params: PolicyParams,
    pub kappa: f64,
    /// Value of the priced problem at the solution; a proximal term, if
    /// any, is left out.
    pub value: f64,
    pub status: SolveStatus,
}

impl LsePlanner {
    /// `ridge_rel` scales a ridge proportional to the diagonal of the
    /// mismatch cost curvature `c_g E[z_i z_i^T]`. In proximal mode the
    /// ridge is centered at the previous solution.
    pub fn new(
        lse: &LseView,
        box_: &SupportBox,
        cm: &CostModel,
        ridge_rel: f64,
        proximal: bool,
        tol: f64,
    ) -> Result<Self> {
        let moments = MismatchMoments::new(lse);
        let n = moments.n;
        let ridges: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let g = moments.cross(i, i);
                [0, 1, 2].map(|k| ridge_rel * cm.c_g * g[(k, k)] + DEFAULT_RIDGE)
            })
            .collect();
        let qp = assemble(
            &LinObjectiveParts {
                moments: &moments,
                customer: None,
                linear: None,
                ridge: &ridges,
                aux_ridge: DEFAULT_RIDGE,
            },
            box_,
            cm,
        )?;
        let solver = QpSolver::new(&qp, QpSettings::with_tol(tol, 50_000))?;
        Ok(Self {
            base_q: qp.q().as_slice().to_vec(),
            qp,
            solver,
            layout: LinLayout { n },
            constant: cm.c_g * moments.dd,
            moments,
            cm: *cm,
            box_: box_.clone(),
            center: proximal.then(|| vec![[0.0; 3]; n]),
            ridges,
        })
    }

    pub fn customers(&self) -> usize {
        self.layout.n
    }

    pub fn step(&mut self, prices: &PriceVector) -> Result<LseIterate> {
        let n = self.layout.n;
        if prices.customers() != n {
            return Err(Error::DimensionMismatch {
                what: "prices",
                expected: n,
                found: prices.customers(),
            });
        }
        let mut q = self.base_q.clone();
        for (i, p) in prices.0.iter().enumerate() {
            q[self.layout.alpha(i)] += p[0];
            q[self.layout.beta(i)] += p[1];
            q[self.layout.gamma(i)] += p[2];
        }
        let mut constant = self.constant;
        if let Some(center) = &self.center {
            for (i, (c, r)) in center.iter().zip(&self.ridges).enumerate() {
                let idx = [self.layout.alpha(i), self.layout.beta(i), self.layout.gamma(i)];
                for k in 0..3 {
                    q[idx[k]] -= 2.0 * r[k] * c[k];
                    constant += r[k] * c[k] * c[k];
                }
            }
        }
        self.solver.update_q(&q)?;
        let sol = self.solver.solve();
        if matches!(sol.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
            return Err(Error::Solver(sol.status));
        }
        self.qp.set_q(DVector::from_vec(q))?;
        let mut value = self.qp.objective(&sol.x) + constant;
        let (params, kappa) = self.layout.extract(&sol.x);
        if let Some(center) = self.center.as_mut() {
            for (i, (c, r)) in center.iter_mut().zip(&self.ridges).enumerate() {
                let t = params.triple(i);
                for k in 0..3 {
                    value -= r[k] * (t[k] - c[k]) * (t[k] - c[k]);
                }
                *c = t;
            }
        }
        Ok(LseIterate {
            params,
            kappa,
            value,
            status: sol.status,
        })
    }

    /// Mismatch plus capacity cost of a policy, without prices or ridge.
    pub fn own_cost(&self, params: &PolicyParams, kappa: f64) -> f64 {
        let zero = vec![Matrix3::zeros(); self.layout.n];
        planning_cost(&self.moments, &zero, params, kappa, &self.cm)
    }

    pub fn support(&self) -> &SupportBox {
        &self.box_
    }
}

/// Solves the LSE's priced problem once with the default ridge.
pub fn lse_step(
    prices: &PriceVector,
    lse: &LseView,
    box_: &SupportBox,
    cm: &CostModel,
    tol: f64,
) -> Result<(PolicyParams, f64)> {
    let mut planner = LsePlanner::new(lse, box_, cm, 0.0, false, tol)?;
    let it = planner.step(prices)?;
    Ok((it.params, it.kappa))
}

/// Share of the zero-policy marginal price used as the default `zeta`.
pub const ZETA_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegotiationSettings {
    pub zeta: f64,
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Ridge on each customer's response, relative to its own curvature.
    pub customer_ridge: f64,
    /// Ridge on the LSE's copy, relative to the mismatch curvature.
    pub lse_ridge: f64,
    /// Center both ridges at the previous iterate.
    pub proximal: bool,
    pub qp_tol: f64,
    /// Report the step-weighted average of the LSE iterates instead of the
    /// last one.
    pub average_primal: bool,
}

impl NegotiationSettings {
    /// Defaults for an instance: `zeta` from the LSE's marginal cost at the
    /// zero policy, `epsilon = 1e-4 sqrt(3n)`.
    pub fn for_instance(lse: &LseView, box_: &SupportBox, cm: &CostModel) -> Self {
        Self {
            zeta: default_zeta(lse, box_, cm),
            epsilon: 1e-4 * libm::sqrt(3.0 * lse.customers() as f64),
            max_rounds: 5000,
            customer_ridge: 5.0,
            lse_ridge: 5.0,
            proximal: true,
            qp_tol: 1e-10,
            average_primal: false,
        }
    }
}

/// `ZETA_FRACTION` times the norm of the LSE's marginal cost at the zero
/// policy: `2 c_g |E[D z_i]|` plus the capacity price times the box
/// extremes of `(D, delta_i, 1)`. Falls back to 1 when that is zero.
pub fn default_zeta(lse: &LseView, box_: &SupportBox, cm: &CostModel) -> f64 {
    let m = MismatchMoments::new(lse);
    let d_max = box_.max_abs_d();
    let mut s = 0.0;
    for i in 0..m.n {
        let dz = m.d_times(i);
        let reach = [
            d_max,
            box_.delta_lo
                .get(i)
                .map_or(0.0, |v| v.abs())
                .max(box_.delta_hi.get(i).map_or(0.0, |v| v.abs())),
            1.0,
        ];
        for k in 0..3 {
            let g = 2.0 * cm.c_g * dz[k].abs() + cm.p_cap * reach[k];
            s += g * g;
        }
    }
    let z = ZETA_FRACTION * libm::sqrt(s);
    if z > 0.0 {
        z
    } else {
        1.0
    }
}

/// One logged round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub k: usize,
    /// Step taken after this round; zero on the final round.
    pub eta: f64,
    pub gap_norm: f64,
    /// Dual function value: LSE optimum plus the customers' optima.
    pub objective: f64,
    /// Prices in force during the round.
    pub prices: PriceVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationState {
    pub k: usize,
    pub prices: PriceVector,
    pub lse_params: PolicyParams,
    pub kappa: f64,
    pub replies: CustomerReply,
    pub gap_norm: f64,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationOutcome {
    /// Final policy and capacity; `expected_cost` is the LSE's estimate from
    /// its own cost and the customers' revealed responses.
    pub solution: LinSolution,
    pub state: NegotiationState,
    pub payments: Vec<f64>,
    pub converged: bool,
}

/// Runs rounds until the disagreement drops to `epsilon` or `max_rounds`
/// is reached; in the latter case the lowest-gap round is reported with
/// `converged = false`.
pub fn negotiate<T: Transport + ?Sized>(
    lse: &LseView,
    box_: &SupportBox,
    cm: &CostModel,
    settings: &NegotiationSettings,
    transport: &mut T,
) -> Result<NegotiationOutcome> {
    let n = lse.customers();
    if !(settings.zeta > 0.0) || !(settings.epsilon >= 0.0) || settings.max_rounds == 0 {
        return Err(crate::error::invalid(
            "zeta must be positive, epsilon nonnegative, max_rounds >= 1",
        ));
    }
    let mut planner = LsePlanner::new(lse, box_, cm, settings.lse_ridge, settings.proximal, settings.qp_tol)?;
    let mut prices = PriceVector::zeros(n);
    let mut trajectory = Vec::new();
    let mut best: Option<(usize, LseIterate, CustomerReply, PriceVector, f64)> = None;
    let mut avg = PolicyParams::zeros(n);
    let mut avg_kappa = 0.0;
    let mut avg_weight = 0.0;
    let mut converged = false;

    for k in 1..=settings.max_rounds {
        let it = planner.step(&prices)?;
        let replies = transport.exchange(k, &prices)?;
        if replies.customers() != n {
            return Err(Error::Transport {
                round: k,
                reason: alloc::format!("{} replies for {} customers", replies.customers(), n),
            });
        }
        let gap = gap_norm(&it.params, &replies);
        let customer_value: f64 = prices
            .0
            .iter()
            .zip(&replies.0)
            .map(|(p, r)| -0.5 * payment(*p, *r))
            .sum();
        let objective = it.value + customer_value;
        let done = gap <= settings.epsilon || gap < 1e-15;
        let eta = if done { 0.0 } else { stepsize(settings.zeta, k, gap)? };

        let w = if eta > 0.0 { eta } else { 1.0 };
        for i in 0..n {
            let t = it.params.triple(i);
            let a = avg.triple(i);
            avg.set_triple(i, [0, 1, 2].map(|c| a[c] + w * t[c]));
        }
        avg_kappa += w * it.kappa;
        avg_weight += w;

        trajectory.push(TrajectoryRow {
            k,
            eta,
            gap_norm: gap,
            objective,
            prices: prices.clone(),
        });
        let next = if done {
            None
        } else {
            Some(update_prices(&prices, &it.params, &replies, eta))
        };
        if best.as_ref().is_none_or(|b| gap < b.4) {
            best = Some((k, it, replies, prices.clone(), gap));
        }
        if done {
            converged = true;
            break;
        }
        prices = next.expect("set when not done");
        if !prices.is_finite() {
            return Err(Error::Transport {
                round: k,
                reason: "prices diverged".into(),
            });
        }
    }
    transport.terminate()?;

    let (k_best, it, replies, final_prices, gap) = best.expect("at least one round");
    let k_last = trajectory.len();
    let (params, kappa) = if settings.average_primal && avg_weight > 0.0 {
        let mut p = PolicyParams::zeros(n);
        for i in 0..n {
            p.set_triple(i, avg.triple(i).map(|v| v / avg_weight));
        }
        (p, avg_kappa / avg_weight)
    } else {
        (it.params.clone(), it.kappa)
    };
    let kappa = tight_kappa(&params, kappa, box_)?;
    let payments: Vec<f64> = final_prices
        .0
        .iter()
        .zip(&replies.0)
        .map(|(p, r)| payment(*p, *r))
        .collect();
    let expected_cost = planner.own_cost(&params, kappa) + 0.5 * payments.iter().sum::<f64>();
    Ok(NegotiationOutcome {
        solution: LinSolution {
            params,
            kappa,
            expected_cost,
            status: if converged {
                SolveStatus::Solved
            } else {
                SolveStatus::MaxIterExceeded
            },
            iterations: if converged { k_last } else { k_best },
        },
        state: NegotiationState {
            k: k_last,
            prices: final_prices,
            lse_params: it.params,
            kappa: it.kappa,
            replies,
            gap_norm: gap,
            trajectory,
        },
        payments,
        converged,
    })
}
