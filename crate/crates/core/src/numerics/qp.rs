//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  A x <= b
//! ```
//!
//! with an ADMM operator-splitting iteration (over-relaxed, with adaptive
//! penalty and Ruiz equilibration) followed by an active-set polish: once the
//! iterates settle, the constraints the iteration considers active are
//! solved as equalities on a regularized KKT system with iterative
//! refinement. The polished point is kept only if it satisfies the
//! tolerances; otherwise the iteration resumes.
//!
//! `P` is dense and `A` is stored as sparse rows; the linear system of the
//! splitting step is factored once per penalty value, so a [`QpSolver`] can
//! be reused across solves that only change `q` (warm start).

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};

const MIN_SCALING: f64 = 1e-4;
const MAX_SCALING: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const POLISH_DELTA: f64 = 1e-7;
const CERTIFICATE_CHECKS: usize = 20;

/// Termination status of [`solve_qp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    Infeasible,
    Unbounded,
    MaxIterExceeded,
}

#[derive(Debug, Clone, PartialEq)]
struct SparseRow {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseRow {
    fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, v)| v * x[j]).sum()
    }

    fn axpy_t(&self, alpha: f64, out: &mut [f64]) {
        for (&j, v) in self.idx.iter().zip(&self.val) {
            out[j] += alpha * v;
        }
    }

    fn add_outer(&self, weight: f64, k: &mut DMatrix<f64>) {
        for (&r, vr) in self.idx.iter().zip(&self.val) {
            for (&c, vc) in self.idx.iter().zip(&self.val) {
                k[(r, c)] += weight * vr * vc;
            }
        }
    }
}

/// `min 1/2 x'Px + q'x  s.t.  A x <= b`, with `A` kept as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    p: DMatrix<f64>,
    q: DVector<f64>,
    rows: Vec<SparseRow>,
    b: Vec<f64>,
}

impl QuadraticProgram {
    /// Unconstrained program. `P` must be square and symmetric within 1e-10.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "quadratic program P/q",
                expected: q.len(),
                found: p.nrows(),
            });
        }
        let n = p.nrows();
        for i in 0..n {
            for j in 0..i {
                let (u, l) = (p[(i, j)], p[(j, i)]);
                if (u - l).abs() > 1e-10 * (1.0 + u.abs().max(l.abs())) {
                    return Err(invalid("P is not symmetric"));
                }
            }
        }
        Ok(Self {
            p,
            q,
            rows: Vec::new(),
            b: Vec::new(),
        })
    }

    /// Program with dense constraints `A x <= b`.
    pub fn with_dense_constraints(p: DMatrix<f64>, q: DVector<f64>, a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        let mut qp = Self::new(p, q)?;
        if a.ncols() != qp.num_vars() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "constraint matrix",
                expected: qp.num_vars(),
                found: a.ncols(),
            });
        }
        for r in 0..a.nrows() {
            let coeffs: Vec<(usize, f64)> = (0..a.ncols()).map(|c| (c, a[(r, c)])).collect();
            qp.add_constraint(&coeffs, b[r])?;
        }
        Ok(qp)
    }

    /// Adds `sum coeffs[k].1 * x[coeffs[k].0] <= rhs`. Repeated indices are
    /// summed and zero coefficients dropped.
    pub fn add_constraint(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> Result<()> {
        let n = self.num_vars();
        let mut pairs: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(j, v) in coeffs {
            if j >= n {
                return Err(invalid(alloc::format!("constraint index {j} out of range")));
            }
            match pairs.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += v,
                None => pairs.push((j, v)),
            }
        }
        pairs.retain(|&(_, v)| v != 0.0);
        pairs.sort_by_key(|&(j, _)| j);
        self.rows.push(SparseRow {
            idx: pairs.iter().map(|p| p.0).collect(),
            val: pairs.iter().map(|p| p.1).collect(),
        });
        self.b.push(rhs);
        Ok(())
    }

    /// Adds `lo <= x[var] <= hi` as one or two constraint rows.
    pub fn add_bounds(&mut self, var: usize, lo: Option<f64>, hi: Option<f64>) -> Result<()> {
        if let Some(hi) = hi {
            self.add_constraint(&[(var, 1.0)], hi)?;
        }
        if let Some(lo) = lo {
            self.add_constraint(&[(var, -1.0)], -lo)?;
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.q.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn set_q(&mut self, q: DVector<f64>) -> Result<()> {
        if q.len() != self.num_vars() {
            return Err(Error::DimensionMismatch {
                what: "q",
                expected: self.num_vars(),
                found: q.len(),
            });
        }
        self.q = q;
        Ok(())
    }

    /// Dense copy of row `r` of `A`.
    pub fn constraint_row(&self, r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (&j, &v) in self.rows[r].idx.iter().zip(&self.rows[r].val) {
            out[j] = v;
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.p * &xv)) + self.q.dot(&xv)
    }

    /// Gradient `P x + q`.
    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let xv = DVector::from_column_slice(x);
        &self.p * xv + &self.q
    }

    /// `A x`.
    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    /// `A' y`.
    pub fn constraint_transpose_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars()];
        for (row, &yi) in self.rows.iter().zip(y) {
            row.axpy_t(yi, &mut out);
        }
        out
    }
}

/// Solver parameters. `tol` applies as both absolute and relative tolerance
/// on the primal and dual residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling_iters: usize,
    pub check_every: usize,
    pub adaptive_rho: bool,
    pub polish: bool,
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 10,
            check_every: 10,
            adaptive_rho: true,
            polish: true,
            infeasibility_tol: 1e-6,
        }
    }
}

impl QpSettings {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            ..Self::default()
        }
    }
}

/// Primal point, constraint multipliers and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
}

impl QpSolution {
    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

/// One-shot solve with default warm start (zeros).
pub fn solve_qp(qp: &QuadraticProgram, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let mut solver = QpSolver::new(qp, QpSettings::with_tol(tol, max_iter))?;
    Ok(solver.solve())
}

/// `(score, x, z, y)` of an iterate.
type Snapshot = (f64, Vec<f64>, Vec<f64>, Vec<f64>);

/// Scaled problem data plus the factorization and iterates of the
/// splitting method. Owned by one caller at a time; reusable across solves
/// that change only the linear term.
pub struct QpSolver {
    settings: QpSettings,
    n: usize,
    m: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    rows: Vec<SparseRow>,
    b: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    rho: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    x: Vec<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

struct Residuals {
    prim: f64,
    dual: f64,
    eps_prim: f64,
    eps_dual: f64,
    // scaled quantities used by the penalty update
    prim_scaled_rel: f64,
    dual_scaled_rel: f64,
}

impl Residuals {
    fn converged(&self) -> bool {
        self.prim <= self.eps_prim && self.dual <= self.eps_dual
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

impl QpSolver {
    pub fn new(qp: &QuadraticProgram, settings: QpSettings) -> Result<Self> {
        if !(settings.tol > 0.0) || settings.max_iter == 0 {
            return Err(invalid("tol must be positive and max_iter at least 1"));
        }
        let n = qp.num_vars();
        let m = qp.num_constraints();
        let mut solver = Self {
            settings,
            n,
            m,
            p: qp.p.clone(),
            q: qp.q.clone(),
            rows: qp.rows.clone(),
            b: qp.b.clone(),
            d: vec![1.0; n],
            e: vec![1.0; m],
            c: 1.0,
            rho: settings.rho,
            chol: None,
            x: vec![0.0; n],
            z: vec![0.0; m],
            y: vec![0.0; m],
        };
        solver.equilibrate();
        solver.factor()?;
        Ok(solver)
    }

    /// Replaces the linear term (unscaled) keeping scaling, factorization
    /// and iterates for a warm start.
    pub fn update_q(&mut self, q: &[f64]) -> Result<()> {
        if q.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "q",
                expected: self.n,
                found: q.len(),
            });
        }
        for j in 0..self.n {
            self.q[j] = self.c * self.d[j] * q[j];
        }
        Ok(())
    }

    /// Sets the starting point (unscaled primal and dual).
    pub fn warm_start(&mut self, x: &[f64], y: &[f64]) {
        for j in 0..self.n.min(x.len()) {
            self.x[j] = x[j] / self.d[j];
        }
        for i in 0..self.m.min(y.len()) {
            self.y[i] = y[i] * self.c / self.e[i];
        }
        for i in 0..self.m {
            self.z[i] = self.rows[i].dot(&self.x).min(self.b[i]);
        }
    }

    fn equilibrate(&mut self) {
        let n = self.n;
        for _ in 0..self.settings.scaling_iters {
            let mut col = vec![0.0f64; n];
            for j in 0..n {
                for i in 0..n {
                    col[j] = col[j].max(self.p[(i, j)].abs());
                }
            }
            let mut row_norm = vec![0.0f64; self.m];
            for (r, row) in self.rows.iter().enumerate() {
                for (&j, v) in row.idx.iter().zip(&row.val) {
                    col[j] = col[j].max(v.abs());
                    row_norm[r] = row_norm[r].max(v.abs());
                }
            }
            let scale = |v: f64| {
                let v = if v < MIN_SCALING { 1.0 } else { v.min(MAX_SCALING) };
                1.0 / libm::sqrt(v)
            };
            let dd: Vec<f64> = col.into_iter().map(scale).collect();
            let de: Vec<f64> = row_norm.into_iter().map(scale).collect();
            for j in 0..n {
                for i in 0..n {
                    self.p[(i, j)] *= dd[i] * dd[j];
                }
                self.q[j] *= dd[j];
                self.d[j] *= dd[j];
            }
            for (r, row) in self.rows.iter_mut().enumerate() {
                for (&j, v) in row.idx.iter().zip(row.val.iter_mut()) {
                    *v *= de[r] * dd[j];
                }
                self.e[r] *= de[r];
            }
            // cost scaling
            let mut mean_col = 0.0;
            if n > 0 {
                for j in 0..n {
                    let mut cj = 0.0f64;
                    for i in 0..n {
                        cj = cj.max(self.p[(i, j)].abs());
                    }
                    mean_col += cj;
                }
                mean_col /= n as f64;
            }
            let cost_norm = mean_col.max(inf_norm(self.q.as_slice()));
            let cost_norm = if cost_norm < MIN_SCALING {
                1.0
            } else {
                cost_norm.min(MAX_SCALING)
            };
            let gamma = 1.0 / cost_norm;
            self.p *= gamma;
            self.q *= gamma;
            self.c *= gamma;
        }
        for r in 0..self.m {
            self.b[r] *= self.e[r];
        }
    }

    fn factor(&mut self) -> Result<()> {
        let mut k = self.p.clone();
        for j in 0..self.n {
            k[(j, j)] += self.settings.sigma;
        }
        for row in &self.rows {
            row.add_outer(self.rho, &mut k);
        }
        self.chol = Some(k.cholesky().ok_or(Error::Factorization)?);
        Ok(())
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.dot(x)).collect()
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &yi) in self.rows.iter().zip(y) {
            row.axpy_t(yi, &mut out);
        }
        out
    }

    fn p_mul(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let px = &self.p * xv;
        px.as_slice().to_vec()
    }

    fn residuals(&self, x: &[f64], z: &[f64], y: &[f64]) -> Residuals {
        let tol = self.settings.tol;
        let ax = self.a_mul(x);
        let px = self.p_mul(x);
        let aty = self.at_mul(y);
        let einv = |v: &[f64]| -> f64 {
            v.iter()
                .zip(&self.e)
                .fold(0.0f64, |acc, (vi, ei)| acc.max((vi / ei).abs()))
        };
        let dinv = |v: &[f64]| -> f64 {
            v.iter()
                .zip(&self.d)
                .fold(0.0f64, |acc, (vi, di)| acc.max((vi / di).abs()))
                / self.c
        };
        let diff: Vec<f64> = ax.iter().zip(z).map(|(a, b)| a - b).collect();
        let grad: Vec<f64> = (0..self.n).map(|j| px[j] + self.q[j] + aty[j]).collect();
        let prim = einv(&diff);
        let dual = dinv(&grad);
        let ax_n = einv(&ax);
        let z_n = einv(z);
        let px_n = dinv(&px);
        let aty_n = dinv(&aty);
        let q_n = dinv(self.q.as_slice());
        let prim_scale = ax_n.max(z_n);
        let dual_scale = px_n.max(aty_n).max(q_n);
        let prim_s = inf_norm(&diff);
        let dual_s = inf_norm(&grad);
        let prim_scale_s = inf_norm(&ax).max(inf_norm(z));
        let dual_scale_s = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(self.q.as_slice()));
        Residuals {
            prim,
            dual,
            eps_prim: tol * (1.0 + prim_scale),
            eps_dual: tol * (1.0 + dual_scale),
            prim_scaled_rel: prim_s / (prim_scale_s + 1e-10),
            dual_scaled_rel: dual_s / (dual_scale_s + 1e-10),
        }
    }

    fn primal_infeasible(&self, dy: &[f64]) -> bool {
        if self.m == 0 {
            return false;
        }
        let eps = self.settings.infeasibility_tol;
        // unscaled certificate: dy_u = E dy / c
        let dyu: Vec<f64> = dy.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect();
        let norm = inf_norm(&dyu);
        if norm < 1e-12 {
            return false;
        }
        if dyu.iter().any(|&v| v < -eps * norm) {
            return false;
        }
        let at = self.at_mul(dy);
        let at_norm = at
            .iter()
            .zip(&self.d)
            .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()))
            / self.c;
        let bty: f64 = self.b.iter().zip(dy).map(|(b, v)| b * v.max(0.0)).sum::<f64>() / self.c;
        at_norm <= eps * norm && bty < -eps * norm
    }

    fn dual_infeasible(&self, dx: &[f64]) -> bool {
        let eps = self.settings.infeasibility_tol;
        let dxu: Vec<f64> = dx.iter().zip(&self.d).map(|(v, d)| v * d).collect();
        let norm = inf_norm(&dxu);
        if norm < 1e-12 {
            return false;
        }
        let pdx = self.p_mul(dx);
        let pnorm = pdx
            .iter()
            .zip(&self.d)
            .fold(0.0f64, |acc, (v, d)| acc.max((v / d).abs()))
            / self.c;
        let qdx: f64 = self.q.iter().zip(dx).map(|(q, v)| q * v).sum::<f64>() / self.c;
        if pnorm > eps * norm || qdx >= -eps * norm {
            return false;
        }
        let adx = self.a_mul(dx);
        adx.iter().zip(&self.e).all(|(v, e)| v / e <= eps * norm)
    }

    fn unscaled(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let xu = x.iter().zip(&self.d).map(|(v, d)| v * d).collect();
        let yu = y.iter().zip(&self.e).map(|(v, e)| v * e / self.c).collect();
        (xu, yu)
    }

    fn objective_scaled(&self, x: &[f64]) -> f64 {
        let px = self.p_mul(x);
        let v: f64 = x
            .iter()
            .zip(&px)
            .zip(self.q.iter())
            .map(|((xi, pi), qi)| 0.5 * xi * pi + qi * xi)
            .sum();
        v / self.c
    }

    /// Solves the equality-constrained problem on the guessed active set.
    /// Returns scaled `(x, y)` or `None` if the guess is inconsistent.
    fn polish(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let active: Vec<usize> = (0..self.m).filter(|&i| self.b[i] - self.z[i] < self.y[i]).collect();
        let delta = POLISH_DELTA;
        let mut k = self.p.clone();
        for j in 0..self.n {
            k[(j, j)] += delta;
        }
        for &i in &active {
            self.rows[i].add_outer(1.0 / delta, &mut k);
        }
        let chol = k.cholesky()?;
        let solve_step = |rx: &[f64], ry: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut rhs = rx.to_vec();
            for (k, &i) in active.iter().enumerate() {
                self.rows[i].axpy_t(ry[k] / delta, &mut rhs);
            }
            let dx = chol.solve(&DVector::from_vec(rhs));
            let dy = active
                .iter()
                .enumerate()
                .map(|(k, &i)| (self.rows[i].dot(dx.as_slice()) - ry[k]) / delta)
                .collect();
            (dx.as_slice().to_vec(), dy)
        };
        let neg_q: Vec<f64> = self.q.iter().map(|v| -v).collect();
        let b_act: Vec<f64> = active.iter().map(|&i| self.b[i]).collect();
        let (mut x, mut ya) = solve_step(&neg_q, &b_act);
        for _ in 0..25 {
            let px = self.p_mul(&x);
            let mut rx: Vec<f64> = (0..self.n).map(|j| -self.q[j] - px[j]).collect();
            for (k, &i) in active.iter().enumerate() {
                self.rows[i].axpy_t(-ya[k], &mut rx);
            }
            let ry: Vec<f64> = active
                .iter()
                .enumerate()
                .map(|(k, &i)| b_act[k] - self.rows[i].dot(&x))
                .collect();
            if inf_norm(&rx).max(inf_norm(&ry)) < 1e-15 {
                break;
            }
            let (dx, dy) = solve_step(&rx, &ry);
            for j in 0..self.n {
                x[j] += dx[j];
            }
            for k in 0..active.len() {
                ya[k] += dy[k];
            }
        }
        let mut y = vec![0.0; self.m];
        for (k, &i) in active.iter().enumerate() {
            y[i] = ya[k];
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return None;
        }
        Some((x, y))
    }

    fn finish(
        &self,
        x: &[f64],
        y: &[f64],
        status: SolveStatus,
        iterations: usize,
        res: &Residuals,
        polished: bool,
    ) -> QpSolution {
        let (xu, yu) = self.unscaled(x, y);
        QpSolution {
            objective: self.objective_scaled(x),
            x: xu,
            duals: yu,
            status,
            iterations,
            primal_residual: res.prim,
            dual_residual: res.dual,
            polished,
        }
    }

    /// Runs the splitting iteration from the current iterates.
    pub fn solve(&mut self) -> QpSolution {
        let s = self.settings;
        let (n, m) = (self.n, self.m);
        let mut best: Option<Snapshot> = None;
        let mut last_polish_active: Option<Vec<bool>> = None;
        let mut polish_attempts = 0;
        let (mut infeasible_streak, mut unbounded_streak) = (0, 0);
        let mut x_prev = self.x.clone();
        let mut y_prev = self.y.clone();
        for iter in 1..=s.max_iter {
            // x-update
            let mut rhs: Vec<f64> = (0..n).map(|j| s.sigma * self.x[j] - self.q[j]).collect();
            for (i, row) in self.rows.iter().enumerate() {
                row.axpy_t(self.rho * self.z[i] - self.y[i], &mut rhs);
            }
            let chol = self.chol.as_ref().expect("factored");
            let xt = chol.solve(&DVector::from_vec(rhs));
            let zt = self.a_mul(xt.as_slice());
            x_prev.copy_from_slice(&self.x);
            y_prev.copy_from_slice(&self.y);
            for j in 0..n {
                self.x[j] = s.alpha * xt[j] + (1.0 - s.alpha) * self.x[j];
            }
            for i in 0..m {
                let zr = s.alpha * zt[i] + (1.0 - s.alpha) * self.z[i];
                let znew = (zr + self.y[i] / self.rho).min(self.b[i]);
                self.y[i] += self.rho * (zr - znew);
                self.z[i] = znew;
            }
            if iter % s.check_every != 0 && iter != s.max_iter {
                continue;
            }
            let res = self.residuals(&self.x, &self.z, &self.y);
            if !(res.prim.is_finite() && res.dual.is_finite()) {
                break;
            }
            if res.converged() {
                if s.polish {
                    if let Some(sol) = self.try_polish(iter) {
                        return sol;
                    }
                }
                return self.finish(&self.x, &self.y, SolveStatus::Solved, iter, &res, false);
            }
            let score = (res.prim / res.eps_prim).max(res.dual / res.eps_dual);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, self.x.clone(), self.z.clone(), self.y.clone()));
            }
            // certificates must persist; weakly curved directions can mimic
            // them for a few checks
            let dy: Vec<f64> = (0..m).map(|i| self.y[i] - y_prev[i]).collect();
            infeasible_streak = if self.primal_infeasible(&dy) {
                infeasible_streak + 1
            } else {
                0
            };
            if infeasible_streak >= CERTIFICATE_CHECKS {
                return self.finish(&self.x, &self.y, SolveStatus::Infeasible, iter, &res, false);
            }
            let dx: Vec<f64> = (0..n).map(|j| self.x[j] - x_prev[j]).collect();
            unbounded_streak = if self.dual_infeasible(&dx) {
                unbounded_streak + 1
            } else {
                0
            };
            if unbounded_streak >= CERTIFICATE_CHECKS {
                return self.finish(&self.x, &self.y, SolveStatus::Unbounded, iter, &res, false);
            }
            // polish once the iterates are close; only when the active set moved
            if s.polish && polish_attempts < 20 && score < 1e5 {
                let act: Vec<bool> = (0..m).map(|i| self.b[i] - self.z[i] < self.y[i]).collect();
                if last_polish_active.as_ref() != Some(&act) {
                    polish_attempts += 1;
                    last_polish_active = Some(act);
                    if let Some(sol) = self.try_polish(iter) {
                        return sol;
                    }
                }
            }
            if s.adaptive_rho && iter % (5 * s.check_every) == 0 {
                let ratio = libm::sqrt(res.prim_scaled_rel / (res.dual_scaled_rel + 1e-30));
                let new_rho = (self.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                    self.rho = new_rho;
                    if self.factor().is_err() {
                        break;
                    }
                }
            }
        }
        let (x, z, y) = match best {
            Some((_, x, z, y)) => (x, z, y),
            None => (self.x.clone(), self.z.clone(), self.y.clone()),
        };
        let res = self.residuals(&x, &z, &y);
        self.finish(&x, &y, SolveStatus::MaxIterExceeded, s.max_iter, &res, false)
    }

    fn try_polish(&mut self, iter: usize) -> Option<QpSolution> {
        let (x, y) = self.polish()?;
        if y.iter().any(|&v| v < -self.settings.tol) {
            return None;
        }
        let y: Vec<f64> = y.into_iter().map(|v| v.max(0.0)).collect();
        let ax = self.a_mul(&x);
        let z: Vec<f64> = ax.iter().zip(&self.b).map(|(a, b)| a.min(*b)).collect();
        let res = self.residuals(&x, &z, &y);
        if !res.converged() {
            return None;
        }
        let sol = self.finish(&x, &y, SolveStatus::Solved, iter, &res, true);
        self.x = x;
        self.z = z;
        self.y = y;
        Some(sol)
    }
}
