//! Dense bounded-variable revised simplex.
//!
//! Problems have the form
//!
//! ```text
//! min  cᵀx + offset
//! s.t. a_i x  = b_i          (equality rows)
//!      lo_r ≤ a_r x ≤ hi_r   (two-sided rows)
//!      lower ≤ x ≤ upper
//! ```
//!
//! Two-sided rows get a bounded slack `s_r = a_r x`, so the working system
//! is all equalities over bounded columns. Phase 1 minimizes the sum of
//! artificial variables, phase 2 the real objective. Pricing is Dantzig's
//! rule, switching to Bland's rule after a run of degenerate pivots.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Lu;

pub const PIVOT_TOLERANCE: f64 = 1e-9;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-7;
const OPTIMALITY_TOLERANCE: f64 = 1e-9;
const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;
const REFACTOR_EVERY: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex iteration limit ({0}) exceeded")]
    IterationLimit(usize),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqRow {
    pub coef: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeRow {
    pub coef: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    /// Constant added to the objective.
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq_rows: Vec<EqRow>,
    pub ineq_rows: Vec<RangeRow>,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.eq_rows.len() + self.ineq_rows.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.cost, x) + self.offset
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match cost length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return Err(LpError::Malformed("lower bound exceeds upper bound".into()));
        }
        if self.eq_rows.iter().any(|r| r.coef.len() != n) || self.ineq_rows.iter().any(|r| r.coef.len() != n) {
            return Err(LpError::Malformed("row length does not match variable count".into()));
        }
        if self.ineq_rows.iter().any(|r| r.lo > r.hi) {
            return Err(LpError::Malformed("row lower limit exceeds upper limit".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row multipliers, equality rows first; empty when infeasible.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free column held at zero.
    Free,
}

struct Simplex {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    first_artificial: usize,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
}

impl Simplex {
    fn build(lp: &LpProblem) -> Simplex {
        let n = lp.n_vars();
        let m = lp.n_rows();
        let ns = lp.ineq_rows.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + ns + m];
        let rows = lp.eq_rows.iter().map(|r| &r.coef).chain(lp.ineq_rows.iter().map(|r| &r.coef));
        for (i, coef) in rows.enumerate() {
            for (j, &a) in coef.iter().enumerate() {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let ne = lp.eq_rows.len();
        for (r, row) in lp.ineq_rows.iter().enumerate() {
            cols[n + r].push((ne + r, -1.0));
            lower.push(row.lo);
            upper.push(row.hi);
        }
        let mut b: Vec<f64> = lp.eq_rows.iter().map(|r| r.rhs).collect();
        b.resize(m, 0.0);

        // nonbasic starting point: the finite bound nearest zero
        let mut x = Vec::with_capacity(n + ns + m);
        let mut state = Vec::with_capacity(n + ns + m);
        for j in 0..n {
            let (l, u) = (lower[j], upper[j]);
            if l.is_finite() && (!u.is_finite() || l.abs() <= u.abs()) {
                x.push(l);
                state.push(State::AtLower);
            } else if u.is_finite() {
                x.push(u);
                state.push(State::AtUpper);
            } else {
                x.push(0.0);
                state.push(State::Free);
            }
        }

        let mut activity = vec![0.0; m];
        for j in 0..n {
            if x[j] != 0.0 {
                for &(i, a) in &cols[j] {
                    activity[i] += a * x[j];
                }
            }
        }
        // crash: a two-sided row whose activity is inside its band starts
        // with its slack basic and needs no artificial
        let first_artificial = n + ns;
        let mut slack_basic = vec![false; ns];
        for r in 0..ns {
            let v = activity[ne + r];
            let (l, u) = (lower[n + r], upper[n + r]);
            if v >= l && v <= u {
                slack_basic[r] = true;
                x.push(v);
                state.push(State::Basic);
            } else if v < l || !u.is_finite() {
                x.push(l);
                state.push(State::AtLower);
            } else {
                x.push(u);
                state.push(State::AtUpper);
            }
        }
        let mut resid = b.clone();
        for (i, r) in resid.iter_mut().enumerate() {
            *r -= activity[i];
        }
        for r in 0..ns {
            if !slack_basic[r] {
                resid[ne + r] += x[n + r];
            }
        }

        let mut binv = vec![0.0; m * m];
        let mut basis = Vec::with_capacity(m);
        for (i, &r) in resid.iter().enumerate() {
            let sign = if r < 0.0 { -1.0 } else { 1.0 };
            cols[first_artificial + i].push((i, sign));
            lower.push(0.0);
            if i >= ne && slack_basic[i - ne] {
                upper.push(0.0);
                x.push(0.0);
                state.push(State::AtLower);
                basis.push(n + i - ne);
                binv[i * m + i] = -1.0;
            } else {
                upper.push(f64::INFINITY);
                x.push(r.abs());
                state.push(State::Basic);
                basis.push(first_artificial + i);
                binv[i * m + i] = sign;
            }
        }
        let total = n + ns + m;
        let mut cost = vec![0.0; total];
        for c in cost.iter_mut().skip(first_artificial) {
            *c = 1.0;
        }
        Simplex {
            m,
            cols,
            lower,
            upper,
            cost,
            b,
            x,
            state,
            basis,
            binv,
            first_artificial,
            iterations: 0,
            max_iterations: 50 * (total + m).max(200),
            since_refactor: 0,
        }
    }

    fn n_total(&self) -> usize {
        self.cols.len()
    }

    /// y = c_Bᵀ B⁻¹
    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &var) in self.basis.iter().enumerate() {
            let c = self.cost[var];
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[k * m..(k + 1) * m];
            for (yi, &bi) in y.iter_mut().zip(row) {
                *yi += c * bi;
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    /// B⁻¹ A_j
    fn column(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + i] * a;
            }
        }
        alpha
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (k, &var) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[var] {
                bmat[i * m + k] = a;
            }
        }
        let lu = Lu::factor(bmat, m).map_err(|_| LpError::Malformed("basis became singular".into()))?;
        // B⁻¹ row k = solution of Bᵀ z = e_k
        let mut e = vec![0.0; m];
        for k in 0..m {
            e[k] = 1.0;
            let z = lu.solve_transpose(&e);
            self.binv[k * m..(k + 1) * m].copy_from_slice(&z);
            e[k] = 0.0;
        }
        // basic values from the nonbasic ones
        let mut rhs = self.b.clone();
        for j in 0..self.n_total() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    rhs[i] -= a * self.x[j];
                }
            }
        }
        let xb = lu.solve(&rhs);
        for (k, &var) in self.basis.iter().enumerate() {
            self.x[var] = xb[k];
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, row: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[row];
        for v in &mut self.binv[row * m..(row + 1) * m] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.binv[row * m..(row + 1) * m].to_vec();
        for (k, &a) in alpha.iter().enumerate() {
            if k == row || a == 0.0 {
                continue;
            }
            let dst = &mut self.binv[k * m..(k + 1) * m];
            for (d, &s) in dst.iter_mut().zip(&pivot_row) {
                *d -= a * s;
            }
        }
        self.since_refactor += 1;
    }

    fn eligible(&self, j: usize, d: f64, tol: f64) -> bool {
        if self.lower[j] == self.upper[j] {
            return false;
        }
        match self.state[j] {
            State::Basic => false,
            State::AtLower => d < -tol,
            State::AtUpper => d > tol,
            State::Free => d.abs() > tol,
        }
    }

    fn run(&mut self) -> Result<(), LpError> {
        let scale = self.cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let tol = OPTIMALITY_TOLERANCE * scale;
        let mut degenerate_run = 0;
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
            match self.step(tol, bland)? {
                None => return Ok(()),
                Some(true) => degenerate_run += 1,
                Some(false) => degenerate_run = 0,
            }
        }
    }

    /// One pricing + ratio test + update. `None` at optimality, otherwise
    /// whether the step was degenerate.
    fn step(&mut self, tol: f64, bland: bool) -> Result<Option<bool>, LpError> {
        let y = self.duals();
        let mut enter: Option<(usize, f64)> = None;
        let mut best = 0.0;
        for j in 0..self.n_total() {
            if self.state[j] == State::Basic {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            if !self.eligible(j, d, tol) {
                continue;
            }
            if bland {
                enter = Some((j, d));
                break;
            }
            if d.abs() > best {
                best = d.abs();
                enter = Some((j, d));
            }
        }
        let Some((j, d)) = enter else {
            return Ok(None);
        };
        let dir = match self.state[j] {
            State::AtLower => 1.0,
            State::AtUpper => -1.0,
            _ => {
                if d < 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let alpha = self.column(j);

        // ratio test; `None` means the entering column flips to its other bound
        let mut t_best = self.upper[j] - self.lower[j];
        if !t_best.is_finite() {
            t_best = f64::INFINITY;
        }
        let mut leave: Option<(usize, bool)> = None;
        for (k, &a) in alpha.iter().enumerate() {
            if a.abs() <= PIVOT_TOLERANCE {
                continue;
            }
            let var = self.basis[k];
            let rate = -dir * a;
            let (limit, to_upper) = if rate < 0.0 {
                if !self.lower[var].is_finite() {
                    continue;
                }
                ((self.x[var] - self.lower[var]) / -rate, false)
            } else {
                if !self.upper[var].is_finite() {
                    continue;
                }
                ((self.upper[var] - self.x[var]) / rate, true)
            };
            let limit = limit.max(0.0);
            let better = if limit < t_best - 1e-12 {
                true
            } else if limit <= t_best + 1e-12 {
                match leave {
                    Some((r, _)) if bland => var < self.basis[r],
                    Some((r, _)) => a.abs() > alpha[r].abs(),
                    None => false,
                }
            } else {
                false
            };
            if better {
                t_best = limit;
                leave = Some((k, to_upper));
            }
        }
        if !t_best.is_finite() {
            return Err(LpError::Unbounded);
        }
        let t = t_best;

        self.x[j] += dir * t;
        for (k, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let var = self.basis[k];
                self.x[var] -= dir * t * a;
            }
        }
        match leave {
            None => {
                if dir > 0.0 {
                    self.x[j] = self.upper[j];
                    self.state[j] = State::AtUpper;
                } else {
                    self.x[j] = self.lower[j];
                    self.state[j] = State::AtLower;
                }
            }
            Some((k, to_upper)) => {
                let out = self.basis[k];
                if to_upper {
                    self.x[out] = self.upper[out];
                    self.state[out] = State::AtUpper;
                } else {
                    self.x[out] = self.lower[out];
                    self.state[out] = State::AtLower;
                }
                self.basis[k] = j;
                self.state[j] = State::Basic;
                self.pivot(k, &alpha);
            }
        }

        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(LpError::IterationLimit(self.max_iterations));
        }
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(Some(t < 1e-12))
    }

    fn infeasibility(&self) -> f64 {
        self.x[self.first_artificial..].iter().sum()
    }

    /// Pin artificials at zero and pivot basic ones out where possible.
    fn retire_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        for a in self.first_artificial..self.n_total() {
            self.upper[a] = 0.0;
            if self.state[a] != State::Basic {
                self.x[a] = 0.0;
                self.state[a] = State::AtLower;
            }
        }
        for k in 0..m {
            if self.basis[k] < self.first_artificial {
                continue;
            }
            let row: Vec<f64> = self.binv[k * m..(k + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_artificial {
                if self.state[j] == State::Basic {
                    continue;
                }
                let rho: f64 = self.cols[j].iter().map(|&(i, a)| row[i] * a).sum();
                if rho.abs() > 1e-7 && best.map_or(true, |(_, b)| rho.abs() > b) {
                    best = Some((j, rho.abs()));
                }
            }
            // no candidate: the row is redundant and its artificial stays basic at zero
            if let Some((j, _)) = best {
                let alpha = self.column(j);
                let out = self.basis[k];
                self.x[out] = 0.0;
                self.state[out] = State::AtLower;
                self.basis[k] = j;
                self.state[j] = State::Basic;
                self.pivot(k, &alpha);
            }
        }
        self.refactor()
    }
}

/// Solve an LP to optimality or certify infeasibility through phase 1.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution, LpError> {
    lp.check()?;
    let n = lp.n_vars();
    let mut s = Simplex::build(lp);
    s.run()?;
    if s.infeasibility() > FEASIBILITY_TOLERANCE {
        let x = s.x[..n].to_vec();
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            objective: lp.objective(&x),
            x,
            duals: Vec::new(),
            iterations: s.iterations,
        });
    }
    s.retire_artificials()?;
    for (j, c) in s.cost.iter_mut().enumerate() {
        *c = if j < n { lp.cost[j] } else { 0.0 };
    }
    s.run()?;
    s.refactor()?;
    let x = s.x[..n].to_vec();
    let duals = s.duals();
    Ok(LpSolution { status: LpStatus::Optimal, objective: lp.objective(&x), x, duals, iterations: s.iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KktCondition {
    Primal,
    Dual,
    Slackness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    pub primal: f64,
    pub dual: f64,
    pub slackness: f64,
    /// Condition, and the variable (or `n_vars + row`) where the largest
    /// residual occurred.
    pub worst: Option<(KktCondition, usize, f64)>,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal.max(self.dual).max(self.slackness)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual() < tol
    }

    fn note(&mut self, cond: KktCondition, index: usize, value: f64) {
        let slot = match cond {
            KktCondition::Primal => &mut self.primal,
            KktCondition::Dual => &mut self.dual,
            KktCondition::Slackness => &mut self.slackness,
        };
        if value > *slot {
            *slot = value;
        }
        if self.worst.map_or(value > 0.0, |(_, _, w)| value > w) {
            self.worst = Some((cond, index, value));
        }
    }
}

/// Audit a primal/dual pair: primal feasibility, sign-feasibility of the
/// bound multipliers, and complementary slackness.
///
/// Each column's reduced cost `d = c − Aᵀy` splits into a lower-bound
/// multiplier `max(d, 0)` and an upper-bound multiplier `max(−d, 0)`; a
/// multiplier on an infinite bound is a dual violation, and a multiplier
/// times its bound gap is a slackness violation. Two-sided rows are treated
/// the same way with `y_r` as the multiplier.
pub fn check_kkt(lp: &LpProblem, x: &[f64], duals: &[f64]) -> KktReport {
    let n = lp.n_vars();
    let ne = lp.eq_rows.len();
    let mut rep = KktReport { primal: 0.0, dual: 0.0, slackness: 0.0, worst: None };

    for j in 0..n {
        let v = (lp.lower[j] - x[j]).max(x[j] - lp.upper[j]).max(0.0);
        rep.note(KktCondition::Primal, j, v);
    }
    for (i, row) in lp.eq_rows.iter().enumerate() {
        rep.note(KktCondition::Primal, n + i, (dot(&row.coef, x) - row.rhs).abs());
    }
    let mut activity = Vec::with_capacity(lp.ineq_rows.len());
    for (r, row) in lp.ineq_rows.iter().enumerate() {
        let ax = dot(&row.coef, x);
        rep.note(KktCondition::Primal, n + ne + r, (row.lo - ax).max(ax - row.hi).max(0.0));
        activity.push(ax);
    }

    let audit = |rep: &mut KktReport, index: usize, d: f64, value: f64, lo: f64, hi: f64| {
        let (z_lo, z_hi) = (d.max(0.0), (-d).max(0.0));
        if lo.is_finite() {
            rep.note(KktCondition::Slackness, index, z_lo * (value - lo).abs());
        } else {
            rep.note(KktCondition::Dual, index, z_lo);
        }
        if hi.is_finite() {
            rep.note(KktCondition::Slackness, index, z_hi * (hi - value).abs());
        } else {
            rep.note(KktCondition::Dual, index, z_hi);
        }
    };
    for j in 0..n {
        let mut d = lp.cost[j];
        for (i, row) in lp.eq_rows.iter().enumerate() {
            d -= duals[i] * row.coef[j];
        }
        for (r, row) in lp.ineq_rows.iter().enumerate() {
            d -= duals[ne + r] * row.coef[j];
        }
        audit(&mut rep, j, d, x[j], lp.lower[j], lp.upper[j]);
    }
    for (r, row) in lp.ineq_rows.iter().enumerate() {
        audit(&mut rep, n + ne + r, duals[ne + r], activity[r], row.lo, row.hi);
    }
    rep
}
