//! DC optimal power flow used as the corrective control after each failure
//! event: redispatch generation and shed load at minimum cost subject to the
//! α-scaled branch flow band.
//!
//! Loads are consumption-positive in [`Network`], but inside the LP each load
//! is a non-positive injection `p_j ∈ [−P_d, 0]` so that the balance row is a
//! plain sum. Shedding cost `d_j (p_j + P_d)` becomes a linear term plus a
//! constant offset.

mod lp;
mod ptdf;

pub use lp::{
    check_kkt, solve_lp, EqRow, KktCondition, KktReport, LpError, LpProblem, LpSolution, LpStatus, RangeRow,
    FEASIBILITY_TOLERANCE, PIVOT_TOLERANCE,
};
pub use ptdf::{build_ptdf, topology_hash, Ptdf};

use serde::Serialize;
use thiserror::Error;

use crate::net_model::Network;
use crate::pf::PfError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcopfError {
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("PTDF was built for a different topology")]
    StalePtdf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchResult {
    pub feasible: bool,
    /// Per generator record; zero when out of service.
    pub p_gen: Vec<f64>,
    /// Per load record, consumption-positive.
    pub p_load_served: Vec<f64>,
    pub shed_total: f64,
    pub objective: f64,
    pub alpha_used: f64,
}

impl DispatchResult {
    fn infeasible(net: &Network, alpha: f64) -> Self {
        DispatchResult {
            feasible: false,
            p_gen: vec![0.0; net.generators.len()],
            p_load_served: vec![0.0; net.loads.len()],
            shed_total: 0.0,
            objective: f64::INFINITY,
            alpha_used: alpha,
        }
    }

    /// Net injection per bus.
    pub fn injections(&self, net: &Network) -> Vec<f64> {
        let lookup = net.bus_lookup();
        let mut p = vec![0.0; net.n_bus()];
        for (g, &v) in net.generators.iter().zip(&self.p_gen) {
            p[lookup[&g.bus]] += v;
        }
        for (l, &v) in net.loads.iter().zip(&self.p_load_served) {
            p[lookup[&l.bus]] -= v;
        }
        p
    }
}

/// In-service branch positions in the order their flow rows appear.
pub fn flow_row_branches(net: &Network) -> Vec<usize> {
    net.branches.iter().enumerate().filter(|(_, b)| b.in_service).map(|(i, _)| i).collect()
}

/// Build the DCOPF LP. Variables are generator injections followed by load
/// injections; flow rows limit each in-service branch to `±alpha·rate`.
pub fn assemble_lp(net: &Network, ptdf: &Ptdf, alpha: f64) -> LpProblem {
    let ng = net.generators.len();
    let nl = net.loads.len();
    let lookup = net.bus_lookup();
    let var_bus: Vec<usize> =
        net.generators.iter().map(|g| lookup[&g.bus]).chain(net.loads.iter().map(|l| lookup[&l.bus])).collect();

    let mut cost = Vec::with_capacity(ng + nl);
    let mut lower = Vec::with_capacity(ng + nl);
    let mut upper = Vec::with_capacity(ng + nl);
    let mut offset = 0.0;
    for g in &net.generators {
        cost.push(g.cost);
        if g.in_service {
            lower.push(g.p_min);
            upper.push(g.p_max);
        } else {
            lower.push(0.0);
            upper.push(0.0);
        }
    }
    for l in &net.loads {
        cost.push(l.shed_cost);
        if l.in_service {
            lower.push(-l.p_demand);
            offset += l.shed_cost * l.p_demand;
        } else {
            lower.push(0.0);
        }
        upper.push(0.0);
    }

    let eq_rows = vec![EqRow { coef: vec![1.0; ng + nl], rhs: 0.0 }];
    let ineq_rows = flow_row_branches(net)
        .into_iter()
        .map(|l| {
            let limit = alpha * net.branches[l].rate;
            RangeRow { coef: var_bus.iter().map(|&b| ptdf.matrix[l][b]).collect(), lo: -limit, hi: limit }
        })
        .collect();
    LpProblem { cost, offset, lower, upper, eq_rows, ineq_rows }
}

/// Everything produced by one DCOPF solve.
#[derive(Debug, Clone)]
pub struct DcopfSolution {
    pub lp: LpProblem,
    pub solution: LpSolution,
    pub dispatch: DispatchResult,
}

/// Solve `lp` by adding flow rows only once they are violated. The optimum
/// of a relaxation that satisfies every omitted row is optimal for the full
/// problem, and omitted rows get zero multipliers.
fn solve_with_lazy_rows(lp: &LpProblem) -> Result<LpSolution, LpError> {
    let ne = lp.eq_rows.len();
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; lp.ineq_rows.len()];
    let mut iterations = 0;
    loop {
        let sub = LpProblem {
            cost: lp.cost.clone(),
            offset: lp.offset,
            lower: lp.lower.clone(),
            upper: lp.upper.clone(),
            eq_rows: lp.eq_rows.clone(),
            ineq_rows: active.iter().map(|&r| lp.ineq_rows[r].clone()).collect(),
        };
        let mut sol = solve_lp(&sub)?;
        iterations += sol.iterations;
        sol.iterations = iterations;
        if sol.status == LpStatus::Infeasible {
            return Ok(sol);
        }
        let before = active.len();
        for (r, row) in lp.ineq_rows.iter().enumerate() {
            if in_active[r] {
                continue;
            }
            let ax: f64 = row.coef.iter().zip(&sol.x).map(|(a, v)| a * v).sum();
            if ax > row.hi || ax < row.lo {
                in_active[r] = true;
                active.push(r);
            }
        }
        if active.len() == before {
            let mut duals = vec![0.0; ne + lp.ineq_rows.len()];
            duals[..ne].copy_from_slice(&sol.duals[..ne]);
            for (k, &r) in active.iter().enumerate() {
                duals[ne + r] = sol.duals[ne + k];
            }
            sol.duals = duals;
            return Ok(sol);
        }
    }
}

/// Solve the DCOPF with a prebuilt PTDF.
pub fn solve_dcopf(net: &Network, ptdf: &Ptdf, alpha: f64) -> Result<DcopfSolution, DcopfError> {
    if !ptdf.is_current(net) {
        return Err(DcopfError::StalePtdf);
    }
    let lp = assemble_lp(net, ptdf, alpha);
    let solution = solve_with_lazy_rows(&lp)?;
    let dispatch = if solution.status == LpStatus::Optimal {
        let ng = net.generators.len();
        let p_gen: Vec<f64> = net
            .generators
            .iter()
            .zip(&solution.x[..ng])
            .map(|(g, &v)| if g.in_service { v.clamp(g.p_min, g.p_max) } else { 0.0 })
            .collect();
        let p_load_served: Vec<f64> = net
            .loads
            .iter()
            .zip(&solution.x[ng..])
            .map(|(l, &v)| if l.in_service { (-v).clamp(0.0, l.p_demand) } else { 0.0 })
            .collect();
        let shed_total =
            net.loads.iter().zip(&p_load_served).filter(|(l, _)| l.in_service).map(|(l, s)| l.p_demand - s).sum();
        DispatchResult {
            feasible: true,
            p_gen,
            p_load_served,
            shed_total,
            objective: solution.objective,
            alpha_used: alpha,
        }
    } else {
        DispatchResult::infeasible(net, alpha)
    };
    Ok(DcopfSolution { lp, solution, dispatch })
}

/// Build the PTDF, assemble and solve the LP, and map the result back to
/// consumption-positive dispatch. A network without any in-service
/// generator is reported infeasible without solving.
pub fn run_dcopf(net: &Network, alpha: f64) -> Result<DispatchResult, DcopfError> {
    if !net.generators.iter().any(|g| g.in_service) {
        return Ok(DispatchResult::infeasible(net, alpha));
    }
    let slack = net.slack_index().ok_or(PfError::NoSlack)?;
    let ptdf = build_ptdf(net, net.buses[slack].id)?;
    Ok(solve_dcopf(net, &ptdf, alpha)?.dispatch)
}
