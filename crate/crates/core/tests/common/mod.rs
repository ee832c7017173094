//! Shared fixtures and independent oracles for the integration tests.
//!
//! Nothing here calls into the solver code it is used to check: the DCOPF
//! oracle builds its own sensitivities and enumerates vertices, and the
//! component oracle is a plain breadth-first search.
#![allow(dead_code)]

pub mod ac;
pub mod learning;

use std::collections::VecDeque;
use std::path::PathBuf;

use cascade_rl::net_model::{parse_case, Branch, Bus, BusKind, Generator, Load, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn case_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases/ieee118.case")
}

pub fn ieee118() -> Network {
    parse_case(&std::fs::read_to_string(case_path()).unwrap()).unwrap()
}

pub fn bus(id: u32, kind: BusKind) -> Bus {
    Bus { id, kind, v_set: 1.0, v_init: 1.0, theta_init: 0.0 }
}

pub fn line(from: u32, to: u32, x: f64, rate: f64) -> Branch {
    Branch { from_bus: from, to_bus: to, r: 0.0, x, b_charge: 0.0, rate, in_service: true }
}

pub fn gen(bus: u32, p_max: f64, cost: f64) -> Generator {
    Generator { bus, p_min: 0.0, p_max, q_min: -10.0, q_max: 10.0, cost, in_service: true }
}

pub fn load(bus: u32, p: f64, shed_cost: f64) -> Load {
    Load { bus, p_demand: p, q_demand: 0.0, shed_cost, in_service: true }
}

/// `n` identical parallel lines from slack bus 1 to a load bus 2.
pub fn parallel_pair(n: usize, x: f64, rate: f64, demand: f64) -> Network {
    Network {
        base_mva: 100.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        branches: (0..n).map(|_| line(1, 2, x, rate)).collect(),
        generators: vec![gen(1, 100.0, 1.0)],
        loads: vec![load(2, demand, 100.0)],
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SmallNetSpec {
    pub max_bus: usize,
    pub max_branch: usize,
    /// Allow positive generator minimums, which can make the dispatch
    /// infeasible.
    pub positive_p_min: bool,
    /// Give branches resistance and charging, for AC checks.
    pub lossy: bool,
}

impl Default for SmallNetSpec {
    fn default() -> Self {
        SmallNetSpec { max_bus: 4, max_branch: 5, positive_p_min: false, lossy: false }
    }
}

/// Connected random network: a random spanning tree plus extra (possibly
/// parallel) branches, one or two generators and one or two loads.
pub fn random_small_net(seed: u64, spec: SmallNetSpec) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=spec.max_bus);
    let mut branches = Vec::new();
    let mk = |rng: &mut ChaCha8Rng, f: u32, t: u32| {
        let x = round3(rng.gen_range(0.05..0.5));
        let rate = round3(rng.gen_range(0.2..1.5));
        let mut b = line(f, t, x, rate);
        if spec.lossy {
            b.r = round3(x * rng.gen_range(0.0..0.3));
            b.b_charge = round3(rng.gen_range(0.0..0.05));
        }
        b
    };
    for k in 2..=n as u32 {
        let j = rng.gen_range(1..k);
        branches.push(mk(&mut rng, j, k));
    }
    if n >= 2 {
        while branches.len() < spec.max_branch && rng.gen_bool(0.6) {
            let f = rng.gen_range(1..=n as u32);
            let mut t = rng.gen_range(1..=n as u32);
            while t == f {
                t = rng.gen_range(1..=n as u32);
            }
            branches.push(mk(&mut rng, f, t));
        }
    }
    let mut generators = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        let mut g = gen(rng.gen_range(1..=n as u32), round3(rng.gen_range(0.5..2.0)), round3(rng.gen_range(1.0..10.0)));
        if spec.positive_p_min && rng.gen_bool(0.3) {
            g.p_min = round3(g.p_max * rng.gen_range(0.1..0.9));
        }
        generators.push(g);
    }
    let max_cost = generators.iter().map(|g| g.cost).fold(0.0, f64::max);
    let mut loads = Vec::new();
    for _ in 0..rng.gen_range(1..=2) {
        let mut l = load(rng.gen_range(1..=n as u32), round3(rng.gen_range(0.2..1.5)), 100.0 * max_cost);
        if spec.lossy {
            l.q_demand = round3(l.p_demand * rng.gen_range(0.0..0.3));
        }
        loads.push(l);
    }
    let gen_buses: Vec<u32> = generators.iter().map(|g| g.bus).collect();
    let buses = (1..=n as u32)
        .map(|id| {
            let kind = if id == 1 {
                BusKind::Slack
            } else if gen_buses.contains(&id) {
                BusKind::Pv
            } else {
                BusKind::Pq
            };
            bus(id, kind)
        })
        .collect();
    Network { base_mva: 100.0, buses, branches, generators, loads }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Bus-id components by breadth-first search over in-service branches,
/// each sorted, listed in order of their smallest id.
pub fn bfs_components(net: &Network) -> Vec<Vec<u32>> {
    let ids: Vec<u32> = net.buses.iter().map(|b| b.id).collect();
    let pos = |id: u32| ids.iter().position(|&i| i == id).unwrap();
    let mut adj = vec![Vec::new(); ids.len()];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut seen = vec![false; ids.len()];
    let mut out = Vec::new();
    for s in 0..ids.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![ids[s]];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(ids[v]);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort();
    out
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Branch × bus DC sensitivities with the slack as reference, built from
/// an explicit inverse of the reduced susceptance matrix.
pub fn oracle_ptdf(net: &Network) -> Vec<Vec<f64>> {
    let n = net.buses.len();
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let slack = net.buses.iter().position(|b| b.kind == BusKind::Slack).unwrap();
    let mut bmat = vec![vec![0.0; n]; n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t, y) = (pos(br.from_bus), pos(br.to_bus), 1.0 / br.x);
        bmat[f][f] += y;
        bmat[t][t] += y;
        bmat[f][t] -= y;
        bmat[t][f] -= y;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let reduced: Vec<Vec<f64>> = keep.iter().map(|&i| keep.iter().map(|&j| bmat[i][j]).collect()).collect();
    // column k of the inverse, scattered back to full bus indexing
    let mut x = vec![vec![0.0; n]; n];
    for (kc, &k) in keep.iter().enumerate() {
        let mut e = vec![0.0; keep.len()];
        e[kc] = 1.0;
        let col = dense_solve(reduced.clone(), e).expect("connected network");
        for (ic, &i) in keep.iter().enumerate() {
            x[i][k] = col[ic];
        }
    }
    net.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return vec![0.0; n];
            }
            let (f, t) = (pos(br.from_bus), pos(br.to_bus));
            (0..n).map(|k| (x[f][k] - x[t][k]) / br.x).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleOutcome {
    Optimal(f64),
    Infeasible,
}

/// Minimum dispatch cost by exhaustive vertex enumeration. Variables are
/// generator outputs and served loads; the cost counts unserved demand at
/// its shedding price.
pub fn dcopf_oracle(net: &Network, alpha: f64) -> OracleOutcome {
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let ptdf = oracle_ptdf(net);
    // (bus, sign, lower, upper, cost) per variable
    let mut vars: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    let mut constant = 0.0;
    for g in net.generators.iter().filter(|g| g.in_service) {
        vars.push((pos(g.bus), 1.0, g.p_min, g.p_max, g.cost));
    }
    for l in net.loads.iter().filter(|l| l.in_service) {
        vars.push((pos(l.bus), -1.0, 0.0, l.p_demand, -l.shed_cost));
        constant += l.shed_cost * l.p_demand;
    }
    let n = vars.len();
    if n == 0 {
        return OracleOutcome::Optimal(constant);
    }
    let eq: Vec<f64> = vars.iter().map(|v| v.1).collect();
    // a·x ≤ b
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
    for (k, v) in vars.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        ineq.push((e.clone(), v.3));
        e[k] = -1.0;
        ineq.push((e, -v.2));
    }
    for (l, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let row: Vec<f64> = vars.iter().map(|v| ptdf[l][v.0] * v.1).collect();
        let lim = alpha * br.rate;
        ineq.push((row.clone(), lim));
        ineq.push((row.iter().map(|a| -a).collect(), lim));
    }
    let feasible = |x: &[f64]| {
        let bal: f64 = eq.iter().zip(x).map(|(a, v)| a * v).sum();
        bal.abs() < 1e-9 && ineq.iter().all(|(a, b)| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9)
    };
    let mut best: Option<f64> = None;
    let mut choose = vec![0usize; n - 1];
    enumerate_subsets(ineq.len(), n - 1, 0, 0, &mut choose, &mut |subset| {
        let mut a = vec![eq.clone()];
        let mut b = vec![0.0];
        for &i in subset {
            a.push(ineq[i].0.clone());
            b.push(ineq[i].1);
        }
        if let Some(x) = dense_solve(a, b) {
            if feasible(&x) {
                let obj = constant + vars.iter().zip(&x).map(|(v, xv)| v.4 * xv).sum::<f64>();
                best = Some(best.map_or(obj, |b: f64| b.min(obj)));
            }
        }
    });
    match best {
        Some(v) => OracleOutcome::Optimal(v),
        None => OracleOutcome::Infeasible,
    }
}

fn enumerate_subsets(
    m: usize,
    k: usize,
    start: usize,
    depth: usize,
    buf: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if depth == k {
        f(buf);
        return;
    }
    for i in start..m {
        buf[depth] = i;
        enumerate_subsets(m, k, i + 1, depth + 1, buf, f);
    }
}

/// Upper root of `V⁴ − V² + (P·x)² = 0`, the receiving-end voltage of a
/// lossless line feeding a unity-power-factor load from a 1 p.u. source,
/// found by scanning then bisecting the residual.
pub fn two_bus_voltage(p: f64, x: f64) -> Option<f64> {
    let f = |v: f64| v.powi(4) - v * v + (p * x).powi(2);
    let steps = 100_000;
    let mut hi = 1.0;
    for k in (0..steps).rev() {
        let lo = k as f64 / steps as f64;
        if f(lo) <= 0.0 && f(hi) >= 0.0 && lo > 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if f(m) <= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        hi = lo;
    }
    None
}
