use num_complex::Complex64;

use super::ybus::branch_admittance;
use super::{build_ybus, PfSolution, Ybus};
use super::{MAX_NEWTON_ITERATIONS, MAX_RETYPE_PASSES, MISMATCH_TOLERANCE};
use crate::dcopf::DispatchResult;
use crate::linalg::Lu;
use crate::net_model::{BusKind, Network};

#[derive(Debug, Clone, Copy)]
pub struct AcOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_retype_passes: usize,
}

impl Default for AcOptions {
    fn default() -> Self {
        AcOptions {
            max_iterations: MAX_NEWTON_ITERATIONS,
            tolerance: MISMATCH_TOLERANCE,
            max_retype_passes: MAX_RETYPE_PASSES,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Slack,
    Pv,
    Pq,
}

/// AC power flow for a DCOPF dispatch. Served load keeps its power factor.
pub fn ac_power_flow(net: &Network, dispatch: &DispatchResult) -> PfSolution {
    ac_power_flow_with(net, &dispatch.p_gen, &dispatch.p_load_served, AcOptions::default())
}

/// Newton-Raphson from a flat start with explicit generator outputs and
/// served loads (both indexed like the network's records).
///
/// Non-convergence is reported through `converged = false`, never as an error.
pub fn ac_power_flow_with(net: &Network, p_gen: &[f64], p_load: &[f64], opts: AcOptions) -> PfSolution {
    let n = net.n_bus();
    let ybus = match build_ybus(net) {
        Ok(y) => y,
        Err(_) => return diverged(net, 0, f64::INFINITY),
    };
    let lookup = net.bus_lookup();

    let mut p_spec = vec![0.0; n];
    let mut q_load = vec![0.0; n];
    let mut q_min = vec![0.0; n];
    let mut q_max = vec![0.0; n];
    let mut has_gen = vec![false; n];
    for (g, &p) in net.generators.iter().zip(p_gen) {
        if !g.in_service {
            continue;
        }
        let i = lookup[&g.bus];
        p_spec[i] += p;
        q_min[i] += g.q_min;
        q_max[i] += g.q_max;
        has_gen[i] = true;
    }
    for (l, &p) in net.loads.iter().zip(p_load) {
        if !l.in_service {
            continue;
        }
        let i = lookup[&l.bus];
        p_spec[i] -= p;
        let frac = if l.p_demand > 0.0 { p / l.p_demand } else { 0.0 };
        q_load[i] += l.q_demand * frac;
    }
    let mut q_spec: Vec<f64> = q_load.iter().map(|q| -q).collect();

    let mut kind: Vec<Kind> = net
        .buses
        .iter()
        .zip(&has_gen)
        .map(|(b, &g)| match b.kind {
            BusKind::Slack => Kind::Slack,
            BusKind::Pv if g => Kind::Pv,
            _ => Kind::Pq,
        })
        .collect();
    if !kind.contains(&Kind::Slack) {
        return diverged(net, 0, f64::INFINITY);
    }

    // flat start; regulated buses sit at their set-point
    let mut v: Vec<f64> =
        net.buses.iter().zip(&kind).map(|(b, k)| if *k == Kind::Pq { 1.0 } else { b.v_set }).collect();
    let mut theta = vec![0.0; n];
    let mut q_clamped = vec![false; n];

    let mut iterations = 0;
    let mut passes = 0;
    let (converged, mismatch) = loop {
        let (ok, mm, used) = newton(&ybus, &kind, &p_spec, &q_spec, &mut v, &mut theta, opts, iterations);
        iterations = used;
        if !ok {
            break (false, mm);
        }
        if passes >= opts.max_retype_passes {
            break (true, mm);
        }
        let (_, q_calc) = injections(&ybus, &v, &theta);
        let mut changed = false;
        for i in 0..n {
            if kind[i] != Kind::Pv {
                continue;
            }
            let q_gen = q_calc[i] + q_load[i];
            let limit = if q_gen > q_max[i] + 1e-9 {
                Some(q_max[i])
            } else if q_gen < q_min[i] - 1e-9 {
                Some(q_min[i])
            } else {
                None
            };
            if let Some(lim) = limit {
                kind[i] = Kind::Pq;
                q_spec[i] = lim - q_load[i];
                q_clamped[i] = true;
                changed = true;
            }
        }
        if !changed {
            break (true, mm);
        }
        passes += 1;
    };

    if !converged {
        return diverged(net, iterations, mismatch);
    }

    let (p_inj, q_inj) = injections(&ybus, &v, &theta);
    let volts: Vec<Complex64> = v.iter().zip(&theta).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let mut flow_from = vec![0.0; net.branches.len()];
    let mut loading = vec![0.0; net.branches.len()];
    for (l, br) in net.branches.iter().enumerate().filter(|(_, b)| b.in_service) {
        let (f, t) = (lookup[&br.from_bus], lookup[&br.to_bus]);
        let (y, sh) = branch_admittance(br.r, br.x, br.b_charge);
        let i_from = (y + sh) * volts[f] - y * volts[t];
        let s = volts[f] * i_from.conj();
        flow_from[l] = s.re;
        loading[l] = s.re.abs() / br.rate;
    }
    PfSolution {
        converged: true,
        iterations,
        v,
        theta,
        p_inj,
        q_inj,
        flow_from,
        loading,
        max_mismatch: mismatch,
        q_clamped,
    }
}

fn diverged(net: &Network, iterations: usize, mismatch: f64) -> PfSolution {
    let n = net.n_bus();
    let m = net.branches.len();
    PfSolution {
        converged: false,
        iterations,
        v: vec![0.0; n],
        theta: vec![0.0; n],
        p_inj: vec![0.0; n],
        q_inj: vec![0.0; n],
        flow_from: vec![0.0; m],
        loading: vec![0.0; m],
        max_mismatch: mismatch,
        q_clamped: vec![false; n],
    }
}

/// Bus injections `S = V · conj(Y V)` split into (P, Q).
fn injections(y: &Ybus, v: &[f64], theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = y.n;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let (mut pi, mut qi) = (0.0, 0.0);
        for k in 0..n {
            let yik = y.data[i * n + k];
            if yik.re == 0.0 && yik.im == 0.0 {
                continue;
            }
            let (s, c) = (theta[i] - theta[k]).sin_cos();
            pi += v[k] * (yik.re * c + yik.im * s);
            qi += v[k] * (yik.re * s - yik.im * c);
        }
        p[i] = v[i] * pi;
        q[i] = v[i] * qi;
    }
    (p, q)
}

/// Run Newton iterations until the mismatch drops below tolerance, the
/// iteration budget is spent or the iterate blows up. Returns
/// (converged, final max mismatch, iterations used so far).
#[allow(clippy::too_many_arguments)]
fn newton(
    y: &Ybus,
    kind: &[Kind],
    p_spec: &[f64],
    q_spec: &[f64],
    v: &mut [f64],
    theta: &mut [f64],
    opts: AcOptions,
    mut iterations: usize,
) -> (bool, f64, usize) {
    let n = y.n;
    let ang: Vec<usize> = (0..n).filter(|&i| kind[i] != Kind::Slack).collect();
    let mag: Vec<usize> = (0..n).filter(|&i| kind[i] == Kind::Pq).collect();
    let (na, nm) = (ang.len(), mag.len());
    let dim = na + nm;
    let mut col_of_ang = vec![usize::MAX; n];
    let mut col_of_mag = vec![usize::MAX; n];
    for (c, &i) in ang.iter().enumerate() {
        col_of_ang[i] = c;
    }
    for (c, &i) in mag.iter().enumerate() {
        col_of_mag[i] = na + c;
    }

    loop {
        let (p, q) = injections(y, v, theta);
        let mut rhs = Vec::with_capacity(dim);
        rhs.extend(ang.iter().map(|&i| p_spec[i] - p[i]));
        rhs.extend(mag.iter().map(|&i| q_spec[i] - q[i]));
        let mm = rhs.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if !mm.is_finite() || mm > 1e8 {
            return (false, mm, iterations);
        }
        if mm < opts.tolerance {
            return (true, mm, iterations);
        }
        if iterations >= opts.max_iterations {
            return (false, mm, iterations);
        }
        iterations += 1;

        let mut jac = vec![0.0; dim * dim];
        for (r, &i) in ang.iter().enumerate() {
            fill_row(y, v, theta, i, p[i], q[i], &col_of_ang, &col_of_mag, true, &mut jac[r * dim..(r + 1) * dim]);
        }
        for (r, &i) in mag.iter().enumerate() {
            let row = na + r;
            fill_row(y, v, theta, i, p[i], q[i], &col_of_ang, &col_of_mag, false, &mut jac[row * dim..(row + 1) * dim]);
        }
        let dx = match Lu::factor(jac, dim) {
            Ok(lu) => lu.solve(&rhs),
            Err(_) => return (false, mm, iterations),
        };
        for (c, &i) in ang.iter().enumerate() {
            theta[i] += dx[c];
        }
        for (c, &i) in mag.iter().enumerate() {
            v[i] += dx[na + c];
        }
    }
}

/// One Jacobian row: derivatives of P_i (or Q_i) w.r.t. the angle and
/// magnitude unknowns.
#[allow(clippy::too_many_arguments)]
fn fill_row(
    y: &Ybus,
    v: &[f64],
    theta: &[f64],
    i: usize,
    pi: f64,
    qi: f64,
    col_of_ang: &[usize],
    col_of_mag: &[usize],
    active: bool,
    row: &mut [f64],
) {
    let n = y.n;
    for k in 0..n {
        let yik = y.data[i * n + k];
        if k != i && yik.re == 0.0 && yik.im == 0.0 {
            continue;
        }
        let (g, b) = (yik.re, yik.im);
        let (d_theta, d_v) = if k == i {
            if active {
                (-qi - b * v[i] * v[i], pi / v[i] + g * v[i])
            } else {
                (pi - g * v[i] * v[i], qi / v[i] - b * v[i])
            }
        } else {
            let (s, c) = (theta[i] - theta[k]).sin_cos();
            if active {
                (v[i] * v[k] * (g * s - b * c), v[i] * (g * c + b * s))
            } else {
                (-v[i] * v[k] * (g * c + b * s), v[i] * (g * s - b * c))
            }
        };
        if col_of_ang[k] != usize::MAX {
            row[col_of_ang[k]] = d_theta;
        }
        if col_of_mag[k] != usize::MAX {
            row[col_of_mag[k]] = d_v;
        }
    }
}
