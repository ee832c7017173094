//! Power-flow residuals computed straight from the pi model of each branch.

use cascade_rl::net_model::{BusKind, Network};
use cascade_rl::pf::PfSolution;
use num_complex::Complex64;

/// Complex power drawn out of each bus by the network, from the pi model of
/// every in-service branch.
pub fn network_injections(net: &Network, sol: &PfSolution) -> Vec<Complex64> {
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let v: Vec<Complex64> = sol.v.iter().zip(&sol.theta).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
    let mut s = vec![Complex64::new(0.0, 0.0); net.buses.len()];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let sh = Complex64::new(0.0, br.b_charge / 2.0);
        let i_f = (y + sh) * v[f] - y * v[t];
        let i_t = (y + sh) * v[t] - y * v[f];
        s[f] += v[f] * i_f.conj();
        s[t] += v[t] * i_t.conj();
    }
    s
}

pub fn from_end_flows(net: &Network, sol: &PfSolution) -> Vec<f64> {
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    net.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return 0.0;
            }
            let (f, t) = (pos(br.from_bus), pos(br.to_bus));
            let vf = Complex64::from_polar(sol.v[f], sol.theta[f]);
            let vt = Complex64::from_polar(sol.v[t], sol.theta[t]);
            let y = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let i_f = (y + Complex64::new(0.0, br.b_charge / 2.0)) * vf - y * vt;
            (vf * i_f.conj()).re
        })
        .collect()
}

/// Largest active mismatch over non-slack buses and reactive mismatch over
/// PQ buses (generator buses that hit a limit count as PQ at that limit).
pub fn specified_mismatch(net: &Network, sol: &PfSolution, p_gen: &[f64], p_load: &[f64]) -> f64 {
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let n = net.buses.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut has_gen = vec![false; n];
    let mut q_lim = vec![(0.0, 0.0); n];
    for (g, &pg) in net.generators.iter().zip(p_gen) {
        if g.in_service {
            let i = pos(g.bus);
            p[i] += pg;
            has_gen[i] = true;
            q_lim[i].0 += g.q_min;
            q_lim[i].1 += g.q_max;
        }
    }
    for (l, &pl) in net.loads.iter().zip(p_load) {
        if l.in_service {
            let i = pos(l.bus);
            p[i] -= pl;
            let pf_ratio = if l.p_demand != 0.0 { pl / l.p_demand } else { 1.0 };
            q[i] -= l.q_demand * pf_ratio;
        }
    }
    let s = network_injections(net, sol);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let kind = net.buses[i].kind;
        if kind == BusKind::Slack {
            continue;
        }
        worst = worst.max((s[i].re - p[i]).abs());
        let pv = kind == BusKind::Pv && has_gen[i];
        if !pv {
            worst = worst.max((s[i].im - q[i]).abs());
        } else if sol.q_clamped[i] {
            let q_gen = s[i].im - q[i];
            let at_limit = (q_gen - q_lim[i].0).abs().min((q_gen - q_lim[i].1).abs());
            worst = worst.max(at_limit);
        }
    }
    worst
}
