"""Regenerate cases/ieee118.case from the MATPOWER/PYPOWER IEEE 118-bus data.

    pip install pypower
    python scripts/make_ieee118.py [--margin 1.1] [--floor 1.5] [--load-scale 1.0] > cases/ieee118.case

Conversions:
  * all power quantities are written in per-unit on base_mva;
  * the quadratic cost a*P^2 + b*P is replaced by its marginal cost at half
    of p_max (b + a*p_max), in $/MWh divided by 100, so one p.u. of
    generation for one hour costs (b + a*p_max) cost units;
  * all demand (P and Q) is multiplied by --load-scale (1.0 keeps the
    published values);
  * transformer taps are dropped; fixed shunts at load buses are folded into
    the reactive demand at nominal voltage and the two reactors at load-free
    buses are dropped;
  * line ratings in the source are placeholders (9900 MVA), so each rating
    is set to margin * max(|base DC flow|, |base AC flow at either end|),
    floored, where the base flows come from the unconstrained merit-order
    dispatch (the AC solve has no taps and no reactive limits,
    and the slack bus picks up losses). Branches at the slack bus also get
    the total base-case loss added before the margin, because in the AC
    solution all losses leave through them. This makes the intact case
    secure with a known loading headroom in both models.
  * shed_cost is left blank so the parser applies its default rule.
"""
import argparse

import numpy as np
from pypower.case118 import case118


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--margin", type=float, default=1.1)
    ap.add_argument("--floor", type=float, default=1.5)
    ap.add_argument("--load-scale", type=float, default=1.0)
    args = ap.parse_args()

    c = case118()
    base = c["baseMVA"]
    bus, gen, br, gc = c["bus"], c["gen"], c["branch"], c["gencost"]
    bus[:, 2:4] *= args.load_scale
    # fixed shunts at load buses become constant reactive demand at 1 p.u.
    # voltage; the two reactors sit at load-free buses and are dropped
    has_load = bus[:, 2] > 0
    bus[has_load, 3] -= bus[has_load, 5]
    bus[:, 5] = 0.0
    ids = bus[:, 0].astype(int)
    pos = {b: i for i, b in enumerate(ids)}
    n = len(ids)

    marginal = gc[:, 5] + gc[:, 4] * gen[:, 8]
    cost = marginal / 100.0

    # merit-order dispatch against total demand
    demand = bus[:, 2].sum() / base
    pg = np.zeros(len(gen))
    remaining = demand
    for i in sorted(range(len(gen)), key=lambda k: (cost[k], k)):
        take = min(gen[i, 8] / base, remaining)
        pg[i] = take
        remaining -= take
        if remaining <= 0:
            break

    inj = -bus[:, 2] / base
    for i, g in enumerate(gen):
        inj[pos[int(g[0])]] += pg[i]

    slack = int(np.where(bus[:, 1] == 3)[0][0])
    B = np.zeros((n, n))
    for l in br:
        f, t, bb = pos[int(l[0])], pos[int(l[1])], 1.0 / l[3]
        B[f, f] += bb
        B[t, t] += bb
        B[f, t] -= bb
        B[t, f] -= bb
    keep = [i for i in range(n) if i != slack]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], inj[keep])
    flows = np.array([(theta[pos[int(l[0])]] - theta[pos[int(l[1])]]) / l[3] for l in br])
    ac_from, ac_to = ac_branch_flows(bus, gen, br, pg, pos, slack, base)
    worst = np.maximum(np.abs(flows), np.maximum(np.abs(ac_from), np.abs(ac_to)))
    # the AC slack alone supplies the network losses, which the lossless
    # dispatch never sees; its branches get that much extra headroom
    losses = float(np.sum(ac_from + ac_to))
    at_slack = np.array([pos[int(l[0])] == slack or pos[int(l[1])] == slack for l in br])
    worst = np.where(at_slack, worst + losses, worst)
    rates = np.maximum(args.margin * worst, args.floor)

    vset = {int(g[0]): g[5] for g in gen}
    kinds = {1: "pq", 2: "pv", 3: "slack"}

    out = []
    out.append("# IEEE 118-bus system, per-unit on base_mva (derived from MATPOWER case118)")
    out.append("[meta]")
    out.append(fmt(base))
    out.append("[bus]")
    out.append("# id,kind,v_set,v_init,theta_init")
    for row in bus:
        b = int(row[0])
        kind = kinds[int(row[1])]
        vs = vset.get(b, 1.0) if kind != "pq" else 1.0
        out.append(",".join([str(b), kind, fmt(vs), fmt(row[7]), fmt(np.deg2rad(row[8]))]))
    out.append("[branch]")
    out.append("# from,to,r,x,b,rate,in_service")
    for l, rate in zip(br, rates):
        out.append(",".join([str(int(l[0])), str(int(l[1])), fmt(l[2]), fmt(l[3]), fmt(l[4]),
                             fmt(round(rate, 4)), "1"]))
    out.append("[gen]")
    out.append("# bus,p_min,p_max,q_min,q_max,cost,in_service")
    for g, cc in zip(gen, cost):
        out.append(",".join([str(int(g[0])), fmt(g[9] / base), fmt(g[8] / base), fmt(g[4] / base),
                             fmt(g[3] / base), fmt(round(cc, 6)), "1"]))
    out.append("[load]")
    out.append("# bus,p_demand,q_demand,shed_cost,in_service")
    for row in bus:
        if row[2] > 0:
            out.append(",".join([str(int(row[0])), fmt(row[2] / base), fmt(row[3] / base), "", "1"]))
    print("\n".join(out))


def ac_branch_flows(bus, gen, br, pg, pos, slack, base):
    """Polar Newton-Raphson on the tap-free, shunt-free model."""
    n = len(bus)
    Y = np.zeros((n, n), dtype=complex)
    for l in br:
        f, t = pos[int(l[0])], pos[int(l[1])]
        y = 1.0 / complex(l[2], l[3])
        sh = 0.5j * l[4]
        Y[f, f] += y + sh
        Y[t, t] += y + sh
        Y[f, t] -= y
        Y[t, f] -= y
    sbus = -(bus[:, 2] + 1j * bus[:, 3]) / base
    vm = np.ones(n)
    for i, g in enumerate(gen):
        k = pos[int(g[0])]
        sbus[k] += pg[i]
        vm[k] = g[5]
    pv = sorted({pos[int(g[0])] for g in gen} - {slack})
    pq = [i for i in range(n) if i != slack and i not in set(pv)]
    pvpq = pv + pq
    va = np.zeros(n)
    for _ in range(30):
        v = vm * np.exp(1j * va)
        mis = v * np.conj(Y @ v) - sbus
        f = np.r_[mis[pvpq].real, mis[pq].imag]
        if np.max(np.abs(f)) < 1e-10:
            break
        ibus = Y @ v
        dva = 1j * np.diag(v) @ np.conj(np.diag(ibus) - Y @ np.diag(v))
        dvm = np.diag(v) @ np.conj(Y @ np.diag(v / np.abs(v))) + np.conj(np.diag(ibus)) @ np.diag(v / np.abs(v))
        J = np.block([[dva[np.ix_(pvpq, pvpq)].real, dvm[np.ix_(pvpq, pq)].real],
                      [dva[np.ix_(pq, pvpq)].imag, dvm[np.ix_(pq, pq)].imag]])
        dx = -np.linalg.solve(J, f)
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    else:
        raise RuntimeError("base AC power flow did not converge")
    v = vm * np.exp(1j * va)
    sf, st = [], []
    for l in br:
        f, t = pos[int(l[0])], pos[int(l[1])]
        y = 1.0 / complex(l[2], l[3])
        sh = 0.5j * l[4]
        sf.append((v[f] * np.conj((y + sh) * v[f] - y * v[t])).real)
        st.append((v[t] * np.conj((y + sh) * v[t] - y * v[f])).real)
    return np.array(sf), np.array(st)


def fmt(v):
    v = float(v)
    if v == int(v):
        return str(int(v))
    return repr(round(v, 10))


if __name__ == "__main__":
    main()
