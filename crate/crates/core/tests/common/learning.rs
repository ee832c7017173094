//! Gradient probes and a two-state MDP with value-iteration answers.

use std::time::{Duration, Instant};

use cascade_rl::agent::{NetKind, Transition, ValueNet, N_ACTIONS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_state(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Network of `kind` with every parameter, biases included, drawn at random,
/// so no rectifier input sits exactly on its kink.
pub fn randomized(kind: NetKind, dim: usize, seed: u64) -> ValueNet {
    let mut r = rng(seed);
    let mut net = match kind {
        NetKind::Shallow => ValueNet::shallow(dim, &mut r),
        NetKind::Deep => ValueNet::deep(dim, &mut r),
        NetKind::Linear => ValueNet::linear(dim, N_ACTIONS),
    };
    for p in net.params_mut() {
        *p = r.gen_range(-0.5..0.5);
    }
    net
}

/// Worst disagreement between `backward` and central differences over all
/// weights of a random instance. Entries whose absolute gap is below 1e-7
/// count as exact; the rest are measured relatively.
pub fn gradient_error(kind: NetKind, dim: usize, seed: u64) -> f64 {
    let net = randomized(kind, dim, seed);
    let mut r = rng(seed ^ 0xfeed);
    let state = random_state(&mut r, dim);
    let action = r.gen_range(0..N_ACTIONS);
    let grad = net.backward(&state, action, 1.0);
    assert_eq!(grad.len(), net.n_params());
    let h = 1e-6;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for k in 0..net.n_params() {
        let p = net.params()[k];
        probe.params_mut()[k] = p + h;
        let up = probe.q_value(&state, action);
        probe.params_mut()[k] = p - h;
        let down = probe.q_value(&state, action);
        probe.params_mut()[k] = p;
        let fd = (up - down) / (2.0 * h);
        let abs = (fd - grad[k]).abs();
        if abs >= 1e-7 {
            worst = worst.max(abs / fd.abs().max(grad[k].abs()));
        }
    }
    worst
}

/// Two states, two actions, deterministic moves. Action 0 stays in state 0
/// (reward 1) or moves from state 1 to state 0 (reward 0); action 1 moves
/// to state 1, paying 2 when already there.
pub const NEXT: [[usize; 2]; 2] = [[0, 1], [0, 1]];
pub const REWARD: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 2.0]];
pub const GAMMA: f64 = 0.7;

/// Fixed point of `Q(s,a) = r + γ·next(s′)` by value iteration, where
/// `next` is the greedy value or the value of a fixed policy.
pub fn toy_oracle(policy: Option<[usize; 2]>) -> [[f64; 2]; 2] {
    let mut q = [[0.0f64; 2]; 2];
    for _ in 0..500 {
        let mut n = q;
        for s in 0..2 {
            for a in 0..2 {
                let s2 = NEXT[s][a];
                let v = match policy {
                    Some(pi) => q[s2][pi[s2]],
                    None => q[s2][0].max(q[s2][1]),
                };
                n[s][a] = REWARD[s][a] + GAMMA * v;
            }
        }
        q = n;
    }
    q
}

pub fn one_hot(s: usize) -> Vec<f64> {
    let mut v = vec![0.0; 2];
    v[s] = 1.0;
    v
}

/// Sweep every (state, action) pair with `update` until the table is within
/// 1e-2 of `target`; returns the number of updates used.
pub fn learn_toy(target: [[f64; 2]; 2], mut update: impl FnMut(&mut ValueNet, usize, usize)) -> usize {
    let mut net = ValueNet::linear(2, 2);
    let started = Instant::now();
    let mut updates = 0;
    loop {
        let err =
            (0..4).map(|k| (net.q_value(&one_hot(k / 2), k % 2) - target[k / 2][k % 2]).abs()).fold(0.0f64, f64::max);
        if err < 1e-2 {
            assert!(started.elapsed() < Duration::from_secs(5));
            return updates;
        }
        assert!(updates < 100_000, "no convergence, error {err}");
        let (s, a) = (updates / 2 % 2, updates % 2);
        update(&mut net, s, a);
        updates += 1;
    }
}

pub fn toy_transition(s: usize, a: usize, next_action: Option<usize>) -> Transition {
    Transition {
        state: one_hot(s),
        action_index: a,
        reward: REWARD[s][a],
        next_state: one_hot(NEXT[s][a]),
        next_action_index: next_action,
        done: false,
    }
}
