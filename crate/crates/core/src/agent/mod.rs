//! Value-function approximators and temporal-difference learners.
//!
//! Both networks score the ten candidate flow-limit scales. The shallow
//! network takes the candidate as an extra input and returns one value per
//! (state, action) pair; the convolutional network maps a zero-padded square
//! image of the state to all ten values at once.

mod net;

pub use net::{
    CheckpointError, DimensionError, LayerRecord, NetCheckpoint, NetKind, ValueNet, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Candidate flow-limit scales, in action-index order.
pub const ALPHAS: [f64; 10] = [0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2, 1.25];
pub const N_ACTIONS: usize = ALPHAS.len();
/// Index of α = 1.0.
pub const IDENTITY_ACTION: usize = 4;
/// Rewards are divided by this before they reach a network.
pub const REWARD_SCALE: f64 = 1000.0;

pub fn action_to_alpha(index: usize) -> Option<f64> {
    ALPHAS.get(index).copied()
}

/// Map a candidate α onto roughly [−1, 1] for use as a network input.
pub fn normalized_alpha(alpha: f64) -> f64 {
    (alpha - 1.0) / 0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action_index: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// Action actually taken in `next_state`; required for SARSA.
    pub next_action_index: Option<usize>,
    pub done: bool,
}

/// Smallest square side that holds `dim` values.
pub fn square_side(dim: usize) -> usize {
    let mut side = (dim as f64).sqrt() as usize;
    while side * side < dim {
        side += 1;
    }
    while side > 0 && (side - 1) * (side - 1) >= dim {
        side -= 1;
    }
    side
}

/// Row-major fill of the smallest square image, zero-padded at the end.
pub fn pad_to_square(state: &[f64]) -> (usize, Vec<f64>) {
    let side = square_side(state.len());
    (side, pad_to_side(state, side))
}

/// Row-major fill of a `side × side` image; `state` must fit.
pub fn pad_to_side(state: &[f64], side: usize) -> Vec<f64> {
    let mut img = vec![0.0; side * side];
    img[..state.len()].copy_from_slice(state);
    img
}

/// Lowest index among the largest values.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// With probability `eps` a uniform action, otherwise the greedy one.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], eps: f64, rng: &mut R) -> usize {
    if rng.gen::<f64>() < eps {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

/// One semi-gradient step toward `target`; returns the TD error.
fn td_step(net: &mut ValueNet, state: &[f64], action: usize, target: f64, lr: f64) -> f64 {
    let q = net.q_value(state, action);
    let td = target - q;
    let grad = net.backward(state, action, td);
    net.apply(&grad, lr);
    td
}

/// On-policy TD: bootstrap from the action actually taken next.
pub fn sarsa_update(net: &mut ValueNet, t: &Transition, lr: f64, gamma: f64) -> f64 {
    let next = if t.done {
        0.0
    } else {
        let a = t.next_action_index.expect("SARSA needs the next action");
        net.q_value(&t.next_state, a)
    };
    td_step(net, &t.state, t.action_index, t.reward + gamma * next, lr)
}

/// Off-policy TD: bootstrap from the greedy value of the next state.
pub fn q_update(net: &mut ValueNet, t: &Transition, lr: f64, gamma: f64) -> f64 {
    let next = if t.done { 0.0 } else { net.q_values(&t.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max) };
    td_step(net, &t.state, t.action_index, t.reward + gamma * next, lr)
}
