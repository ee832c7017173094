use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{normalized_alpha, pad_to_side, square_side, ALPHAS, N_ACTIONS};

pub const CHECKPOINT_FORMAT: &str = "cascade-rl-valuenet";
pub const CHECKPOINT_VERSION: u32 = 1;

const SHALLOW_HIDDEN: usize = 10;
const CONV1_CHANNELS: usize = 8;
const CONV2_CHANNELS: usize = 16;
const KERNEL: usize = 3;
/// Smallest image side that survives two conv + pool stages.
const MIN_SIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// state ⊕ α → 10 rectifier units → Q(s, α)
    Shallow,
    /// padded image → conv/pool ×2 → 10 Q-values
    Deep,
    /// One bias-free linear head per action; a table when states are one-hot.
    Linear,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a value-network checkpoint (format `{0}`)")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint layer `{0}` does not match the network layout")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub format: String,
    pub version: u32,
    pub kind: NetKind,
    pub input_dim: usize,
    pub n_actions: usize,
    pub padded_side: Option<usize>,
    pub layers: Vec<LayerRecord>,
}

/// Weights of one value network, stored as a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    kind: NetKind,
    input_dim: usize,
    n_actions: usize,
    side: usize,
    params: Vec<f64>,
}

struct DeepShape {
    side: usize,
    c1: usize,
    p1: usize,
    c2: usize,
    p2: usize,
}

impl DeepShape {
    fn new(side: usize) -> Self {
        let c1 = side - (KERNEL - 1);
        let p1 = c1 / 2;
        let c2 = p1 - (KERNEL - 1);
        let p2 = c2 / 2;
        DeepShape { side, c1, p1, c2, p2 }
    }

    fn flat(&self) -> usize {
        CONV2_CHANNELS * self.p2 * self.p2
    }
}

struct DeepCache {
    z1: Vec<f64>,
    pool1: Vec<f64>,
    arg1: Vec<usize>,
    z2: Vec<f64>,
    pool2: Vec<f64>,
    arg2: Vec<usize>,
    q: Vec<f64>,
}

impl ValueNet {
    fn zeros(kind: NetKind, input_dim: usize, n_actions: usize) -> Self {
        let side = match kind {
            NetKind::Deep => square_side(input_dim).max(MIN_SIDE),
            _ => 0,
        };
        let mut net = ValueNet { kind, input_dim, n_actions, side, params: Vec::new() };
        let n = net.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        net.params = vec![0.0; n];
        net
    }

    /// Shallow network with scaled-uniform weights and zero biases.
    pub fn shallow<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(NetKind::Shallow, input_dim, N_ACTIONS);
        net.init(rng);
        net
    }

    /// Convolutional network with scaled-uniform weights and zero biases.
    pub fn deep<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(NetKind::Deep, input_dim, N_ACTIONS);
        net.init(rng);
        net
    }

    /// All-zero linear heads.
    pub fn linear(input_dim: usize, n_actions: usize) -> Self {
        Self::zeros(NetKind::Linear, input_dim, n_actions)
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Image side for the deep network.
    pub fn padded_side(&self) -> Option<usize> {
        (self.kind == NetKind::Deep).then_some(self.side)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Layer names and shapes in parameter order.
    pub fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let d = self.input_dim;
        match self.kind {
            NetKind::Shallow => vec![
                ("hidden.weight", vec![SHALLOW_HIDDEN, d + 1]),
                ("hidden.bias", vec![SHALLOW_HIDDEN]),
                ("output.weight", vec![SHALLOW_HIDDEN]),
                ("output.bias", vec![1]),
            ],
            NetKind::Deep => {
                let s = DeepShape::new(self.side);
                vec![
                    ("conv1.weight", vec![CONV1_CHANNELS, 1, KERNEL, KERNEL]),
                    ("conv1.bias", vec![CONV1_CHANNELS]),
                    ("conv2.weight", vec![CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, KERNEL]),
                    ("conv2.bias", vec![CONV2_CHANNELS]),
                    ("q_head.weight", vec![self.n_actions, s.flat()]),
                    ("q_head.bias", vec![self.n_actions]),
                ]
            }
            NetKind::Linear => vec![("weight", vec![self.n_actions, d])],
        }
    }

    fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut off = 0;
        for (name, shape) in self.layout() {
            let n: usize = shape.iter().product();
            if name.ends_with("weight") && shape.len() > 1 {
                let field: usize = shape[2..].iter().product();
                let (fan_out, fan_in) = (shape[0] * field, shape[1] * field);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for p in &mut self.params[off..off + n] {
                    *p = rng.gen_range(-bound..bound);
                }
            } else if name == "output.weight" {
                let bound = (6.0 / (SHALLOW_HIDDEN + 1) as f64).sqrt();
                for p in &mut self.params[off..off + n] {
                    *p = rng.gen_range(-bound..bound);
                }
            }
            off += n;
        }
    }

    /// Set one linear-head weight (linear kind only).
    pub fn set_linear_weight(&mut self, action: usize, input: usize, value: f64) {
        assert_eq!(self.kind, NetKind::Linear);
        self.params[action * self.input_dim + input] = value;
    }

    /// `params += lr · grad`
    pub fn apply(&mut self, grad: &[f64], lr: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p += lr * g;
        }
    }

    /// Q-values for `state`: one per action, or only the supplied action's.
    pub fn forward(&self, state: &[f64], action: Option<usize>) -> Result<Vec<f64>, DimensionError> {
        if state.len() != self.input_dim {
            return Err(DimensionError { expected: self.input_dim, got: state.len() });
        }
        match action {
            Some(a) if a >= self.n_actions => Err(DimensionError { expected: self.n_actions, got: a }),
            Some(a) => Ok(vec![self.q_value(state, a)]),
            None => Ok(self.q_values(state)),
        }
    }

    /// All action values; panics if `state` has the wrong length.
    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        assert_eq!(state.len(), self.input_dim, "state dimension");
        match self.kind {
            NetKind::Shallow => {
                let (w1, b1, w2, b2) = self.shallow_parts();
                let d = self.input_dim;
                let base: Vec<f64> =
                    (0..SHALLOW_HIDDEN).map(|j| b1[j] + dot(&w1[j * (d + 1)..j * (d + 1) + d], state)).collect();
                ALPHAS
                    .iter()
                    .map(|&alpha| {
                        let x = normalized_alpha(alpha);
                        let mut q = b2;
                        for j in 0..SHALLOW_HIDDEN {
                            q += w2[j] * (base[j] + w1[j * (d + 1) + d] * x).max(0.0);
                        }
                        q
                    })
                    .collect()
            }
            NetKind::Deep => self.deep_forward(state).q,
            NetKind::Linear => {
                let d = self.input_dim;
                (0..self.n_actions).map(|a| dot(&self.params[a * d..(a + 1) * d], state)).collect()
            }
        }
    }

    pub fn q_value(&self, state: &[f64], action: usize) -> f64 {
        match self.kind {
            NetKind::Shallow => self.shallow_hidden(state, action).2,
            _ => self.q_values(state)[action],
        }
    }

    /// Scalar readout of the deep network: the fixed sum of its Q-head.
    /// Carries no parameters and is only used for loss bookkeeping.
    pub fn readout(&self, state: &[f64]) -> f64 {
        self.q_values(state).iter().sum()
    }

    /// Gradient of `Q(state, action)` with respect to every parameter,
    /// scaled by `td_error`.
    pub fn backward(&self, state: &[f64], action: usize, td_error: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.params.len()];
        if td_error == 0.0 {
            return g;
        }
        match self.kind {
            NetKind::Shallow => self.shallow_backward(state, action, &mut g),
            NetKind::Deep => self.deep_backward(state, action, &mut g),
            NetKind::Linear => {
                let d = self.input_dim;
                g[action * d..(action + 1) * d].copy_from_slice(state);
            }
        }
        for v in &mut g {
            *v *= td_error;
        }
        g
    }

    fn shallow_parts(&self) -> (&[f64], &[f64], &[f64], f64) {
        let n1 = SHALLOW_HIDDEN * (self.input_dim + 1);
        let p = &self.params;
        (
            &p[..n1],
            &p[n1..n1 + SHALLOW_HIDDEN],
            &p[n1 + SHALLOW_HIDDEN..n1 + 2 * SHALLOW_HIDDEN],
            p[n1 + 2 * SHALLOW_HIDDEN],
        )
    }

    /// (input, pre-activations, output)
    fn shallow_hidden(&self, state: &[f64], action: usize) -> (Vec<f64>, Vec<f64>, f64) {
        let (w1, b1, w2, b2) = self.shallow_parts();
        let mut x = state.to_vec();
        x.push(normalized_alpha(ALPHAS[action]));
        let k = x.len();
        let z: Vec<f64> = (0..SHALLOW_HIDDEN).map(|j| b1[j] + dot(&w1[j * k..(j + 1) * k], &x)).collect();
        let q = b2 + z.iter().zip(w2).map(|(z, w)| w * z.max(0.0)).sum::<f64>();
        (x, z, q)
    }

    fn shallow_backward(&self, state: &[f64], action: usize, g: &mut [f64]) {
        let (x, z, _) = self.shallow_hidden(state, action);
        let (_, _, w2, _) = self.shallow_parts();
        let k = x.len();
        let n1 = SHALLOW_HIDDEN * k;
        for j in 0..SHALLOW_HIDDEN {
            if z[j] > 0.0 {
                for (gi, xi) in g[j * k..(j + 1) * k].iter_mut().zip(&x) {
                    *gi = w2[j] * xi;
                }
                g[n1 + j] = w2[j];
                g[n1 + SHALLOW_HIDDEN + j] = z[j];
            }
        }
        g[n1 + 2 * SHALLOW_HIDDEN] = 1.0;
    }

    fn deep_offsets(&self) -> [usize; 6] {
        let mut offs = [0; 6];
        let mut off = 0;
        for (i, (_, shape)) in self.layout().iter().enumerate() {
            offs[i] = off;
            off += shape.iter().product::<usize>();
        }
        offs
    }

    fn deep_forward(&self, state: &[f64]) -> DeepCache {
        let s = DeepShape::new(self.side);
        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.deep_offsets();
        let p = &self.params;
        let img = pad_to_side(state, s.side);

        let z1 = conv(&img, 1, s.side, &p[ow1..], &p[ob1..ob1 + CONV1_CHANNELS], CONV1_CHANNELS);
        let (pool1, arg1) = relu_pool(&z1, CONV1_CHANNELS, s.c1);
        let z2 = conv(&pool1, CONV1_CHANNELS, s.p1, &p[ow2..], &p[ob2..ob2 + CONV2_CHANNELS], CONV2_CHANNELS);
        let (pool2, arg2) = relu_pool(&z2, CONV2_CHANNELS, s.c2);
        let f = s.flat();
        let q = (0..self.n_actions).map(|a| p[ob3 + a] + dot(&p[ow3 + a * f..ow3 + (a + 1) * f], &pool2)).collect();
        DeepCache { z1, pool1, arg1, z2, pool2, arg2, q }
    }

    fn deep_backward(&self, state: &[f64], action: usize, g: &mut [f64]) {
        let s = DeepShape::new(self.side);
        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.deep_offsets();
        let p = &self.params;
        let c = self.deep_forward(state);
        let img = pad_to_side(state, s.side);
        let f = s.flat();

        g[ow3 + action * f..ow3 + (action + 1) * f].copy_from_slice(&c.pool2);
        g[ob3 + action] = 1.0;
        // d q / d conv2 pre-activation
        let mut d2 = vec![0.0; c.z2.len()];
        for (k, &src) in c.arg2.iter().enumerate() {
            if c.z2[src] > 0.0 {
                d2[src] += p[ow3 + action * f + k];
            }
        }
        let d_pool1 = conv_backward(&c.pool1, CONV1_CHANNELS, s.p1, &p[ow2..], &d2, CONV2_CHANNELS, g, ow2, ob2);
        let mut d1 = vec![0.0; c.z1.len()];
        for (k, &src) in c.arg1.iter().enumerate() {
            if c.z1[src] > 0.0 {
                d1[src] += d_pool1[k];
            }
        }
        conv_backward(&img, 1, s.side, &p[ow1..], &d1, CONV1_CHANNELS, g, ow1, ob1);
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        let mut off = 0;
        let layers = self
            .layout()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let rec = LayerRecord { name: name.to_string(), shape, values: self.params[off..off + n].to_vec() };
                off += n;
                rec
            })
            .collect();
        NetCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: self.kind,
            input_dim: self.input_dim,
            n_actions: self.n_actions,
            padded_side: self.padded_side(),
            layers,
        }
    }

    pub fn from_checkpoint(ck: &NetCheckpoint) -> Result<Self, CheckpointError> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(ck.format.clone()));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ck.version));
        }
        let mut net = Self::zeros(ck.kind, ck.input_dim, ck.n_actions);
        if net.padded_side() != ck.padded_side {
            return Err(CheckpointError::Layout("padded_side".into()));
        }
        let layout = net.layout();
        if layout.len() != ck.layers.len() {
            return Err(CheckpointError::Layout("layer count".into()));
        }
        let mut off = 0;
        for ((name, shape), rec) in layout.iter().zip(&ck.layers) {
            let n: usize = shape.iter().product();
            if *name != rec.name || *shape != rec.shape || rec.values.len() != n {
                return Err(CheckpointError::Layout(rec.name.clone()));
            }
            net.params[off..off + n].copy_from_slice(&rec.values);
            off += n;
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let ck: NetCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(&ck)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("expected dimension {expected}, got {got}")]
pub struct DimensionError {
    pub expected: usize,
    pub got: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Valid 3×3 convolution, stride 1. `input` is `[in_ch][side][side]`.
fn conv(input: &[f64], in_ch: usize, side: usize, w: &[f64], b: &[f64], out_ch: usize) -> Vec<f64> {
    let o_side = side - (KERNEL - 1);
    let mut out = vec![0.0; out_ch * o_side * o_side];
    for o in 0..out_ch {
        let plane = &mut out[o * o_side * o_side..(o + 1) * o_side * o_side];
        plane.fill(b[o]);
        for c in 0..in_ch {
            let src = &input[c * side * side..(c + 1) * side * side];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let wv = w[((o * in_ch + c) * KERNEL + ky) * KERNEL + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..o_side {
                        let row = &src[(y + ky) * side + kx..(y + ky) * side + kx + o_side];
                        for (dst, &v) in plane[y * o_side..(y + 1) * o_side].iter_mut().zip(row) {
                            *dst += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulate weight and bias gradients of a [`conv`] layer into `g` and
/// return the gradient with respect to its input.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    in_ch: usize,
    side: usize,
    w: &[f64],
    d_out: &[f64],
    out_ch: usize,
    g: &mut [f64],
    ow: usize,
    ob: usize,
) -> Vec<f64> {
    let o_side = side - (KERNEL - 1);
    let mut d_in = vec![0.0; input.len()];
    for o in 0..out_ch {
        let d_plane = &d_out[o * o_side * o_side..(o + 1) * o_side * o_side];
        g[ob + o] += d_plane.iter().sum::<f64>();
        for c in 0..in_ch {
            let src = &input[c * side * side..(c + 1) * side * side];
            let dsrc = &mut d_in[c * side * side..(c + 1) * side * side];
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    let wi = ((o * in_ch + c) * KERNEL + ky) * KERNEL + kx;
                    let mut acc = 0.0;
                    for y in 0..o_side {
                        let base = (y + ky) * side + kx;
                        for x in 0..o_side {
                            let d = d_plane[y * o_side + x];
                            acc += d * src[base + x];
                            dsrc[base + x] += d * w[wi];
                        }
                    }
                    g[ow + wi] += acc;
                }
            }
        }
    }
    d_in
}

/// Rectifier followed by 2×2 max-pooling (stride 2, trailing odd row and
/// column dropped). Returns pooled values and the source index of each.
fn relu_pool(z: &[f64], ch: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let p = side / 2;
    let mut out = Vec::with_capacity(ch * p * p);
    let mut arg = Vec::with_capacity(ch * p * p);
    for c in 0..ch {
        for y in 0..p {
            for x in 0..p {
                let mut best = c * side * side + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * side * side + (2 * y + dy) * side + 2 * x + dx;
                    if z[i] > z[best] {
                        best = i;
                    }
                }
                out.push(z[best].max(0.0));
                arg.push(best);
            }
        }
    }
    (out, arg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let deep = ValueNet::deep(658, &mut rng);
        assert_eq!(deep.padded_side(), Some(26));
        assert_eq!(deep.layout()[4].1, vec![10, 400]);
        assert_eq!(deep.q_values(&vec![0.1; 658]).len(), 10);
        let shallow = ValueNet::shallow(658, &mut rng);
        assert_eq!(shallow.n_params(), 10 * 659 + 10 + 10 + 1);
        assert_eq!(shallow.q_values(&vec![0.1; 658]).len(), 10);
    }

    #[test]
    fn zero_weights_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = ValueNet::deep(30, &mut rng);
        net.params_mut().fill(0.0);
        assert!(net.q_values(&[1.0; 30]).iter().all(|&q| q == 0.0));
    }

    #[test]
    fn shallow_q_value_matches_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ValueNet::shallow(5, &mut rng);
        let s = [0.3, -0.2, 1.0, 0.5, 0.0];
        let all = net.q_values(&s);
        for (a, &q) in all.iter().enumerate() {
            assert!((net.q_value(&s, a) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = ValueNet::linear(3, 2);
        assert_eq!(net.forward(&[1.0], None), Err(DimensionError { expected: 3, got: 1 }));
    }
}
