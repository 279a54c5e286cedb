//! Dense feedforward Q-network with reverse-mode gradients and checkpoint I/O.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"QNET";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid layer shape: {0}")]
    InvalidShape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fully connected net, ReLU on hidden layers and identity on the output.
///
/// Parameters live in one flat vector: for each layer the weights
/// (row-major, output by input) followed by the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    dims: Vec<usize>,
    params: Vec<f64>,
}

impl DenseNet {
    /// Fan-in scaled uniform initialisation from a seeded generator.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self, ApproxError> {
        let mut net = DenseNet::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + w[1] * (w[0] + 1)] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[1] * (w[0] + 1);
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self, ApproxError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ApproxError::InvalidShape(format!("{dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(DenseNet { dims: dims.to_vec(), params: vec![0.0; n] })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_inputs(&self) -> usize {
        self.dims[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.dims.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), ApproxError> {
        if params.len() != self.params.len() {
            return Err(ApproxError::DimensionMismatch { expected: self.params.len(), got: params.len() });
        }
        check_finite(params)?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offsets of (weights, biases) of layer `l`.
    fn layer(&self, l: usize) -> (usize, usize) {
        let off: usize = self.dims.windows(2).take(l).map(|w| w[1] * (w[0] + 1)).sum();
        (off, off + self.dims[l + 1] * self.dims[l])
    }

    /// Pre-activations of every layer and post-activations of every layer (input first).
    fn trace(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ApproxError> {
        if x.len() != self.dims[0] {
            return Err(ApproxError::DimensionMismatch { expected: self.dims[0], got: x.len() });
        }
        let n_layers = self.dims.len() - 1;
        let mut acts = vec![x.to_vec()];
        for l in 0..n_layers {
            let (wo, bo) = self.layer(l);
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &self.params[wo + o * n_in..wo + (o + 1) * n_in];
                let z: f64 = self.params[bo + o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                out.push(if l + 1 < n_layers { z.max(0.0) } else { z });
            }
            acts.push(out);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        Ok(self.trace(x)?.pop().expect("output layer"))
    }

    /// Mean squared error on the selected outputs and its gradient with respect to the parameters.
    pub fn loss_and_gradient(
        &self,
        inputs: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<f64>), ApproxError> {
        let b = inputs.len();
        if actions.len() != b || targets.len() != b {
            return Err(ApproxError::DimensionMismatch { expected: b, got: actions.len().min(targets.len()) });
        }
        check_finite(targets)?;
        let mut grad = vec![0.0; self.params.len()];
        if b == 0 {
            return Ok((0.0, grad));
        }
        let n_layers = self.dims.len() - 1;
        let mut loss = 0.0;
        for ((x, &a), &t) in inputs.iter().zip(actions).zip(targets) {
            if a >= self.n_outputs() {
                return Err(ApproxError::DimensionMismatch { expected: self.n_outputs(), got: a + 1 });
            }
            let acts = self.trace(x)?;
            let err = acts[n_layers][a] - t;
            loss += err * err;
            let mut delta = vec![0.0; self.n_outputs()];
            delta[a] = 2.0 * err / b as f64;
            for l in (0..n_layers).rev() {
                let (wo, bo) = self.layer(l);
                let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
                let input = &acts[l];
                let mut back = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    grad[bo + o] += d;
                    for i in 0..n_in {
                        grad[wo + o * n_in + i] += d * input[i];
                        back[i] += d * self.params[wo + o * n_in + i];
                    }
                }
                if l > 0 {
                    // ReLU derivative taken from the stored activation
                    for (bi, &ai) in back.iter_mut().zip(input) {
                        if ai <= 0.0 {
                            *bi = 0.0;
                        }
                    }
                }
                delta = back;
            }
        }
        Ok((loss / b as f64, grad))
    }

    /// One optimiser step on the masked squared error. Returns the pre-step loss.
    pub fn fit_batch(
        &mut self,
        opt: &mut Optimizer,
        inputs: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<f64, ApproxError> {
        let (loss, grad) = self.loss_and_gradient(inputs, actions, targets)?;
        opt.step(&mut self.params, &grad)?;
        check_finite(&self.params)?;
        Ok(loss)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ApproxError> {
        let bad = |m: &str| ApproxError::Checkpoint(m.to_string());
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8], ApproxError> {
            if cur.len() < n {
                return Err(bad("truncated"));
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(bad("missing magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        let version = u32_at(take(4)?);
        if version != CHECKPOINT_VERSION {
            return Err(ApproxError::Checkpoint(format!("unsupported version {version}")));
        }
        let n_dims = u32_at(take(4)?) as usize;
        if !(2..=64).contains(&n_dims) {
            return Err(bad("implausible layer count"));
        }
        let mut dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            dims.push(u32_at(take(4)?) as usize);
        }
        let mut net = DenseNet::zeros(&dims)?;
        let body = take(8 * net.params.len())?;
        for (p, chunk) in net.params.iter_mut().zip(body.chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        if !cur.is_empty() {
            return Err(bad("trailing bytes"));
        }
        check_finite(&net.params)?;
        Ok(net)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ApproxError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ApproxError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        DenseNet::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<(), ApproxError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ApproxError> {
        DenseNet::from_bytes(&std::fs::read(path)?)
    }

    /// Load and check the input and output widths.
    pub fn load_expecting(path: &Path, n_in: usize, n_out: usize) -> Result<Self, ApproxError> {
        let net = DenseNet::load(path)?;
        if net.n_inputs() != n_in {
            return Err(ApproxError::DimensionMismatch { expected: n_in, got: net.n_inputs() });
        }
        if net.n_outputs() != n_out {
            return Err(ApproxError::DimensionMismatch { expected: n_out, got: net.n_outputs() });
        }
        Ok(net)
    }
}

fn check_finite(values: &[f64]) -> Result<(), ApproxError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ApproxError::NonFinite(format!("index {i}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimiser state kept apart from the net so target copies carry none of it.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self, ApproxError> {
        if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
            return Err(ApproxError::InvalidShape("learning rate must be positive".into()));
        }
        Ok(Optimizer { config, m: Vec::new(), v: Vec::new(), t: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), ApproxError> {
        if grad.len() != params.len() {
            return Err(ApproxError::DimensionMismatch { expected: params.len(), got: grad.len() });
        }
        check_finite(grad)?;
        let c = self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= c.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    self.m = vec![0.0; params.len()];
                    self.v = vec![0.0; params.len()];
                    self.t = 0;
                }
                self.t += 1;
                let bc1 = 1.0 - c.beta1.powf(self.t as f64);
                let bc2 = 1.0 - c.beta2.powf(self.t as f64);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    let mh = self.m[i] / bc1;
                    let vh = self.v[i] / bc2;
                    params[i] -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 64, 64, 3]).unwrap();
        assert_eq!(net.forward(&[0.3, 0.2, 0.9]).unwrap(), vec![0.0; 3]);
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn hand_computed_forward() {
        // 3 -> 1 -> 3: h = relu(1*x0 + 2*x1 - 1*x2 + 0.5); q = (h, -h, 2h + 1)
        let mut net = DenseNet::zeros(&[3, 1, 3]).unwrap();
        net.set_params(&[1.0, 2.0, -1.0, 0.5, 1.0, -1.0, 2.0, 0.0, 0.0, 1.0]).unwrap();
        let q = net.forward(&[0.5, 0.25, 1.0]).unwrap();
        assert_eq!(q, vec![0.5, -0.5, 2.0]);
        let q = net.forward(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(q, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn parameter_count_and_determinism() {
        let a = DenseNet::new(&[3, 64, 64, 3], 9).unwrap();
        assert_eq!(a.params().len(), 64 * 4 + 64 * 65 + 3 * 65);
        assert_eq!(a, DenseNet::new(&[3, 64, 64, 3], 9).unwrap());
        assert_ne!(a, DenseNet::new(&[3, 64, 64, 3], 10).unwrap());
        assert!(DenseNet::zeros(&[3]).is_err());
        assert!(DenseNet::zeros(&[3, 0, 3]).is_err());
    }

    #[test]
    fn fixed_point_leaves_params_unchanged() {
        let mut net = DenseNet::new(&[3, 8, 3], 1).unwrap();
        let x = vec![vec![0.1, 0.5, 0.2], vec![0.9, 0.1, 0.0]];
        let acts = vec![0, 2];
        let t: Vec<f64> = x.iter().zip(&acts).map(|(x, &a)| net.forward(x).unwrap()[a]).collect();
        let before = net.clone();
        let mut opt = Optimizer::new(OptimizerConfig { kind: OptimizerKind::Sgd, ..Default::default() }).unwrap();
        let loss = net.fit_batch(&mut opt, &x, &acts, &t).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_target_rejected() {
        let mut net = DenseNet::new(&[3, 4, 3], 1).unwrap();
        let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
        assert!(net.fit_batch(&mut opt, &[vec![0.0; 3]], &[0], &[f64::NAN]).is_err());
        assert!(net.fit_batch(&mut opt, &[vec![0.0; 3]], &[0, 1], &[0.0]).is_err());
    }

    #[test]
    fn checkpoint_bytes_layout() {
        let net = DenseNet::new(&[3, 2, 3], 4).unwrap();
        let b = net.to_bytes();
        assert_eq!(&b[0..4], b"QNET");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(b.len(), 12 + 12 + 8 * net.params().len());
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), net.params()[0]);
        assert_eq!(DenseNet::from_bytes(&b).unwrap(), net);
        assert!(DenseNet::from_bytes(&b[..b.len() - 1]).is_err());
        let mut v = b.clone();
        v[4] = 2;
        assert!(DenseNet::from_bytes(&v).is_err());
        let mut m = b;
        m[0] = b'X';
        assert!(DenseNet::from_bytes(&m).is_err());
    }
}
