//! Feed-forward network engine with reverse-mode gradients.
//!
//! An [`Mlp`] is a fixed chain of layers over a flat `f64` parameter vector.
//! `forward_recorded` captures the activations needed by `backward`, which
//! returns exact Jacobian-vector products for both the parameters and the
//! input. Parameter gradients are *summed* over batch rows, matching the
//! training loop's summed objective.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Global count of `Mlp::backward` invocations.
///
/// Used by evaluation code to assert that semi-white-box attack generation
/// performs no gradient computations.
static BACKWARD_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of `backward` calls since process start.
pub fn backward_call_count() -> u64 {
    BACKWARD_CALLS.load(Ordering::Relaxed)
}

/// One layer of the chain. Affine layers own parameters; activations do not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Affine { in_dim: usize, out_dim: usize },
    LeakyRelu { dim: usize, slope: f64 },
    Relu { dim: usize },
    Sigmoid { dim: usize },
    Softmax { dim: usize },
}

impl LayerSpec {
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        LayerSpec::Affine { in_dim, out_dim }
    }

    /// LeakyReLU with the slope used by all architectures in this crate.
    pub fn leaky_relu(dim: usize) -> Self {
        LayerSpec::LeakyRelu { dim, slope: 0.01 }
    }

    pub fn in_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { in_dim, .. } => in_dim,
            LayerSpec::LeakyRelu { dim, .. }
            | LayerSpec::Relu { dim }
            | LayerSpec::Sigmoid { dim }
            | LayerSpec::Softmax { dim } => dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            LayerSpec::Affine { out_dim, .. } => out_dim,
            other => other.in_dim(),
        }
    }

    /// Parameters owned by this layer (weights then bias for affine).
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Affine { in_dim, out_dim } => out_dim * in_dim + out_dim,
            _ => 0,
        }
    }
}

/// Feed-forward network: ordered layer chain plus a flat parameter vector.
///
/// The optional `kappa` and `sup_bound` fields record the magnitude bound on
/// parameters and the sup-norm bound on the function; they are metadata and
/// are not enforced unless a trainer opts in to clamping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mlp {
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    #[serde(skip)]
    offsets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sup_bound: Option<f64>,
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Repr {
            layers: Vec<LayerSpec>,
            params: Vec<f64>,
            #[serde(default)]
            kappa: Option<f64>,
            #[serde(default)]
            sup_bound: Option<f64>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let mut net = Mlp::new(repr.layers).map_err(serde::de::Error::custom)?;
        net.set_params(&repr.params).map_err(serde::de::Error::custom)?;
        net.kappa = repr.kappa;
        net.sup_bound = repr.sup_bound;
        Ok(net)
    }
}

/// Activations recorded by `forward_recorded`, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape {
    signature: u64,
    input: Tensor2,
    outputs: Vec<Tensor2>,
}

impl Tape {
    /// Final layer output of the recorded pass.
    pub fn output(&self) -> &Tensor2 {
        self.outputs.last().expect("tape has at least one layer")
    }

    pub fn input(&self) -> &Tensor2 {
        &self.input
    }
}

impl Mlp {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::new adjacent layers",
                    w[0].out_dim(),
                    w[1].in_dim(),
                ));
            }
        }
        let offsets = offsets_for(&layers);
        let total = offsets.last().copied().unwrap_or(0)
            + layers.last().map_or(0, LayerSpec::param_count);
        Ok(Mlp {
            layers,
            params: vec![0.0; total],
            offsets,
            kappa: None,
            sup_bound: None,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape("Mlp::set_params", self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Depth L: number of affine layers.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Affine { .. }))
            .count()
    }

    /// Width bound w: maximum affine output dimension.
    pub fn width_bound(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Affine { out_dim, .. } => Some(*out_dim),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Nonzero parameter count W.
    pub fn nonzero_params(&self) -> usize {
        self.params.iter().filter(|v| **v != 0.0).count()
    }

    /// Largest parameter magnitude currently held.
    pub fn max_abs_param(&self) -> f64 {
        self.params.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Declared magnitude bound kappa, if any.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn set_kappa(&mut self, kappa: Option<f64>) {
        self.kappa = kappa;
    }

    /// Declared sup-norm bound B on the function, if any. Metadata only.
    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn set_sup_bound(&mut self, bound: Option<f64>) {
        self.sup_bound = bound;
    }

    /// Clamp every parameter into `[-kappa, kappa]`. No-op without a bound.
    pub fn clamp_to_kappa(&mut self) {
        if let Some(k) = self.kappa {
            for p in &mut self.params {
                *p = p.clamp(-k, k);
            }
        }
    }

    fn signature(&self) -> u64 {
        // Structural fingerprint: enough to reject tapes from other layouts.
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        for l in &self.layers {
            mix(l.in_dim() as u64);
            mix(l.out_dim() as u64);
            mix(match l {
                LayerSpec::Affine { .. } => 1,
                LayerSpec::LeakyRelu { .. } => 2,
                LayerSpec::Relu { .. } => 3,
                LayerSpec::Sigmoid { .. } => 4,
                LayerSpec::Softmax { .. } => 5,
            });
        }
        mix(self.params.len() as u64);
        h
    }

    fn layer_params(&self, idx: usize) -> &[f64] {
        let start = self.offsets[idx];
        &self.params[start..start + self.layers[idx].param_count()]
    }

    /// Weight matrix (row-major out x in) and bias of the affine layer at `idx`.
    pub fn affine_params(&self, idx: usize) -> Option<(&[f64], &[f64])> {
        match self.layers[idx] {
            LayerSpec::Affine { in_dim, out_dim } => {
                let p = self.layer_params(idx);
                Some(p.split_at(out_dim * in_dim))
            }
            _ => None,
        }
    }

    /// Draw every affine parameter i.i.d. uniform on
    /// `[-sqrt(1/in_dim), sqrt(1/in_dim)]` of its layer. Reproducible per seed.
    pub fn init_uniform(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init_uniform_with(&mut rng);
    }

    pub fn init_uniform_with(&mut self, rng: &mut impl Rng) {
        for idx in 0..self.layers.len() {
            if let LayerSpec::Affine { in_dim, .. } = self.layers[idx] {
                let bound = (1.0 / in_dim as f64).sqrt();
                let start = self.offsets[idx];
                let count = self.layers[idx].param_count();
                for p in &mut self.params[start..start + count] {
                    *p = rng.random_range(-bound..=bound);
                }
            }
        }
    }

    /// Plain forward pass. Deterministic given `(params, x)`.
    pub fn forward(&self, x: &Tensor2) -> Result<Tensor2> {
        let mut cur = self.check_input(x)?.clone();
        for idx in 0..self.layers.len() {
            cur = self.layer_forward(idx, &cur);
        }
        Ok(cur)
    }

    /// Forward pass recording per-layer activations for a later `backward`.
    pub fn forward_recorded(&self, x: &Tensor2) -> Result<(Tensor2, Tape)> {
        self.check_input(x)?;
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for idx in 0..self.layers.len() {
            cur = self.layer_forward(idx, &cur);
            outputs.push(cur.clone());
        }
        let tape = Tape {
            signature: self.signature(),
            input: x.clone(),
            outputs,
        };
        Ok((cur, tape))
    }

    /// Reverse pass. `upstream` is dL/d(output) with the output's shape.
    ///
    /// Returns `(param_grad, input_grad)`: the parameter gradient summed over
    /// batch rows and the per-row input gradient.
    pub fn backward(&self, tape: &Tape, upstream: &Tensor2) -> Result<(Vec<f64>, Tensor2)> {
        if tape.signature != self.signature() || tape.outputs.len() != self.layers.len() {
            return Err(Error::State(
                "backward called with a tape that was not recorded by a forward pass of this network".into(),
            ));
        }
        let out = tape.output();
        if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
            return Err(Error::shape(
                "Mlp::backward upstream",
                format!("{}x{}", out.rows(), out.cols()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        BACKWARD_CALLS.fetch_add(1, Ordering::Relaxed);

        let mut param_grad = vec![0.0; self.params.len()];
        let mut g = upstream.clone();
        for idx in (0..self.layers.len()).rev() {
            let layer_in: &Tensor2 = if idx == 0 { &tape.input } else { &tape.outputs[idx - 1] };
            let layer_out = &tape.outputs[idx];
            g = self.layer_backward(idx, layer_in, layer_out, &g, &mut param_grad);
        }
        Ok((param_grad, g))
    }

    fn check_input<'a>(&self, x: &'a Tensor2) -> Result<&'a Tensor2> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("Mlp input", self.input_dim(), x.cols()));
        }
        Ok(x)
    }

    fn layer_forward(&self, idx: usize, x: &Tensor2) -> Tensor2 {
        let n = x.rows();
        match self.layers[idx] {
            LayerSpec::Affine { in_dim, out_dim } => {
                let (w, b) = self.affine_params(idx).unwrap();
                let mut y = Tensor2::zeros(n, out_dim);
                for r in 0..n {
                    let xr = x.row(r);
                    let yr = y.row_mut(r);
                    for o in 0..out_dim {
                        let wrow = &w[o * in_dim..(o + 1) * in_dim];
                        let mut acc = b[o];
                        for i in 0..in_dim {
                            acc += wrow[i] * xr[i];
                        }
                        yr[o] = acc;
                    }
                }
                y
            }
            LayerSpec::LeakyRelu { slope, .. } => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    if *v < 0.0 {
                        *v *= slope;
                    }
                }
                y
            }
            LayerSpec::Relu { .. } => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                y
            }
            LayerSpec::Sigmoid { .. } => {
                let mut y = x.clone();
                for v in y.data_mut() {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                y
            }
            LayerSpec::Softmax { dim } => {
                let mut y = x.clone();
                for r in 0..n {
                    let row = y.row_mut(r);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                    debug_assert_eq!(row.len(), dim);
                }
                y
            }
        }
    }

    fn layer_backward(
        &self,
        idx: usize,
        layer_in: &Tensor2,
        layer_out: &Tensor2,
        g: &Tensor2,
        param_grad: &mut [f64],
    ) -> Tensor2 {
        let n = g.rows();
        match self.layers[idx] {
            LayerSpec::Affine { in_dim, out_dim } => {
                let (w, _) = self.affine_params(idx).unwrap();
                let start = self.offsets[idx];
                let (dw, db) = param_grad[start..start + out_dim * in_dim + out_dim]
                    .split_at_mut(out_dim * in_dim);
                let mut dx = Tensor2::zeros(n, in_dim);
                for r in 0..n {
                    let gr = g.row(r);
                    let xr = layer_in.row(r);
                    let dxr = dx.row_mut(r);
                    for o in 0..out_dim {
                        let go = gr[o];
                        if go == 0.0 {
                            continue;
                        }
                        db[o] += go;
                        let wrow = &w[o * in_dim..(o + 1) * in_dim];
                        let dwrow = &mut dw[o * in_dim..(o + 1) * in_dim];
                        for i in 0..in_dim {
                            dwrow[i] += go * xr[i];
                            dxr[i] += go * wrow[i];
                        }
                    }
                }
                dx
            }
            LayerSpec::LeakyRelu { slope, .. } => {
                let mut dx = g.clone();
                for (d, x) in dx.data_mut().iter_mut().zip(layer_in.data()) {
                    if *x <= 0.0 {
                        *d *= slope;
                    }
                }
                dx
            }
            LayerSpec::Relu { .. } => {
                let mut dx = g.clone();
                for (d, x) in dx.data_mut().iter_mut().zip(layer_in.data()) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
                dx
            }
            LayerSpec::Sigmoid { .. } => {
                let mut dx = g.clone();
                for (d, y) in dx.data_mut().iter_mut().zip(layer_out.data()) {
                    *d *= y * (1.0 - y);
                }
                dx
            }
            LayerSpec::Softmax { dim } => {
                let mut dx = Tensor2::zeros(n, dim);
                for r in 0..n {
                    let y = layer_out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    let dxr = dx.row_mut(r);
                    for j in 0..dim {
                        dxr[j] = y[j] * (gr[j] - dot);
                    }
                }
                dx
            }
        }
    }
}

fn offsets_for(layers: &[LayerSpec]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(layers.len());
    let mut acc = 0;
    for l in layers {
        offsets.push(acc);
        acc += l.param_count();
    }
    offsets
}
