//! Defense and attack networks with the compositions used in the experiments.
//!
//! The attack `lambda(x, y)` is built so the lp budget holds for *every*
//! parameter setting: a normalizing head caps the direction vector at the
//! budget and a sigmoid scaler in (0,1) controls the magnitude.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Target;
use crate::nn::{LayerSpec, Mlp, Tape};
use crate::tensor::Tensor2;

/// Norms supported for the attack budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpNorm {
    One,
    Two,
    Inf,
}

impl LpNorm {
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self {
            LpNorm::One => v.iter().map(|x| x.abs()).sum(),
            LpNorm::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            LpNorm::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

impl std::fmt::Display for LpNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpNorm::One => write!(f, "1"),
            LpNorm::Two => write!(f, "2"),
            LpNorm::Inf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for LpNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(LpNorm::One),
            "2" => Ok(LpNorm::Two),
            "inf" | "oo" => Ok(LpNorm::Inf),
            other => Err(Error::Config(format!("unsupported p: {other} (use 1, 2 or inf)"))),
        }
    }
}

/// The attack budget: a norm and a radius, `||lambda||_p <= delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpConstraint {
    pub p: LpNorm,
    pub delta: f64,
}

impl LpConstraint {
    pub fn new(p: LpNorm, delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        Ok(LpConstraint { p, delta })
    }
}

/// The kind of supervised task the models address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum TaskKind {
    Classification { classes: usize },
    Regression,
}

/// The defense model `f`: class logits for classification, one output for
/// regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseNet {
    net: Mlp,
    task: TaskKind,
}

impl DefenseNet {
    pub fn new(net: Mlp, task: TaskKind) -> Result<Self> {
        match task {
            TaskKind::Classification { classes } => {
                if net.output_dim() != classes {
                    return Err(Error::shape("DefenseNet logits", classes, net.output_dim()));
                }
            }
            TaskKind::Regression => {
                if net.output_dim() != 1 {
                    return Err(Error::shape("DefenseNet regression output", 1usize, net.output_dim()));
                }
            }
        }
        Ok(DefenseNet { net, task })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Forward pass on a single point.
    pub fn output(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.forward(&Tensor2::row_vector(x))?.row(0).to_vec())
    }

    /// Predicted class (classification only): argmax of the logits.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        match self.task {
            TaskKind::Classification { .. } => {
                let out = self.output(x)?;
                Ok(argmax(&out))
            }
            TaskKind::Regression => Err(Error::Config(
                "predict_class is only defined for classification models".into(),
            )),
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Constrained perturbation generator `lambda(x, y)`.
///
/// Classification composes an encoder, a per-class decoder and a per-class
/// scaler: `lambda(x, c) = S_c(x) * head(D_c(E(x)))`. Regression drops the
/// encoder and the class indexing: `lambda(x) = S(x) * head(H(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackModel {
    constraint: LpConstraint,
    task: TaskKind,
    encoder: Option<Mlp>,
    decoders: Vec<Mlp>,
    scalers: Vec<Mlp>,
}

/// Recorded intermediates of an attack forward pass.
#[derive(Debug, Clone)]
pub struct AttackTape {
    branch: usize,
    encoder: Option<Tape>,
    decoder: Tape,
    scaler: Tape,
    raw: Vec<f64>,
    head_out: Vec<f64>,
    scale: f64,
}

/// Tolerance on the unit-cube input check.
const CUBE_TOL: f64 = 1e-9;

impl AttackModel {
    pub fn new(
        constraint: LpConstraint,
        task: TaskKind,
        encoder: Option<Mlp>,
        decoders: Vec<Mlp>,
        scalers: Vec<Mlp>,
    ) -> Result<Self> {
        let branches = match task {
            TaskKind::Classification { classes } => classes,
            TaskKind::Regression => 1,
        };
        if decoders.len() != branches || scalers.len() != branches {
            return Err(Error::Config(format!(
                "attack model needs {branches} decoder/scaler pairs, got {}/{}",
                decoders.len(),
                scalers.len()
            )));
        }
        Ok(AttackModel {
            constraint,
            task,
            encoder,
            decoders,
            scalers,
        })
    }

    pub fn constraint(&self) -> LpConstraint {
        self.constraint
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        match &self.encoder {
            Some(e) => e.input_dim(),
            None => self.decoders[0].input_dim(),
        }
    }

    pub fn encoder(&self) -> Option<&Mlp> {
        self.encoder.as_ref()
    }

    pub fn decoders(&self) -> &[Mlp] {
        &self.decoders
    }

    pub fn decoders_mut(&mut self) -> &mut [Mlp] {
        &mut self.decoders
    }

    pub fn scalers(&self) -> &[Mlp] {
        &self.scalers
    }

    /// Total length of the flat parameter vector:
    /// encoder, then decoders in class order, then scalers in class order.
    pub fn param_len(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.params().len())
            + self.decoders.iter().map(|d| d.params().len()).sum::<usize>()
            + self.scalers.iter().map(|s| s.params().len()).sum::<usize>()
    }

    pub fn snapshot_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        if let Some(e) = &self.encoder {
            out.extend_from_slice(e.params());
        }
        for d in &self.decoders {
            out.extend_from_slice(d.params());
        }
        for s in &self.scalers {
            out.extend_from_slice(s.params());
        }
        out
    }

    pub fn load_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_len() {
            return Err(Error::shape("AttackModel::load_params", self.param_len(), params.len()));
        }
        let mut at = 0;
        if let Some(e) = &mut self.encoder {
            let n = e.params().len();
            e.set_params(&params[at..at + n])?;
            at += n;
        }
        for d in &mut self.decoders {
            let n = d.params().len();
            d.set_params(&params[at..at + n])?;
            at += n;
        }
        for s in &mut self.scalers {
            let n = s.params().len();
            s.set_params(&params[at..at + n])?;
            at += n;
        }
        Ok(())
    }

    fn branch_index(&self, target: &Target) -> Result<usize> {
        match (self.task, target) {
            (TaskKind::Classification { classes }, Target::Class(c)) => {
                if *c >= classes {
                    return Err(Error::Config(format!(
                        "label {c} out of range for {classes} classes"
                    )));
                }
                Ok(*c)
            }
            (TaskKind::Regression, _) => Ok(0),
            (TaskKind::Classification { .. }, Target::Real(_)) => Err(Error::Config(
                "classification attack needs a class label".into(),
            )),
        }
    }

    fn check_cube(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("attack input", self.input_dim(), x.len()));
        }
        for (i, v) in x.iter().enumerate() {
            if !(-CUBE_TOL..=1.0 + CUBE_TOL).contains(v) {
                return Err(Error::Config(format!(
                    "input coordinate {i} = {v} lies outside the unit cube"
                )));
            }
        }
        Ok(())
    }

    /// The perturbation `lambda(x, y)`. Satisfies the lp budget structurally.
    pub fn forward(&self, x: &[f64], target: &Target) -> Result<Vec<f64>> {
        Ok(self.forward_recorded(x, target)?.0)
    }

    pub fn forward_recorded(&self, x: &[f64], target: &Target) -> Result<(Vec<f64>, AttackTape)> {
        self.check_cube(x)?;
        let branch = self.branch_index(target)?;
        let xt = Tensor2::row_vector(x);

        let (dec_in, encoder_tape) = match &self.encoder {
            Some(enc) => {
                let (latent, tape) = enc.forward_recorded(&xt)?;
                (latent, Some(tape))
            }
            None => (xt.clone(), None),
        };
        let (raw_t, decoder_tape) = self.decoders[branch].forward_recorded(&dec_in)?;
        let raw = raw_t.row(0).to_vec();
        let head_out = self.project_head(&raw);

        let (scale_t, scaler_tape) = self.scalers[branch].forward_recorded(&xt)?;
        let scale = scale_t.get(0, 0);

        let lambda: Vec<f64> = head_out.iter().map(|u| scale * u).collect();
        let tape = AttackTape {
            branch,
            encoder: encoder_tape,
            decoder: decoder_tape,
            scaler: scaler_tape,
            raw,
            head_out,
            scale,
        };
        Ok((lambda, tape))
    }

    /// Normalizing head that caps the direction vector at the budget.
    ///
    /// l2: `delta * v / ||v||_2`; linf: `sqrt(D) * delta * v / ||v||_2`
    /// clamped coordinate-wise to `[-delta, delta]`; l1 by analogy with the
    /// l1 norm. A zero vector maps to zero.
    fn project_head(&self, v: &[f64]) -> Vec<f64> {
        let delta = self.constraint.delta;
        match self.constraint.p {
            LpNorm::Two => {
                let r = LpNorm::Two.norm(v);
                if r == 0.0 {
                    return vec![0.0; v.len()];
                }
                v.iter().map(|c| delta * c / r).collect()
            }
            LpNorm::Inf => {
                let r = LpNorm::Two.norm(v);
                if r == 0.0 {
                    return vec![0.0; v.len()];
                }
                let scale = (v.len() as f64).sqrt() * delta;
                v.iter()
                    .map(|c| (scale * c / r).clamp(-delta, delta))
                    .collect()
            }
            LpNorm::One => {
                let r = LpNorm::One.norm(v);
                if r == 0.0 {
                    return vec![0.0; v.len()];
                }
                v.iter().map(|c| delta * c / r).collect()
            }
        }
    }

    /// Gradient of the head output w.r.t. the raw decoder output, applied to
    /// an upstream vector (vector-Jacobian product).
    fn head_backward(&self, raw: &[f64], gu: &[f64]) -> Vec<f64> {
        let delta = self.constraint.delta;
        let d = raw.len();
        match self.constraint.p {
            LpNorm::Two => {
                let r = LpNorm::Two.norm(raw);
                if r == 0.0 {
                    return vec![0.0; d];
                }
                let unit: Vec<f64> = raw.iter().map(|c| c / r).collect();
                let dot: f64 = unit.iter().zip(gu).map(|(a, b)| a * b).sum();
                (0..d).map(|i| delta / r * (gu[i] - unit[i] * dot)).collect()
            }
            LpNorm::Inf => {
                let r = LpNorm::Two.norm(raw);
                if r == 0.0 {
                    return vec![0.0; d];
                }
                let scale = (d as f64).sqrt() * delta;
                let unit: Vec<f64> = raw.iter().map(|c| c / r).collect();
                // Clamp passes gradient only where it is inactive.
                let gw: Vec<f64> = (0..d)
                    .map(|i| {
                        let w = scale * unit[i];
                        if w.abs() < delta {
                            gu[i]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let dot: f64 = unit.iter().zip(&gw).map(|(a, b)| a * b).sum();
                (0..d).map(|i| scale / r * (gw[i] - unit[i] * dot)).collect()
            }
            LpNorm::One => {
                let r = LpNorm::One.norm(raw);
                if r == 0.0 {
                    return vec![0.0; d];
                }
                let dot: f64 = raw.iter().zip(gu).map(|(a, b)| a * b).sum();
                (0..d)
                    .map(|i| delta * (gu[i] / r - raw[i].signum() * dot / (r * r)))
                    .collect()
            }
        }
    }

    /// Accumulate d(upstream . lambda)/d(theta_lambda) into `grad` (flat
    /// layout) and return the gradient w.r.t. the input point.
    pub fn backward_accumulate(
        &self,
        tape: &AttackTape,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if grad.len() != self.param_len() {
            return Err(Error::shape("AttackModel grad buffer", self.param_len(), grad.len()));
        }
        let d = tape.head_out.len();
        if upstream.len() != d {
            return Err(Error::shape("AttackModel upstream", d, upstream.len()));
        }

        // lambda = s * u
        let gs: f64 = upstream.iter().zip(&tape.head_out).map(|(g, u)| g * u).sum();
        let gu: Vec<f64> = upstream.iter().map(|g| tape.scale * g).collect();
        let gv = self.head_backward(&tape.raw, &gu);

        let enc_len = self.encoder.as_ref().map_or(0, |e| e.params().len());
        let dec_lens: Vec<usize> = self.decoders.iter().map(|m| m.params().len()).collect();
        let sc_lens: Vec<usize> = self.scalers.iter().map(|m| m.params().len()).collect();

        let (dec_pg, dec_in_grad) = self.decoders[tape.branch]
            .backward(&tape.decoder, &Tensor2::row_vector(&gv))?;
        let dec_off = enc_len + dec_lens[..tape.branch].iter().sum::<usize>();
        for (g, v) in grad[dec_off..dec_off + dec_pg.len()].iter_mut().zip(&dec_pg) {
            *g += v;
        }

        let (sc_pg, sc_in_grad) = self.scalers[tape.branch]
            .backward(&tape.scaler, &Tensor2::row_vector(&[gs]))?;
        let sc_off =
            enc_len + dec_lens.iter().sum::<usize>() + sc_lens[..tape.branch].iter().sum::<usize>();
        for (g, v) in grad[sc_off..sc_off + sc_pg.len()].iter_mut().zip(&sc_pg) {
            *g += v;
        }

        let mut input_grad = sc_in_grad.row(0).to_vec();
        match (&self.encoder, &tape.encoder) {
            (Some(enc), Some(enc_tape)) => {
                let (enc_pg, enc_in_grad) = enc.backward(enc_tape, &dec_in_grad)?;
                for (g, v) in grad[..enc_len].iter_mut().zip(&enc_pg) {
                    *g += v;
                }
                for (t, v) in input_grad.iter_mut().zip(enc_in_grad.row(0)) {
                    *t += v;
                }
            }
            (None, None) => {
                for (t, v) in input_grad.iter_mut().zip(dec_in_grad.row(0)) {
                    *t += v;
                }
            }
            _ => return Err(Error::State("attack tape does not match encoder layout".into())),
        }
        Ok(input_grad)
    }
}

/// `x_adv = x + lambda(x, y)`. Not re-clipped to the unit cube unless
/// `clip_input` is set; the budget constrains the perturbation only.
pub fn adversarial_example(
    attack: &AttackModel,
    x: &[f64],
    target: &Target,
    clip_input: bool,
) -> Result<Vec<f64>> {
    let lambda = attack.forward(x, target)?;
    let mut out: Vec<f64> = x.iter().zip(&lambda).map(|(a, b)| a + b).collect();
    if clip_input {
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

fn defense_classification(d: usize, classes: usize) -> Result<Mlp> {
    Mlp::new(vec![
        LayerSpec::affine(d, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, 100),
        LayerSpec::leaky_relu(100),
        LayerSpec::affine(100, 15),
        LayerSpec::leaky_relu(15),
        LayerSpec::affine(15, classes),
    ])
}

fn encoder_net(d: usize) -> Result<Mlp> {
    Mlp::new(vec![
        LayerSpec::affine(d, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, 100),
    ])
}

fn decoder_net(d: usize) -> Result<Mlp> {
    Mlp::new(vec![
        LayerSpec::leaky_relu(100),
        LayerSpec::affine(100, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, 15),
        LayerSpec::leaky_relu(15),
        LayerSpec::affine(15, d),
    ])
}

fn scaler_net(d: usize) -> Result<Mlp> {
    Mlp::new(vec![
        LayerSpec::affine(d, 20),
        LayerSpec::leaky_relu(20),
        LayerSpec::affine(20, 1),
        LayerSpec::Sigmoid { dim: 1 },
    ])
}

/// Defense and attack pair for a `D`-dimensional, `C`-class problem:
/// defense `D -> 50 -> 100 -> 15 -> C`, encoder `D -> 50 -> 100`, one decoder
/// `100 -> 50 -> 15 -> D` and one scaler `D -> 20 -> 1` per class. All affine
/// parameters drawn from one seeded stream.
pub fn build_classification_pair(
    d: usize,
    classes: usize,
    constraint: LpConstraint,
    seed: u64,
) -> Result<(DefenseNet, AttackModel)> {
    if d < 1 || classes < 2 {
        return Err(Error::Config(format!(
            "classification needs d >= 1 and classes >= 2, got d={d}, classes={classes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defense = defense_classification(d, classes)?;
    defense.init_uniform_with(&mut rng);

    let mut encoder = encoder_net(d)?;
    encoder.init_uniform_with(&mut rng);
    let mut decoders = Vec::with_capacity(classes);
    let mut scalers = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut dec = decoder_net(d)?;
        dec.init_uniform_with(&mut rng);
        decoders.push(dec);
    }
    for _ in 0..classes {
        let mut sc = scaler_net(d)?;
        sc.init_uniform_with(&mut rng);
        scalers.push(sc);
    }

    let task = TaskKind::Classification { classes };
    Ok((
        DefenseNet::new(defense, task)?,
        AttackModel::new(constraint, task, Some(encoder), decoders, scalers)?,
    ))
}

/// Regression pair: defense `D -> 50 -> 20 -> 1`, direction net
/// `D -> 50 -> 50 -> D`, scaler `D -> 20 -> 1`.
pub fn build_regression_pair(
    d: usize,
    constraint: LpConstraint,
    seed: u64,
) -> Result<(DefenseNet, AttackModel)> {
    if d < 1 {
        return Err(Error::Config("regression needs d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defense = Mlp::new(vec![
        LayerSpec::affine(d, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, 20),
        LayerSpec::leaky_relu(20),
        LayerSpec::affine(20, 1),
    ])?;
    defense.init_uniform_with(&mut rng);

    let mut direction = Mlp::new(vec![
        LayerSpec::affine(d, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, 50),
        LayerSpec::leaky_relu(50),
        LayerSpec::affine(50, d),
    ])?;
    direction.init_uniform_with(&mut rng);
    let mut scaler = scaler_net(d)?;
    scaler.init_uniform_with(&mut rng);

    Ok((
        DefenseNet::new(defense, TaskKind::Regression)?,
        AttackModel::new(constraint, TaskKind::Regression, None, vec![direction], vec![scaler])?,
    ))
}
