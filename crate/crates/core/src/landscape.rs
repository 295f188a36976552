//! Loss landscapes: the scalar objectives that attacks climb.
//!
//! Both the discrete attacks and the continuous flow operate on a
//! [`ScalarField`] — either an analytic test function or a network loss
//! viewed as a function of the input point.

use crate::error::Result;
use crate::losses::{self, BaseLoss, Target};
use crate::models::DefenseNet;
use crate::tensor::Tensor2;

/// A continuously differentiable objective over `R^D`.
pub trait ScalarField {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;

    /// Analytic Hessian (row-major DxD) where available; integrators fall
    /// back to finite differences of the gradient otherwise.
    fn hessian(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// `F(x) = c . (x - anchor) + offset`.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub coeffs: Vec<f64>,
    pub anchor: Vec<f64>,
    pub offset: f64,
}

impl ScalarField for LinearField {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .coeffs
                .iter()
                .zip(x.iter().zip(&self.anchor))
                .map(|(c, (xi, ai))| c * (xi - ai))
                .sum::<f64>()
    }

    fn grad(&self, _x: &[f64]) -> Vec<f64> {
        self.coeffs.clone()
    }

    fn hessian(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![0.0; self.coeffs.len() * self.coeffs.len()])
    }
}

/// `F(x) = offset - a * ||x - center||^2`: one interior maximum at `center`.
#[derive(Debug, Clone)]
pub struct ConcaveQuadratic {
    pub center: Vec<f64>,
    pub curvature: f64,
    pub offset: f64,
}

impl ScalarField for ConcaveQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.offset - self.curvature * r2
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| -2.0 * self.curvature * (a - b))
            .collect()
    }

    fn hessian(&self, _x: &[f64]) -> Option<Vec<f64>> {
        let d = self.center.len();
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            h[i * d + i] = -2.0 * self.curvature;
        }
        Some(h)
    }
}

/// 2D saddle `F(x) = (x1 - c1)^2 - (x2 - c2)^2` with the saddle at `center`.
#[derive(Debug, Clone)]
pub struct SaddleQuadratic {
    pub center: [f64; 2],
}

impl ScalarField for SaddleQuadratic {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let u = x[0] - self.center[0];
        let v = x[1] - self.center[1];
        u * u - v * v
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        vec![2.0 * (x[0] - self.center[0]), -2.0 * (x[1] - self.center[1])]
    }

    fn hessian(&self, _x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![2.0, 0.0, 0.0, -2.0])
    }
}

/// Mixture of two isotropic Gaussian bumps: two local maxima separated by a
/// saddle.
#[derive(Debug, Clone)]
pub struct TwoBump {
    pub centers: [Vec<f64>; 2],
    pub amplitudes: [f64; 2],
    pub width: f64,
}

impl TwoBump {
    fn bump(&self, idx: usize, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(&self.centers[idx])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitudes[idx] * (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

impl ScalarField for TwoBump {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.bump(0, x) + self.bump(1, x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let w2 = self.width * self.width;
        let mut g = vec![0.0; x.len()];
        for idx in 0..2 {
            let b = self.bump(idx, x);
            for (gi, (xi, ci)) in g.iter_mut().zip(x.iter().zip(&self.centers[idx])) {
                *gi += -b * (xi - ci) / w2;
            }
        }
        g
    }
}

/// A defense loss `x -> L(f(x), y)` as a field over the input space.
pub struct DefenseLoss<'a> {
    defense: &'a DefenseNet,
    base: BaseLoss,
    target: Target,
}

impl<'a> DefenseLoss<'a> {
    pub fn new(defense: &'a DefenseNet, base: BaseLoss, target: Target) -> Self {
        DefenseLoss {
            defense,
            base,
            target,
        }
    }

    fn eval(&self, x: &[f64], with_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let xt = Tensor2::row_vector(x);
        if with_grad {
            let (out, tape) = self.defense.net().forward_recorded(&xt)?;
            let (value, grad_out) = losses::loss(self.base, out.row(0), &self.target)?;
            let (_, input_grad) = self
                .defense
                .net()
                .backward(&tape, &Tensor2::row_vector(&grad_out))?;
            Ok((value, Some(input_grad.row(0).to_vec())))
        } else {
            let out = self.defense.net().forward(&xt)?;
            let (value, _) = losses::loss(self.base, out.row(0), &self.target)?;
            Ok((value, None))
        }
    }
}

impl ScalarField for DefenseLoss<'_> {
    fn dim(&self) -> usize {
        self.defense.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, false).map(|(v, _)| v).unwrap_or(f64::NAN)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x, true)
            .map(|(_, g)| g.unwrap())
            .unwrap_or_else(|_| vec![f64::NAN; self.dim()])
    }
}

/// The named members of the 2D analytic test suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    Linear,
    ConcaveQuadratic,
    Saddle,
    TwoBump,
}

impl TestFunction {
    pub const ALL: [TestFunction; 4] = [
        TestFunction::Linear,
        TestFunction::ConcaveQuadratic,
        TestFunction::Saddle,
        TestFunction::TwoBump,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::Linear => "linear",
            TestFunction::ConcaveQuadratic => "quadratic",
            TestFunction::Saddle => "saddle",
            TestFunction::TwoBump => "two-bump",
        }
    }

    /// Build the field anchored at `start`, plus the saddle points a deflected
    /// flow should be told about.
    pub fn build(&self, start: [f64; 2]) -> (Box<dyn ScalarField>, Vec<Vec<f64>>) {
        match self {
            TestFunction::Linear => (
                Box::new(LinearField {
                    coeffs: vec![0.7, -0.4],
                    anchor: start.to_vec(),
                    offset: 0.1,
                }),
                vec![],
            ),
            TestFunction::ConcaveQuadratic => (
                Box::new(ConcaveQuadratic {
                    center: vec![start[0] + 0.07, start[1] - 0.07],
                    curvature: 4.0,
                    offset: 1.0,
                }),
                vec![],
            ),
            TestFunction::Saddle => (
                Box::new(SaddleQuadratic { center: start }),
                vec![start.to_vec()],
            ),
            TestFunction::TwoBump => (
                Box::new(TwoBump {
                    centers: [
                        vec![start[0] + 0.10, start[1] + 0.05],
                        vec![start[0] - 0.15, start[1] - 0.10],
                    ],
                    amplitudes: [1.0, 0.45],
                    width: 0.12,
                }),
                vec![],
            ),
        }
    }
}
