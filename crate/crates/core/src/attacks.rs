//! White-box gradient attacks: FGSM and projected steepest-ascent PGD with
//! restarts and early stopping, plus exact lp-ball projections.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{DefenseLoss, ScalarField};
use crate::losses::{BaseLoss, Target};
use crate::models::{argmax, DefenseNet, LpConstraint, LpNorm, TaskKind};
use crate::tensor::Tensor2;

/// How the l2 steepest-ascent step uses the gradient: a unit step along the
/// normalized gradient (comparable step sizes across points), or the raw
/// gradient as in the plain discretized flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepMode {
    #[default]
    Normalized,
    RawGrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub constraint: LpConstraint,
    /// Step size gamma.
    pub gamma: f64,
    /// Iterations per restart.
    pub steps: usize,
    pub restarts: usize,
    /// Halt a restart as soon as the current iterate is misclassified.
    pub early_stop_on_misclassify: bool,
    /// Norm defining the steepest-ascent direction.
    pub ascent_norm: LpNorm,
    pub step_mode: StepMode,
    /// Also keep the unperturbed point among the selection candidates. This
    /// guarantees the returned loss never drops below the start, but gives
    /// up the exact FGSM equivalence of the single-step degenerate case
    /// (a full-size signed step can overshoot a maximum), so it is off by
    /// default: the restart with maximal loss wins.
    pub keep_clean_candidate: bool,
    pub seed: u64,
}

impl PgdConfig {
    pub fn new(constraint: LpConstraint, gamma: f64, steps: usize, restarts: usize) -> Result<Self> {
        let cfg = PgdConfig {
            constraint,
            gamma,
            steps,
            restarts,
            early_stop_on_misclassify: false,
            ascent_norm: LpNorm::Inf,
            step_mode: StepMode::default(),
            keep_clean_candidate: false,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("pgd gamma must be positive, got {}", self.gamma)));
        }
        if self.gamma > 2.0 * self.constraint.delta {
            return Err(Error::Config(format!(
                "pgd gamma {} exceeds 2*delta = {}; larger steps are pointless after projection",
                self.gamma,
                2.0 * self.constraint.delta
            )));
        }
        if self.steps < 1 {
            return Err(Error::Config("pgd needs at least one step".into()));
        }
        if self.restarts < 1 {
            return Err(Error::Config("pgd needs at least one restart".into()));
        }
        Ok(())
    }

    /// The settings used for evaluation throughout: gamma=0.01, 50 steps,
    /// 10 restarts, signed-gradient ascent.
    pub fn evaluation_default(constraint: LpConstraint, seed: u64) -> Self {
        PgdConfig {
            constraint,
            gamma: 0.01,
            steps: 50,
            restarts: 10,
            early_stop_on_misclassify: false,
            ascent_norm: LpNorm::Inf,
            step_mode: StepMode::default(),
            keep_clean_candidate: false,
            seed,
        }
    }
}

/// Euclidean-nearest point to `x` within the lp ball of radius `delta`
/// around `center`. Exact for p in {1, 2, inf}; idempotent.
pub fn project_lp_ball(x: &[f64], center: &[f64], constraint: &LpConstraint) -> Vec<f64> {
    let delta = constraint.delta;
    let offset: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let projected = match constraint.p {
        LpNorm::Inf => offset.iter().map(|v| v.clamp(-delta, delta)).collect(),
        LpNorm::Two => {
            let norm = LpNorm::Two.norm(&offset);
            if norm <= delta {
                offset
            } else {
                offset.iter().map(|v| v * delta / norm).collect()
            }
        }
        LpNorm::One => project_l1(&offset, delta),
    };
    projected.iter().zip(center).map(|(v, c)| v + c).collect()
}

/// Projection onto the l1 ball by soft-thresholding at the exact level
/// (sort-based algorithm).
fn project_l1(v: &[f64], delta: f64) -> Vec<f64> {
    let norm = LpNorm::One.norm(v);
    if norm <= delta {
        return v.to_vec();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - delta) / (j + 1) as f64;
        if *m > candidate {
            tau = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|x| x.signum() * (x.abs() - tau).max(0.0))
        .collect()
}

/// Unit-step steepest ascent direction for the given norm. A zero gradient
/// maps to the zero vector (stationary point).
pub fn steepest_direction(grad: &[f64], ascent_norm: LpNorm) -> Vec<f64> {
    match ascent_norm {
        LpNorm::Two => {
            let n = LpNorm::Two.norm(grad);
            if n == 0.0 {
                vec![0.0; grad.len()]
            } else {
                grad.iter().map(|g| g / n).collect()
            }
        }
        LpNorm::Inf => grad.iter().map(|g| sign(*g)).collect(),
        LpNorm::One => {
            let mut imax = 0;
            for (i, g) in grad.iter().enumerate() {
                if g.abs() > grad[imax].abs() {
                    imax = i;
                }
            }
            let mut d = vec![0.0; grad.len()];
            d[imax] = sign(grad[imax]);
            d
        }
    }
}

/// Derive an independent sub-seed from a base seed and an index
/// (splitmix64 finalizer). Used to give every sample its own restart noise.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// sign with sign(0) = 0, keeping single-step attacks deterministic.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Single-step signed-gradient attack `x + delta * sign(grad L)`.
/// Defined for the linf budget only.
pub fn fgsm(
    defense: &DefenseNet,
    base: BaseLoss,
    x: &[f64],
    target: &Target,
    constraint: &LpConstraint,
) -> Result<Vec<f64>> {
    if constraint.p != LpNorm::Inf {
        return Err(Error::Config(format!(
            "fgsm is defined for the linf constraint, got p = {}",
            constraint.p
        )));
    }
    let field = DefenseLoss::new(defense, base, *target);
    let g = field.grad(x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fgsm: non-finite input gradient".into()));
    }
    Ok(x.iter()
        .zip(&g)
        .map(|(xi, gi)| xi + constraint.delta * sign(*gi))
        .collect())
}

/// Uniform sample from the lp ball of radius `delta` (origin-centred).
fn sample_in_ball(rng: &mut impl Rng, d: usize, constraint: &LpConstraint) -> Vec<f64> {
    let delta = constraint.delta;
    match constraint.p {
        LpNorm::Inf => (0..d).map(|_| rng.random_range(-delta..=delta)).collect(),
        LpNorm::Two => {
            let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let n = LpNorm::Two.norm(&dir);
            let r = delta * rng.random_range(0.0..=1.0f64).powf(1.0 / d as f64);
            if n == 0.0 {
                vec![0.0; d]
            } else {
                dir.iter().map(|v| v * r / n).collect()
            }
        }
        LpNorm::One => {
            let mags: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = mags.iter().sum();
            let r = delta * rng.random_range(0.0..=1.0f64).powf(1.0 / d as f64);
            if total == 0.0 {
                return vec![0.0; d];
            }
            mags.iter()
                .map(|m| {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    s * m / total * r
                })
                .collect()
        }
    }
}

/// Best-of-restarts projected steepest ascent on an arbitrary field.
///
/// Restart 0 starts from the clean point, later restarts from uniform noise
/// within the ball; the restart terminal with maximal loss wins. When a stop
/// predicate is given, restarts halt as soon as it fires and firing
/// candidates are preferred; ties go to later candidates.
pub fn pgd_on_field(
    field: &dyn ScalarField,
    x: &[f64],
    cfg: &PgdConfig,
    stop: Option<&dyn Fn(&[f64]) -> bool>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let d = x.len();

    struct Candidate {
        point: Vec<f64>,
        loss: f64,
        stopped: bool,
    }
    let mut candidates = Vec::with_capacity(cfg.restarts + 1);
    if cfg.keep_clean_candidate {
        candidates.push(Candidate {
            point: x.to_vec(),
            loss: field.value(x),
            stopped: stop.map(|s| s(x)).unwrap_or(false),
        });
    }

    for restart in 0..cfg.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let mut cur: Vec<f64> = if restart == 0 {
            x.to_vec()
        } else {
            let noise = sample_in_ball(&mut rng, d, &cfg.constraint);
            x.iter().zip(&noise).map(|(a, b)| a + b).collect()
        };
        for _ in 0..cfg.steps {
            if let Some(s) = stop {
                if s(&cur) {
                    break;
                }
            }
            let g = field.grad(&cur);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("pgd: non-finite gradient".into()));
            }
            let dir = match (cfg.ascent_norm, cfg.step_mode) {
                (LpNorm::Two, StepMode::RawGrad) => g,
                (norm, _) => steepest_direction(&g, norm),
            };
            let stepped: Vec<f64> = cur
                .iter()
                .zip(&dir)
                .map(|(c, v)| c + cfg.gamma * v)
                .collect();
            cur = project_lp_ball(&stepped, x, &cfg.constraint);
        }
        let loss = field.value(&cur);
        let stopped = stop.map(|s| s(&cur)).unwrap_or(false);
        candidates.push(Candidate {
            point: cur,
            loss,
            stopped,
        });
    }

    let mut best = 0;
    for i in 1..candidates.len() {
        let (c, b) = (&candidates[i], &candidates[best]);
        let better = if stop.is_some() && c.stopped != b.stopped {
            c.stopped
        } else {
            c.loss >= b.loss
        };
        if better {
            best = i;
        }
    }
    Ok(candidates.swap_remove(best).point)
}

/// PGD attack on a defense loss. Early stopping applies to classification
/// models only.
pub fn pgd(
    defense: &DefenseNet,
    base: BaseLoss,
    x: &[f64],
    target: &Target,
    cfg: &PgdConfig,
) -> Result<Vec<f64>> {
    let field = DefenseLoss::new(defense, base, *target);
    if cfg.early_stop_on_misclassify {
        let label = match (defense.task(), target) {
            (TaskKind::Classification { .. }, Target::Class(c)) => *c,
            _ => {
                return Err(Error::Config(
                    "early stopping on misclassification requires a classification model".into(),
                ))
            }
        };
        let stop = |pt: &[f64]| -> bool {
            self_predict(defense, pt).map(|c| c != label).unwrap_or(false)
        };
        pgd_on_field(&field, x, cfg, Some(&stop))
    } else {
        pgd_on_field(&field, x, cfg, None)
    }
}

fn self_predict(defense: &DefenseNet, x: &[f64]) -> Result<usize> {
    let out = defense.net().forward(&Tensor2::row_vector(x))?;
    Ok(argmax(out.row(0)))
}
