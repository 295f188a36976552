//! Projected gradient flow on lp balls: the continuous-time limit that the
//! discrete attacks approximate.
//!
//! The dynamics are `dx/dt = P(x) grad F(x)` where `P(x)` projects onto the
//! active constraint surface: the identity inside the ball, the tangent-space
//! projector on the boundary for p < inf, and a coordinate mask for p = inf.
//! Saddle points are handled either by a smooth deflection bump along the top
//! Hessian eigenvector or by stochastic increments. Terminal points carry a
//! KKT certificate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attacks::{project_lp_ball, sign};
use crate::error::{Error, Result};
use crate::landscape::ScalarField;
use crate::models::{LpConstraint, LpNorm};

/// Relative activation tolerance: a constraint counts as active when
/// `|g(x)| <= 1e-8 * scale`, with the scale set by the constraint units.
const ACTIVATION_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    ExplicitEuler,
    #[default]
    Rk4,
}

/// How the flow avoids stalling at saddle points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SaddleHandling {
    /// Plain projected gradient flow.
    #[default]
    None,
    /// Deterministic bump along the top Hessian eigenvector inside an
    /// epsilon-ball around each listed saddle point.
    Deflect { epsilon: f64, saddles: Vec<Vec<f64>> },
    /// Gaussian increments scaled by sqrt(dt): the stochastic variant, the
    /// default choice for network losses where saddles are unknown.
    Noise { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub constraint: LpConstraint,
    pub integrator: Integrator,
    pub dt: f64,
    pub max_time: f64,
    pub stationarity_tol: f64,
    pub saddle_handling: SaddleHandling,
    pub seed: u64,
}

impl FlowConfig {
    /// RK4 with dt = delta/100, horizon 50, stationarity tolerance 1e-6.
    pub fn new(constraint: LpConstraint) -> Self {
        FlowConfig {
            constraint,
            integrator: Integrator::Rk4,
            dt: constraint.delta / 100.0,
            max_time: 50.0,
            stationarity_tol: 1e-6,
            saddle_handling: SaddleHandling::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.dt >= self.constraint.delta {
            return Err(Error::Config(format!(
                "flow dt must satisfy 0 < dt < delta, got dt={} delta={}",
                self.dt, self.constraint.delta
            )));
        }
        if !(self.max_time > 0.0) || !(self.stationarity_tol > 0.0) {
            return Err(Error::Config("flow needs positive max_time and stationarity_tol".into()));
        }
        if let SaddleHandling::Deflect { epsilon, .. } = &self.saddle_handling {
            if !(*epsilon > 0.0 && *epsilon < self.constraint.delta) {
                return Err(Error::Config(format!(
                    "deflection epsilon must satisfy 0 < epsilon < delta, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

/// Which ball constraints are active at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// One flag per constraint: a single lp-norm constraint for p < inf,
    /// one per coordinate for p = inf.
    pub flags: Vec<bool>,
    pub indices: Vec<usize>,
}

impl ActiveSet {
    pub fn any(&self) -> bool {
        !self.indices.is_empty()
    }
}

/// Constraint values g_i(x) for the ball around `center`.
fn constraint_values(x: &[f64], center: &[f64], constraint: &LpConstraint) -> Vec<f64> {
    let delta = constraint.delta;
    let offset: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    match constraint.p {
        LpNorm::Inf => offset.iter().map(|d| d.abs() - delta).collect(),
        LpNorm::Two => vec![offset.iter().map(|d| d * d).sum::<f64>() - delta * delta],
        LpNorm::One => vec![offset.iter().map(|d| d.abs()).sum::<f64>() - delta],
    }
}

fn activation_scale(constraint: &LpConstraint) -> f64 {
    match constraint.p {
        LpNorm::Inf | LpNorm::One => constraint.delta,
        LpNorm::Two => constraint.delta * constraint.delta,
    }
}

/// Active set at `x`, treating points at or (numerically) beyond the
/// boundary as active.
pub fn active_set(x: &[f64], center: &[f64], constraint: &LpConstraint) -> ActiveSet {
    let atol = ACTIVATION_REL_TOL * activation_scale(constraint);
    let values = constraint_values(x, center, constraint);
    let flags: Vec<bool> = values.iter().map(|g| *g >= -atol).collect();
    let indices = flags
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.then_some(i))
        .collect();
    ActiveSet { flags, indices }
}

/// Gradient of the single norm constraint for p < inf.
fn constraint_gradient(x: &[f64], center: &[f64], p: LpNorm) -> Vec<f64> {
    match p {
        LpNorm::Two => x.iter().zip(center).map(|(a, b)| 2.0 * (a - b)).collect(),
        LpNorm::One => x.iter().zip(center).map(|(a, b)| sign(a - b)).collect(),
        LpNorm::Inf => unreachable!("per-coordinate constraints handled separately"),
    }
}

/// The projection matrix P(x) onto the active-constraint tangent space,
/// row-major DxD. Identity when no constraint is active; the diagonal mask
/// `diag(1 - J)` for p = inf; `I - g g^T / ||g||^2` for p < inf.
pub fn projection_matrix(x: &[f64], center: &[f64], constraint: &LpConstraint) -> Result<Vec<f64>> {
    let d = x.len();
    let atol = ACTIVATION_REL_TOL * activation_scale(constraint);
    if constraint_values(x, center, constraint)
        .iter()
        .any(|g| *g > 1e6 * atol)
    {
        return Err(Error::Config("projection_matrix: point lies outside the closed ball".into()));
    }
    let active = active_set(x, center, constraint);
    let mut p = vec![0.0; d * d];
    if !active.any() {
        for i in 0..d {
            p[i * d + i] = 1.0;
        }
        return Ok(p);
    }
    match constraint.p {
        LpNorm::Inf => {
            for i in 0..d {
                p[i * d + i] = if active.flags[i] { 0.0 } else { 1.0 };
            }
        }
        _ => {
            let g = constraint_gradient(x, center, constraint.p);
            let norm2: f64 = g.iter().map(|v| v * v).sum();
            if norm2 == 0.0 {
                return Err(Error::Numeric(
                    "projection_matrix: degenerate constraint gradient on the boundary".into(),
                ));
            }
            for i in 0..d {
                for j in 0..d {
                    let id = if i == j { 1.0 } else { 0.0 };
                    p[i * d + j] = id - g[i] * g[j] / norm2;
                }
            }
        }
    }
    Ok(p)
}

/// Apply P(x) to a vector without forming the matrix.
fn project_tangent(x: &[f64], center: &[f64], constraint: &LpConstraint, v: &[f64]) -> Vec<f64> {
    let active = active_set(x, center, constraint);
    if !active.any() {
        return v.to_vec();
    }
    match constraint.p {
        LpNorm::Inf => v
            .iter()
            .zip(&active.flags)
            .map(|(vi, a)| if *a { 0.0 } else { *vi })
            .collect(),
        _ => {
            let g = constraint_gradient(x, center, constraint.p);
            let norm2: f64 = g.iter().map(|w| w * w).sum();
            if norm2 == 0.0 {
                return v.to_vec();
            }
            let dot: f64 = g.iter().zip(v).map(|(a, b)| a * b).sum();
            v.iter().zip(&g).map(|(vi, gi)| vi - gi * dot / norm2).collect()
        }
    }
}

/// One sampled state of an integrated trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub converged: bool,
    pub terminal_kkt: KktReport,
}

impl Trajectory {
    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the start state")
    }

    pub fn terminal_value(&self) -> f64 {
        *self.values.last().expect("trajectory has at least the start state")
    }
}

/// Precomputed deflection data for one saddle point.
struct Deflector {
    saddle: Vec<f64>,
    epsilon: f64,
    eigvec: Vec<f64>,
}

impl Deflector {
    /// The bump `exp(-1/(eps^2 - r^2))` inside the epsilon-ball, 0 outside,
    /// normalized to peak value 1 at the saddle. Without the normalization
    /// the raw bump peaks at `exp(-1/eps^2)` (about 5e-20 for eps = 0.15),
    /// which f64 addition absorbs entirely, leaving the flow stuck.
    fn bump(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.saddle).map(|(a, b)| (a - b) * (a - b)).sum();
        let e2 = self.epsilon * self.epsilon;
        if r2 >= e2 {
            0.0
        } else {
            (1.0 / e2 - 1.0 / (e2 - r2)).exp()
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        let r2: f64 = x.iter().zip(&self.saddle).map(|(a, b)| (a - b) * (a - b)).sum();
        r2 < self.epsilon * self.epsilon
    }
}

fn build_deflectors(
    field: &dyn ScalarField,
    saddles: &[Vec<f64>],
    epsilon: f64,
) -> Result<Vec<Deflector>> {
    saddles
        .iter()
        .map(|s| {
            let h = field
                .hessian(s)
                .unwrap_or_else(|| finite_difference_hessian(field, s));
            let eigvec = top_eigenvector(&h, s.len())?;
            Ok(Deflector {
                saddle: s.clone(),
                epsilon,
                eigvec,
            })
        })
        .collect()
}

/// Central-difference Hessian of the gradient, symmetrized.
pub fn finite_difference_hessian(field: &dyn ScalarField, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let h = 1e-5;
    let mut hess = vec![0.0; d * d];
    for j in 0..d {
        let mut plus = x.to_vec();
        plus[j] += h;
        let mut minus = x.to_vec();
        minus[j] -= h;
        let gp = field.grad(&plus);
        let gm = field.grad(&minus);
        for i in 0..d {
            hess[i * d + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (hess[i * d + j] + hess[j * d + i]);
            hess[i * d + j] = avg;
            hess[j * d + i] = avg;
        }
    }
    hess
}

/// Unit eigenvector of the most-positive eigenvalue, via power iteration on
/// the Gershgorin-shifted matrix (tolerance 1e-8, at most 500 iterations).
pub fn top_eigenvector(hessian: &[f64], d: usize) -> Result<Vec<f64>> {
    if hessian.len() != d * d {
        return Err(Error::shape("top_eigenvector hessian", d * d, hessian.len()));
    }
    // Shift so all eigenvalues are positive: the dominant eigenvalue of
    // H + cI is then the most-positive eigenvalue of H.
    let shift = (0..d)
        .map(|i| (0..d).map(|j| hessian[i * d + j].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        + 1.0;
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    // Deterministic non-axis start to avoid an orthogonal initial vector.
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = 1.0 / (1.0 + i as f64);
    }
    normalize(&mut v);
    let mut prev = v.clone();
    for _ in 0..500 {
        let mut next = vec![0.0; d];
        for i in 0..d {
            let mut acc = shift * v[i];
            for j in 0..d {
                acc += hessian[i * d + j] * v[j];
            }
            next[i] = acc;
        }
        normalize(&mut next);
        let diff: f64 = next
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = next.clone();
        v = next;
        if diff < 1e-8 {
            break;
        }
    }
    // Fix the sign deterministically: first nonzero component positive.
    if let Some(first) = v.iter().find(|c| **c != 0.0) {
        if *first < 0.0 {
            for c in &mut v {
                *c = -*c;
            }
        }
    }
    Ok(v)
}

fn normalize(v: &mut [f64]) {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

struct FlowDynamics<'a> {
    field: &'a dyn ScalarField,
    center: &'a [f64],
    constraint: LpConstraint,
    deflectors: Vec<Deflector>,
}

impl FlowDynamics<'_> {
    /// Deterministic drift `P(x)[grad F(x) + deflection(x)]`.
    fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = self.field.grad(x);
        for defl in &self.deflectors {
            let psi = defl.bump(x);
            if psi > 0.0 {
                // Orient the eigenvector along the current ascent so the
                // deflected trajectory stays non-decreasing.
                let dot: f64 = defl.eigvec.iter().zip(&rhs).map(|(a, b)| a * b).sum();
                let orient = if dot < 0.0 { -1.0 } else { 1.0 };
                for (r, e) in rhs.iter_mut().zip(&defl.eigvec) {
                    *r += orient * psi * e;
                }
            }
        }
        project_tangent(x, self.center, &self.constraint, &rhs)
    }

    fn inside_saddle_ball(&self, x: &[f64]) -> bool {
        self.deflectors.iter().any(|d| d.contains(x))
    }
}

/// Integrate the projected gradient flow from `x_s` until the projected
/// right-hand side is below the stationarity tolerance or time runs out.
///
/// After every step the state is projected back onto the closed ball, so
/// discrete drift cannot leave the feasible set. Reaching `max_time` without
/// stationarity is not an error: the trajectory is returned with
/// `converged = false`.
pub fn integrate_flow(
    field: &dyn ScalarField,
    x_s: &[f64],
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let deflectors = match &cfg.saddle_handling {
        SaddleHandling::Deflect { epsilon, saddles } => {
            build_deflectors(field, saddles, *epsilon)?
        }
        _ => Vec::new(),
    };
    let dynamics = FlowDynamics {
        field,
        center: x_s,
        constraint: cfg.constraint,
        deflectors,
    };
    let noise_sigma = match &cfg.saddle_handling {
        SaddleHandling::Noise { sigma } => *sigma,
        _ => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut x = x_s.to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut values = vec![field.value(&x)];
    let mut converged = false;

    let steps = (cfg.max_time / cfg.dt).ceil() as usize;
    for _ in 0..steps {
        let drift = dynamics.drift(&x);
        if !drift.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("flow drift became non-finite at t={t}")));
        }
        let drift_norm = LpNorm::Two.norm(&drift);
        if drift_norm <= cfg.stationarity_tol && !dynamics.inside_saddle_ball(&x) {
            converged = true;
            break;
        }

        let mut next = match cfg.integrator {
            Integrator::ExplicitEuler => axpy(&x, cfg.dt, &drift),
            Integrator::Rk4 => {
                let k1 = drift;
                let k2 = dynamics.drift(&axpy(&x, cfg.dt / 2.0, &k1));
                let k3 = dynamics.drift(&axpy(&x, cfg.dt / 2.0, &k2));
                let k4 = dynamics.drift(&axpy(&x, cfg.dt, &k3));
                let mut out = x.clone();
                for i in 0..out.len() {
                    out[i] += cfg.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                out
            }
        };
        if noise_sigma > 0.0 {
            let xi: Vec<f64> = (0..next.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let kick = project_tangent(&next, x_s, &cfg.constraint, &xi);
            for (n, k) in next.iter_mut().zip(&kick) {
                *n += noise_sigma * cfg.dt.sqrt() * k;
            }
        }
        x = project_lp_ball(&next, x_s, &cfg.constraint);
        t += cfg.dt;
        times.push(t);
        states.push(x.clone());
        values.push(field.value(&x));
    }

    let terminal_kkt = kkt_report(field, &x, x_s, &cfg.constraint, 10.0 * cfg.stationarity_tol);
    Ok(Trajectory {
        times,
        states,
        values,
        converged,
        terminal_kkt,
    })
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

/// A flow-derived attack: the terminal state minus the start.
#[derive(Debug, Clone)]
pub struct FlowAttack {
    pub perturbation: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Run the flow from `x_s` and return the perturbation it settles on.
/// `converged = false` on the trajectory flags a non-stationary result.
pub fn best_attack_flow(field: &dyn ScalarField, x_s: &[f64], cfg: &FlowConfig) -> Result<FlowAttack> {
    let trajectory = integrate_flow(field, x_s, cfg)?;
    let terminal = project_lp_ball(trajectory.terminal_state(), x_s, &cfg.constraint);
    let perturbation = terminal.iter().zip(x_s).map(|(a, b)| a - b).collect();
    Ok(FlowAttack {
        perturbation,
        trajectory,
    })
}

/// KKT certificate at a terminal point.
///
/// Interior: the gradient norm is the stationarity residual and there are no
/// multipliers. Boundary: the residual is what remains of the gradient after
/// removing its component along the active constraint normals, and the
/// implied multipliers must be (near-)nonnegative. Complementary slackness
/// holds by construction since inactive constraints get no multiplier.
#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub interior: bool,
    pub active_constraints: Vec<usize>,
    pub stationarity_residual: f64,
    pub multipliers: Vec<f64>,
    pub dual_feasible: bool,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn kkt_report(
    field: &dyn ScalarField,
    x: &[f64],
    center: &[f64],
    constraint: &LpConstraint,
    tol: f64,
) -> KktReport {
    let grad = field.grad(x);
    let active = active_set(x, center, constraint);

    if !active.any() {
        let residual = LpNorm::Two.norm(&grad);
        return KktReport {
            interior: true,
            active_constraints: vec![],
            stationarity_residual: residual,
            multipliers: vec![],
            dual_feasible: true,
            tolerance: tol,
            passed: residual <= tol,
        };
    }

    match constraint.p {
        LpNorm::Inf => {
            // grad_i = mu_i * sign(x - center)_i on active coordinates.
            let mut multipliers = Vec::with_capacity(active.indices.len());
            let mut residual2 = 0.0;
            for i in 0..x.len() {
                if active.flags[i] {
                    let s = sign(x[i] - center[i]);
                    multipliers.push(grad[i] * s);
                } else {
                    residual2 += grad[i] * grad[i];
                }
            }
            let residual = residual2.sqrt();
            let dual = multipliers.iter().all(|m| *m >= -tol);
            KktReport {
                interior: false,
                active_constraints: active.indices,
                stationarity_residual: residual,
                multipliers,
                dual_feasible: dual,
                tolerance: tol,
                passed: residual <= tol && dual,
            }
        }
        _ => {
            let g = constraint_gradient(x, center, constraint.p);
            let norm2: f64 = g.iter().map(|v| v * v).sum();
            let mu = if norm2 == 0.0 {
                0.0
            } else {
                g.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() / norm2
            };
            let residual = LpNorm::Two.norm(
                &grad
                    .iter()
                    .zip(&g)
                    .map(|(gr, gi)| gr - mu * gi)
                    .collect::<Vec<f64>>(),
            );
            let dual = mu >= -tol;
            KktReport {
                interior: false,
                active_constraints: active.indices,
                stationarity_residual: residual,
                multipliers: vec![mu],
                dual_feasible: dual,
                tolerance: tol,
                passed: residual <= tol && dual,
            }
        }
    }
}

/// Models with a known closed-form best linf attack.
#[derive(Debug, Clone)]
pub enum ClosedFormModel {
    /// Least-squares fit `f(x) = beta . x`.
    Linear { beta: Vec<f64> },
    /// Logistic fit `P(y=1|x) = sigmoid(beta . x)`, labels in {0, 1}.
    Logistic { beta: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ClosedFormAttack {
    pub perturbation: Vec<f64>,
    /// A zero coefficient or zero residual hit the sign(0) = 0 convention.
    pub zero_sign_applied: bool,
}

/// The exact best linf(delta) attack for linear and logistic models:
/// `delta * sign((beta.x - y) / beta)` and `delta * sign(0.5 - y) sign(beta)`
/// respectively, taken coordinate-wise for vector coefficients.
pub fn closed_form_attack(
    model: &ClosedFormModel,
    x: &[f64],
    y: f64,
    delta: f64,
) -> Result<ClosedFormAttack> {
    let (beta, front) = match model {
        ClosedFormModel::Linear { beta } => {
            if beta.len() != x.len() {
                return Err(Error::shape("closed_form_attack input", beta.len(), x.len()));
            }
            let fit: f64 = beta.iter().zip(x).map(|(b, xi)| b * xi).sum();
            (beta, sign(fit - y))
        }
        ClosedFormModel::Logistic { beta } => {
            if beta.len() != x.len() {
                return Err(Error::shape("closed_form_attack input", beta.len(), x.len()));
            }
            (beta, sign(0.5 - y))
        }
    };
    let mut zero_sign = front == 0.0;
    let perturbation: Vec<f64> = beta
        .iter()
        .map(|b| {
            let s = sign(*b);
            if s == 0.0 {
                zero_sign = true;
            }
            delta * front * s
        })
        .collect();
    Ok(ClosedFormAttack {
        perturbation,
        zero_sign_applied: zero_sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{ConcaveQuadratic, LinearField, SaddleQuadratic, TestFunction};

    fn linf(delta: f64) -> LpConstraint {
        LpConstraint::new(LpNorm::Inf, delta).unwrap()
    }

    fn l2(delta: f64) -> LpConstraint {
        LpConstraint::new(LpNorm::Two, delta).unwrap()
    }

    #[test]
    fn interior_projection_is_identity() {
        let p = projection_matrix(&[0.5, 0.5], &[0.5, 0.5], &l2(0.2)).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn l2_boundary_projector_annihilates_the_radial_direction() {
        let center = [0.5, 0.5];
        let x = [0.5 + 0.2 * 0.6, 0.5 + 0.2 * 0.8];
        let p = projection_matrix(&x, &center, &l2(0.2)).unwrap();
        let radial = [x[0] - center[0], x[1] - center[1]];
        for i in 0..2 {
            let v = p[i * 2] * radial[0] + p[i * 2 + 1] * radial[1];
            assert!(v.abs() < 1e-12, "row {i}: {v}");
        }
        // P is idempotent: P.P = P.
        for i in 0..2 {
            for j in 0..2 {
                let pp = p[i * 2] * p[j] + p[i * 2 + 1] * p[2 + j];
                assert!((pp - p[i * 2 + j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linf_projector_is_the_coordinate_mask() {
        let center = [0.5, 0.5, 0.5];
        let x = [0.7, 0.55, 0.45];
        let p = projection_matrix(&x, &center, &linf(0.2)).unwrap();
        assert_eq!(p, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn linear_flow_reaches_the_signed_corner() {
        let field = LinearField {
            coeffs: vec![1.0, -2.0],
            anchor: vec![0.5, 0.5],
            offset: 0.0,
        };
        let cfg = FlowConfig::new(linf(0.2));
        let attack = best_attack_flow(&field, &[0.5, 0.5], &cfg).unwrap();
        assert!(attack.trajectory.converged);
        assert!((attack.perturbation[0] - 0.2).abs() < 1e-9);
        assert!((attack.perturbation[1] + 0.2).abs() < 1e-9);
        let kkt = &attack.trajectory.terminal_kkt;
        assert!(kkt.passed, "{kkt:?}");
        // Multipliers equal |c_i| for the linear objective at the corner.
        assert!((kkt.multipliers[0] - 1.0).abs() < 1e-9);
        assert!((kkt.multipliers[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn interior_maximum_is_reached_with_vanishing_gradient() {
        let center = vec![0.55, 0.43];
        let field = ConcaveQuadratic {
            center: center.clone(),
            curvature: 4.0,
            offset: 1.0,
        };
        let cfg = FlowConfig::new(l2(0.2));
        let attack = best_attack_flow(&field, &[0.5, 0.5], &cfg).unwrap();
        assert!(attack.trajectory.converged);
        let terminal = attack.trajectory.terminal_state();
        assert!((terminal[0] - center[0]).abs() < 1e-4);
        assert!((terminal[1] - center[1]).abs() < 1e-4);
        assert!(attack.trajectory.terminal_kkt.interior);
        assert!(attack.trajectory.terminal_kkt.passed);
    }

    #[test]
    fn deflection_escapes_a_saddle_start() {
        let field = SaddleQuadratic { center: [0.5, 0.5] };
        let mut cfg = FlowConfig::new(linf(0.2));
        cfg.saddle_handling = SaddleHandling::Deflect {
            epsilon: 0.15,
            saddles: vec![vec![0.5, 0.5]],
        };
        let attack = best_attack_flow(&field, &[0.5, 0.5], &cfg).unwrap();
        let initial = attack.trajectory.values[0];
        let terminal = attack.trajectory.terminal_value();
        assert!(
            terminal > initial + 1e-3,
            "flow failed to escape the saddle: {initial} -> {terminal}"
        );
    }

    #[test]
    fn noise_zero_and_deflect_out_of_range_match_plain_flow() {
        let field = ConcaveQuadratic {
            center: vec![0.55, 0.5],
            curvature: 2.0,
            offset: 0.5,
        };
        let start = [0.5, 0.5];
        let base = FlowConfig::new(l2(0.2));
        let plain = integrate_flow(&field, &start, &base).unwrap();

        let mut noise = base.clone();
        noise.saddle_handling = SaddleHandling::Noise { sigma: 0.0 };
        let with_noise = integrate_flow(&field, &start, &noise).unwrap();
        assert_eq!(plain.states, with_noise.states);

        let mut deflect = base.clone();
        // The listed saddle is far outside the ball, so the bump never fires.
        deflect.saddle_handling = SaddleHandling::Deflect {
            epsilon: 0.1,
            saddles: vec![vec![5.0, 5.0]],
        };
        let with_deflect = integrate_flow(&field, &start, &deflect).unwrap();
        assert_eq!(plain.states, with_deflect.states);
    }

    #[test]
    fn early_stopped_trajectory_fails_kkt() {
        let field = LinearField {
            coeffs: vec![1.0, 0.5],
            anchor: vec![0.5, 0.5],
            offset: 0.0,
        };
        let mut cfg = FlowConfig::new(linf(0.2));
        cfg.max_time = 0.02; // a couple of steps, far from the corner
        let traj = integrate_flow(&field, &[0.5, 0.5], &cfg).unwrap();
        assert!(!traj.converged);
        assert!(!traj.terminal_kkt.passed);
    }

    #[test]
    fn closed_form_linear_matches_the_formula() {
        let atk = closed_form_attack(
            &ClosedFormModel::Linear { beta: vec![1.5] },
            &[0.4],
            1.0,
            0.2,
        )
        .unwrap();
        // sign((0.6 - 1.0)/1.5) * 0.2 = -0.2
        assert_eq!(atk.perturbation, vec![-0.2]);
        assert!(!atk.zero_sign_applied);
    }

    #[test]
    fn closed_form_logistic_matches_the_formula() {
        let atk = closed_form_attack(
            &ClosedFormModel::Logistic { beta: vec![-2.0] },
            &[0.3],
            1.0,
            0.2,
        )
        .unwrap();
        // 0.2 * sign(-0.5) * sign(-2) = +0.2
        assert_eq!(atk.perturbation, vec![0.2]);
    }

    #[test]
    fn zero_coefficient_applies_sign_zero_and_reports_it() {
        let atk = closed_form_attack(
            &ClosedFormModel::Logistic {
                beta: vec![1.0, 0.0],
            },
            &[0.3, 0.4],
            0.0,
            0.2,
        )
        .unwrap();
        assert_eq!(atk.perturbation, vec![0.2, 0.0]);
        assert!(atk.zero_sign_applied);
    }

    #[test]
    fn suite_trajectories_are_monotone_and_contained() {
        for kind in TestFunction::ALL {
            for constraint in [l2(0.2), linf(0.2)] {
                let start = [0.5, 0.5];
                let (field, saddles) = kind.build(start);
                let mut cfg = FlowConfig::new(constraint);
                if !saddles.is_empty() {
                    cfg.saddle_handling = SaddleHandling::Deflect {
                        epsilon: 0.15,
                        saddles,
                    };
                }
                let traj = integrate_flow(field.as_ref(), &start, &cfg).unwrap();
                for w in traj.values.windows(2) {
                    assert!(
                        w[1] >= w[0] - 1e-8,
                        "{} {:?}: per-step decrease {} -> {}",
                        kind.name(),
                        constraint.p,
                        w[0],
                        w[1]
                    );
                }
                for state in &traj.states {
                    let offset: Vec<f64> =
                        state.iter().zip(&start).map(|(a, b)| a - b).collect();
                    assert!(constraint.p.norm(&offset) <= constraint.delta + 1e-9);
                }
            }
        }
    }
}
