//! Cross-method oracles for the flow machinery: brute-force grid search,
//! PGD/flow agreement, and integrator-tolerance quantification.

mod common;

use advgame::attacks::{pgd_on_field, PgdConfig, StepMode};
use advgame::flow::{best_attack_flow, integrate_flow, FlowConfig, SaddleHandling};
use advgame::landscape::{DefenseLoss, ScalarField, TestFunction};
use advgame::losses::{BaseLoss, Target};
use advgame::models::{build_classification_pair, LpConstraint, LpNorm};
use common::grid_max_over_ball;
use std::cell::RefCell;

fn l2(delta: f64) -> LpConstraint {
    LpConstraint::new(LpNorm::Two, delta).unwrap()
}

fn linf(delta: f64) -> LpConstraint {
    LpConstraint::new(LpNorm::Inf, delta).unwrap()
}

/// Flow and PGD agree on the analytic suite: terminal losses within 1% of
/// the loss range over the ball.
#[test]
fn flow_and_pgd_terminal_losses_agree_on_the_suite() {
    let start = [0.5, 0.5];
    for kind in TestFunction::ALL {
        for constraint in [l2(0.2), linf(0.2)] {
            let (field, saddles) = kind.build(start);

            let mut flow_cfg = FlowConfig::new(constraint);
            if !saddles.is_empty() {
                flow_cfg.saddle_handling = SaddleHandling::Deflect {
                    epsilon: 0.15,
                    saddles,
                };
            }
            let flow_terminal = best_attack_flow(field.as_ref(), &start, &flow_cfg)
                .unwrap()
                .trajectory
                .terminal_value();

            let mut pgd_cfg = PgdConfig::new(constraint, 0.004, 400, 4).unwrap();
            pgd_cfg.ascent_norm = constraint.p;
            pgd_cfg.step_mode = StepMode::Normalized;
            pgd_cfg.seed = 9;
            let pgd_terminal =
                field.value(&pgd_on_field(field.as_ref(), &start, &pgd_cfg, None).unwrap());

            let (grid_max, _, grid_min) =
                grid_max_over_ball(field.as_ref(), &start, &constraint, 0.005);
            let range = grid_max - grid_min;
            assert!(range > 0.0);
            assert!(
                (flow_terminal - pgd_terminal).abs() / range <= 0.01,
                "{} {:?}: flow {flow_terminal} vs pgd {pgd_terminal} (range {range})",
                kind.name(),
                constraint.p
            );
        }
    }
}

/// PGD reaches at least 99% of the brute-force grid maximum on a fixed
/// random network's loss surface.
#[test]
fn pgd_matches_grid_search_on_a_toy_network_loss() {
    let constraint = linf(0.2);
    let (defense, _) = build_classification_pair(2, 3, constraint, 42).unwrap();
    let field = DefenseLoss::new(&defense, BaseLoss::CrossEntropy, Target::Class(1));
    let start = [0.45, 0.55];

    let mut cfg = PgdConfig::evaluation_default(constraint, 5);
    cfg.seed = 5;
    let terminal = field.value(&pgd_on_field(&field, &start, &cfg, None).unwrap());
    let (grid_max, _, _) = grid_max_over_ball(&field, &start, &constraint, 0.005);
    assert!(grid_max > 0.0);
    assert!(
        terminal >= 0.99 * grid_max,
        "pgd terminal {terminal} below 99% of grid max {grid_max}"
    );
}

/// The flow with stochastic saddle handling (the default for network losses)
/// also reaches at least 99% of the grid maximum on a random network's loss.
#[test]
fn flow_matches_grid_search_on_a_toy_network_loss() {
    for constraint in [l2(0.2), linf(0.2)] {
        let (defense, _) = build_classification_pair(2, 3, constraint, 42).unwrap();
        let field = DefenseLoss::new(&defense, BaseLoss::CrossEntropy, Target::Class(2));
        let start = [0.45, 0.55];

        for handling in [SaddleHandling::None, SaddleHandling::Noise { sigma: 0.05 }] {
            let mut cfg = FlowConfig::new(constraint);
            cfg.saddle_handling = handling.clone();
            cfg.seed = 3;
            let attack = best_attack_flow(&field, &start, &cfg).unwrap();
            let terminal = attack.trajectory.terminal_value();
            let (grid_max, _, _) = grid_max_over_ball(&field, &start, &constraint, 0.005);
            assert!(grid_max > 0.0);
            assert!(
                terminal >= 0.99 * grid_max,
                "{:?} {handling:?}: flow terminal {terminal} below 99% of grid max {grid_max}",
                constraint.p
            );
        }
    }
}

/// Integrator tolerance is second order: the worst per-step decrease does
/// not grow when the step size is halved.
#[test]
fn per_step_decrease_shrinks_with_dt() {
    let start = [0.5, 0.5];
    // Linear objective on the l2 ball exercises boundary sliding, where the
    // project-back step is the dominant error source.
    let (field, _) = TestFunction::Linear.build(start);
    let constraint = l2(0.2);

    let max_decrease = |dt: f64| -> f64 {
        let mut cfg = FlowConfig::new(constraint);
        cfg.dt = dt;
        let traj = integrate_flow(field.as_ref(), &start, &cfg).unwrap();
        traj.values
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    };

    let coarse = max_decrease(0.004);
    let fine = max_decrease(0.002);
    let finest = max_decrease(0.001);
    assert!(
        fine <= coarse + 1e-15,
        "halving dt must not worsen the decrease: {coarse} -> {fine}"
    );
    assert!(finest <= fine + 1e-15, "{fine} -> {finest}");
}

/// Every point PGD evaluates a gradient at (its iterates) stays inside the
/// ball with 1e-9 slack.
#[test]
fn pgd_iterates_stay_inside_the_ball() {
    struct Recording<'a> {
        inner: &'a dyn ScalarField,
        seen: RefCell<Vec<Vec<f64>>>,
    }
    impl ScalarField for Recording<'_> {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.inner.value(x)
        }
        fn grad(&self, x: &[f64]) -> Vec<f64> {
            self.seen.borrow_mut().push(x.to_vec());
            self.inner.grad(x)
        }
    }

    let start = [0.5, 0.5];
    for constraint in [l2(0.2), linf(0.2), LpConstraint::new(LpNorm::One, 0.2).unwrap()] {
        let (field, _) = TestFunction::TwoBump.build(start);
        let recorder = Recording {
            inner: field.as_ref(),
            seen: RefCell::new(Vec::new()),
        };
        let mut cfg = PgdConfig::new(constraint, 0.02, 60, 5).unwrap();
        cfg.seed = 11;
        pgd_on_field(&recorder, &start, &cfg, None).unwrap();
        let seen = recorder.seen.borrow();
        assert!(!seen.is_empty());
        for point in seen.iter() {
            let offset: Vec<f64> = point.iter().zip(&start).map(|(a, b)| a - b).collect();
            assert!(
                constraint.p.norm(&offset) <= constraint.delta + 1e-9,
                "{:?}: iterate outside the ball",
                constraint.p
            );
        }
    }
}
