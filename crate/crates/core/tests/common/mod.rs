//! Shared oracles for integration tests: brute-force maximization over an
//! lp ball, independent of the flow/PGD implementations they check.

use advgame::landscape::ScalarField;
use advgame::models::LpConstraint;

/// Exhaustive grid search over the lp ball around `center`.
/// Returns `(max value, argmax, min value)`.
pub fn grid_max_over_ball(
    field: &dyn ScalarField,
    center: &[f64],
    constraint: &LpConstraint,
    step: f64,
) -> (f64, Vec<f64>, f64) {
    assert_eq!(center.len(), 2, "grid oracle is 2D");
    let delta = constraint.delta;
    let half = (delta / step).round() as i64;
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    let mut arg = center.to_vec();
    for i in -half..=half {
        for j in -half..=half {
            let offset = [i as f64 * step, j as f64 * step];
            if constraint.p.norm(&offset) > delta + 1e-12 {
                continue;
            }
            let point = [center[0] + offset[0], center[1] + offset[1]];
            let value = field.value(&point);
            if value > best {
                best = value;
                arg = point.to_vec();
            }
            if value < worst {
                worst = value;
            }
        }
    }
    (best, arg, worst)
}
