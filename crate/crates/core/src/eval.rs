//! Evaluation: defense-by-attack matrices, misclassification metrics, and
//! grid vector-field exports for external plotting.
//!
//! Attack generation here is evaluation-time: PGD/FGSM columns are white-box
//! against the row's defense, while the network attack runs its own frozen
//! parameters forward only (semi-white-box; no gradients touch the defense).

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::attacks::{fgsm, mix_seed, pgd, PgdConfig};
use crate::models::LpConstraint;
use crate::data::{grid, Dataset};
use crate::error::{Error, Result};
use crate::landscape::{DefenseLoss, ScalarField};
use crate::losses::{self, BaseLoss, Target};
use crate::models::{argmax, AttackModel, DefenseNet, LpNorm, TaskKind};
use crate::tensor::Tensor2;
use crate::training::TrainRecord;

/// Mean/summed loss and (for classification) the misclassification rate of
/// one defense/attack pairing on one split.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CellMetrics {
    pub mean_loss: f64,
    pub sum_loss: f64,
    pub error_rate: Option<f64>,
}

fn metrics_from(
    defense: &DefenseNet,
    x: &Tensor2,
    targets: &[Target],
    base: BaseLoss,
) -> Result<CellMetrics> {
    if x.rows() == 0 {
        return Err(Error::Config("metrics need a nonempty split".into()));
    }
    let out = defense.net().forward(x)?;
    let mut sum = 0.0;
    let mut errors = 0usize;
    let mut classification = false;
    for r in 0..x.rows() {
        let (l, _) = losses::loss(base, out.row(r), &targets[r])?;
        sum += l;
        if let Target::Class(y) = targets[r] {
            classification = true;
            if argmax(out.row(r)) != y {
                errors += 1;
            }
        }
    }
    let n = x.rows() as f64;
    Ok(CellMetrics {
        mean_loss: sum / n,
        sum_loss: sum,
        error_rate: classification.then(|| errors as f64 / n),
    })
}

/// Metrics on unperturbed inputs.
pub fn clean_metrics(
    defense: &DefenseNet,
    x: &Tensor2,
    targets: &[Target],
    base: BaseLoss,
) -> Result<CellMetrics> {
    metrics_from(defense, x, targets, base)
}

/// Metrics under the trained network attack (loss and errors are measured
/// against the true targets; the perturbation may use imputed labels via
/// [`AttackSpec::Net`] in the matrix API).
pub fn net_attack_metrics(
    defense: &DefenseNet,
    attack: &AttackModel,
    x: &Tensor2,
    targets: &[Target],
    base: BaseLoss,
) -> Result<CellMetrics> {
    let x_adv = perturb_with_net(attack, x, targets, None)?;
    metrics_from(defense, &x_adv, targets, base)
}

/// Metrics under white-box PGD generated against this defense.
pub fn pgd_attack_metrics(
    defense: &DefenseNet,
    x: &Tensor2,
    targets: &[Target],
    base: BaseLoss,
    cfg: &PgdConfig,
) -> Result<CellMetrics> {
    let mut x_adv = Tensor2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let mut sample_cfg = *cfg;
        sample_cfg.seed = mix_seed(cfg.seed, r as u64);
        let adv = pgd(defense, base, x.row(r), &targets[r], &sample_cfg)?;
        x_adv.row_mut(r).copy_from_slice(&adv);
    }
    metrics_from(defense, &x_adv, targets, base)
}

fn perturb_with_net(
    attack: &AttackModel,
    x: &Tensor2,
    targets: &[Target],
    labeler: Option<&DefenseNet>,
) -> Result<Tensor2> {
    let mut x_adv = Tensor2::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let target = match labeler {
            Some(model) => Target::Class(model.predict_class(x.row(r))?),
            None => targets[r],
        };
        let lambda = attack.forward(x.row(r), &target)?;
        let row = x_adv.row_mut(r);
        for c in 0..x.cols() {
            row[c] = x.row(r)[c] + lambda[c];
        }
    }
    Ok(x_adv)
}

/// Where the network attack gets its conditioning label at evaluation time.
#[derive(Debug, Clone, Copy)]
pub enum LabelMode<'a> {
    /// Use the true test label.
    True,
    /// Impute the label from a (clean) model, as when labels are withheld.
    Imputed(&'a DefenseNet),
}

/// One attack column of the evaluation matrix.
pub enum AttackSpec<'a> {
    None,
    Net {
        attack: &'a AttackModel,
        labels: LabelMode<'a>,
    },
    Pgd(PgdConfig),
    Fgsm(LpConstraint),
}

impl AttackSpec<'_> {
    pub fn name(&self) -> String {
        match self {
            AttackSpec::None => "none".into(),
            AttackSpec::Net { .. } => "net".into(),
            AttackSpec::Pgd(cfg) => {
                if cfg.early_stop_on_misclassify {
                    "pgd-early".into()
                } else {
                    "pgd".into()
                }
            }
            AttackSpec::Fgsm(_) => "fgsm".into(),
        }
    }
}

/// The defense-by-attack grid of test metrics.
#[derive(Debug, Clone, Serialize)]
pub struct EvalMatrix {
    pub defenses: Vec<String>,
    pub attacks: Vec<String>,
    /// `cells[d][a]` pairs `defenses[d]` with `attacks[a]`.
    pub cells: Vec<Vec<CellMetrics>>,
}

impl EvalMatrix {
    pub fn cell(&self, defense: &str, attack: &str) -> Option<&CellMetrics> {
        let d = self.defenses.iter().position(|n| n == defense)?;
        let a = self.attacks.iter().position(|n| n == attack)?;
        Some(&self.cells[d][a])
    }

    /// Long-format CSV: defense,attack,mean_loss,sum_loss,error_rate.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("defense,attack,mean_loss,sum_loss,error_rate\n");
        for (d, row) in self.defenses.iter().zip(&self.cells) {
            for (a, cell) in self.attacks.iter().zip(row) {
                let err = cell
                    .error_rate
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                let _ = writeln!(out, "{d},{a},{},{},{err}", cell.mean_loss, cell.sum_loss);
            }
        }
        out
    }
}

/// Evaluate every defense against every attack on the dataset's test split.
///
/// PGD and FGSM columns are regenerated white-box against each row's
/// defense; the network-attack column applies the same frozen generator to
/// every row. Losses and error rates are always measured against the true
/// test targets.
pub fn evaluate_matrix(
    defenses: &[(String, &DefenseNet)],
    attacks: &[AttackSpec<'_>],
    data: &Dataset,
    base: BaseLoss,
) -> Result<EvalMatrix> {
    let (x, targets) = data.test_set();
    for (name, defense) in defenses {
        if defense.input_dim() != data.dim() {
            return Err(Error::Config(format!(
                "defense {name:?} expects dimension {}, dataset has {}",
                defense.input_dim(),
                data.dim()
            )));
        }
    }

    let mut cells = Vec::with_capacity(defenses.len());
    for (_, defense) in defenses {
        let mut row = Vec::with_capacity(attacks.len());
        for attack in attacks {
            let cell = match attack {
                AttackSpec::None => metrics_from(defense, &x, &targets, base)?,
                AttackSpec::Net { attack, labels } => {
                    let labeler = match labels {
                        LabelMode::True => None,
                        LabelMode::Imputed(model) => Some(*model),
                    };
                    let x_adv = perturb_with_net(attack, &x, &targets, labeler)?;
                    metrics_from(defense, &x_adv, &targets, base)?
                }
                AttackSpec::Pgd(cfg) => pgd_attack_metrics(defense, &x, &targets, base, cfg)?,
                AttackSpec::Fgsm(constraint) => {
                    let mut x_adv = Tensor2::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let adv = fgsm(defense, base, x.row(r), &targets[r], constraint)?;
                        x_adv.row_mut(r).copy_from_slice(&adv);
                    }
                    metrics_from(defense, &x_adv, &targets, base)?
                }
            };
            row.push(cell);
        }
        cells.push(row);
    }
    Ok(EvalMatrix {
        defenses: defenses.iter().map(|(n, _)| n.clone()).collect(),
        attacks: attacks.iter().map(AttackSpec::name).collect(),
        cells,
    })
}

/// One grid point of a field export.
#[derive(Debug, Clone, Serialize)]
pub struct FieldRow {
    pub x1: f64,
    pub x2: f64,
    pub label: usize,
    pub loss: f64,
    pub g1: f64,
    pub g2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Loss surface, unit gradient directions and attack vectors over a 2D grid,
/// with labels imputed by the given (clean) labeler.
#[derive(Debug, Clone, Serialize)]
pub struct FieldExport {
    pub resolution: usize,
    pub rows: Vec<FieldRow>,
}

impl FieldExport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("x1,x2,label,loss,g1,g2,a1,a2\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.x1, r.x2, r.label, r.loss, r.g1, r.g2, r.a1, r.a2
            );
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Export the loss value, unit loss-gradient direction and attack vector of
/// `lambda` at every grid point, with the response label imputed by
/// `labeler`. 2D inputs only.
pub fn export_field(
    defense: &DefenseNet,
    attack: &AttackModel,
    labeler: &DefenseNet,
    resolution: usize,
    base: BaseLoss,
) -> Result<FieldExport> {
    if defense.input_dim() != 2 || attack.input_dim() != 2 {
        return Err(Error::Config(
            "field export is defined for 2D input spaces only".into(),
        ));
    }
    let points = grid(resolution)?;
    let mut rows = Vec::with_capacity(points.rows());
    for r in 0..points.rows() {
        let x = points.row(r);
        let label = labeler.predict_class(x)?;
        let field = DefenseLoss::new(defense, base, Target::Class(label));
        let loss = field.value(x);
        let g = field.grad(x);
        let gnorm = LpNorm::Two.norm(&g);
        let (g1, g2) = if gnorm == 0.0 {
            (0.0, 0.0)
        } else {
            (g[0] / gnorm, g[1] / gnorm)
        };
        let a = attack.forward(x, &Target::Class(label))?;
        rows.push(FieldRow {
            x1: x[0],
            x2: x[1],
            label,
            loss,
            g1,
            g2,
            a1: a[0],
            a2: a[1],
        });
    }
    Ok(FieldExport { resolution, rows })
}

/// Attack-vector angle histogram of a field export (degrees in [-180, 180),
/// fixed bin width). Zero vectors are skipped.
pub fn attack_angle_histogram(export: &FieldExport, bin_width_deg: f64) -> Vec<(f64, usize)> {
    let bins = (360.0 / bin_width_deg).round() as usize;
    let mut counts = vec![0usize; bins];
    for row in &export.rows {
        if row.a1 == 0.0 && row.a2 == 0.0 {
            continue;
        }
        let angle = row.a2.atan2(row.a1).to_degrees();
        let idx = (((angle + 180.0) / bin_width_deg) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (-180.0 + (i as f64 + 0.5) * bin_width_deg, c))
        .collect()
}

/// Mean angular deviation (degrees) between the attack vectors and the loss
/// gradient directions of a field export.
pub fn mean_attack_gradient_deviation(export: &FieldExport) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in &export.rows {
        let an = (row.a1 * row.a1 + row.a2 * row.a2).sqrt();
        let gn = (row.g1 * row.g1 + row.g2 * row.g2).sqrt();
        if an == 0.0 || gn == 0.0 {
            continue;
        }
        let cosine = ((row.a1 * row.g1 + row.a2 * row.g2) / (an * gn)).clamp(-1.0, 1.0);
        total += cosine.acos().to_degrees();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Long-format per-epoch curves: epoch,defense,attack,metric,value.
///
/// Classification emits `loss` (mean) and `error`; regression emits `loss`
/// (mean) and `loss_sum`. One row per matrix cell per metric per epoch.
pub fn emit_curves(record: &TrainRecord, task: TaskKind) -> String {
    let mut out = String::from("epoch,defense,attack,metric,value\n");
    for (epoch, matrix) in &record.matrix_snapshots {
        for (d, row) in matrix.defenses.iter().zip(&matrix.cells) {
            for (a, cell) in matrix.attacks.iter().zip(row) {
                let _ = writeln!(out, "{epoch},{d},{a},loss,{}", cell.mean_loss);
                match task {
                    TaskKind::Classification { .. } => {
                        let _ = writeln!(
                            out,
                            "{epoch},{d},{a},error,{}",
                            cell.error_rate.unwrap_or(f64::NAN)
                        );
                    }
                    TaskKind::Regression => {
                        let _ = writeln!(out, "{epoch},{d},{a},loss_sum,{}", cell.sum_loss);
                    }
                }
            }
        }
    }
    out
}

/// Per-epoch training metrics CSV (no wall-clock columns: metric files stay
/// byte-identical across reruns; timing goes to a separate file).
pub fn emit_training_csv(record: &TrainRecord) -> String {
    let mut out = String::from("epoch,train_adv_loss,test_adv_loss,test_misclassification\n");
    for e in &record.epochs {
        let mis = e
            .test_misclassification
            .map(|m| m.to_string())
            .unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{mis}", e.epoch, e.train_adv_loss, e.test_adv_loss);
    }
    out
}

pub fn emit_timing_csv(record: &TrainRecord) -> String {
    let mut out = String::from("epoch,wall_clock_secs\n");
    for e in &record.epochs {
        let _ = writeln!(out, "{},{}", e.epoch, e.wall_clock_secs);
    }
    out
}

/// Angle (degrees) folded onto the nearest diagonal distance; used to test
/// the linf geometry claim.
pub fn distance_to_diagonal_deg(angle_deg: f64) -> f64 {
    [45.0f64, 135.0, -45.0, -135.0]
        .iter()
        .map(|d| (angle_deg - d).abs())
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_2d, Family2D};
    use crate::models::{build_classification_pair, LpConstraint};

    fn setup() -> (DefenseNet, AttackModel, Dataset) {
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Circles, 50, 0.05, 1).unwrap();
        let (defense, attack) = build_classification_pair(2, 2, constraint, 2).unwrap();
        (defense, attack, data)
    }

    #[test]
    fn counting_misclassifications() {
        let (defense, _, data) = setup();
        let (x, targets) = data.test_set();
        let m = clean_metrics(&defense, &x, &targets, BaseLoss::CrossEntropy).unwrap();
        let rate = m.error_rate.unwrap();
        assert!((0.0..=1.0).contains(&rate));
        // Rate is a multiple of 1/n by construction.
        let n = x.rows() as f64;
        assert!((rate * n - (rate * n).round()).abs() < 1e-9);
    }

    #[test]
    fn matrix_none_column_equals_clean_metrics() {
        let (defense, attack, data) = setup();
        let defenses = vec![("f".to_string(), &defense)];
        let attacks = vec![
            AttackSpec::None,
            AttackSpec::Net {
                attack: &attack,
                labels: LabelMode::True,
            },
        ];
        let matrix =
            evaluate_matrix(&defenses, &attacks, &data, BaseLoss::CrossEntropy).unwrap();
        let (x, targets) = data.test_set();
        let clean = clean_metrics(&defense, &x, &targets, BaseLoss::CrossEntropy).unwrap();
        let cell = matrix.cell("f", "none").unwrap();
        assert_eq!(cell.mean_loss, clean.mean_loss);
        assert_eq!(cell.error_rate, clean.error_rate);
    }

    #[test]
    fn pgd_cell_never_drops_below_clean_loss() {
        let (defense, _, data) = setup();
        let (x, targets) = data.test_set();
        let clean = clean_metrics(&defense, &x, &targets, BaseLoss::CrossEntropy).unwrap();
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let mut cfg = PgdConfig::new(constraint, 0.05, 10, 2).unwrap();
        cfg.seed = 5;
        let under_pgd =
            pgd_attack_metrics(&defense, &x, &targets, BaseLoss::CrossEntropy, &cfg).unwrap();
        assert!(under_pgd.mean_loss >= clean.mean_loss);
    }

    #[test]
    fn field_export_covers_the_grid_and_respects_budget() {
        let (defense, attack, _) = setup();
        let export = export_field(&defense, &attack, &defense, 11, BaseLoss::CrossEntropy)
            .unwrap();
        assert_eq!(export.rows.len(), 121);
        for row in &export.rows {
            assert!(row.a1.abs() <= 0.2 + 1e-9 && row.a2.abs() <= 0.2 + 1e-9);
            let gn = (row.g1 * row.g1 + row.g2 * row.g2).sqrt();
            assert!(gn == 0.0 || (gn - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_defense_has_zero_gradient_directions() {
        let (mut defense, attack, _) = setup();
        // Zero every parameter: logits are constant in x.
        let zeros = vec![0.0; defense.net().params().len()];
        defense.net_mut().set_params(&zeros).unwrap();
        let export = export_field(&defense, &attack, &defense, 5, BaseLoss::CrossEntropy)
            .unwrap();
        for row in &export.rows {
            assert_eq!((row.g1, row.g2), (0.0, 0.0));
        }
    }

    #[test]
    fn curves_cardinality_matches_matrix_shape() {
        let (defense, attack, data) = setup();
        let defenses = vec![
            ("f".to_string(), &defense),
            ("f_pgd".to_string(), &defense),
            ("f_clean".to_string(), &defense),
        ];
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let mut pgd_cfg = PgdConfig::new(constraint, 0.05, 3, 1).unwrap();
        pgd_cfg.seed = 1;
        let attacks = vec![
            AttackSpec::None,
            AttackSpec::Net {
                attack: &attack,
                labels: LabelMode::True,
            },
            AttackSpec::Pgd(pgd_cfg),
            AttackSpec::Fgsm(constraint),
        ];
        let mut record = TrainRecord::default();
        let epochs = 3;
        for e in 0..epochs {
            let matrix =
                evaluate_matrix(&defenses, &attacks, &data, BaseLoss::CrossEntropy).unwrap();
            record.matrix_snapshots.push((e, matrix));
        }
        let csv = emit_curves(&record, data.task());
        let rows = csv.lines().count() - 1;
        assert_eq!(rows, 3 * 4 * 2 * epochs);

        // Emission is deterministic.
        assert_eq!(csv, emit_curves(&record, data.task()));
    }

    #[test]
    fn diagonal_distance_helper() {
        assert_eq!(distance_to_diagonal_deg(45.0), 0.0);
        assert_eq!(distance_to_diagonal_deg(-135.0), 0.0);
        assert!((distance_to_diagonal_deg(0.0) - 45.0).abs() < 1e-12);
        assert!((distance_to_diagonal_deg(172.0) - 37.0).abs() < 1e-12);
    }
}
