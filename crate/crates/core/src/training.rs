//! Training loops: the alternating defense/attack game, the PGD-trained
//! baseline, and clean training. All loops are seed-deterministic and audit
//! which parameter vector changed at every step.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{AdamState, Direction};
use crate::attacks::{mix_seed, pgd, PgdConfig};
use crate::checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{self, EvalMatrix};
use crate::losses::{self, LossKind, Target};
use crate::models::{AttackModel, DefenseNet, LpConstraint, TaskKind};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchMode {
    FullBatch,
    Minibatch(usize),
}

/// Configuration of the adversarial game loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameConfig {
    /// Training epochs T.
    pub epochs: usize,
    /// Defense iterations P per epoch.
    pub defense_steps: usize,
    /// Attack iterations H per epoch.
    pub attack_steps: usize,
    pub defense_lr: f64,
    /// May be zero to freeze the attack (degenerate game).
    pub attack_lr: f64,
    pub loss: LossKind,
    pub constraint: LpConstraint,
    pub batch: BatchMode,
    pub seed: u64,
    /// Write checkpoints every this many epochs (plus the final epoch).
    pub checkpoint_cadence: usize,
    /// Optional parameter magnitude clamp applied after every step.
    pub kappa_clamp: Option<f64>,
}

impl GameConfig {
    /// Hyperparameters used for the classification experiments:
    /// P = H = 1, defense lr 1e-3, attack lr 2e-4, full batch.
    pub fn classification(epochs: usize, constraint: LpConstraint, seed: u64) -> Self {
        GameConfig {
            epochs,
            defense_steps: 1,
            attack_steps: 1,
            defense_lr: 1e-3,
            attack_lr: 2e-4,
            loss: LossKind::cross_entropy(),
            constraint,
            batch: BatchMode::FullBatch,
            seed,
            checkpoint_cadence: 10,
            kappa_clamp: None,
        }
    }

    /// Regression experiments run longer: T = 400 by default.
    pub fn regression(epochs: usize, constraint: LpConstraint, seed: u64) -> Self {
        GameConfig {
            loss: LossKind::mse(),
            ..GameConfig::classification(epochs, constraint, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.defense_steps < 1 || self.attack_steps < 1 {
            return Err(Error::Config(
                "epochs, defense_steps and attack_steps must all be at least 1".into(),
            ));
        }
        if !(self.defense_lr > 0.0) || self.attack_lr < 0.0 {
            return Err(Error::Config(
                "defense_lr must be positive and attack_lr non-negative".into(),
            ));
        }
        if let BatchMode::Minibatch(sz) = self.batch {
            if sz == 0 {
                return Err(Error::Config("minibatch size must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Player {
    Defense,
    Attack,
}

/// One optimizer step in the audit trail: who moved, and which parameter
/// vectors actually changed.
#[derive(Debug, Clone, Serialize)]
pub struct StepAudit {
    pub epoch: usize,
    pub step: usize,
    pub player: Player,
    pub defense_changed: bool,
    pub attack_changed: bool,
}

/// Per-epoch metrics. Losses are per-sample means (training itself sums).
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_adv_loss: f64,
    pub test_adv_loss: f64,
    pub test_misclassification: Option<f64>,
    /// Largest `||lambda||_p / delta` seen in the per-epoch random sweep.
    pub budget_max_ratio: f64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub audit: Vec<StepAudit>,
    /// Full evaluation matrices captured at selected epochs (the lockstep
    /// pipeline fills one per epoch).
    pub matrix_snapshots: Vec<(usize, EvalMatrix)>,
}

impl TrainRecord {
    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn param_hash(params: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for p in params {
        h ^= p.to_bits();
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Training batches for one epoch: the whole train split, or a seeded
/// per-epoch shuffle chopped into minibatches.
fn epoch_batches(data: &Dataset, mode: BatchMode, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let train = data.train_indices().to_vec();
    match mode {
        BatchMode::FullBatch => vec![train],
        BatchMode::Minibatch(sz) => {
            let mut order = train;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6261_7463));
            rng.set_stream(epoch as u64);
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            order.chunks(sz).map(<[usize]>::to_vec).collect()
        }
    }
}

/// The two-player game of the adversarial training loop, advanced one epoch
/// at a time so callers can interleave evaluation.
pub struct GameTrainer {
    defense: DefenseNet,
    attack: AttackModel,
    cfg: GameConfig,
    adam_defense: AdamState,
    adam_attack: AdamState,
    epoch: usize,
    record: TrainRecord,
    checkpoint_dir: Option<PathBuf>,
    last_checkpoint: Option<PathBuf>,
    dataset_fingerprint: Option<String>,
}

impl GameTrainer {
    pub fn new(defense: DefenseNet, attack: AttackModel, cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let adam_defense = AdamState::new(defense.net().params().len(), cfg.defense_lr);
        let adam_attack = AdamState::new(attack.param_len(), cfg.attack_lr.max(f64::MIN_POSITIVE));
        Ok(GameTrainer {
            defense,
            attack,
            cfg,
            adam_defense,
            adam_attack,
            epoch: 0,
            record: TrainRecord::default(),
            checkpoint_dir: None,
            last_checkpoint: None,
            dataset_fingerprint: None,
        })
    }

    /// Write cadenced checkpoints under `dir` while training.
    pub fn with_checkpoints(mut self, dir: PathBuf, fingerprint: Option<String>) -> Self {
        self.checkpoint_dir = Some(dir);
        self.dataset_fingerprint = fingerprint;
        self
    }

    pub fn defense(&self) -> &DefenseNet {
        &self.defense
    }

    pub fn attack(&self) -> &AttackModel {
        &self.attack
    }

    pub fn record(&self) -> &TrainRecord {
        &self.record
    }

    pub fn record_mut(&mut self) -> &mut TrainRecord {
        &mut self.record
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn into_parts(self) -> (DefenseNet, AttackModel, TrainRecord) {
        (self.defense, self.attack, self.record)
    }

    fn numeric_abort(&self, err: Error, epoch: usize, step: usize, player: Player) -> Error {
        let ckpt = self
            .last_checkpoint
            .as_ref()
            .map(|p| format!("; last good checkpoint: {}", p.display()))
            .unwrap_or_default();
        Error::Numeric(format!(
            "aborted at epoch {epoch}, {player:?} step {step}: {err}{ckpt}"
        ))
    }

    /// Run one epoch: P Adam descent iterations on the defense with the
    /// attack frozen, then H Adam ascent iterations on the attack with the
    /// defense frozen, exactly in that order. In minibatch mode one
    /// iteration is a pass of per-batch steps over the shuffled train split.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<&EpochRecord> {
        let started = std::time::Instant::now();
        let epoch = self.epoch;
        let batches = epoch_batches(data, self.cfg.batch, self.cfg.seed, epoch);

        for step in 0..self.cfg.defense_steps {
            let before_f = param_hash(self.defense.net().params());
            let before_l = param_hash(&self.attack.snapshot_params());
            for batch in &batches {
                let (x, targets) = data.subset(batch);
                let out = losses::adversarial_loss(
                    &self.cfg.loss,
                    &self.defense,
                    &self.attack,
                    &x,
                    &targets,
                )
                .map_err(|e| self.numeric_abort(e, epoch, step, Player::Defense))?;
                self.adam_defense
                    .update(
                        self.defense.net_mut().params_mut(),
                        &out.grad_defense,
                        Direction::Descent,
                    )
                    .map_err(|e| self.numeric_abort(e, epoch, step, Player::Defense))?;
                if let Some(kappa) = self.cfg.kappa_clamp {
                    self.defense.net_mut().set_kappa(Some(kappa));
                    self.defense.net_mut().clamp_to_kappa();
                }
            }
            self.record.audit.push(StepAudit {
                epoch,
                step,
                player: Player::Defense,
                defense_changed: param_hash(self.defense.net().params()) != before_f,
                attack_changed: param_hash(&self.attack.snapshot_params()) != before_l,
            });
        }

        for step in 0..self.cfg.attack_steps {
            let before_f = param_hash(self.defense.net().params());
            let before_l = param_hash(&self.attack.snapshot_params());
            if self.cfg.attack_lr > 0.0 {
                for batch in &batches {
                    let (x, targets) = data.subset(batch);
                    let out = losses::adversarial_loss(
                        &self.cfg.loss,
                        &self.defense,
                        &self.attack,
                        &x,
                        &targets,
                    )
                    .map_err(|e| self.numeric_abort(e, epoch, step, Player::Attack))?;
                    let mut params = self.attack.snapshot_params();
                    self.adam_attack
                        .update(&mut params, &out.grad_attack, Direction::Ascent)
                        .map_err(|e| self.numeric_abort(e, epoch, step, Player::Attack))?;
                    self.attack.load_params(&params)?;
                }
            }
            self.record.audit.push(StepAudit {
                epoch,
                step,
                player: Player::Attack,
                defense_changed: param_hash(self.defense.net().params()) != before_f,
                attack_changed: param_hash(&self.attack.snapshot_params()) != before_l,
            });
        }

        // Post-epoch metrics and the structural budget sweep.
        let (train_x, train_t) = data.train_set();
        let (test_x, test_t) = data.test_set();
        let train_m =
            eval::net_attack_metrics(&self.defense, &self.attack, &train_x, &train_t, self.cfg.loss.base)?;
        let test_m =
            eval::net_attack_metrics(&self.defense, &self.attack, &test_x, &test_t, self.cfg.loss.base)?;
        let budget_max_ratio = budget_sweep(&self.attack, self.cfg.seed, epoch)?;

        self.epoch += 1;
        self.record.epochs.push(EpochRecord {
            epoch,
            train_adv_loss: train_m.mean_loss,
            test_adv_loss: test_m.mean_loss,
            test_misclassification: test_m.error_rate,
            budget_max_ratio,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });

        if let Some(dir) = self.checkpoint_dir.clone() {
            let cadence = self.cfg.checkpoint_cadence.max(1);
            if self.epoch.is_multiple_of(cadence) || self.epoch == self.cfg.epochs {
                std::fs::create_dir_all(&dir)?;
                let manifest = checkpoint::manifest_for(
                    self.defense.task(),
                    Some(self.cfg.constraint),
                    self.dataset_fingerprint.clone(),
                    self.cfg.seed,
                );
                let dpath = dir.join(format!("defense_epoch_{:04}.json", self.epoch));
                checkpoint::save_defense(&dpath, &self.defense, manifest.clone())?;
                let apath = dir.join(format!("attack_epoch_{:04}.json", self.epoch));
                checkpoint::save_attack(&apath, &self.attack, manifest)?;
                self.last_checkpoint = Some(dpath);
            }
        }
        Ok(self.record.epochs.last().unwrap())
    }
}

/// A 256-point random sweep of the attack budget; returns the largest
/// `||lambda||_p / delta` observed.
fn budget_sweep(attack: &AttackModel, seed: u64, epoch: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0073_7765_6570));
    rng.set_stream(epoch as u64);
    let d = attack.input_dim();
    let constraint = attack.constraint();
    let mut max_ratio = 0.0f64;
    for _ in 0..256 {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..=1.0)).collect();
        let target = match attack.task() {
            TaskKind::Classification { classes } => Target::Class(rng.random_range(0..classes)),
            TaskKind::Regression => Target::Real(0.0),
        };
        let lambda = attack.forward(&x, &target)?;
        max_ratio = max_ratio.max(constraint.p.norm(&lambda) / constraint.delta);
    }
    Ok(max_ratio)
}

/// Algorithm: per epoch, P defense descent steps against the current attack,
/// then H attack ascent steps against the current defense.
pub fn train_game(
    defense: DefenseNet,
    attack: AttackModel,
    data: &Dataset,
    cfg: &GameConfig,
) -> Result<(DefenseNet, AttackModel, TrainRecord)> {
    let mut trainer = GameTrainer::new(defense, attack, cfg.clone())?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
    }
    Ok(trainer.into_parts())
}

/// PGD-adversarial-training baseline, advanced one epoch at a time:
/// regenerate white-box PGD examples for the current defense, then take the
/// defense steps on the perturbed batch.
pub struct PgdTrainer {
    defense: DefenseNet,
    cfg: GameConfig,
    pgd_cfg: PgdConfig,
    adam: AdamState,
    epoch: usize,
    record: TrainRecord,
}

impl PgdTrainer {
    pub fn new(defense: DefenseNet, cfg: GameConfig, pgd_cfg: PgdConfig) -> Result<Self> {
        cfg.validate()?;
        pgd_cfg.validate()?;
        let adam = AdamState::new(defense.net().params().len(), cfg.defense_lr);
        Ok(PgdTrainer {
            defense,
            cfg,
            pgd_cfg,
            adam,
            epoch: 0,
            record: TrainRecord::default(),
        })
    }

    pub fn defense(&self) -> &DefenseNet {
        &self.defense
    }

    pub fn record(&self) -> &TrainRecord {
        &self.record
    }

    pub fn record_mut(&mut self) -> &mut TrainRecord {
        &mut self.record
    }

    pub fn into_parts(self) -> (DefenseNet, TrainRecord) {
        (self.defense, self.record)
    }

    pub fn run_epoch(&mut self, data: &Dataset) -> Result<&EpochRecord> {
        let started = std::time::Instant::now();
        let epoch = self.epoch;
        let mut last_adv: Option<(Tensor2, Vec<crate::losses::Target>)> = None;
        for batch in epoch_batches(data, self.cfg.batch, self.cfg.seed, epoch) {
            let (x, targets) = data.subset(&batch);

            // Regenerate adversarial examples for the current defense.
            let mut x_adv = Tensor2::zeros(x.rows(), x.cols());
            for (r, &sample) in batch.iter().enumerate() {
                let mut cfg = self.pgd_cfg;
                cfg.seed = mix_seed(self.pgd_cfg.seed, (epoch as u64) << 32 | sample as u64);
                let adv = pgd(&self.defense, self.cfg.loss.base, x.row(r), &targets[r], &cfg)?;
                x_adv.row_mut(r).copy_from_slice(&adv);
            }

            for step in 0..self.cfg.defense_steps {
                let before = param_hash(self.defense.net().params());
                let (_, grad) =
                    losses::clean_loss(self.cfg.loss.base, &self.defense, &x_adv, &targets)?;
                self.adam
                    .update(self.defense.net_mut().params_mut(), &grad, Direction::Descent)?;
                self.record.audit.push(StepAudit {
                    epoch,
                    step,
                    player: Player::Defense,
                    defense_changed: param_hash(self.defense.net().params()) != before,
                    attack_changed: false,
                });
            }
            last_adv = Some((x_adv, targets));
        }

        let (x_adv, targets) = last_adv.expect("train split is nonempty");
        let train_m = eval::clean_metrics(&self.defense, &x_adv, &targets, self.cfg.loss.base)?;
        let (test_x, test_t) = data.test_set();
        let test_m = eval::pgd_attack_metrics(
            &self.defense,
            &test_x,
            &test_t,
            self.cfg.loss.base,
            &self.pgd_cfg,
        )?;

        self.epoch += 1;
        self.record.epochs.push(EpochRecord {
            epoch,
            train_adv_loss: train_m.mean_loss,
            test_adv_loss: test_m.mean_loss,
            test_misclassification: test_m.error_rate,
            budget_max_ratio: f64::NAN,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        Ok(self.record.epochs.last().unwrap())
    }
}

pub fn train_pgd_baseline(
    defense: DefenseNet,
    data: &Dataset,
    cfg: &GameConfig,
    pgd_cfg: &PgdConfig,
) -> Result<(DefenseNet, TrainRecord)> {
    let mut trainer = PgdTrainer::new(defense, cfg.clone(), *pgd_cfg)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
    }
    Ok(trainer.into_parts())
}

/// Plain loss minimization; the resulting model also serves as the oracle
/// labeler for grid visualizations.
pub struct CleanTrainer {
    defense: DefenseNet,
    cfg: GameConfig,
    adam: AdamState,
    epoch: usize,
    record: TrainRecord,
}

impl CleanTrainer {
    pub fn new(defense: DefenseNet, cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(defense.net().params().len(), cfg.defense_lr);
        Ok(CleanTrainer {
            defense,
            cfg,
            adam,
            epoch: 0,
            record: TrainRecord::default(),
        })
    }

    pub fn defense(&self) -> &DefenseNet {
        &self.defense
    }

    pub fn record(&self) -> &TrainRecord {
        &self.record
    }

    pub fn into_parts(self) -> (DefenseNet, TrainRecord) {
        (self.defense, self.record)
    }

    pub fn run_epoch(&mut self, data: &Dataset) -> Result<&EpochRecord> {
        let started = std::time::Instant::now();
        let epoch = self.epoch;
        for batch in epoch_batches(data, self.cfg.batch, self.cfg.seed, epoch) {
            let (x, targets) = data.subset(&batch);
            for step in 0..self.cfg.defense_steps {
                let before = param_hash(self.defense.net().params());
                let (total, grad) =
                    losses::clean_loss(self.cfg.loss.base, &self.defense, &x, &targets)?;
                if !total.is_finite() {
                    return Err(Error::Numeric(format!(
                        "clean training aborted at epoch {epoch}, step {step}: non-finite loss"
                    )));
                }
                self.adam
                    .update(self.defense.net_mut().params_mut(), &grad, Direction::Descent)?;
                self.record.audit.push(StepAudit {
                    epoch,
                    step,
                    player: Player::Defense,
                    defense_changed: param_hash(self.defense.net().params()) != before,
                    attack_changed: false,
                });
            }
        }

        let (x, targets) = data.train_set();
        let train_m = eval::clean_metrics(&self.defense, &x, &targets, self.cfg.loss.base)?;
        let (test_x, test_t) = data.test_set();
        let test_m = eval::clean_metrics(&self.defense, &test_x, &test_t, self.cfg.loss.base)?;

        self.epoch += 1;
        self.record.epochs.push(EpochRecord {
            epoch,
            train_adv_loss: train_m.mean_loss,
            test_adv_loss: test_m.mean_loss,
            test_misclassification: test_m.error_rate,
            budget_max_ratio: f64::NAN,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        Ok(self.record.epochs.last().unwrap())
    }
}

pub fn train_clean(
    defense: DefenseNet,
    data: &Dataset,
    cfg: &GameConfig,
) -> Result<(DefenseNet, TrainRecord)> {
    let mut trainer = CleanTrainer::new(defense, cfg.clone())?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
    }
    Ok(trainer.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_2d, Family2D};
    use crate::models::{build_classification_pair, LpNorm};

    fn tiny_setup(seed: u64) -> (DefenseNet, AttackModel, Dataset, GameConfig) {
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Circles, 60, 0.05, 1).unwrap();
        let (defense, attack) = build_classification_pair(2, 2, constraint, seed).unwrap();
        let cfg = GameConfig {
            epochs: 3,
            ..GameConfig::classification(3, constraint, seed)
        };
        (defense, attack, data, cfg)
    }

    #[test]
    fn alternation_is_strict_and_audited() {
        let (defense, attack, data, cfg) = tiny_setup(5);
        let (_, _, record) = train_game(defense, attack, &data, &cfg).unwrap();
        assert_eq!(record.audit.len(), 3 * 2);
        for audit in &record.audit {
            match audit.player {
                Player::Defense => {
                    assert!(audit.defense_changed);
                    assert!(!audit.attack_changed, "attack moved on a defense step");
                }
                Player::Attack => {
                    assert!(audit.attack_changed);
                    assert!(!audit.defense_changed, "defense moved on an attack step");
                }
            }
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let (d1, a1, data, cfg) = tiny_setup(9);
        let (fd1, fa1, r1) = train_game(d1, a1, &data, &cfg).unwrap();
        let (d2, a2, _, _) = tiny_setup(9);
        let (fd2, fa2, r2) = train_game(d2, a2, &data, &cfg).unwrap();
        assert_eq!(fd1.net().params(), fd2.net().params());
        assert_eq!(fa1.snapshot_params(), fa2.snapshot_params());
        let l1: Vec<f64> = r1.epochs.iter().map(|e| e.test_adv_loss).collect();
        let l2: Vec<f64> = r2.epochs.iter().map(|e| e.test_adv_loss).collect();
        assert_eq!(l1, l2);
    }

    #[test]
    fn budget_holds_after_every_epoch() {
        let (defense, attack, data, cfg) = tiny_setup(2);
        let (_, _, record) = train_game(defense, attack, &data, &cfg).unwrap();
        for e in &record.epochs {
            assert!(e.budget_max_ratio <= 1.0 + 1e-9, "epoch {}: {}", e.epoch, e.budget_max_ratio);
        }
    }

    #[test]
    fn frozen_zero_attack_matches_clean_training_exactly() {
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Moons, 40, 0.05, 3).unwrap();
        let (defense, mut attack) = build_classification_pair(2, 2, constraint, 7).unwrap();
        // lambda == 0 via zeroed decoders; lr 0 keeps it frozen.
        for c in 0..2 {
            let zeros = vec![0.0; attack.decoders()[c].params().len()];
            attack.decoders_mut()[c].set_params(&zeros).unwrap();
        }
        let mut cfg = GameConfig::classification(4, constraint, 7);
        cfg.epochs = 4;
        cfg.attack_lr = 0.0;

        let (game_defense, _, game_record) =
            train_game(defense.clone(), attack, &data, &cfg).unwrap();
        let (clean_defense, clean_record) = train_clean(defense, &data, &cfg).unwrap();

        assert_eq!(game_defense.net().params(), clean_defense.net().params());
        for (g, c) in game_record.epochs.iter().zip(&clean_record.epochs) {
            assert_eq!(g.train_adv_loss, c.train_adv_loss);
        }
    }

    #[test]
    fn clean_training_reduces_loss() {
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Circles, 200, 0.05, 4).unwrap();
        let (defense, _) = build_classification_pair(2, 2, constraint, 11).unwrap();
        let cfg = GameConfig::classification(40, constraint, 11);
        let (_, record) = train_clean(defense, &data, &cfg).unwrap();
        let first = record.epochs.first().unwrap().train_adv_loss;
        let last = record.epochs.last().unwrap().train_adv_loss;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }

    #[test]
    fn regression_clean_training_beats_constant_predictor() {
        let constraint = LpConstraint::new(LpNorm::Two, 0.1).unwrap();
        let data = crate::data::generate_regression(120, 3, 0.05, 6).unwrap();
        let (defense, _) = crate::models::build_regression_pair(3, constraint, 6).unwrap();
        let mut cfg = GameConfig::regression(150, constraint, 6);
        cfg.defense_steps = 1;
        let (_, record) = train_clean(defense, &data, &cfg).unwrap();
        // Standardized targets have unit variance, so beating the constant
        // predictor means mean squared error below 1.
        let last = record.epochs.last().unwrap().train_adv_loss;
        assert!(last < 1.0, "final train MSE {last}");
    }

    #[test]
    fn degenerate_pgd_baseline_collapses_to_clean_training() {
        // A subnormal step size is absorbed by f64 addition, so every PGD
        // iterate stays bitwise at the clean point and the baseline reduces
        // to clean training exactly.
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Circles, 30, 0.05, 2).unwrap();
        let (defense, _) = build_classification_pair(2, 2, constraint, 3).unwrap();
        let cfg = GameConfig::classification(3, constraint, 3);
        let mut pgd_cfg = PgdConfig::new(constraint, f64::MIN_POSITIVE, 5, 1).unwrap();
        pgd_cfg.seed = 3;
        let (pgd_defense, record) =
            train_pgd_baseline(defense.clone(), &data, &cfg, &pgd_cfg).unwrap();
        let (clean_defense, clean_record) = train_clean(defense, &data, &cfg).unwrap();
        assert_eq!(pgd_defense.net().params(), clean_defense.net().params());
        for (p, c) in record.epochs.iter().zip(&clean_record.epochs) {
            assert_eq!(p.train_adv_loss, c.train_adv_loss);
        }
    }

    #[test]
    fn pgd_baseline_is_seed_deterministic_including_restart_noise() {
        let constraint = LpConstraint::new(LpNorm::Inf, 0.2).unwrap();
        let data = generate_2d(Family2D::Circles, 30, 0.05, 2).unwrap();
        let (defense, _) = build_classification_pair(2, 2, constraint, 3).unwrap();
        let cfg = GameConfig::classification(2, constraint, 3);
        let mut pgd_cfg = PgdConfig::new(constraint, 0.05, 5, 3).unwrap();
        pgd_cfg.seed = 3;
        let (d1, r1) = train_pgd_baseline(defense.clone(), &data, &cfg, &pgd_cfg).unwrap();
        let (d2, r2) = train_pgd_baseline(defense, &data, &cfg, &pgd_cfg).unwrap();
        assert_eq!(d1.net().params(), d2.net().params());
        let l1: Vec<f64> = r1.epochs.iter().map(|e| e.test_adv_loss).collect();
        let l2: Vec<f64> = r2.epochs.iter().map(|e| e.test_adv_loss).collect();
        assert_eq!(l1, l2);
    }
}
