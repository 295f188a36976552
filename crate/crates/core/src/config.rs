//! Declarative experiment configuration: one JSON document covering the
//! dataset, models, budget, training, attacks and evaluation of a run.
//!
//! Parsing is strict (unknown keys are rejected) and validation reports
//! every violation at once. Each run writes the fully-resolved config back
//! into its artifact directory.

use serde::{Deserialize, Serialize};

use crate::attacks::{PgdConfig, StepMode};
use crate::data::Family2D;
use crate::error::{Error, Result};
use crate::losses::{BaseLoss, LossKind, LossMix};
use crate::models::{LpConstraint, LpNorm, TaskKind};
use crate::training::{BatchMode, GameConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Generate2d {
        family: Family2D,
        n: usize,
        noise: f64,
    },
    GenerateRegression {
        n: usize,
        d: usize,
        noise: f64,
    },
    ClassificationCsv {
        path: String,
    },
    RegressionCsv {
        path: String,
        target_column: String,
        #[serde(default)]
        raw_target: bool,
    },
}

impl DatasetConfig {
    pub fn task_kind_hint(&self) -> Option<TaskKind> {
        match self {
            DatasetConfig::Generate2d { family, .. } => Some(TaskKind::Classification {
                classes: family.classes(),
            }),
            DatasetConfig::GenerateRegression { .. } | DatasetConfig::RegressionCsv { .. } => {
                Some(TaskKind::Regression)
            }
            DatasetConfig::ClassificationCsv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub p: LpNorm,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixConfig {
    Plain,
    AlphaWeighted,
    Trades,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    #[serde(default = "one")]
    pub defense_steps: usize,
    #[serde(default = "one")]
    pub attack_steps: usize,
    #[serde(default = "default_defense_lr")]
    pub defense_lr: f64,
    #[serde(default = "default_attack_lr")]
    pub attack_lr: f64,
    #[serde(default = "default_mix")]
    pub loss_mix: MixConfig,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub minibatch: Option<usize>,
    #[serde(default = "default_cadence")]
    pub checkpoint_cadence: usize,
    #[serde(default)]
    pub kappa_clamp: Option<f64>,
}

fn one() -> usize {
    1
}

fn default_defense_lr() -> f64 {
    1e-3
}

fn default_attack_lr() -> f64 {
    2e-4
}

fn default_mix() -> MixConfig {
    MixConfig::Plain
}

fn default_cadence() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdSection {
    pub gamma: f64,
    pub steps: usize,
    pub restarts: usize,
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default = "default_ascent")]
    pub ascent_norm: LpNorm,
    #[serde(default)]
    pub step_mode: StepMode,
}

fn default_ascent() -> LpNorm {
    LpNorm::Inf
}

impl PgdSection {
    /// Evaluation attack settings: gamma 0.01, 50 steps, 10 restarts.
    pub fn evaluation_default() -> Self {
        PgdSection {
            gamma: 0.01,
            steps: 50,
            restarts: 10,
            early_stop: false,
            ascent_norm: LpNorm::Inf,
            step_mode: StepMode::Normalized,
        }
    }

    /// Lighter settings for regenerating training examples every epoch.
    pub fn training_default() -> Self {
        PgdSection {
            steps: 10,
            restarts: 1,
            ..PgdSection::evaluation_default()
        }
    }

    pub fn to_pgd_config(self, constraint: LpConstraint, seed: u64) -> PgdConfig {
        PgdConfig {
            constraint,
            gamma: self.gamma,
            steps: self.steps,
            restarts: self.restarts,
            early_stop_on_misclassify: self.early_stop,
            ascent_norm: self.ascent_norm,
            step_mode: self.step_mode,
            keep_clean_candidate: false,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_true")]
    pub matrix_every_epoch: bool,
    /// Add the early-stopped PGD variant as a separate attack column.
    #[serde(default)]
    pub include_pgd_early: bool,
}

fn default_resolution() -> usize {
    51
}

fn default_true() -> bool {
    true
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            grid_resolution: default_resolution(),
            matrix_every_epoch: true,
            include_pgd_early: false,
        }
    }
}

/// A full experiment description. The output directory is a CLI concern and
/// deliberately not part of the experiment identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub constraint: ConstraintConfig,
    pub training: TrainingSection,
    #[serde(default = "PgdSection::evaluation_default")]
    pub pgd_eval: PgdSection,
    #[serde(default = "PgdSection::training_default")]
    pub pgd_train: PgdSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default = "default_split")]
    pub split_fraction: f64,
    pub seed: u64,
}

fn default_split() -> f64 {
    crate::data::DEFAULT_SPLIT_FRACTION
}

impl RunConfig {
    /// Named reproduction pipelines at reduced desk scale
    /// (n = 1000, T = 30). `full_scale` restores n = 2000 and T = 100
    /// (T = 400 for regression).
    pub fn preset(name: &str, full_scale: bool) -> Result<RunConfig> {
        let (family, p) = match name {
            "circles-linf" => (Family2D::Circles, LpNorm::Inf),
            "circles-l2" => (Family2D::Circles, LpNorm::Two),
            "moons-linf" => (Family2D::Moons, LpNorm::Inf),
            "moons-l2" => (Family2D::Moons, LpNorm::Two),
            "streaks-linf" => (Family2D::Streaks, LpNorm::Inf),
            "polynomials-linf" => (Family2D::Polynomials, LpNorm::Inf),
            "synth-reg-l2" => {
                let epochs = if full_scale { 400 } else { 60 };
                return Ok(RunConfig {
                    dataset: DatasetConfig::GenerateRegression {
                        n: if full_scale { 2000 } else { 500 },
                        d: 5,
                        noise: 0.05,
                    },
                    constraint: ConstraintConfig {
                        p: LpNorm::Two,
                        delta: 0.2,
                    },
                    training: TrainingSection {
                        epochs,
                        defense_steps: 1,
                        attack_steps: 1,
                        defense_lr: 1e-3,
                        attack_lr: 2e-4,
                        loss_mix: MixConfig::Plain,
                        alpha: 0.0,
                        minibatch: Some(128),
                        checkpoint_cadence: 10,
                        kappa_clamp: None,
                    },
                    pgd_eval: PgdSection::evaluation_default(),
                    pgd_train: PgdSection::training_default(),
                    eval: EvalSection::default(),
                    split_fraction: default_split(),
                    seed: 1,
                });
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown pipeline {other:?} (try circles-linf, circles-l2, moons-linf, \
                     moons-l2, streaks-linf, polynomials-linf, synth-reg-l2)"
                )))
            }
        };
        Ok(RunConfig {
            dataset: DatasetConfig::Generate2d {
                family,
                n: if full_scale { 2000 } else { 1000 },
                noise: 0.05,
            },
            constraint: ConstraintConfig { p, delta: 0.2 },
            training: TrainingSection {
                epochs: if full_scale { 100 } else { 30 },
                defense_steps: 1,
                attack_steps: 1,
                defense_lr: 1e-3,
                attack_lr: 2e-4,
                loss_mix: MixConfig::Plain,
                alpha: 0.0,
                minibatch: Some(256),
                checkpoint_cadence: 10,
                kappa_clamp: None,
            },
            pgd_eval: PgdSection::evaluation_default(),
            pgd_train: PgdSection::training_default(),
            eval: EvalSection::default(),
            split_fraction: default_split(),
            seed: 1,
        })
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            Error::Config(format!("config field `{}`: {}", e.path(), e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validate every field and report all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();

        match &self.dataset {
            DatasetConfig::Generate2d { n, noise, .. } => {
                if *n < 10 {
                    problems.push(format!("dataset.n must be >= 10, got {n}"));
                }
                if *noise < 0.0 {
                    problems.push(format!("dataset.noise must be >= 0, got {noise}"));
                }
            }
            DatasetConfig::GenerateRegression { n, d, noise } => {
                if *n < 10 {
                    problems.push(format!("dataset.n must be >= 10, got {n}"));
                }
                if *d < 1 {
                    problems.push(format!("dataset.d must be >= 1, got {d}"));
                }
                if *noise < 0.0 {
                    problems.push(format!("dataset.noise must be >= 0, got {noise}"));
                }
            }
            DatasetConfig::ClassificationCsv { path }
            | DatasetConfig::RegressionCsv { path, .. } => {
                if path.is_empty() {
                    problems.push("dataset.path must not be empty".into());
                }
            }
        }

        if !(self.constraint.delta > 0.0) || !self.constraint.delta.is_finite() {
            problems.push(format!(
                "constraint.delta must be positive, got {}",
                self.constraint.delta
            ));
        }
        if self.training.epochs < 1 {
            problems.push("training.epochs must be >= 1".into());
        }
        if self.training.defense_steps < 1 || self.training.attack_steps < 1 {
            problems.push("training.defense_steps and training.attack_steps must be >= 1".into());
        }
        if !(self.training.defense_lr > 0.0) {
            problems.push(format!(
                "training.defense_lr must be positive, got {}",
                self.training.defense_lr
            ));
        }
        if self.training.attack_lr < 0.0 {
            problems.push(format!(
                "training.attack_lr must be non-negative, got {}",
                self.training.attack_lr
            ));
        }
        if !(0.0..=1.0).contains(&self.training.alpha) {
            problems.push(format!(
                "training.alpha must be in [0, 1], got {}",
                self.training.alpha
            ));
        }
        if let Some(0) = self.training.minibatch {
            problems.push("training.minibatch must be positive when set".into());
        }
        for (name, pgd) in [("pgd_eval", &self.pgd_eval), ("pgd_train", &self.pgd_train)] {
            if !(pgd.gamma > 0.0) {
                problems.push(format!("{name}.gamma must be positive, got {}", pgd.gamma));
            } else if pgd.gamma > 2.0 * self.constraint.delta {
                problems.push(format!(
                    "{name}.gamma {} exceeds 2*delta = {}",
                    pgd.gamma,
                    2.0 * self.constraint.delta
                ));
            }
            if pgd.steps < 1 {
                problems.push(format!("{name}.steps must be >= 1"));
            }
            if pgd.restarts < 1 {
                problems.push(format!("{name}.restarts must be >= 1"));
            }
        }
        if self.eval.grid_resolution < 2 {
            problems.push(format!(
                "eval.grid_resolution must be >= 2, got {}",
                self.eval.grid_resolution
            ));
        }
        if !(0.0..=1.0).contains(&self.split_fraction) {
            problems.push(format!(
                "split_fraction must be in [0, 1], got {}",
                self.split_fraction
            ));
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} violation(s):\n  - {}",
                problems.len(),
                problems.join("\n  - ")
            )))
        }
    }

    pub fn constraint(&self) -> Result<LpConstraint> {
        LpConstraint::new(self.constraint.p, self.constraint.delta)
    }

    pub fn loss_kind(&self, task: TaskKind) -> Result<LossKind> {
        let base = match task {
            TaskKind::Classification { .. } => BaseLoss::CrossEntropy,
            TaskKind::Regression => BaseLoss::MeanSquaredError,
        };
        let mix = match self.training.loss_mix {
            MixConfig::Plain => LossMix::Plain,
            MixConfig::AlphaWeighted => LossMix::AlphaWeighted {
                alpha: self.training.alpha,
            },
            MixConfig::Trades => LossMix::Trades {
                alpha: self.training.alpha,
            },
        };
        LossKind::new(base, mix)
    }

    pub fn game_config(&self, task: TaskKind) -> Result<GameConfig> {
        Ok(GameConfig {
            epochs: self.training.epochs,
            defense_steps: self.training.defense_steps,
            attack_steps: self.training.attack_steps,
            defense_lr: self.training.defense_lr,
            attack_lr: self.training.attack_lr,
            loss: self.loss_kind(task)?,
            constraint: self.constraint()?,
            batch: match self.training.minibatch {
                Some(sz) => BatchMode::Minibatch(sz),
                None => BatchMode::FullBatch,
            },
            seed: self.seed,
            checkpoint_cadence: self.training.checkpoint_cadence,
            kappa_clamp: self.training.kappa_clamp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_round_trips_through_json() {
        let cfg = RunConfig::preset("circles-linf", false).unwrap();
        let json = cfg.to_json_pretty();
        let parsed = RunConfig::from_json(&json).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut json: serde_json::Value =
            serde_json::from_str(&RunConfig::preset("circles-linf", false).unwrap().to_json_pretty())
                .unwrap();
        json["surprise"] = serde_json::json!(1);
        let err = RunConfig::from_json(&json.to_string()).unwrap_err();
        assert!(err.to_string().contains("surprise"), "{err}");
    }

    #[test]
    fn invalid_p_is_named_in_the_error() {
        let mut json: serde_json::Value =
            serde_json::from_str(&RunConfig::preset("circles-linf", false).unwrap().to_json_pretty())
                .unwrap();
        json["constraint"]["p"] = serde_json::json!("7");
        let err = RunConfig::from_json(&json.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("constraint.p"), "error must name the field: {msg}");
    }

    #[test]
    fn validation_lists_every_violation() {
        let mut cfg = RunConfig::preset("circles-linf", false).unwrap();
        cfg.constraint.delta = -1.0;
        cfg.training.epochs = 0;
        cfg.training.alpha = 2.0;
        cfg.eval.grid_resolution = 1;
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        for needle in ["delta", "epochs", "alpha", "grid_resolution"] {
            assert!(msg.contains(needle), "missing {needle} in {msg}");
        }
        assert!(msg.contains("violation(s)"), "{msg}");
    }

    #[test]
    fn full_scale_restores_experiment_epochs() {
        let desk = RunConfig::preset("circles-linf", false).unwrap();
        let full = RunConfig::preset("circles-linf", true).unwrap();
        assert_eq!(desk.training.epochs, 30);
        assert_eq!(full.training.epochs, 100);
        let reg = RunConfig::preset("synth-reg-l2", true).unwrap();
        assert_eq!(reg.training.epochs, 400);
    }
}
