//! End-to-end experiment pipeline: clean training, the adversarial game, the
//! PGD-trained baseline, the per-epoch evaluation matrix and all artifacts.
//!
//! Every run directory is self-describing: the resolved config, the dataset
//! fingerprint and the artifact version are enough to re-run bit-identically.
//! Metric CSVs contain no timestamps; timing lives in its own file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::attacks::mix_seed;
use crate::checkpoint;
use crate::config::{DatasetConfig, RunConfig};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, AttackSpec, EvalMatrix, LabelMode};
use crate::losses::BaseLoss;
use crate::models::{self, AttackModel, DefenseNet, TaskKind};
use crate::training::{CleanTrainer, GameTrainer, PgdTrainer};

/// Seed salts for the independent model initializations.
const SALT_GAME: u64 = 1;
const SALT_CLEAN: u64 = 2;
const SALT_PGD: u64 = 3;
const SALT_EVAL_ATTACK: u64 = 4;

/// Everything a finished run leaves on disk.
#[derive(Debug, Clone, Serialize)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub dataset_csv: PathBuf,
    pub curves_csv: PathBuf,
    pub matrix_csv: PathBuf,
    pub field_csv: Option<PathBuf>,
    pub manifest_json: PathBuf,
    pub config_json: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact_version: &'static str,
    dataset_fingerprint: &'a str,
    dataset_warnings: &'a [String],
    config: &'a RunConfig,
}

/// Build the dataset a config describes and apply its split.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = match &cfg.dataset {
        DatasetConfig::Generate2d { family, n, noise } => {
            data::generate_2d(*family, *n, *noise, cfg.seed)?
        }
        DatasetConfig::GenerateRegression { n, d, noise } => {
            data::generate_regression(*n, *d, *noise, cfg.seed)?
        }
        DatasetConfig::ClassificationCsv { path } => {
            data::load_classification_csv(path, cfg.split_fraction, cfg.seed)?
        }
        DatasetConfig::RegressionCsv {
            path,
            target_column,
            raw_target,
        } => data::load_regression_csv(path, target_column, cfg.split_fraction, cfg.seed, !raw_target)?,
    };
    ds.resplit(cfg.split_fraction, cfg.seed)?;
    Ok(ds)
}

fn build_models(cfg: &RunConfig, data: &Dataset) -> Result<(DefenseNet, AttackModel, DefenseNet, DefenseNet)> {
    let constraint = cfg.constraint()?;
    match data.task() {
        TaskKind::Classification { classes } => {
            let (game_defense, attack) = models::build_classification_pair(
                data.dim(),
                classes,
                constraint,
                mix_seed(cfg.seed, SALT_GAME),
            )?;
            let (clean_defense, _) = models::build_classification_pair(
                data.dim(),
                classes,
                constraint,
                mix_seed(cfg.seed, SALT_CLEAN),
            )?;
            let (pgd_defense, _) = models::build_classification_pair(
                data.dim(),
                classes,
                constraint,
                mix_seed(cfg.seed, SALT_PGD),
            )?;
            Ok((game_defense, attack, clean_defense, pgd_defense))
        }
        TaskKind::Regression => {
            let (game_defense, attack) = models::build_regression_pair(
                data.dim(),
                constraint,
                mix_seed(cfg.seed, SALT_GAME),
            )?;
            let (clean_defense, _) = models::build_regression_pair(
                data.dim(),
                constraint,
                mix_seed(cfg.seed, SALT_CLEAN),
            )?;
            let (pgd_defense, _) = models::build_regression_pair(
                data.dim(),
                constraint,
                mix_seed(cfg.seed, SALT_PGD),
            )?;
            Ok((game_defense, attack, clean_defense, pgd_defense))
        }
    }
}

fn base_loss(task: TaskKind) -> BaseLoss {
    match task {
        TaskKind::Classification { .. } => BaseLoss::CrossEntropy,
        TaskKind::Regression => BaseLoss::MeanSquaredError,
    }
}

/// Run the full pipeline described by `cfg`, writing artifacts under
/// `out_dir`: clean training, the adversarial game and the PGD baseline in
/// lockstep, a per-epoch (or final) defense-by-attack matrix, long-format
/// curves, a grid field export for 2D classification, checkpoints and a
/// manifest.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let dataset = build_dataset(cfg)?;
    let task = dataset.task();
    let base = base_loss(task);
    let constraint = cfg.constraint()?;

    let config_json = out_dir.join("config.resolved.json");
    fs::write(&config_json, cfg.to_json_pretty())?;
    let dataset_csv = out_dir.join("dataset.csv");
    dataset.save_csv(&dataset_csv)?;

    let (game_defense, attack, clean_defense, pgd_defense) = build_models(cfg, &dataset)?;

    let game_cfg = cfg.game_config(task)?;
    let mut clean_cfg = game_cfg.clone();
    clean_cfg.seed = mix_seed(cfg.seed, SALT_CLEAN);
    let mut pgd_cfg_train = game_cfg.clone();
    pgd_cfg_train.seed = mix_seed(cfg.seed, SALT_PGD);

    let ckpt_dir = out_dir.join("checkpoints");
    let mut game = GameTrainer::new(game_defense, attack, game_cfg)?
        .with_checkpoints(ckpt_dir.clone(), Some(dataset.fingerprint().to_string()));
    let mut clean = CleanTrainer::new(clean_defense, clean_cfg)?;
    let mut pgd_baseline = PgdTrainer::new(
        pgd_defense,
        pgd_cfg_train,
        cfg.pgd_train
            .to_pgd_config(constraint, mix_seed(cfg.seed, SALT_PGD)),
    )?;

    let epochs = cfg.training.epochs;
    for epoch in 0..epochs {
        clean.run_epoch(&dataset)?;
        game.run_epoch(&dataset)?;
        pgd_baseline.run_epoch(&dataset)?;

        if cfg.eval.matrix_every_epoch || epoch + 1 == epochs {
            let matrix = evaluate_roster(
                cfg,
                game.defense(),
                game.attack(),
                pgd_baseline.defense(),
                clean.defense(),
                &dataset,
                base,
            )?;
            game.record_mut().matrix_snapshots.push((epoch, matrix));
        }
    }

    let curves_csv = out_dir.join("curves.csv");
    fs::write(&curves_csv, eval::emit_curves(game.record(), task))?;
    let matrix_csv = out_dir.join("matrix.csv");
    let final_matrix = &game
        .record()
        .matrix_snapshots
        .last()
        .expect("at least the final epoch is evaluated")
        .1;
    fs::write(&matrix_csv, final_matrix.to_csv_string())?;

    fs::write(
        out_dir.join("training_game.csv"),
        eval::emit_training_csv(game.record()),
    )?;
    fs::write(
        out_dir.join("training_clean.csv"),
        eval::emit_training_csv(clean.record()),
    )?;
    fs::write(
        out_dir.join("training_pgd.csv"),
        eval::emit_training_csv(pgd_baseline.record()),
    )?;
    fs::write(out_dir.join("timing.csv"), eval::emit_timing_csv(game.record()))?;

    // Field export needs a 2D classification space and the clean labeler.
    let field_csv = if matches!(task, TaskKind::Classification { .. }) && dataset.dim() == 2 {
        let export = eval::export_field(
            game.defense(),
            game.attack(),
            clean.defense(),
            cfg.eval.grid_resolution,
            base,
        )?;
        let path = out_dir.join("field.csv");
        export.save_csv(&path)?;
        Some(path)
    } else {
        None
    };

    fs::create_dir_all(&ckpt_dir)?;
    let manifest = checkpoint::manifest_for(
        task,
        Some(constraint),
        Some(dataset.fingerprint().to_string()),
        cfg.seed,
    );
    let mut checkpoints = Vec::new();
    let (game_defense, game_attack, _) = game.into_parts();
    let path_d = ckpt_dir.join("defense_game.json");
    checkpoint::save_defense(&path_d, &game_defense, manifest.clone())?;
    checkpoints.push(path_d);
    let path_a = ckpt_dir.join("attack_game.json");
    checkpoint::save_attack(&path_a, &game_attack, manifest.clone())?;
    checkpoints.push(path_a);
    let path = ckpt_dir.join("defense_clean.json");
    checkpoint::save_defense(&path, clean.defense(), manifest.clone())?;
    checkpoints.push(path);
    let path = ckpt_dir.join("defense_pgd.json");
    checkpoint::save_defense(&path, pgd_baseline.defense(), manifest.clone())?;
    checkpoints.push(path);

    let manifest_json = out_dir.join("manifest.json");
    let manifest_doc = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        dataset_fingerprint: dataset.fingerprint(),
        dataset_warnings: dataset.warnings(),
        config: cfg,
    };
    fs::write(
        &manifest_json,
        serde_json::to_string_pretty(&manifest_doc)
            .map_err(|e| Error::Parse(format!("manifest: {e}")))?,
    )?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        dataset_csv,
        curves_csv,
        matrix_csv,
        field_csv,
        manifest_json,
        config_json,
        checkpoints,
    })
}

/// The standard defense-by-attack roster: rows f, f_pgd, f_clean; columns
/// none, the trained network attack, white-box PGD, FGSM (and optionally the
/// early-stopped PGD variant).
#[allow(clippy::too_many_arguments)]
fn evaluate_roster(
    cfg: &RunConfig,
    game_defense: &DefenseNet,
    attack: &AttackModel,
    pgd_defense: &DefenseNet,
    clean_defense: &DefenseNet,
    dataset: &Dataset,
    base: BaseLoss,
) -> Result<EvalMatrix> {
    let constraint = cfg.constraint()?;
    let defenses = vec![
        ("f".to_string(), game_defense),
        ("f_pgd".to_string(), pgd_defense),
        ("f_clean".to_string(), clean_defense),
    ];
    let pgd_eval = cfg
        .pgd_eval
        .to_pgd_config(constraint, mix_seed(cfg.seed, SALT_EVAL_ATTACK));
    let mut attacks = vec![
        AttackSpec::None,
        AttackSpec::Net {
            attack,
            labels: LabelMode::True,
        },
        AttackSpec::Pgd(pgd_eval),
    ];
    if cfg.eval.include_pgd_early && matches!(dataset.task(), TaskKind::Classification { .. }) {
        let mut early = pgd_eval;
        early.early_stop_on_misclassify = true;
        attacks.push(AttackSpec::Pgd(early));
    }
    if constraint.p == crate::models::LpNorm::Inf {
        attacks.push(AttackSpec::Fgsm(constraint));
    }
    eval::evaluate_matrix(&defenses, &attacks, dataset, base)
}

/// Default run directory name: deterministic per seed, unique per timestamp.
pub fn default_run_dir(base: &Path, seed: u64) -> PathBuf {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    base.join(format!("run-{stamp}-seed{seed}"))
}
