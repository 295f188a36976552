//! Versioned JSON checkpoints for networks and models.
//!
//! Floats are written with shortest-roundtrip formatting, so the parameter
//! payload survives a save/load cycle bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AttackModel, DefenseNet, LpConstraint, TaskKind};
use crate::nn::Mlp;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Run metadata carried alongside model weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CheckpointManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<LpConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MlpCheckpoint {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    net: Mlp,
}

#[derive(Debug, Serialize, Deserialize)]
struct DefenseCheckpoint {
    format: String,
    version: u32,
    manifest: CheckpointManifest,
    model: DefenseNet,
}

#[derive(Debug, Serialize, Deserialize)]
struct AttackCheckpoint {
    format: String,
    version: u32,
    manifest: CheckpointManifest,
    model: AttackModel,
}

fn check_header(path: &Path, format: &str, expected: &str, version: u32) -> Result<()> {
    if format != expected {
        return Err(Error::Parse(format!(
            "{}: expected format {expected:?}, found {format:?}",
            path.display()
        )));
    }
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serializing {}: {e}", path.display())))?;
    fs::write(path, json)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn save_mlp(path: impl AsRef<Path>, net: &Mlp, seed: Option<u64>) -> Result<()> {
    write_json(
        path.as_ref(),
        &MlpCheckpoint {
            format: "advgame-mlp".into(),
            version: CHECKPOINT_VERSION,
            seed,
            net: net.clone(),
        },
    )
}

pub fn load_mlp(path: impl AsRef<Path>) -> Result<(Mlp, Option<u64>)> {
    let ckpt: MlpCheckpoint = read_json(path.as_ref())?;
    check_header(path.as_ref(), &ckpt.format, "advgame-mlp", ckpt.version)?;
    Ok((ckpt.net, ckpt.seed))
}

pub fn save_defense(
    path: impl AsRef<Path>,
    model: &DefenseNet,
    manifest: CheckpointManifest,
) -> Result<()> {
    write_json(
        path.as_ref(),
        &DefenseCheckpoint {
            format: "advgame-defense".into(),
            version: CHECKPOINT_VERSION,
            manifest,
            model: model.clone(),
        },
    )
}

pub fn load_defense(path: impl AsRef<Path>) -> Result<(DefenseNet, CheckpointManifest)> {
    let ckpt: DefenseCheckpoint = read_json(path.as_ref())?;
    check_header(path.as_ref(), &ckpt.format, "advgame-defense", ckpt.version)?;
    Ok((ckpt.model, ckpt.manifest))
}

pub fn save_attack(
    path: impl AsRef<Path>,
    model: &AttackModel,
    manifest: CheckpointManifest,
) -> Result<()> {
    write_json(
        path.as_ref(),
        &AttackCheckpoint {
            format: "advgame-attack".into(),
            version: CHECKPOINT_VERSION,
            manifest,
            model: model.clone(),
        },
    )
}

pub fn load_attack(path: impl AsRef<Path>) -> Result<(AttackModel, CheckpointManifest)> {
    let ckpt: AttackCheckpoint = read_json(path.as_ref())?;
    check_header(path.as_ref(), &ckpt.format, "advgame-attack", ckpt.version)?;
    Ok((ckpt.model, ckpt.manifest))
}

/// Default manifest for a model trained under `constraint` on a dataset.
pub fn manifest_for(
    task: TaskKind,
    constraint: Option<LpConstraint>,
    fingerprint: Option<String>,
    seed: u64,
) -> CheckpointManifest {
    CheckpointManifest {
        constraint,
        classes: match task {
            TaskKind::Classification { classes } => Some(classes),
            TaskKind::Regression => None,
        },
        dataset_fingerprint: fingerprint,
        seed: Some(seed),
    }
}
