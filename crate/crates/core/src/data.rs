//! Datasets: synthetic 2D classification families, regression CSV ingestion,
//! unit-cube normalization and deterministic train/test splits.
//!
//! The 2D families are reconstructions tuned to look like the usual
//! benchmark shapes; the reference implementation's generator code is not
//! published, so the exact parameters here are a documented choice, not
//! ground truth.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::Target;
use crate::models::TaskKind;
use crate::tensor::Tensor2;

const NORM_TOL: f64 = 1e-12;

/// How a dataset came to be; recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum Provenance {
    Generated {
        family: String,
        n: usize,
        noise: f64,
        seed: u64,
    },
    File {
        path: String,
    },
}

/// Per-column affine scale used for unit-cube normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    Reals(Vec<f64>),
}

/// A labeled sample matrix normalized to the unit cube, with a deterministic
/// train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Tensor2,
    labels: Labels,
    task: TaskKind,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    feature_scale: Vec<ColumnScale>,
    /// `(mean, std)` of the raw target on the training split, when the
    /// regression target is standardized.
    target_scale: Option<(f64, f64)>,
    provenance: Provenance,
    fingerprint: String,
    warnings: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn classes(&self) -> Option<usize> {
        match self.task {
            TaskKind::Classification { classes } => Some(classes),
            TaskKind::Regression => None,
        }
    }

    pub fn features(&self) -> &Tensor2 {
        &self.x
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// 64-bit hash of the canonical CSV bytes, hex encoded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn target_scale(&self) -> Option<(f64, f64)> {
        self.target_scale
    }

    pub fn feature_scale(&self, col: usize) -> ColumnScale {
        self.feature_scale[col]
    }

    /// The training target for sample `idx` (standardized for regression
    /// when a target scale is present).
    pub fn target(&self, idx: usize) -> Target {
        match &self.labels {
            Labels::Classes(c) => Target::Class(c[idx]),
            Labels::Reals(y) => {
                let raw = y[idx];
                match self.target_scale {
                    Some((mean, std)) => Target::Real((raw - mean) / std),
                    None => Target::Real(raw),
                }
            }
        }
    }

    pub fn raw_label(&self, idx: usize) -> Target {
        match &self.labels {
            Labels::Classes(c) => Target::Class(c[idx]),
            Labels::Reals(y) => Target::Real(y[idx]),
        }
    }

    /// Materialize the rows at `indices` as a feature matrix plus targets.
    pub fn subset(&self, indices: &[usize]) -> (Tensor2, Vec<Target>) {
        let mut x = Tensor2::zeros(indices.len(), self.dim());
        let mut t = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            x.row_mut(r).copy_from_slice(self.x.row(i));
            t.push(self.target(i));
        }
        (x, t)
    }

    pub fn train_set(&self) -> (Tensor2, Vec<Target>) {
        self.subset(&self.train_idx)
    }

    pub fn test_set(&self) -> (Tensor2, Vec<Target>) {
        self.subset(&self.test_idx)
    }

    /// Map a normalized feature value back to raw units.
    pub fn denormalize(&self, col: usize, v: f64) -> f64 {
        let s = self.feature_scale[col];
        if s.max == s.min {
            s.min
        } else {
            s.min + v * (s.max - s.min)
        }
    }

    /// Canonical CSV serialization: header, then normalized features and the
    /// raw label/target per row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for c in 0..self.dim() {
            let _ = write!(out, "x{},", c + 1);
        }
        match self.task {
            TaskKind::Classification { .. } => out.push_str("label\n"),
            TaskKind::Regression => out.push_str("target\n"),
        }
        for r in 0..self.len() {
            for c in 0..self.dim() {
                let _ = write!(out, "{},", self.x.get(r, c));
            }
            match &self.labels {
                Labels::Classes(l) => {
                    let _ = writeln!(out, "{}", l[r]);
                }
                Labels::Reals(y) => {
                    let _ = writeln!(out, "{}", y[r]);
                }
            }
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    fn build(
        raw: Tensor2,
        labels: Labels,
        task: TaskKind,
        split_fraction: f64,
        split_seed: u64,
        provenance: Provenance,
        standardize_target: bool,
    ) -> Result<Dataset> {
        let n = raw.rows();
        if n == 0 {
            return Err(Error::Config("dataset is empty".into()));
        }
        let (x, feature_scale, warnings) = normalize_unit_cube(&raw);
        let (train_idx, test_idx) = split_indices(n, split_fraction, split_seed)?;

        let target_scale = if standardize_target {
            match &labels {
                Labels::Reals(y) => {
                    let train_y: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
                    let mean = train_y.iter().sum::<f64>() / train_y.len() as f64;
                    let var = train_y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / train_y.len() as f64;
                    let std = var.sqrt();
                    if std == 0.0 {
                        return Err(Error::Config(
                            "target column is constant; cannot standardize".into(),
                        ));
                    }
                    Some((mean, std))
                }
                Labels::Classes(_) => None,
            }
        } else {
            None
        };

        let mut ds = Dataset {
            x,
            labels,
            task,
            train_idx,
            test_idx,
            feature_scale,
            target_scale,
            provenance,
            fingerprint: String::new(),
            warnings,
        };
        ds.fingerprint = fingerprint_bytes(ds.to_csv_string().as_bytes());
        Ok(ds)
    }

    /// Re-split deterministically with a new fraction/seed; the data and
    /// fingerprint are unchanged.
    pub fn resplit(&mut self, split_fraction: f64, split_seed: u64) -> Result<()> {
        let (train, test) = split_indices(self.len(), split_fraction, split_seed)?;
        self.train_idx = train;
        self.test_idx = test;
        Ok(())
    }
}

/// Truncated SHA-256: the first 8 bytes, hex encoded.
pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn normalize_unit_cube(raw: &Tensor2) -> (Tensor2, Vec<ColumnScale>, Vec<String>) {
    let (n, d) = (raw.rows(), raw.cols());
    let mut scales = Vec::with_capacity(d);
    let mut warnings = Vec::new();
    let mut x = Tensor2::zeros(n, d);
    for c in 0..d {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for r in 0..n {
            min = min.min(raw.get(r, c));
            max = max.max(raw.get(r, c));
        }
        scales.push(ColumnScale { min, max });
        if max == min {
            warnings.push(format!(
                "feature column {} is constant ({min}); normalized to 0.5",
                c + 1
            ));
            for r in 0..n {
                x.set(r, c, 0.5);
            }
        } else {
            let span = max - min;
            for r in 0..n {
                x.set(r, c, ((raw.get(r, c) - min) / span).clamp(0.0, 1.0));
            }
        }
    }
    debug_assert!(x.data().iter().all(|v| (-NORM_TOL..=1.0 + NORM_TOL).contains(v)));
    (x, scales, warnings)
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "split fraction must be in [0, 1], got {fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let train_count = ((fraction * n as f64).round() as usize).min(n);
    let mut train: Vec<usize> = order[..train_count].to_vec();
    let mut test: Vec<usize> = order[train_count..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// The simulated 2D classification families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family2D {
    Circles,
    Moons,
    Streaks,
    Polynomials,
}

impl Family2D {
    pub fn name(&self) -> &'static str {
        match self {
            Family2D::Circles => "circles",
            Family2D::Moons => "moons",
            Family2D::Streaks => "streaks",
            Family2D::Polynomials => "polynomials",
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Family2D::Polynomials => 3,
            _ => 2,
        }
    }
}

impl std::str::FromStr for Family2D {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circles" => Ok(Family2D::Circles),
            "moons" => Ok(Family2D::Moons),
            "streaks" => Ok(Family2D::Streaks),
            "polynomials" => Ok(Family2D::Polynomials),
            other => Err(Error::Config(format!(
                "unknown dataset family {other:?} (circles, moons, streaks, polynomials)"
            ))),
        }
    }
}

pub const DEFAULT_SPLIT_FRACTION: f64 = 0.8;

/// Generate one of the 2D families, normalized and split 80/20.
/// Byte-identical output per `(family, n, noise, seed)`.
pub fn generate_2d(family: Family2D, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Config(format!("need at least 10 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut labels: Vec<usize> = Vec::with_capacity(n);

    match family {
        Family2D::Circles => {
            // Class 0 on the inner ring, class 1 on the outer one.
            for i in 0..n {
                let class = i % 2;
                let radius = if class == 0 { 0.5 } else { 1.0 };
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let (dx, dy): (f64, f64) =
                    (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                rows.push(vec![
                    radius * theta.cos() + noise * dx,
                    radius * theta.sin() + noise * dy,
                ]);
                labels.push(class);
            }
        }
        Family2D::Moons => {
            // Two interleaved half-circles.
            for i in 0..n {
                let class = i % 2;
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let (dx, dy): (f64, f64) =
                    (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let (px, py) = if class == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                rows.push(vec![px + noise * dx, py + noise * dy]);
                labels.push(class);
            }
        }
        Family2D::Streaks => {
            // Four parallel bands of slope one with alternating labels.
            for i in 0..n {
                let band = i % 4;
                let center = -0.75 + 0.5 * band as f64;
                let t = rng.random_range(0.0..1.0);
                let u = rng.random_range(-0.15..0.15);
                let (dx, dy): (f64, f64) =
                    (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                rows.push(vec![t + noise * dx, t + center + u + noise * dy]);
                labels.push(band % 2);
            }
        }
        Family2D::Polynomials => {
            // Three regions delimited by a fixed cubic and a shifted copy.
            let lower = |x: f64| 4.0 * (x - 0.5).powi(3) + 0.5 - 0.175;
            let upper = |x: f64| 4.0 * (x - 0.5).powi(3) + 0.5 + 0.175;
            let per_class = n / 3;
            let extra = n % 3;
            for class in 0..3 {
                let count = per_class + usize::from(class < extra);
                for _ in 0..count {
                    let (px, py) = loop {
                        let px = rng.random_range(0.0..1.0);
                        let py = rng.random_range(0.0..1.0);
                        let region = if py < lower(px) {
                            0
                        } else if py < upper(px) {
                            1
                        } else {
                            2
                        };
                        if region == class {
                            break (px, py);
                        }
                    };
                    let (dx, dy): (f64, f64) =
                        (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                    rows.push(vec![px + noise * dx, py + noise * dy]);
                    labels.push(class);
                }
            }
        }
    }

    Dataset::build(
        Tensor2::from_rows(&rows)?,
        Labels::Classes(labels),
        TaskKind::Classification {
            classes: family.classes(),
        },
        DEFAULT_SPLIT_FRACTION,
        seed,
        Provenance::Generated {
            family: family.name().into(),
            n,
            noise,
            seed,
        },
        false,
    )
}

/// Synthetic regression data for CI: linear trend plus a sinusoidal bend and
/// Gaussian noise. The target is standardized on the training split.
pub fn generate_regression(n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 10 || d < 1 {
        return Err(Error::Config(format!("need n >= 10 and d >= 1, got n={n} d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let weights: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
        let eps: f64 = StandardNormal.sample(&mut rng);
        let y = x.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
            + 0.8 * (std::f64::consts::TAU * x[0]).sin()
            + noise * eps;
        rows.push(x);
        targets.push(y);
    }
    Dataset::build(
        Tensor2::from_rows(&rows)?,
        Labels::Reals(targets),
        TaskKind::Regression,
        DEFAULT_SPLIT_FRACTION,
        seed,
        Provenance::Generated {
            family: "synth-reg".into(),
            n,
            noise,
            seed,
        },
        true,
    )
}

/// Load a regression CSV: numeric features, one numeric target column
/// (by header name, or a column index if the name does not match).
///
/// Features are min-max normalized per column; the target is standardized to
/// zero mean and unit variance on the training split unless `standardize`
/// is off. Missing or non-numeric cells fail with every offending row listed.
pub fn load_regression_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    split_fraction: f64,
    seed: u64,
    standardize: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .or_else(|| target_column.parse::<usize>().ok().filter(|i| *i < headers.len()))
        .ok_or_else(|| {
            Error::Config(format!(
                "target column {target_column:?} not found among {headers:?}"
            ))
        })?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut bad_rows: Vec<String> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut feats = Vec::with_capacity(headers.len().saturating_sub(1));
        let mut target = None;
        let mut ok = true;
        for (i, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    if i == target_idx {
                        target = Some(v);
                    } else {
                        feats.push(v);
                    }
                }
                _ => {
                    bad_rows.push(format!(
                        "row {} column {:?}: {:?}",
                        line + 2,
                        headers.get(i).map(String::as_str).unwrap_or("?"),
                        cell
                    ));
                    ok = false;
                }
            }
        }
        if ok {
            match target {
                Some(t) if feats.len() == headers.len() - 1 => {
                    rows.push(feats);
                    targets.push(t);
                }
                _ => bad_rows.push(format!("row {}: wrong field count", line + 2)),
            }
        }
    }
    if !bad_rows.is_empty() {
        return Err(Error::Parse(format!(
            "{}: {} unusable rows:\n  {}",
            path.display(),
            bad_rows.len(),
            bad_rows.join("\n  ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }

    Dataset::build(
        Tensor2::from_rows(&rows)?,
        Labels::Reals(targets),
        TaskKind::Regression,
        split_fraction,
        seed,
        Provenance::File {
            path: path.display().to_string(),
        },
        standardize,
    )
}

/// Load a classification CSV previously written by [`Dataset::save_csv`]
/// (or any CSV whose last column holds non-negative integer labels).
pub fn load_classification_csv(
    path: impl AsRef<Path>,
    split_fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .len();
    if headers < 2 {
        return Err(Error::Parse(format!(
            "{}: need features and a label column",
            path.display()
        )));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut bad_rows: Vec<String> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if record.len() != headers {
            bad_rows.push(format!("row {}: wrong field count", line + 2));
            continue;
        }
        let mut feats = Vec::with_capacity(headers - 1);
        let mut ok = true;
        for cell in record.iter().take(headers - 1) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => feats.push(v),
                _ => {
                    bad_rows.push(format!("row {}: bad feature {:?}", line + 2, cell));
                    ok = false;
                }
            }
        }
        match record[headers - 1].parse::<usize>() {
            Ok(label) if ok => {
                rows.push(feats);
                labels.push(label);
            }
            Err(_) => bad_rows.push(format!(
                "row {}: bad label {:?}",
                line + 2,
                &record[headers - 1]
            )),
            _ => {}
        }
    }
    if !bad_rows.is_empty() {
        return Err(Error::Parse(format!(
            "{}: {} unusable rows:\n  {}",
            path.display(),
            bad_rows.len(),
            bad_rows.join("\n  ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let classes = labels.iter().max().unwrap() + 1;
    Dataset::build(
        Tensor2::from_rows(&rows)?,
        Labels::Classes(labels),
        TaskKind::Classification { classes },
        split_fraction,
        seed,
        Provenance::File {
            path: path.display().to_string(),
        },
        false,
    )
}

/// `resolution^2` evenly spaced points covering the unit square, first
/// coordinate varying fastest.
pub fn grid(resolution: usize) -> Result<Tensor2> {
    if resolution < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be >= 2, got {resolution}"
        )));
    }
    let step = 1.0 / (resolution - 1) as f64;
    let mut out = Tensor2::zeros(resolution * resolution, 2);
    for iy in 0..resolution {
        for ix in 0..resolution {
            let r = iy * resolution + ix;
            out.set(r, 0, ix as f64 * step);
            out.set(r, 1, iy as f64 * step);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circles_without_noise_separate_radially() {
        let ds = generate_2d(Family2D::Circles, 200, 0.0, 3).unwrap();
        // Recover pre-normalization radii through the stored scales.
        let mut inner_max = 0.0f64;
        let mut outer_min = f64::INFINITY;
        for r in 0..ds.len() {
            let x = ds.denormalize(0, ds.features().get(r, 0));
            let y = ds.denormalize(1, ds.features().get(r, 1));
            let radius = (x * x + y * y).sqrt();
            match ds.raw_label(r) {
                Target::Class(0) => inner_max = inner_max.max(radius),
                Target::Class(1) => outer_min = outer_min.min(radius),
                other => panic!("unexpected label {other:?}"),
            }
        }
        assert!(
            outer_min > inner_max,
            "class-1 radii must dominate: inner max {inner_max}, outer min {outer_min}"
        );
    }

    #[test]
    fn generators_are_deterministic_and_balanced() {
        for family in [
            Family2D::Circles,
            Family2D::Moons,
            Family2D::Streaks,
            Family2D::Polynomials,
        ] {
            let a = generate_2d(family, 101, 0.05, 9).unwrap();
            let b = generate_2d(family, 101, 0.05, 9).unwrap();
            assert_eq!(a.to_csv_string(), b.to_csv_string(), "{}", family.name());
            assert_eq!(a.fingerprint(), b.fingerprint());

            let mut counts = vec![0usize; family.classes()];
            for r in 0..a.len() {
                if let Target::Class(c) = a.raw_label(r) {
                    counts[c] += 1;
                }
            }
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "{}: {counts:?}", family.name());
        }
    }

    #[test]
    fn features_live_in_the_unit_cube() {
        let ds = generate_2d(Family2D::Streaks, 500, 0.1, 4).unwrap();
        assert!(ds
            .features()
            .data()
            .iter()
            .all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn normalization_round_trips_through_stored_scales() {
        let ds = generate_2d(Family2D::Moons, 64, 0.05, 11).unwrap();
        for r in 0..ds.len() {
            for c in 0..ds.dim() {
                let v = ds.features().get(r, c);
                let raw = ds.denormalize(c, v);
                let s = ds.feature_scale(c);
                let back = (raw - s.min) / (s.max - s.min);
                assert!((back - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn splits_are_disjoint_covering_and_deterministic() {
        let ds = generate_2d(Family2D::Circles, 100, 0.05, 5).unwrap();
        assert_eq!(ds.train_indices().len(), 80);
        assert_eq!(ds.test_indices().len(), 20);
        let mut all: Vec<usize> = ds
            .train_indices()
            .iter()
            .chain(ds.test_indices())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());

        let again = generate_2d(Family2D::Circles, 100, 0.05, 5).unwrap();
        assert_eq!(ds.train_indices(), again.train_indices());
    }

    #[test]
    fn grid_hits_the_documented_points() {
        let g2 = grid(2).unwrap();
        let pts: Vec<Vec<f64>> = g2.iter_rows().map(|r| r.to_vec()).collect();
        assert!(pts.contains(&vec![0.0, 0.0]));
        assert!(pts.contains(&vec![1.0, 0.0]));
        assert!(pts.contains(&vec![0.0, 1.0]));
        assert!(pts.contains(&vec![1.0, 1.0]));

        let g3 = grid(3).unwrap();
        assert!(g3.iter_rows().any(|r| r == [0.5, 0.5]));

        let g101 = grid(101).unwrap();
        assert_eq!(g101.rows(), 101 * 101);
        assert_eq!(g101.get(0, 0), 0.0);
        assert_eq!(g101.get(1, 0), 0.01);
        assert_eq!(g101.get(100, 0), 1.0);
        for i in 0..100 {
            let diff = g101.get(i + 1, 0) - g101.get(i, 0);
            assert!((diff - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn regression_csv_loads_normalizes_and_standardizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "a,b,y\n1,5,10\n2,6,20\n3,7,30\n").unwrap();
        let ds = load_regression_csv(&path, "y", 1.0, 0, true).unwrap();
        assert_eq!(ds.dim(), 2);
        // Column (1,2,3) normalizes to (0, 0.5, 1).
        let col: Vec<f64> = (0..3).map(|r| ds.features().get(r, 0)).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        // Standardized target has zero mean over the (full) training split.
        let mean: f64 = (0..3)
            .map(|r| match ds.target(r) {
                Target::Real(v) => v,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / 3.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn missing_values_list_every_offending_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,y\n1,10\n,20\n3,oops\n4,40\n").unwrap();
        let err = load_regression_csv(&path, "y", 0.8, 0, true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("row 4"), "{msg}");
    }

    #[test]
    fn constant_feature_normalizes_to_half_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("const.csv");
        std::fs::write(&path, "a,b,y\n7,1,10\n7,2,20\n7,3,30\n").unwrap();
        let ds = load_regression_csv(&path, "y", 0.8, 0, true).unwrap();
        assert!((0..3).all(|r| ds.features().get(r, 0) == 0.5));
        assert_eq!(ds.warnings().len(), 1);
    }

    #[test]
    fn reload_reproduces_split_and_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reload.csv");
        let mut body = String::from("a,b,y\n");
        for i in 0..50 {
            body.push_str(&format!("{},{},{}\n", i, 50 - i, 2 * i));
        }
        std::fs::write(&path, body).unwrap();
        let a = load_regression_csv(&path, "y", 0.8, 42, true).unwrap();
        let b = load_regression_csv(&path, "y", 0.8, 42, true).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.train_indices(), b.train_indices());
        assert_eq!(a.test_indices(), b.test_indices());
        assert_eq!(a.train_indices().len(), 40);
    }

    #[test]
    fn classification_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cls.csv");
        let ds = generate_2d(Family2D::Circles, 60, 0.05, 8).unwrap();
        ds.save_csv(&path).unwrap();
        let loaded = load_classification_csv(&path, 0.8, 8).unwrap();
        assert_eq!(loaded.classes(), Some(2));
        assert_eq!(loaded.fingerprint(), ds.fingerprint());
        for r in 0..ds.len() {
            for c in 0..2 {
                assert_eq!(ds.features().get(r, c), loaded.features().get(r, c));
            }
        }
    }
}
