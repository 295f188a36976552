//! Command-line entry point: reproducible experiments over the library.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric failure, 4 I/O failure.

#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use advgame::attacks::{self, mix_seed, PgdConfig};
use advgame::checkpoint;
use advgame::config::RunConfig;
use advgame::data::{self, Dataset, Family2D};
use advgame::error::Error;
use advgame::eval::{self, AttackSpec, LabelMode};
use advgame::flow::{self, FlowConfig, Integrator, SaddleHandling};
use advgame::landscape::{DefenseLoss, ScalarField, TestFunction};
use advgame::losses::{BaseLoss, Target};
use advgame::models::{self, DefenseNet, LpConstraint, LpNorm, TaskKind};
use advgame::pipeline;
use advgame::training::{self, GameConfig};
use advgame::Result;

#[derive(Parser)]
#[command(
    name = "advgame",
    version,
    about = "Adversarial training as a defense/attack network game, with PGD/FGSM baselines \
             and a projected-gradient-flow attack oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    #[value(name = "inf")]
    Inf,
}

impl From<PArg> for LpNorm {
    fn from(p: PArg) -> LpNorm {
        match p {
            PArg::One => LpNorm::One,
            PArg::Two => LpNorm::Two,
            PArg::Inf => LpNorm::Inf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fgsm,
    Pgd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SaddleArg {
    None,
    Deflect,
    Noise,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionArg {
    Linear,
    Quadratic,
    Saddle,
    TwoBump,
}

impl From<FunctionArg> for TestFunction {
    fn from(f: FunctionArg) -> TestFunction {
        match f {
            FunctionArg::Linear => TestFunction::Linear,
            FunctionArg::Quadratic => TestFunction::ConcaveQuadratic,
            FunctionArg::Saddle => TestFunction::Saddle,
            FunctionArg::TwoBump => TestFunction::TwoBump,
        }
    }
}

/// Shared dataset-loading flags.
#[derive(Args)]
struct DataArgs {
    /// Dataset CSV (last column `label` for classification, otherwise a
    /// regression target).
    #[arg(long)]
    data: PathBuf,
    /// Regression target column name (or index) for external CSVs.
    #[arg(long)]
    target_column: Option<String>,
    /// Keep regression targets in raw units instead of standardizing.
    #[arg(long)]
    raw_target: bool,
    /// Train fraction of the train/test split.
    #[arg(long, default_value_t = data::DEFAULT_SPLIT_FRACTION)]
    split_fraction: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    GenData {
        /// circles | moons | streaks | polynomials | synth-reg
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Feature count for synth-reg.
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a clean (non-adversarial) model.
    TrainClean {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the defense/attack game.
    TrainGame {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "inf")]
        p: PArg,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        defense_steps: usize,
        #[arg(long, default_value_t = 1)]
        attack_steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        defense_lr: f64,
        #[arg(long, default_value_t = 2e-4)]
        attack_lr: f64,
        /// Weight on the clean term of the alpha-mixed loss (0 = plain).
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Use the TRADES variant of the mixed loss.
        #[arg(long)]
        trades: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the PGD-adversarial-training baseline.
    TrainPgd {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "inf")]
        p: PArg,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate white-box attacks against a trained model.
    Attack {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "inf")]
        p: PArg,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Halt each restart as soon as the sample is misclassified.
        #[arg(long)]
        early_stop: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Defense checkpoint.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Clip adversarial examples back into the unit cube.
        #[arg(long)]
        clip_input: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the projected gradient flow and report the terminal KKT
    /// certificate.
    Flow {
        #[arg(long, value_enum, default_value = "inf")]
        p: PArg,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 50.0)]
        max_time: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, value_enum, default_value = "none")]
        saddle: SaddleArg,
        /// Deflection radius (saddle=deflect).
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        /// Noise scale (saddle=noise).
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Analytic test objective.
        #[arg(long, value_enum)]
        function: Option<FunctionArg>,
        /// Start point "x1,x2" (defaults to the unit-square center).
        #[arg(long, default_value = "0.5,0.5")]
        start: String,
        /// Defense checkpoint: integrate this model's loss instead of an
        /// analytic objective.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset CSV for --model; the flow starts at --sample's point.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Trajectory CSV; the KKT report lands next to it as `.kkt.json`.
        #[arg(long)]
        out: PathBuf,
        /// Use explicit Euler instead of RK4.
        #[arg(long)]
        euler: bool,
    },
    /// Evaluate defenses against attacks on a test split.
    Eval {
        /// Defense checkpoint(s); row names come from the file stems.
        #[arg(long, required = true, num_args = 1..)]
        defense: Vec<PathBuf>,
        /// Attack columns: none, net:PATH, pgd, pgd-early, fgsm.
        #[arg(long, required = true, num_args = 1..)]
        attack: Vec<String>,
        #[arg(long, value_enum, default_value = "inf")]
        p: PArg,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        /// Impute network-attack labels from this (clean) model instead of
        /// using the true test labels.
        #[arg(long)]
        imputed_labeler: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export loss values, gradient directions and attack vectors on a grid.
    ExportGrid {
        #[arg(long)]
        defense: PathBuf,
        /// Attack-network checkpoint.
        #[arg(long)]
        attack: PathBuf,
        /// Labeler checkpoint (typically the clean model).
        #[arg(long)]
        labeler: PathBuf,
        #[arg(long, default_value_t = 51)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named end-to-end reproduction pipeline.
    Reproduce {
        /// circles-linf | circles-l2 | moons-linf | moons-l2 | streaks-linf |
        /// polynomials-linf | synth-reg-l2
        pipeline: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restore the full-scale settings (n = 2000, T = 100 / 400).
        #[arg(long)]
        full_scale: bool,
        /// Load the run config from JSON instead of a preset (overrides are
        /// still applied on top).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Artifact directory (default: runs/run-<stamp>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_auto(args: &DataArgs, seed: u64) -> Result<Dataset> {
    if let Some(col) = &args.target_column {
        return data::load_regression_csv(
            &args.data,
            col,
            args.split_fraction,
            seed,
            !args.raw_target,
        );
    }
    // Peek at the header: a trailing `target` column means regression.
    let head = std::fs::read_to_string(&args.data)?;
    let header = head.lines().next().unwrap_or_default();
    if header.split(',').next_back().map(str::trim) == Some("target") {
        data::load_regression_csv(&args.data, "target", args.split_fraction, seed, !args.raw_target)
    } else {
        data::load_classification_csv(&args.data, args.split_fraction, seed)
    }
}

fn build_defense_for(data: &Dataset, constraint: LpConstraint, seed: u64) -> Result<DefenseNet> {
    Ok(match data.task() {
        TaskKind::Classification { classes } => {
            models::build_classification_pair(data.dim(), classes, constraint, seed)?.0
        }
        TaskKind::Regression => models::build_regression_pair(data.dim(), constraint, seed)?.0,
    })
}

fn base_loss_for(task: TaskKind) -> BaseLoss {
    match task {
        TaskKind::Classification { .. } => BaseLoss::CrossEntropy,
        TaskKind::Regression => BaseLoss::MeanSquaredError,
    }
}

fn loss_kind_for(task: TaskKind) -> advgame::losses::LossKind {
    match task {
        TaskKind::Classification { .. } => advgame::losses::LossKind::cross_entropy(),
        TaskKind::Regression => advgame::losses::LossKind::mse(),
    }
}

fn write_training_outputs(out: &Path, record: &training::TrainRecord) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("training.csv"), eval::emit_training_csv(record))?;
    std::fs::write(out.join("timing.csv"), eval::emit_timing_csv(record))?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData {
            family,
            n,
            noise,
            d,
            seed,
            out,
        } => {
            let ds = if family == "synth-reg" {
                data::generate_regression(n, d, noise, seed)?
            } else {
                data::generate_2d(family.parse::<Family2D>()?, n, noise, seed)?
            };
            ds.save_csv(&out)?;
            println!(
                "wrote {} samples to {} (fingerprint {})",
                ds.len(),
                out.display(),
                ds.fingerprint()
            );
            Ok(())
        }

        Command::TrainClean {
            data: data_args,
            epochs,
            lr,
            seed,
            out,
        } => {
            let ds = load_auto(&data_args, seed)?;
            // The budget is unused by clean training; models only need shapes.
            let constraint = LpConstraint::new(LpNorm::Inf, 0.2)?;
            let defense = build_defense_for(&ds, constraint, seed)?;
            let mut cfg = GameConfig::classification(epochs, constraint, seed);
            cfg.defense_lr = lr;
            cfg.loss = loss_kind_for(ds.task());
            let (model, record) = training::train_clean(defense, &ds, &cfg)?;
            write_training_outputs(&out, &record)?;
            let manifest =
                checkpoint::manifest_for(ds.task(), None, Some(ds.fingerprint().into()), seed);
            checkpoint::save_defense(out.join("defense_clean.json"), &model, manifest)?;
            let last = record.final_epoch().expect("at least one epoch");
            println!(
                "clean training done: train loss {:.6}, test loss {:.6}",
                last.train_adv_loss, last.test_adv_loss
            );
            Ok(())
        }

        Command::TrainGame {
            data: data_args,
            p,
            delta,
            epochs,
            defense_steps,
            attack_steps,
            defense_lr,
            attack_lr,
            alpha,
            trades,
            seed,
            out,
        } => {
            let ds = load_auto(&data_args, seed)?;
            let constraint = LpConstraint::new(p.into(), delta)?;
            let base = base_loss_for(ds.task());
            let mix = if trades {
                advgame::losses::LossMix::Trades { alpha }
            } else if alpha > 0.0 {
                advgame::losses::LossMix::AlphaWeighted { alpha }
            } else {
                advgame::losses::LossMix::Plain
            };
            let loss = advgame::losses::LossKind::new(base, mix)?;
            let (defense, attack) = match ds.task() {
                TaskKind::Classification { classes } => {
                    models::build_classification_pair(ds.dim(), classes, constraint, seed)?
                }
                TaskKind::Regression => models::build_regression_pair(ds.dim(), constraint, seed)?,
            };
            let cfg = GameConfig {
                epochs,
                defense_steps,
                attack_steps,
                defense_lr,
                attack_lr,
                loss,
                constraint,
                batch: training::BatchMode::FullBatch,
                seed,
                checkpoint_cadence: 10,
                kappa_clamp: None,
            };
            std::fs::create_dir_all(&out)?;
            let mut trainer = training::GameTrainer::new(defense, attack, cfg)?
                .with_checkpoints(out.join("checkpoints"), Some(ds.fingerprint().into()));
            for _ in 0..epochs {
                trainer.run_epoch(&ds)?;
            }
            write_training_outputs(&out, trainer.record())?;
            let manifest = checkpoint::manifest_for(
                ds.task(),
                Some(constraint),
                Some(ds.fingerprint().into()),
                seed,
            );
            let (defense, attack, record) = trainer.into_parts();
            checkpoint::save_defense(out.join("defense_game.json"), &defense, manifest.clone())?;
            checkpoint::save_attack(out.join("attack_game.json"), &attack, manifest)?;
            let last = record.final_epoch().expect("at least one epoch");
            println!(
                "game training done: test adversarial loss {:.6}",
                last.test_adv_loss
            );
            Ok(())
        }

        Command::TrainPgd {
            data: data_args,
            p,
            delta,
            epochs,
            lr,
            gamma,
            steps,
            restarts,
            seed,
            out,
        } => {
            let ds = load_auto(&data_args, seed)?;
            let constraint = LpConstraint::new(p.into(), delta)?;
            let defense = build_defense_for(&ds, constraint, seed)?;
            let mut cfg = GameConfig::classification(epochs, constraint, seed);
            cfg.defense_lr = lr;
            cfg.loss = loss_kind_for(ds.task());
            let mut pgd_cfg = PgdConfig::new(constraint, gamma, steps, restarts)?;
            pgd_cfg.seed = seed;
            let (model, record) = training::train_pgd_baseline(defense, &ds, &cfg, &pgd_cfg)?;
            write_training_outputs(&out, &record)?;
            let manifest = checkpoint::manifest_for(
                ds.task(),
                Some(constraint),
                Some(ds.fingerprint().into()),
                seed,
            );
            checkpoint::save_defense(out.join("defense_pgd.json"), &model, manifest)?;
            let last = record.final_epoch().expect("at least one epoch");
            println!(
                "pgd baseline done: test adversarial loss {:.6}",
                last.test_adv_loss
            );
            Ok(())
        }

        Command::Attack {
            method,
            p,
            delta,
            gamma,
            steps,
            restarts,
            early_stop,
            seed,
            model,
            data: data_args,
            clip_input,
            out,
        } => {
            let ds = load_auto(&data_args, seed)?;
            let (defense, _) = checkpoint::load_defense(&model)?;
            let constraint = LpConstraint::new(p.into(), delta)?;
            let base = base_loss_for(ds.task());
            let (x, targets) = ds.test_set();

            let mut cfg = PgdConfig::new(constraint, gamma, steps, restarts)?;
            cfg.early_stop_on_misclassify = early_stop;
            cfg.seed = seed;

            let mut csv = String::new();
            for c in 0..ds.dim() {
                csv.push_str(&format!("x{},", c + 1));
            }
            for c in 0..ds.dim() {
                csv.push_str(&format!("adv{},", c + 1));
            }
            csv.push_str("label,loss_clean,loss_adv\n");
            for r in 0..x.rows() {
                let adv = match method {
                    MethodArg::Fgsm => {
                        attacks::fgsm(&defense, base, x.row(r), &targets[r], &constraint)?
                    }
                    MethodArg::Pgd => {
                        let mut sample_cfg = cfg;
                        sample_cfg.seed = mix_seed(seed, r as u64);
                        attacks::pgd(&defense, base, x.row(r), &targets[r], &sample_cfg)?
                    }
                };
                let adv: Vec<f64> = if clip_input {
                    adv.iter().map(|v| v.clamp(0.0, 1.0)).collect()
                } else {
                    adv
                };
                let field = DefenseLoss::new(&defense, base, targets[r]);
                let label = match targets[r] {
                    Target::Class(c) => c.to_string(),
                    Target::Real(v) => v.to_string(),
                };
                for v in x.row(r) {
                    csv.push_str(&format!("{v},"));
                }
                for v in &adv {
                    csv.push_str(&format!("{v},"));
                }
                csv.push_str(&format!(
                    "{label},{},{}\n",
                    field.value(x.row(r)),
                    field.value(&adv)
                ));
            }
            std::fs::write(&out, csv)?;
            println!("wrote {} adversarial examples to {}", x.rows(), out.display());
            Ok(())
        }

        Command::Flow {
            p,
            delta,
            dt,
            max_time,
            tol,
            saddle,
            epsilon,
            sigma,
            function,
            start,
            model,
            data: data_path,
            sample,
            seed,
            out,
            euler,
        } => {
            let constraint = LpConstraint::new(p.into(), delta)?;
            if constraint.p == LpNorm::One {
                return Err(Error::Config("flow supports p in {2, inf}".into()));
            }
            let start_point: Vec<f64> = start
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad --start coordinate {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;

            let (field, saddles, x0): (Box<dyn ScalarField>, Vec<Vec<f64>>, Vec<f64>) =
                match (function, model) {
                    (Some(f), None) => {
                        if start_point.len() != 2 {
                            return Err(Error::Config(
                                "analytic test functions are 2D; pass --start x1,x2".into(),
                            ));
                        }
                        let anchor = [start_point[0], start_point[1]];
                        let (field, saddles) = TestFunction::from(f).build(anchor);
                        (field, saddles, start_point)
                    }
                    (None, Some(path)) => {
                        let (defense, _) = checkpoint::load_defense(&path)?;
                        let data_path = data_path.ok_or_else(|| {
                            Error::Config("--model needs --data for the start sample".into())
                        })?;
                        let args = DataArgs {
                            data: data_path,
                            target_column: None,
                            raw_target: false,
                            split_fraction: data::DEFAULT_SPLIT_FRACTION,
                        };
                        let ds = load_auto(&args, seed)?;
                        if sample >= ds.len() {
                            return Err(Error::Config(format!(
                                "--sample {sample} out of range for {} rows",
                                ds.len()
                            )));
                        }
                        let x0 = ds.features().row(sample).to_vec();
                        let target = ds.target(sample);
                        let base = base_loss_for(ds.task());
                        let field: Box<dyn ScalarField> =
                            Box::new(OwnedDefenseLoss::new(defense, base, target));
                        (field, vec![], x0)
                    }
                    _ => {
                        return Err(Error::Config(
                            "pass exactly one of --function or --model".into(),
                        ))
                    }
                };

            let mut cfg = FlowConfig::new(constraint);
            cfg.max_time = max_time;
            cfg.stationarity_tol = tol;
            cfg.seed = seed;
            if let Some(dt) = dt {
                cfg.dt = dt;
            }
            if euler {
                cfg.integrator = Integrator::ExplicitEuler;
            }
            cfg.saddle_handling = match saddle {
                SaddleArg::None => SaddleHandling::None,
                SaddleArg::Deflect => {
                    if saddles.is_empty() {
                        return Err(Error::Config(
                            "deflection needs a known saddle list; only the analytic `saddle` \
                             function provides one (use --saddle noise for model losses)"
                                .into(),
                        ));
                    }
                    SaddleHandling::Deflect { epsilon, saddles }
                }
                SaddleArg::Noise => SaddleHandling::Noise { sigma },
            };

            let trajectory = flow::integrate_flow(field.as_ref(), &x0, &cfg)?;

            let mut csv = String::from("t");
            for i in 0..x0.len() {
                csv.push_str(&format!(",x{}", i + 1));
            }
            csv.push_str(",f\n");
            for ((t, state), value) in trajectory
                .times
                .iter()
                .zip(&trajectory.states)
                .zip(&trajectory.values)
            {
                csv.push_str(&t.to_string());
                for v in state {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push_str(&format!(",{value}\n"));
            }
            std::fs::write(&out, csv)?;

            let kkt_json = serde_json::to_string_pretty(&trajectory.terminal_kkt)
                .map_err(|e| Error::Parse(format!("kkt report: {e}")))?;
            let kkt_path = out.with_extension("kkt.json");
            std::fs::write(&kkt_path, &kkt_json)?;
            println!(
                "{} steps, converged: {}, terminal value {:.6}",
                trajectory.times.len() - 1,
                trajectory.converged,
                trajectory.terminal_value()
            );
            println!("{kkt_json}");
            Ok(())
        }

        Command::Eval {
            defense,
            attack,
            p,
            delta,
            gamma,
            steps,
            restarts,
            imputed_labeler,
            seed,
            data: data_args,
            out,
        } => {
            let ds = load_auto(&data_args, seed)?;
            let constraint = LpConstraint::new(p.into(), delta)?;
            let base = base_loss_for(ds.task());

            let mut defenses = Vec::new();
            for path in &defense {
                let (model, _) = checkpoint::load_defense(path)?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "defense".into());
                defenses.push((name, model));
            }
            let defense_refs: Vec<(String, &DefenseNet)> =
                defenses.iter().map(|(n, m)| (n.clone(), m)).collect();

            let labeler = match &imputed_labeler {
                Some(path) => Some(checkpoint::load_defense(path)?.0),
                None => None,
            };

            let mut nets = Vec::new();
            for spec in &attack {
                if let Some(path) = spec.strip_prefix("net:") {
                    nets.push(checkpoint::load_attack(path)?.0);
                }
            }
            let mut net_iter = nets.iter();
            let mut specs = Vec::new();
            for spec in &attack {
                match spec.as_str() {
                    "none" => specs.push(AttackSpec::None),
                    "pgd" | "pgd-early" => {
                        let mut cfg = PgdConfig::new(constraint, gamma, steps, restarts)?;
                        cfg.seed = mix_seed(seed, 0xa77);
                        cfg.early_stop_on_misclassify = spec == "pgd-early";
                        specs.push(AttackSpec::Pgd(cfg));
                    }
                    "fgsm" => specs.push(AttackSpec::Fgsm(constraint)),
                    other if other.starts_with("net:") => {
                        let net = net_iter.next().expect("collected above");
                        specs.push(AttackSpec::Net {
                            attack: net,
                            labels: match &labeler {
                                Some(model) => LabelMode::Imputed(model),
                                None => LabelMode::True,
                            },
                        });
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "unknown attack spec {other:?} (none, net:PATH, pgd, pgd-early, fgsm)"
                        )))
                    }
                }
            }

            let matrix = eval::evaluate_matrix(&defense_refs, &specs, &ds, base)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("matrix.csv"), matrix.to_csv_string())?;
            let manifest = serde_json::json!({
                "artifact_version": env!("CARGO_PKG_VERSION"),
                "dataset_fingerprint": ds.fingerprint(),
                "constraint": {"p": constraint.p.to_string(), "delta": constraint.delta},
                "label_mode": if imputed_labeler.is_some() { "imputed" } else { "true" },
                "seed": seed,
            });
            std::fs::write(
                out.join("manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
            )?;
            print!("{}", matrix.to_csv_string());
            Ok(())
        }

        Command::ExportGrid {
            defense,
            attack,
            labeler,
            resolution,
            out,
        } => {
            let (defense, _) = checkpoint::load_defense(&defense)?;
            let (attack, _) = checkpoint::load_attack(&attack)?;
            let (labeler, _) = checkpoint::load_defense(&labeler)?;
            let export = eval::export_field(
                &defense,
                &attack,
                &labeler,
                resolution,
                BaseLoss::CrossEntropy,
            )?;
            export.save_csv(&out)?;
            println!("wrote {} grid rows to {}", export.rows.len(), out.display());
            Ok(())
        }

        Command::Reproduce {
            pipeline: name,
            epochs,
            n,
            noise,
            delta,
            seed,
            full_scale,
            config,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::from_json(&std::fs::read_to_string(&path)?)?,
                None => RunConfig::preset(&name, full_scale)?,
            };
            if let Some(epochs) = epochs {
                cfg.training.epochs = epochs;
            }
            if let Some(n) = n {
                match &mut cfg.dataset {
                    advgame::config::DatasetConfig::Generate2d { n: slot, .. }
                    | advgame::config::DatasetConfig::GenerateRegression { n: slot, .. } => {
                        *slot = n
                    }
                    _ => return Err(Error::Config("--n applies to generated datasets".into())),
                }
            }
            if let Some(noise) = noise {
                match &mut cfg.dataset {
                    advgame::config::DatasetConfig::Generate2d { noise: slot, .. }
                    | advgame::config::DatasetConfig::GenerateRegression { noise: slot, .. } => {
                        *slot = noise
                    }
                    _ => {
                        return Err(Error::Config("--noise applies to generated datasets".into()))
                    }
                }
            }
            if let Some(delta) = delta {
                cfg.constraint.delta = delta;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate()?;

            let out_dir =
                out.unwrap_or_else(|| pipeline::default_run_dir(Path::new("runs"), cfg.seed));
            let artifacts = pipeline::run_pipeline(&cfg, &out_dir)?;
            println!("artifacts under {}", artifacts.out_dir.display());
            println!("  dataset:  {}", artifacts.dataset_csv.display());
            println!("  curves:   {}", artifacts.curves_csv.display());
            println!("  matrix:   {}", artifacts.matrix_csv.display());
            if let Some(field) = &artifacts.field_csv {
                println!("  field:    {}", field.display());
            }
            println!("  manifest: {}", artifacts.manifest_json.display());
            Ok(())
        }
    }
}

/// Owning variant of [`DefenseLoss`] for CLI lifetimes.
struct OwnedDefenseLoss {
    defense: DefenseNet,
    base: BaseLoss,
    target: Target,
}

impl OwnedDefenseLoss {
    fn new(defense: DefenseNet, base: BaseLoss, target: Target) -> Self {
        OwnedDefenseLoss {
            defense,
            base,
            target,
        }
    }
}

impl ScalarField for OwnedDefenseLoss {
    fn dim(&self) -> usize {
        self.defense.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        DefenseLoss::new(&self.defense, self.base, self.target).value(x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        DefenseLoss::new(&self.defense, self.base, self.target).grad(x)
    }
}
