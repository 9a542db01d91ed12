//! The four workflows behind the subcommands: dataset generation, training,
//! evaluation and the one-shot replication studies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use shipsid_core::datagen::{
    add_noise, compose_dataset, read_dataset, truncate_to_bounds, write_dataset, NoiseSpec,
};
use shipsid_core::error::{Error, Result};
use shipsid_core::evaluate::{
    experiment_matrix, mse, rollout, series_csv, track_svg, MatrixConfig, Predictor,
    RolloutOptions,
};
use shipsid_core::netmodel::{read_params, write_params, Arch, NetParams, RANGE_INPUT_SCALE};
use shipsid_core::refmodel::{read_coeffs, write_coeffs, RefModelCoeffs};
use shipsid_core::trajectory::{Dataset, ManeuverLabel};
use shipsid_core::training::{
    train, LossKind, StandardizationStats, TrainConfig, TrainOutcome,
};

use crate::filecfg::{read_recipe, read_train_config};
use crate::manifest::Manifest;

/// Restart policy at the command line: a fixed period, none at all, or the
/// length-dependent default (100 s restarts for runs of 200 s and longer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RestartPolicy {
    Auto,
    None,
    Period(f64),
}

impl RestartPolicy {
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(RestartPolicy::Auto),
            "none" | "inf" => Ok(RestartPolicy::None),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0)
                .map(RestartPolicy::Period)
                .ok_or_else(|| format!("bad restart period '{other}' (auto | none | seconds)")),
        }
    }

    fn period_for(&self, duration: f64) -> f64 {
        match self {
            RestartPolicy::Auto => {
                if duration >= 200.0 {
                    100.0
                } else {
                    f64::INFINITY
                }
            }
            RestartPolicy::None => f64::INFINITY,
            RestartPolicy::Period(p) => *p,
        }
    }
}

pub struct GenerateArgs {
    pub recipe: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub dt_override: Option<f64>,
    pub coeffs: Option<PathBuf>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let recipe = read_recipe(&args.recipe)?;
    let coeffs = match &args.coeffs {
        Some(p) => read_coeffs(p)?,
        None => RefModelCoeffs::default(),
    };
    let dt = args.dt_override.unwrap_or(recipe.dt);
    let mut clean = compose_dataset(&recipe.recipe, &coeffs, recipe.wind, dt, args.seed)?;
    if let Some(half) = recipe.pond_half_extent {
        for t in &mut clean.trajectories {
            *t = truncate_to_bounds(t, half);
        }
        clean.trajectories.retain(|t| t.len() > 1);
    }
    let dataset = if recipe.noise == NoiseSpec::none() {
        clean
    } else {
        let mut noisy = Dataset::new(clean.dt);
        for (i, t) in clean.trajectories.iter().enumerate() {
            noisy
                .trajectories
                .push(add_noise(t, &recipe.noise, args.seed ^ (i as u64).wrapping_mul(0x9e37)));
        }
        noisy
    };
    write_dataset(&dataset, &args.out)?;

    let mut m = Manifest::new("generate");
    m.seed(args.seed)
        .config_file(Some(&args.recipe))
        .param("mix", &recipe.mix)
        .param("total_seconds", recipe.total_seconds)
        .param("dt", dt)
        .param("trajectories", dataset.len())
        .param("duration_seconds", dataset.total_duration())
        .param("noise_pos_sigma", recipe.noise.pos_sigma)
        .param("noise_r_sigma", recipe.noise.r_sigma);
    for label in ManeuverLabel::ALL {
        m.param(
            &format!("duration_{}", label.letter()),
            dataset.duration_by_label(label),
        );
    }
    m.input(&args.recipe)?;
    if let Some(p) = &args.coeffs {
        m.input(p)?;
    }
    m.output(&args.out)?;
    m.write(&manifest_path(&args.out))?;
    println!(
        "generated {} trajectories ({:.1} s total) -> {}",
        dataset.len(),
        dataset.total_duration(),
        args.out.display()
    );
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".manifest.txt");
    PathBuf::from(os)
}

pub struct TrainArgs {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub arch: String,
    pub loss: String,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub timing: bool,
}

pub fn parse_arch(s: &str, memory_steps: usize) -> Result<Arch> {
    match s {
        "full" => Ok(Arch::FullMemory),
        "finite" => Ok(Arch::FiniteMemory { memory_steps }),
        other => Err(Error::InvalidArgument(format!(
            "unknown architecture '{other}' (full | finite)"
        ))),
    }
}

pub fn parse_loss(s: &str) -> Result<LossKind> {
    match s {
        "acc" => Ok(LossKind::Accel),
        "state" => Ok(LossKind::Rollout),
        other => Err(Error::InvalidArgument(format!(
            "unknown loss '{other}' (acc | state)"
        ))),
    }
}

fn log_csv(outcome: &TrainOutcome, wall_seconds: Option<f64>) -> String {
    let mut out = String::new();
    if wall_seconds.is_some() {
        out.push_str("epoch,train_loss,val_loss,wall_time\n");
    } else {
        out.push_str("epoch,train_loss,val_loss\n");
    }
    let n = outcome.log.len().max(1);
    for rec in &outcome.log {
        match wall_seconds {
            // Wall time is attributed evenly; it exists for profiling, is
            // opt-in, and keeps default runs byte-reproducible.
            Some(w) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.3}",
                    rec.epoch,
                    rec.train_loss,
                    rec.val_loss,
                    w * (rec.epoch + 1) as f64 / n as f64
                );
            }
            None => {
                let _ = writeln!(out, "{},{},{}", rec.epoch, rec.train_loss, rec.val_loss);
            }
        }
    }
    out
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let dataset = read_dataset(&args.dataset)?;
    let mut config = match &args.config {
        Some(p) => read_train_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(j) = args.jobs {
        config.jobs = j.max(1);
    }
    let seed = args.seed.unwrap_or_else(|| config.seeds.first().copied().unwrap_or(1));
    let loss = parse_loss(&args.loss)?;
    let arch = parse_arch(&args.arch, config.memory_steps)?;

    let t0 = std::time::Instant::now();
    let outcome = train(&dataset, &config, loss, arch, seed)?;
    let wall = t0.elapsed().as_secs_f64();

    write_params(&outcome.params, &args.out)?;
    let log_path = {
        let mut os = args.out.as_os_str().to_os_string();
        os.push(".log.csv");
        PathBuf::from(os)
    };
    std::fs::write(
        &log_path,
        log_csv(&outcome, if args.timing { Some(wall) } else { None }),
    )?;

    let mut m = Manifest::new("train");
    m.seed(seed)
        .config_file(args.config.as_deref())
        .param("arch", &args.arch)
        .param("loss", &args.loss)
        .param("hidden", config.hidden)
        .param("batch_size", config.batch_size)
        .param("learning_rate", config.learning_rate_for(loss))
        .param("predict_steps", config.predict_steps)
        .param("memory_steps", config.memory_steps)
        .param("max_epochs", config.max_epochs)
        .param("patience", config.patience)
        .param("window_stride", config.window_stride)
        .param("val_fraction", config.val_fraction)
        .param("split_seed", config.split_seed)
        .param(
            "input_scale",
            config
                .input_scale
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .param("best_epoch", outcome.best_epoch)
        .param("best_val_loss", outcome.best_val_loss)
        .param("epochs_run", outcome.log.len());
    m.input(&args.dataset)?;
    if let Some(p) = &args.config {
        m.input(p)?;
    }
    m.output(&args.out)?;
    m.output(&log_path)?;
    m.write(&manifest_path(&args.out))?;
    println!(
        "trained {} epochs, best validation {:.6} at epoch {} -> {}",
        outcome.log.len(),
        outcome.best_val_loss,
        outcome.best_epoch,
        args.out.display()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub checkpoints: Vec<PathBuf>,
    pub test: PathBuf,
    pub out_dir: PathBuf,
    pub baseline: Option<PathBuf>,
    pub restart: RestartPolicy,
    pub warmup_steps: usize,
    pub plots: bool,
}

fn stem_of(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    if args.checkpoints.is_empty() {
        return Err(Error::InvalidArgument("need at least one checkpoint".into()));
    }
    let test = read_dataset(&args.test)?;
    let stats = StandardizationStats::from_dataset(&test)?;
    let models: Vec<(String, NetParams)> = args
        .checkpoints
        .iter()
        .map(|p| Ok((stem_of(p), read_params(p)?)))
        .collect::<Result<_>>()?;
    let baseline = args.baseline.as_ref().map(|p| read_coeffs(p)).transpose()?;
    std::fs::create_dir_all(&args.out_dir)?;

    let mut classes: Vec<ManeuverLabel> = test
        .trajectories
        .iter()
        .map(|t| t.label)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();

    // Per-trajectory rollouts for every model (and the baseline), under the
    // per-trajectory restart policy.
    let mut detail = String::from("model,trajectory,label,mse,diverged_at,restart_period\n");
    let mut per_model_class: Vec<(String, BTreeMap<ManeuverLabel, (f64, usize)>, usize)> =
        Vec::new();
    let mut run_model = |name: &str, model: Predictor<'_>| -> Result<()> {
        let mut class_acc: BTreeMap<ManeuverLabel, (f64, usize)> = BTreeMap::new();
        let mut diverged300 = 0usize;
        for (i, traj) in test.trajectories.iter().enumerate() {
            let opts = RolloutOptions {
                restart_period: args.restart.period_for(traj.duration()),
                full_memory_warmup: args.warmup_steps,
            };
            let out = rollout(model, traj, &opts, Some(&stats))?;
            let err = mse(&out.predicted, traj, &stats)?;
            let e = class_acc.entry(traj.label).or_insert((0.0, 0));
            e.0 += err;
            e.1 += 1;
            if out.diverged_at.is_some() {
                diverged300 += 1;
            }
            let _ = writeln!(
                detail,
                "{name},{i},{},{err},{},{}",
                traj.label.letter(),
                out.diverged_at.map(|s| s.to_string()).unwrap_or_default(),
                opts.restart_period
            );
            if args.plots {
                let dir = args.out_dir.join("plots").join(name);
                std::fs::create_dir_all(&dir)?;
                let tag = format!("{}{:02}", traj.label.letter(), i);
                std::fs::write(dir.join(format!("{tag}_track.svg")), track_svg(traj, &out.predicted))?;
                std::fs::write(
                    dir.join(format!("{tag}_series.csv")),
                    series_csv(traj, &out.predicted),
                )?;
            }
        }
        per_model_class.push((name.to_string(), class_acc, diverged300));
        Ok(())
    };

    if let Some(c) = &baseline {
        run_model("refmodel", Predictor::RefModel(c))?;
    }
    for (name, params) in &models {
        run_model(name, Predictor::Net(params))?;
    }

    // Aggregate report: rows are classes, one mean column per model.
    let mut report = String::from("class");
    for (name, _, _) in &per_model_class {
        let _ = write!(report, ",{name}");
    }
    report.push('\n');
    for class in &classes {
        let _ = write!(report, "{}", class.letter());
        for (_, acc, _) in &per_model_class {
            match acc.get(class) {
                Some((sum, n)) => {
                    let _ = write!(report, ",{}", sum / *n as f64);
                }
                None => report.push(','),
            }
        }
        report.push('\n');
    }
    let report_path = args.out_dir.join("report.csv");
    std::fs::write(&report_path, &report)?;
    let detail_path = args.out_dir.join("per_trajectory.csv");
    std::fs::write(&detail_path, &detail)?;

    let mut m = Manifest::new("evaluate");
    m.param("warmup_steps", args.warmup_steps)
        .param("restart", format!("{:?}", args.restart))
        .param("models", models.len());
    m.input(&args.test)?;
    for p in &args.checkpoints {
        m.input(p)?;
    }
    if let Some(p) = &args.baseline {
        m.input(p)?;
    }
    m.output(&report_path)?;
    m.output(&detail_path)?;
    m.write(&args.out_dir.join("manifest.txt"))?;
    print!("{report}");
    Ok(())
}

pub struct ReplicateArgs {
    pub study: String,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub paper_scale: bool,
}

/// Desk-scale training setup: small hidden width, strided windows and a
/// learning rate sized for a few dozen epochs, so each study cell trains in
/// well under a minute on one CPU.
pub fn desk_train_config(loss: LossKind, seeds: Vec<u64>, jobs: usize) -> TrainConfig {
    TrainConfig {
        hidden: 32,
        batch_size: 128,
        learning_rate: Some(match loss {
            LossKind::Rollout => 3e-3,
            LossKind::Accel => 4e-3,
        }),
        predict_steps: 60,
        memory_steps: 10,
        max_epochs: 25,
        patience: 25,
        seeds,
        window_stride: 8,
        val_fraction: 0.2,
        split_seed: 42,
        jobs,
        input_scale: RANGE_INPUT_SCALE,
    }
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<()> {
    use shipsid_core::datagen::{recipe_tzb, recipe_tzrb, recipe_tzrb_plus, WindScenario};
    std::fs::create_dir_all(&args.out_dir)?;
    let coeffs = RefModelCoeffs::default();
    let wind = WindScenario::breeze(0.8, 45f64.to_radians());
    let dt = 0.1;
    let base_total = if args.paper_scale { 2536.3 } else { 600.0 };
    let seeds: Vec<u64> = (args.seed..args.seed + 3).collect();

    let noisy = |ds: Dataset, tag: u64| -> Dataset {
        let noise = NoiseSpec::gnss(0.01);
        let mut out = Dataset::new(ds.dt);
        for (i, t) in ds.trajectories.iter().enumerate() {
            out.trajectories
                .push(add_noise(t, &noise, tag ^ (i as u64).wrapping_mul(0x9e37)));
        }
        out
    };

    let gen = |recipe, seed| compose_dataset(&recipe, &coeffs, wind, dt, seed);
    let test = gen(recipe_tzrb(base_total * 0.6), args.seed ^ 0x7e57)?;

    let finite = Arch::FiniteMemory { memory_steps: 10 };
    let (configs, loss_for_cfg): (Vec<MatrixConfig>, LossKind) = match args.study.as_str() {
        "loss-comparison" => {
            // State loss against acceleration loss on noisy data: the
            // acceleration targets carry differencing-amplified noise.
            let train_plus = noisy(gen(recipe_tzrb_plus(base_total), args.seed + 10)?, 77);
            (
                vec![
                    MatrixConfig {
                        name: "type1_state".into(),
                        arch: finite,
                        loss: LossKind::Rollout,
                        dataset: train_plus.clone(),
                    },
                    MatrixConfig {
                        name: "type3_acc".into(),
                        arch: finite,
                        loss: LossKind::Accel,
                        dataset: train_plus,
                    },
                ],
                LossKind::Rollout,
            )
        }
        "arch-comparison" => {
            let train_plus = gen(recipe_tzrb_plus(base_total), args.seed + 10)?;
            (
                vec![
                    MatrixConfig {
                        name: "type1_finite".into(),
                        arch: finite,
                        loss: LossKind::Rollout,
                        dataset: train_plus.clone(),
                    },
                    MatrixConfig {
                        name: "type2_full".into(),
                        arch: Arch::FullMemory,
                        loss: LossKind::Rollout,
                        dataset: train_plus,
                    },
                ],
                LossKind::Rollout,
            )
        }
        "data-comparison" => (
            vec![
                MatrixConfig {
                    name: "type1_tzrb_plus".into(),
                    arch: finite,
                    loss: LossKind::Rollout,
                    dataset: gen(recipe_tzrb_plus(base_total), args.seed + 10)?,
                },
                MatrixConfig {
                    name: "type4_tzb".into(),
                    arch: finite,
                    loss: LossKind::Rollout,
                    dataset: gen(recipe_tzb(base_total), args.seed + 11)?,
                },
                MatrixConfig {
                    name: "type5_tzrb".into(),
                    arch: finite,
                    loss: LossKind::Rollout,
                    dataset: gen(recipe_tzrb(base_total), args.seed + 12)?,
                },
            ],
            LossKind::Rollout,
        ),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown study '{other}' (loss-comparison | arch-comparison | data-comparison)"
            )))
        }
    };

    let mut train_cfg = desk_train_config(loss_for_cfg, seeds.clone(), args.jobs);
    if args.paper_scale {
        train_cfg.hidden = 200;
        train_cfg.batch_size = 512;
        train_cfg.learning_rate = None;
        train_cfg.max_epochs = 2000;
        train_cfg.patience = 100;
        train_cfg.window_stride = 1;
        train_cfg.input_scale = [1.0; 7];
    }

    let opts = RolloutOptions {
        restart_period: 100.0,
        full_memory_warmup: train_cfg.memory_steps,
    };
    let (report, details) =
        experiment_matrix(&configs, &seeds, &test, &train_cfg, Some(&coeffs), &opts)?;

    let report_path = args.out_dir.join("report.csv");
    std::fs::write(&report_path, report.to_csv())?;

    // Overlay plots from the first seed of the first configuration,
    // including the acceleration channels (noisy targets vs. smooth
    // predictions) for the loss study.
    let stats = StandardizationStats::from_dataset(&test)?;
    if let Some(best) = details.first() {
        let dir = args.out_dir.join("plots");
        std::fs::create_dir_all(&dir)?;
        for (i, traj) in test.trajectories.iter().enumerate().take(6) {
            let out = rollout(Predictor::Net(&best.outcome.params), traj, &opts, Some(&stats))?;
            let tag = format!("{}{i:02}", traj.label.letter());
            std::fs::write(dir.join(format!("{tag}_track.svg")), track_svg(traj, &out.predicted))?;
            std::fs::write(
                dir.join(format!("{tag}_series.csv")),
                series_csv(traj, &out.predicted),
            )?;
        }
    }

    let mut m = Manifest::new("replicate");
    m.seed(args.seed)
        .param("study", &args.study)
        .param("scale", if args.paper_scale { "paper" } else { "desk" })
        .param("seeds", format!("{seeds:?}"))
        .param("hidden", train_cfg.hidden)
        .param("base_total_seconds", base_total);
    m.output(&report_path)?;
    m.write(&args.out_dir.join("manifest.txt"))?;
    println!("{}", report.to_csv());
    Ok(())
}

/// Write the default reference-model coefficients to a file, as a starting
/// point for edited models and for the evaluate command's baseline column.
pub fn cmd_coeffs(out: &Path) -> Result<()> {
    write_coeffs(&RefModelCoeffs::default(), out)?;
    println!("wrote default coefficients -> {}", out.display());
    Ok(())
}
