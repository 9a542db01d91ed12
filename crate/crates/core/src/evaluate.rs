//! Trajectory-level evaluation: closed-control rollouts with the restart
//! protocol, the standardized MSE metric, the multi-config experiment
//! matrix and deterministic plot emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{euler_pose_step, Accel, StateVector, Velocity};
use crate::netmodel::{forward_finite, step_full, Arch, HiddenState, NetParams};
use crate::refmodel::{accel as ref_accel, RefModelCoeffs};
use crate::trajectory::{Dataset, ManeuverLabel, Trajectory};
use crate::training::{train, LossKind, StandardizationStats, TrainConfig, TrainOutcome};

/// The model driving a rollout: a trained network or the physics baseline.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Net(&'a NetParams),
    RefModel(&'a RefModelCoeffs),
}

/// Standardized magnitude beyond which a rollout counts as diverged; the
/// predicted state is frozen from that step on instead of aborting, so the
/// metric still produces a (huge) number the report can show.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// A rollout and, if the simulation blew up, the step where it did.
#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub predicted: Trajectory,
    pub diverged_at: Option<usize>,
}

fn diverged(state: &StateVector, stats: Option<&StandardizationStats>) -> bool {
    if !state.is_finite() {
        return true;
    }
    if let Some(st) = stats {
        state
            .flatten()
            .iter()
            .zip(&st.sigma_state)
            .any(|(v, s)| (v / s).abs() > DIVERGENCE_LIMIT)
    } else {
        false
    }
}

/// How a rollout handles restarts and warmup.
#[derive(Debug, Clone, Copy)]
pub struct RolloutOptions {
    /// Reset to the measured state every this many seconds; infinity
    /// disables restarts (the initial seeding always happens).
    pub restart_period: f64,
    /// Measured frames pinned after each reset for a full-memory network,
    /// during which its hidden state re-synchronizes to measured inputs.
    /// Finite-memory networks always pin their own memory depth; the
    /// physics baseline pins one frame.
    pub full_memory_warmup: usize,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            restart_period: f64::INFINITY,
            full_memory_warmup: 10,
        }
    }
}

/// Roll a predictor along a measured trajectory, driving it with the
/// measured controls and wind. The state resets to the measurement at every
/// restart boundary.
///
/// After each reset, `warmup` frames are pinned to the measurements: a
/// finite-memory network refills its history with clean data, and a
/// full-memory network re-synchronizes its hidden state (which is never
/// reset) by stepping over the pinned frames.
pub fn rollout(
    model: Predictor<'_>,
    traj: &Trajectory,
    opts: &RolloutOptions,
    stats: Option<&StandardizationStats>,
) -> Result<RolloutOutput> {
    traj.validate()?;
    if !(opts.restart_period > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "restart period {} must be positive (use infinity for none)",
            opts.restart_period
        )));
    }
    let n = traj.len();
    let dt = traj.dt;
    let steps_per_restart = if opts.restart_period.is_finite() {
        ((opts.restart_period / dt).round() as usize).max(1)
    } else {
        usize::MAX
    };
    let is_restart =
        |i: usize| i == 0 || (steps_per_restart != usize::MAX && i % steps_per_restart == 0);

    let warmup = match model {
        Predictor::Net(p) => match p.arch {
            Arch::FiniteMemory { memory_steps } => memory_steps.max(1),
            Arch::FullMemory => opts.full_memory_warmup.max(1),
        },
        Predictor::RefModel(_) => 1,
    };
    let mut hidden = match model {
        Predictor::Net(p) => HiddenState::zeros(p.hidden),
        Predictor::RefModel(_) => HiddenState::zeros(0),
    };

    let mut predicted = traj.clone();
    let mut accels: Vec<Accel> = vec![Accel::default(); n];
    let mut diverged_at: Option<usize> = None;
    let mut seg_start = 0usize;

    for i in 0..n {
        if is_restart(i) {
            seg_start = i;
        }
        if i < seg_start + warmup {
            predicted.states[i] = traj.states[i];
        }

        // Model prediction at sample i, where its inputs exist. The
        // finite-memory history reads the predicted series, whose pinned
        // frames equal the measurements.
        let a = match model {
            Predictor::RefModel(c) => {
                if diverged_at.is_some() {
                    None
                } else {
                    Some(ref_accel(
                        &predicted.states[i],
                        traj.controls[i],
                        traj.winds[i],
                        c,
                    )?)
                }
            }
            Predictor::Net(p) => match p.arch {
                Arch::FullMemory => {
                    let frame = crate::netmodel::NetInputFrame {
                        vel: predicted.states[i].vel,
                        ctrl: traj.controls[i],
                        wind: crate::kinematics::wind_to_vector(traj.winds[i]),
                    };
                    let (a, h) = step_full(&frame, &hidden, p)?;
                    hidden = h;
                    Some(a)
                }
                Arch::FiniteMemory { memory_steps } => {
                    if i + 1 >= memory_steps {
                        let frames: Vec<_> = (i + 1 - memory_steps..=i)
                            .map(|k| crate::netmodel::NetInputFrame {
                                vel: predicted.states[k].vel,
                                ctrl: traj.controls[k],
                                wind: crate::kinematics::wind_to_vector(traj.winds[k]),
                            })
                            .collect();
                        Some(forward_finite(&frames, p)?)
                    } else {
                        None
                    }
                }
            },
        };
        if let Some(a) = a {
            accels[i] = a;
        }

        // Advance to sample i+1 unless that frame is pinned anyway.
        if i + 1 < n {
            let next_seg = if is_restart(i + 1) { i + 1 } else { seg_start };
            if i + 1 >= next_seg + warmup {
                let cur = predicted.states[i];
                let a = a.unwrap_or_default();
                let mut next = StateVector {
                    pose: euler_pose_step(cur.pose, cur.vel, dt),
                    vel: Velocity {
                        u: cur.vel.u + dt * a.du,
                        vm: cur.vel.vm + dt * a.dvm,
                        r: cur.vel.r + dt * a.dr,
                    },
                };
                if diverged_at.is_none() && diverged(&next, stats) {
                    diverged_at = Some(i + 1);
                }
                if diverged_at.is_some() {
                    // Freeze at the last healthy state so the metric stays
                    // finite while the cell reports the blow-up step.
                    next = cur;
                }
                predicted.states[i + 1] = next;
            }
        }
    }
    predicted.accels = Some(accels);
    Ok(RolloutOutput {
        predicted,
        diverged_at,
    })
}

/// Mean squared error of the standardized state over a whole trajectory:
/// the per-sample sum over all six channels of squared standardized error,
/// averaged over samples. Sigmas come from the test set.
pub fn mse(pred: &Trajectory, meas: &Trajectory, stats: &StandardizationStats) -> Result<f64> {
    if pred.len() != meas.len() {
        return Err(Error::LengthMismatch(format!(
            "prediction {} samples, measurement {}",
            pred.len(),
            meas.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let mut total = 0.0;
    for (p, m) in pred.states.iter().zip(&meas.states) {
        let pf = p.flatten();
        let mf = m.flatten();
        for j in 0..6 {
            let e = (pf[j] - mf[j]) / stats.sigma_state[j];
            total += e * e;
        }
    }
    Ok(total / pred.len() as f64)
}

/// One experiment configuration: an architecture/loss pair and the dataset
/// it trains on.
#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub name: String,
    pub arch: Arch,
    pub loss: LossKind,
    pub dataset: Dataset,
}

/// Per-class aggregate of one configuration across seeds.
#[derive(Debug, Clone)]
pub struct MatrixColumn {
    pub name: String,
    /// Per-class mean and std of the MSE across seeds, keyed by label.
    pub mean: BTreeMap<ManeuverLabel, f64>,
    pub std: BTreeMap<ManeuverLabel, f64>,
    /// Rollouts that hit the divergence guard, per class (over all seeds).
    pub diverged: BTreeMap<ManeuverLabel, usize>,
    /// Training or evaluation failure, recorded instead of aborting.
    pub failed: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub classes: Vec<ManeuverLabel>,
    /// Physics-baseline MSE per class, when a baseline model was supplied.
    pub baseline: Option<BTreeMap<ManeuverLabel, f64>>,
    pub columns: Vec<MatrixColumn>,
}

/// Per-seed evaluation detail kept alongside the aggregate table.
#[derive(Debug, Clone)]
pub struct SeedEvaluation {
    pub config: String,
    pub seed: u64,
    pub outcome: TrainOutcome,
    /// (trajectory index, label, mse, diverged step) per test trajectory.
    pub per_trajectory: Vec<(usize, ManeuverLabel, f64, Option<usize>)>,
}

/// Evaluate one trained model over every test trajectory.
pub fn evaluate_model(
    model: Predictor<'_>,
    test: &Dataset,
    stats: &StandardizationStats,
    opts: &RolloutOptions,
) -> Result<Vec<(usize, ManeuverLabel, f64, Option<usize>)>> {
    let mut rows = Vec::new();
    for (i, traj) in test.trajectories.iter().enumerate() {
        let out = rollout(model, traj, opts, Some(stats))?;
        let err = mse(&out.predicted, traj, stats)?;
        rows.push((i, traj.label, err, out.diverged_at));
    }
    Ok(rows)
}

fn per_class_mean(
    rows: &[(usize, ManeuverLabel, f64, Option<usize>)],
) -> BTreeMap<ManeuverLabel, f64> {
    let mut sums: BTreeMap<ManeuverLabel, (f64, usize)> = BTreeMap::new();
    for (_, label, err, _) in rows {
        let e = sums.entry(*label).or_insert((0.0, 0));
        e.0 += err;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, c))| (k, s / c as f64))
        .collect()
}

/// Run the full (config x seed) table: train each configuration under each
/// seed, evaluate on the held-out set, aggregate mean and std per maneuver
/// class. Cell failures are recorded in the column instead of aborting the
/// rest of the matrix.
pub fn experiment_matrix(
    configs: &[MatrixConfig],
    seeds: &[u64],
    test: &Dataset,
    train_config: &TrainConfig,
    baseline: Option<&RefModelCoeffs>,
    opts: &RolloutOptions,
) -> Result<(MatrixReport, Vec<SeedEvaluation>)> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let stats = StandardizationStats::from_dataset(test)?;
    let mut classes: Vec<ManeuverLabel> = test
        .trajectories
        .iter()
        .map(|t| t.label)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();

    let baseline_col = match baseline {
        Some(coeffs) => {
            let rows = evaluate_model(Predictor::RefModel(coeffs), test, &stats, opts)?;
            Some(per_class_mean(&rows))
        }
        None => None,
    };

    let mut columns = Vec::new();
    let mut details = Vec::new();
    for cfg in configs {
        let mut per_seed_class: Vec<BTreeMap<ManeuverLabel, f64>> = Vec::new();
        let mut diverged: BTreeMap<ManeuverLabel, usize> = BTreeMap::new();
        let mut failure: Option<String> = None;
        for &seed in seeds {
            let run = train(&cfg.dataset, train_config, cfg.loss, cfg.arch, seed)
                .and_then(|outcome| {
                    let rows = evaluate_model(
                        Predictor::Net(&outcome.params),
                        test,
                        &stats,
                        opts,
                    )?;
                    Ok((outcome, rows))
                });
            match run {
                Ok((outcome, rows)) => {
                    for (_, label, _, div) in &rows {
                        if div.is_some() {
                            *diverged.entry(*label).or_insert(0) += 1;
                        }
                    }
                    per_seed_class.push(per_class_mean(&rows));
                    details.push(SeedEvaluation {
                        config: cfg.name.clone(),
                        seed,
                        outcome,
                        per_trajectory: rows,
                    });
                }
                Err(e) => {
                    failure = Some(format!("seed {seed}: {e}"));
                }
            }
        }
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        for class in &classes {
            let vals: Vec<f64> = per_seed_class
                .iter()
                .filter_map(|m| m.get(class).copied())
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            mean.insert(*class, mu);
            std.insert(*class, var.sqrt());
        }
        columns.push(MatrixColumn {
            name: cfg.name.clone(),
            mean,
            std,
            diverged,
            failed: failure,
        });
    }
    Ok((
        MatrixReport {
            classes,
            baseline: baseline_col,
            columns,
        },
        details,
    ))
}

impl MatrixReport {
    /// CSV with one row per maneuver class and mean/std/diverged columns
    /// per configuration, mirroring the published table layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("class");
        if self.baseline.is_some() {
            out.push_str(",refmodel");
        }
        for c in &self.columns {
            let _ = write!(out, ",{}_mean,{}_std,{}_diverged", c.name, c.name, c.name);
        }
        out.push('\n');
        for class in &self.classes {
            let _ = write!(out, "{}", class.letter());
            if let Some(b) = &self.baseline {
                match b.get(class) {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            for c in &self.columns {
                match (c.mean.get(class), c.std.get(class)) {
                    (Some(m), Some(s)) => {
                        let _ = write!(out, ",{m},{s}");
                    }
                    _ => out.push_str(",,"),
                }
                let _ = write!(out, ",{}", c.diverged.get(class).copied().unwrap_or(0));
            }
            out.push('\n');
        }
        for c in &self.columns {
            if let Some(f) = &c.failed {
                let _ = writeln!(out, "# {} failed: {}", c.name, f);
            }
        }
        out
    }
}

fn svg_polyline(points: &[(f64, f64)], style: &str) -> String {
    let mut s = String::from("  <polyline fill=\"none\" ");
    s.push_str(style);
    s.push_str(" points=\"");
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.3},{y:.3}");
    }
    s.push_str("\"/>\n");
    s
}

/// Overlay of the measured and predicted X-Y tracks as a standalone SVG.
/// Output is a pure function of the inputs.
pub fn track_svg(meas: &Trajectory, pred: &Trajectory) -> String {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in meas.states.iter().chain(&pred.states) {
        min_x = min_x.min(s.pose.x);
        max_x = max_x.max(s.pose.x);
        min_y = min_y.min(s.pose.y);
        max_y = max_y.max(s.pose.y);
    }
    let pad = 0.05 * ((max_x - min_x).max(max_y - min_y).max(1.0));
    let (min_x, max_x) = (min_x - pad, max_x + pad);
    let (min_y, max_y) = (min_y - pad, max_y + pad);
    let size = 600.0;
    let scale = size / (max_x - min_x).max(max_y - min_y);
    // East on the horizontal axis, north up.
    let map = |s: &StateVector| {
        (
            (s.pose.y - min_y) * scale,
            size - (s.pose.x - min_x) * scale,
        )
    };
    let meas_pts: Vec<_> = meas.states.iter().map(map).collect();
    let pred_pts: Vec<_> = pred.states.iter().map(map).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    svg.push_str(&svg_polyline(&meas_pts, "stroke=\"black\" stroke-width=\"1.5\""));
    svg.push_str(&svg_polyline(
        &pred_pts,
        "stroke=\"crimson\" stroke-width=\"1.5\" stroke-dasharray=\"6 3\"",
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Measured-vs-predicted time series of every state channel plus the
/// acceleration overlays (noisy targets against the model's smooth
/// predictions), as a plotting-ready CSV.
pub fn series_csv(meas: &Trajectory, pred: &Trajectory) -> String {
    let mut out = String::from(
        "t,X_meas,X_pred,Y_meas,Y_pred,psi_meas,psi_pred,u_meas,u_pred,vm_meas,vm_pred,r_meas,r_pred,du_meas,du_pred,dvm_meas,dvm_pred,dr_meas,dr_pred\n",
    );
    let zero = Accel::default();
    for i in 0..meas.len() {
        let (ms, ps) = (&meas.states[i], &pred.states[i]);
        let ma = meas.accels.as_ref().map(|a| a[i]).unwrap_or(zero);
        let pa = pred.accels.as_ref().map(|a| a[i]).unwrap_or(zero);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            i as f64 * meas.dt,
            ms.pose.x,
            ps.pose.x,
            ms.pose.y,
            ps.pose.y,
            ms.pose.psi,
            ps.pose.psi,
            ms.vel.u,
            ps.vel.u,
            ms.vel.vm,
            ps.vel.vm,
            ms.vel.r,
            ps.vel.r,
            ma.du,
            pa.du,
            ma.dvm,
            pa.dvm,
            ma.dr,
            pa.dr
        );
    }
    out
}

/// Write per-trajectory overlay files for a set of (measured, predicted)
/// pairs: one track SVG and one series CSV each. Returns the file names.
pub fn emit_plots(
    pairs: &[(String, &Trajectory, &Trajectory)],
    out_dir: &Path,
) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, meas, pred) in pairs {
        let track = format!("{name}_track.svg");
        std::fs::write(out_dir.join(&track), track_svg(meas, pred))?;
        written.push(track);
        let series = format!("{name}_series.csv");
        std::fs::write(out_dir.join(&series), series_csv(meas, pred))?;
        written.push(series);
    }
    Ok(written)
}
