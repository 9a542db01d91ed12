//! Training of the network maneuvering models.
//!
//! Two objectives are supported. The acceleration loss compares network
//! outputs directly against measured accelerations. The rollout loss
//! instead simulates positions and velocities forward with the network
//! inside an explicit-Euler integrator and penalizes the standardized state
//! error, which keeps differentiated measurement noise out of the targets.
//! Gradients for both are exact reverse-mode derivatives, including the
//! paths through the pose trigonometry and through the feedback of
//! simulated velocities into later network inputs.

mod adam;
mod loss;
mod tape_loss;

pub use adam::{adam_step, AdamState};
pub use loss::{acc_loss, rollout_loss};
pub use tape_loss::window_grad;
use tape_loss::window_grad_into;

use crate::error::{Error, Result};
use crate::kinematics::wind_to_vector;
use crate::netmodel::{Arch, NetInputFrame, NetParams};
use crate::rng::Rng;
use crate::trajectory::{Dataset, Trajectory};

/// Which objective drives the optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Directly match measured accelerations.
    Accel,
    /// Match simulated positions and velocities over a rollout horizon.
    Rollout,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Accel => "acc",
            LossKind::Rollout => "state",
        }
    }

    /// Published learning-rate defaults: 1e-4 for the acceleration loss,
    /// 2e-5 for the state rollout loss.
    pub fn default_learning_rate(&self) -> f64 {
        match self {
            LossKind::Accel => 1.0e-4,
            LossKind::Rollout => 2.0e-5,
        }
    }
}

/// Per-channel standard deviations used to standardize both losses and the
/// evaluation metric. State channel order is (X, u, Y, v_m, psi, r);
/// acceleration order is (du, dv_m, dr).
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub sigma_state: [f64; 6],
    pub sigma_accel: [f64; 3],
}

pub const STATE_CHANNEL_NAMES: [&str; 6] = ["X", "u", "Y", "vm", "psi", "r"];
pub const ACCEL_CHANNEL_NAMES: [&str; 3] = ["du", "dvm", "dr"];

impl StandardizationStats {
    /// Population standard deviation of every channel over all samples of
    /// the given trajectories. Channels with zero spread are rejected.
    /// Trajectories without accelerations contribute only state channels;
    /// if none carry accelerations the acceleration sigmas fall back to 1
    /// (they are only consulted by the acceleration loss, which requires
    /// accelerations and recomputes nothing here).
    pub fn from_trajectories(trajs: &[&Trajectory]) -> Result<Self> {
        if trajs.is_empty() || trajs.iter().all(|t| t.is_empty()) {
            return Err(Error::InvalidArgument(
                "cannot standardize an empty dataset".into(),
            ));
        }
        let mut state_sum = [0.0; 6];
        let mut state_sq = [0.0; 6];
        let mut n_state = 0usize;
        let mut acc_sum = [0.0; 3];
        let mut acc_sq = [0.0; 3];
        let mut n_acc = 0usize;
        for t in trajs {
            for s in &t.states {
                for (k, v) in s.flatten().iter().enumerate() {
                    state_sum[k] += v;
                    state_sq[k] += v * v;
                }
                n_state += 1;
            }
            if let Some(accels) = &t.accels {
                for a in accels {
                    for (k, v) in [a.du, a.dvm, a.dr].iter().enumerate() {
                        acc_sum[k] += v;
                        acc_sq[k] += v * v;
                    }
                    n_acc += 1;
                }
            }
        }
        let mut sigma_state = [0.0; 6];
        for k in 0..6 {
            let mean = state_sum[k] / n_state as f64;
            let var = (state_sq[k] / n_state as f64 - mean * mean).max(0.0);
            sigma_state[k] = var.sqrt();
            if !(sigma_state[k] > 0.0) {
                return Err(Error::DegenerateChannel(STATE_CHANNEL_NAMES[k]));
            }
        }
        let mut sigma_accel = [1.0; 3];
        if n_acc > 0 {
            for k in 0..3 {
                let mean = acc_sum[k] / n_acc as f64;
                let var = (acc_sq[k] / n_acc as f64 - mean * mean).max(0.0);
                sigma_accel[k] = var.sqrt();
                if !(sigma_accel[k] > 0.0) {
                    return Err(Error::DegenerateChannel(ACCEL_CHANNEL_NAMES[k]));
                }
            }
        }
        Ok(StandardizationStats {
            sigma_state,
            sigma_accel,
        })
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let refs: Vec<&Trajectory> = ds.trajectories.iter().collect();
        Self::from_trajectories(&refs)
    }
}

/// Hyperparameters of a training run. Defaults follow the published table:
/// batch size 512, 60 predicted steps (6 s at 10 Hz), 10 memory steps, and
/// loss-dependent learning rates.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    /// None selects the loss kind's published default.
    pub learning_rate: Option<f64>,
    /// Predicted steps per window (N_T).
    pub predict_steps: usize,
    /// Memory steps per window (m); also the finite-memory depth.
    pub memory_steps: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub seeds: Vec<u64>,
    /// Window start stride; 1 uses every admissible start index.
    pub window_stride: usize,
    /// Fraction of whole trajectories held out for validation.
    pub val_fraction: f64,
    /// Seed for the trajectory-level split, independent of the training
    /// seeds so the multi-seed protocol varies only init and batch order.
    pub split_seed: u64,
    /// Worker threads for batch gradients. Results are bit-identical for
    /// any value because reduction runs over fixed-size chunks in order.
    pub jobs: usize,
    /// Per-channel input scaling applied by the trained network; all ones
    /// feeds raw physical units.
    pub input_scale: [f64; 7],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 200,
            batch_size: 512,
            learning_rate: None,
            predict_steps: 60,
            memory_steps: 10,
            max_epochs: 2000,
            patience: 100,
            seeds: vec![1, 2, 3, 4, 5],
            window_stride: 1,
            val_fraction: 0.2,
            split_seed: 42,
            jobs: 1,
            input_scale: [1.0; 7],
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_for(&self, kind: LossKind) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| kind.default_learning_rate())
    }

    pub fn window_len(&self) -> usize {
        self.predict_steps + self.memory_steps
    }
}

/// A training window: `predict_steps + memory_steps` consecutive frames of
/// one source trajectory, identified by start index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub traj: usize,
    pub start: usize,
}

/// Enumerate overlapping windows over a subset of a dataset's trajectories
/// (all of them when `subset` is None). Trajectories shorter than one
/// window contribute nothing.
pub fn make_windows(
    dataset: &Dataset,
    subset: Option<&[usize]>,
    predict_steps: usize,
    memory_steps: usize,
    stride: usize,
    kind: LossKind,
) -> Result<Vec<Window>> {
    let len = predict_steps + memory_steps;
    if predict_steps == 0 || memory_steps == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "predict steps, memory steps and stride must all be >= 1".into(),
        ));
    }
    let all: Vec<usize>;
    let indices = match subset {
        Some(s) => s,
        None => {
            all = (0..dataset.trajectories.len()).collect();
            &all
        }
    };
    let mut windows = Vec::new();
    for &ti in indices {
        let t = &dataset.trajectories[ti];
        if kind == LossKind::Accel && t.accels.is_none() {
            return Err(Error::MissingAcceleration(ti));
        }
        if t.len() < len {
            continue;
        }
        let mut start = 0;
        while start + len <= t.len() {
            windows.push(Window { traj: ti, start });
            start += stride;
        }
    }
    Ok(windows)
}

/// Network input frame at one sample of a trajectory, with the measured
/// wind observation converted to its vector form.
pub fn frame_at(t: &Trajectory, i: usize) -> NetInputFrame {
    NetInputFrame {
        vel: t.states[i].vel,
        ctrl: t.controls[i],
        wind: wind_to_vector(t.winds[i]),
    }
}

/// Loss value and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub loss: f64,
    pub grads: NetParams,
}

fn add_scaled_params(into: &mut NetParams, from: &NetParams, k: f64) {
    for ((_, a), (_, b)) in into.tensors_mut().into_iter().zip(from.tensors()) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += k * y;
        }
    }
}

/// Windows per reduction chunk. Fixed so that the floating-point summation
/// order, and therefore the result, does not depend on the worker count.
const GRAD_CHUNK: usize = 16;

/// Batch gradient: the mean over windows of the per-window loss gradient.
/// Work is distributed over `jobs` threads in fixed-size chunks; partial
/// sums are folded in chunk order.
pub fn grad(
    params: &NetParams,
    dataset: &Dataset,
    windows: &[Window],
    kind: LossKind,
    stats: &StandardizationStats,
    config: &TrainConfig,
) -> Result<GradientBundle> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n_chunks = windows.len().div_ceil(GRAD_CHUNK);
    let jobs = config.jobs.max(1).min(n_chunks);

    let chunk_result = |chunk: usize| -> Result<(f64, NetParams)> {
        let lo = chunk * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(windows.len());
        let mut loss_sum = 0.0;
        let mut grad_sum = NetParams::zeros(params.arch, params.hidden);
        let mut tape = crate::tape::Tape::new();
        for (wi, w) in windows[lo..hi].iter().enumerate() {
            loss_sum += window_grad_into(
                &mut tape, params, dataset, *w, kind, stats, config, lo + wi, &mut grad_sum,
            )?;
        }
        Ok((loss_sum, grad_sum))
    };

    let mut partials: Vec<Option<Result<(f64, NetParams)>>> = Vec::new();
    if jobs <= 1 {
        for chunk in 0..n_chunks {
            partials.push(Some(chunk_result(chunk)));
        }
    } else {
        partials.resize_with(n_chunks, || None);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut partials);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let chunk = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if chunk >= n_chunks {
                        break;
                    }
                    let r = chunk_result(chunk);
                    slots.lock().unwrap()[chunk] = Some(r);
                });
            }
        });
    }

    let mut loss_sum = 0.0;
    let mut grads = NetParams::zeros(params.arch, params.hidden);
    for p in partials {
        let (l, g) = p.expect("chunk not computed")?;
        loss_sum += l;
        add_scaled_params(&mut grads, &g, 1.0);
    }
    let scale = 1.0 / windows.len() as f64;
    loss_sum *= scale;
    for (_, t) in grads.tensors_mut() {
        for v in t {
            *v *= scale;
        }
    }
    Ok(GradientBundle {
        loss: loss_sum,
        grads,
    })
}

/// One epoch row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of one seeded training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    /// Parameters at the epoch with the lowest validation loss.
    pub params: NetParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub log: Vec<EpochRecord>,
    pub stats: StandardizationStats,
}

/// Split trajectory indices into train/validation by whole trajectories
/// with a seeded shuffle. Splitting inside a trajectory would leak
/// overlapping windows across the boundary.
pub fn split_trajectories(
    n: usize,
    val_fraction: f64,
    split_seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::DegenerateSplit("no trajectories".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(split_seed);
    rng.shuffle(&mut idx);
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n_val >= n {
        return Err(Error::DegenerateSplit(format!(
            "{n} trajectories cannot support a validation split"
        )));
    }
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    Ok((train, val))
}

/// Loss over a window set, parallelized over the same fixed chunks as the
/// gradient so the result is identical for any worker count.
pub fn loss_parallel(
    params: &NetParams,
    dataset: &Dataset,
    windows: &[Window],
    kind: LossKind,
    stats: &StandardizationStats,
    config: &TrainConfig,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n_chunks = windows.len().div_ceil(GRAD_CHUNK);
    let jobs = config.jobs.max(1).min(n_chunks);
    let chunk_sum = |chunk: usize| -> Result<f64> {
        let lo = chunk * GRAD_CHUNK;
        let hi = (lo + GRAD_CHUNK).min(windows.len());
        let mut sum = 0.0;
        for w in &windows[lo..hi] {
            let one = match kind {
                LossKind::Accel => acc_loss(params, dataset, &[*w], stats, config)?,
                LossKind::Rollout => {
                    rollout_loss(params, dataset, &[*w], stats, dataset.dt, config)?
                }
            };
            sum += one;
        }
        Ok(sum)
    };
    let mut partials: Vec<Option<Result<f64>>> = Vec::new();
    if jobs <= 1 {
        for chunk in 0..n_chunks {
            partials.push(Some(chunk_sum(chunk)));
        }
    } else {
        partials.resize_with(n_chunks, || None);
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(&mut partials);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let chunk = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if chunk >= n_chunks {
                        break;
                    }
                    let r = chunk_sum(chunk);
                    slots.lock().unwrap()[chunk] = Some(r);
                });
            }
        });
    }
    let mut total = 0.0;
    for p in partials {
        total += p.expect("chunk not computed")?;
    }
    Ok(total / windows.len() as f64)
}

/// Mini-batch Adam training with validation-based model selection: returns
/// the parameter snapshot with the lowest validation loss, together with
/// the per-epoch loss log.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    kind: LossKind,
    arch: Arch,
    seed: u64,
) -> Result<TrainOutcome> {
    dataset.validate()?;
    if let Arch::FiniteMemory { memory_steps } = arch {
        if memory_steps != config.memory_steps {
            return Err(Error::InvalidArgument(format!(
                "architecture memory {memory_steps} disagrees with config memory {}",
                config.memory_steps
            )));
        }
    }
    let (train_idx, val_idx) =
        split_trajectories(dataset.trajectories.len(), config.val_fraction, config.split_seed)?;
    let train_refs: Vec<&Trajectory> = train_idx.iter().map(|&i| &dataset.trajectories[i]).collect();
    let stats = StandardizationStats::from_trajectories(&train_refs)?;

    // Training enumerates every stride-1 window once and subsamples one
    // stride class per epoch with a rotating phase, so a stride > 1 caps
    // the per-epoch cost without permanently discarding data.
    let all_train_windows = make_windows(
        dataset,
        Some(&train_idx),
        config.predict_steps,
        config.memory_steps,
        1,
        kind,
    )?;
    let stride = config.window_stride.max(1);
    let val_windows = make_windows(
        dataset,
        Some(&val_idx),
        config.predict_steps,
        config.memory_steps,
        stride,
        kind,
    )?;
    let phase_windows = |phase: usize| -> Vec<usize> {
        all_train_windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.start % stride == phase)
            .map(|(i, _)| i)
            .collect()
    };
    if phase_windows(0).is_empty() || val_windows.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "train windows {}, validation windows {} (trajectories shorter than {} samples?)",
            all_train_windows.len(),
            val_windows.len(),
            config.window_len()
        )));
    }

    let mut init_rng = Rng::stream(seed, 0);
    let mut params = NetParams::init(arch, config.hidden, &mut init_rng);
    params.input_scale = config.input_scale;
    let mut shuffle_rng = Rng::stream(seed, 1);
    let lr = config.learning_rate_for(kind);
    let mut opt = AdamState::new(&params);

    let mut log = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let mut order = phase_windows(epoch % stride);
        shuffle_rng.shuffle(&mut order);
        let mut train_loss_sum = 0.0;
        let mut n_batches = 0usize;
        let mut batch: Vec<Window> = Vec::with_capacity(config.batch_size);
        for chunk in order.chunks(config.batch_size.max(1)) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| all_train_windows[i]));
            let bundle = grad(&params, dataset, &batch, kind, &stats, config)?;
            adam_step(&mut params, &bundle.grads, &mut opt, lr, (0.9, 0.999), 1e-8);
            train_loss_sum += bundle.loss;
            n_batches += 1;
        }
        let train_loss = train_loss_sum / n_batches.max(1) as f64;
        let val_loss = loss_parallel(&params, dataset, &val_windows, kind, &stats, config)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        seed,
        params: best_params,
        best_epoch,
        best_val_loss: best_val,
        log,
        stats,
    })
}

/// The multi-seed protocol: one independent run per configured seed.
pub fn train_seeds(
    dataset: &Dataset,
    config: &TrainConfig,
    kind: LossKind,
    arch: Arch,
) -> Result<Vec<TrainOutcome>> {
    config
        .seeds
        .iter()
        .map(|&s| train(dataset, config, kind, arch, s))
        .collect()
}
