//! Plain (non-differentiating) evaluators of the two training losses.
//!
//! These are the reference implementations used for validation passes and
//! as the function under finite differences in the gradient tests; the
//! differentiable twins live in `tape_loss` and must agree with these to
//! floating-point accuracy.

use crate::error::{Error, Result};
use crate::kinematics::{euler_pose_step, Velocity};
use crate::netmodel::{forward_finite, step_full, Arch, HiddenState, NetInputFrame, NetParams};
use crate::trajectory::{Dataset, Trajectory};

use super::{frame_at, StandardizationStats, TrainConfig, Window};

fn window_frames(t: &Trajectory, w: Window, len: usize) -> Vec<NetInputFrame> {
    (w.start..w.start + len).map(|i| frame_at(t, i)).collect()
}

fn state_err(
    t: &Trajectory,
    sample: usize,
    pose: crate::kinematics::Pose,
    vel: Velocity,
    stats: &StandardizationStats,
) -> f64 {
    let meas = t.states[sample].flatten();
    let sim = [pose.x, vel.u, pose.y, vel.vm, pose.psi, vel.r];
    let mut acc = 0.0;
    for j in 0..6 {
        let e = (sim[j] - meas[j]) / stats.sigma_state[j];
        acc += e * e;
    }
    acc
}

fn accel_err(
    t: &Trajectory,
    sample: usize,
    pred: crate::kinematics::Accel,
    stats: &StandardizationStats,
) -> f64 {
    let meas = t.accels.as_ref().expect("checked upstream")[sample];
    let mut acc = 0.0;
    for (j, (p, m)) in [
        (pred.du, meas.du),
        (pred.dvm, meas.dvm),
        (pred.dr, meas.dr),
    ]
    .into_iter()
    .enumerate()
    {
        let e = (p - m) / stats.sigma_accel[j];
        acc += e * e;
    }
    acc
}

fn window_acc_loss(
    params: &NetParams,
    t: &Trajectory,
    w: Window,
    stats: &StandardizationStats,
    m: usize,
    n_t: usize,
) -> Result<f64> {
    let len = m + n_t;
    let frames = window_frames(t, w, len);
    let mut err = 0.0;
    match params.arch {
        Arch::FiniteMemory { memory_steps } => {
            debug_assert_eq!(memory_steps, m);
            for i in m..len {
                let a = forward_finite(&frames[i + 1 - m..=i], params)?;
                err += accel_err(t, w.start + i, a, stats);
            }
        }
        Arch::FullMemory => {
            let mut h = HiddenState::zeros(params.hidden);
            for (i, frame) in frames.iter().enumerate() {
                let (a, hn) = step_full(frame, &h, params)?;
                h = hn;
                if i >= m {
                    err += accel_err(t, w.start + i, a, stats);
                }
            }
        }
    }
    Ok(err / n_t as f64)
}

fn window_rollout_loss(
    params: &NetParams,
    t: &Trajectory,
    w: Window,
    stats: &StandardizationStats,
    dt: f64,
    m: usize,
    n_t: usize,
    window_index: usize,
) -> Result<f64> {
    let len = m + n_t;
    let mut frames = window_frames(t, w, len);
    let mut err = 0.0;
    match params.arch {
        Arch::FiniteMemory { memory_steps } => {
            debug_assert_eq!(memory_steps, m);
            // Frames 0..m-1 keep measured velocities; simulation produces
            // the velocity of every later frame and the pose chain starts
            // from the measured pose at frame m-1.
            let mut pose = t.states[w.start + m - 1].pose;
            for i in m - 1..len - 1 {
                let a = forward_finite(&frames[i + 1 - m..=i], params)?;
                let vel = frames[i].vel;
                pose = euler_pose_step(pose, vel, dt);
                let next = Velocity {
                    u: vel.u + dt * a.du,
                    vm: vel.vm + dt * a.dvm,
                    r: vel.r + dt * a.dr,
                };
                if !(next.u.is_finite()
                    && next.vm.is_finite()
                    && next.r.is_finite()
                    && pose.x.is_finite()
                    && pose.y.is_finite()
                    && pose.psi.is_finite())
                {
                    return Err(Error::NonFiniteRollout {
                        window: window_index,
                        step: i + 1,
                    });
                }
                frames[i + 1].vel = next;
                err += state_err(t, w.start + i + 1, pose, next, stats);
            }
        }
        Arch::FullMemory => {
            // Only frame 0 is pinned to measurements; the hidden state and
            // the simulated state evolve freely through the warmup frames,
            // and the loss covers the final n_t frames.
            let mut h = HiddenState::zeros(params.hidden);
            let mut pose = t.states[w.start].pose;
            for i in 0..len - 1 {
                let (a, hn) = step_full(&frames[i], &h, params)?;
                h = hn;
                let vel = frames[i].vel;
                pose = euler_pose_step(pose, vel, dt);
                let next = Velocity {
                    u: vel.u + dt * a.du,
                    vm: vel.vm + dt * a.dvm,
                    r: vel.r + dt * a.dr,
                };
                if !(next.u.is_finite()
                    && next.vm.is_finite()
                    && next.r.is_finite()
                    && pose.x.is_finite()
                    && pose.y.is_finite()
                    && pose.psi.is_finite())
                {
                    return Err(Error::NonFiniteRollout {
                        window: window_index,
                        step: i + 1,
                    });
                }
                frames[i + 1].vel = next;
                if i + 1 >= m {
                    err += state_err(t, w.start + i + 1, pose, next, stats);
                }
            }
        }
    }
    Ok(err / n_t as f64)
}

/// Acceleration-matching loss: mean over windows and predicted steps of the
/// squared standardized acceleration error.
pub fn acc_loss(
    params: &NetParams,
    dataset: &Dataset,
    windows: &[Window],
    stats: &StandardizationStats,
    config: &TrainConfig,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut sum = 0.0;
    for w in windows {
        let t = &dataset.trajectories[w.traj];
        if t.accels.is_none() {
            return Err(Error::MissingAcceleration(w.traj));
        }
        sum += window_acc_loss(params, t, *w, stats, config.memory_steps, config.predict_steps)?;
    }
    Ok(sum / windows.len() as f64)
}

/// State rollout loss: the network drives an explicit-Euler simulation of
/// velocity and pose over each window; the loss is the mean squared
/// standardized error of all six state channels over the predicted steps.
pub fn rollout_loss(
    params: &NetParams,
    dataset: &Dataset,
    windows: &[Window],
    stats: &StandardizationStats,
    dt: f64,
    config: &TrainConfig,
) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut sum = 0.0;
    for (wi, w) in windows.iter().enumerate() {
        let t = &dataset.trajectories[w.traj];
        sum += window_rollout_loss(
            params,
            t,
            *w,
            stats,
            dt,
            config.memory_steps,
            config.predict_steps,
            wi,
        )?;
    }
    Ok(sum / windows.len() as f64)
}
