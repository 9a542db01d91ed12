//! Tape-recorded versions of the training losses.
//!
//! Each window's entire computation — network stages, Euler velocity
//! updates, trigonometric pose updates, standardized error terms — is
//! recorded on a fresh tape and swept backward once, yielding exact
//! gradients with respect to every parameter tensor. Values must agree
//! with the plain evaluators in `loss` to floating-point accuracy; that
//! equality is enforced by tests.

use crate::error::{Error, Result};
use crate::netmodel::{Arch, NetParams};
use crate::tape::{NodeId, Tape};
use crate::trajectory::{Dataset, Trajectory};

use super::{frame_at, LossKind, StandardizationStats, TrainConfig, Window};

struct TapeNet {
    vel_scale: NodeId,
    w_in_vel: NodeId,
    w_in_ctrl: NodeId,
    w_in_wind: NodeId,
    w_rec: NodeId,
    w_h1: NodeId,
    w_h2: NodeId,
    w_out: NodeId,
    b0: NodeId,
    b1: NodeId,
    b2: NodeId,
    tanh_b0: NodeId,
    tanh_b1: NodeId,
    tanh_b2: NodeId,
}

impl TapeNet {
    fn push(tape: &mut Tape, p: &NetParams) -> TapeNet {
        let vel_scale = tape.leaf(&p.input_scale[0..3]);
        let w_in_vel = tape.leaf_matrix(&p.w_in_vel);
        let w_in_ctrl = tape.leaf_matrix(&p.w_in_ctrl);
        let w_in_wind = tape.leaf_matrix(&p.w_in_wind);
        let w_rec = tape.leaf_matrix(&p.w_rec);
        let w_h1 = tape.leaf_matrix(&p.w_h1);
        let w_h2 = tape.leaf_matrix(&p.w_h2);
        let w_out = tape.leaf_matrix(&p.w_out);
        let b0 = tape.leaf(&p.b0);
        let b1 = tape.leaf(&p.b1);
        let b2 = tape.leaf(&p.b2);
        let tanh_b0 = tape.tanh(b0);
        let tanh_b1 = tape.tanh(b1);
        let tanh_b2 = tape.tanh(b2);
        TapeNet {
            vel_scale,
            w_in_vel,
            w_in_ctrl,
            w_in_wind,
            w_rec,
            w_h1,
            w_h2,
            w_out,
            b0,
            b1,
            b2,
            tanh_b0,
            tanh_b1,
            tanh_b2,
        }
    }

    /// One recurrence stage: tanh(W_v v + W_u u + W_w w [+ W_r z] + b0) - tanh(b0).
    fn stage(
        &self,
        tape: &mut Tape,
        vel: NodeId,
        ctrl: NodeId,
        wind: NodeId,
        z_prev: Option<NodeId>,
    ) -> NodeId {
        let scaled_vel = tape.mul(vel, self.vel_scale);
        let mut pre = tape.matvec(self.w_in_vel, scaled_vel);
        let t = tape.matvec(self.w_in_ctrl, ctrl);
        pre = tape.add(pre, t);
        let t = tape.matvec(self.w_in_wind, wind);
        pre = tape.add(pre, t);
        if let Some(z) = z_prev {
            let t = tape.matvec(self.w_rec, z);
            pre = tape.add(pre, t);
        }
        let pre_b = tape.add(pre, self.b0);
        let th = tape.tanh(pre_b);
        tape.sub(th, self.tanh_b0)
    }

    /// The two hidden transforms and the linear output head.
    fn head(&self, tape: &mut Tape, z1: NodeId) -> NodeId {
        let h1 = tape.matvec(self.w_h1, z1);
        let h1b = tape.add(h1, self.b1);
        let t1 = tape.tanh(h1b);
        let z2 = tape.sub(t1, self.tanh_b1);
        let h2 = tape.matvec(self.w_h2, z2);
        let h2b = tape.add(h2, self.b2);
        let t2 = tape.tanh(h2b);
        let z3 = tape.sub(t2, self.tanh_b2);
        tape.matvec(self.w_out, z3)
    }

    fn extract_grads(&self, tape: &Tape, arch: Arch, hidden: usize) -> NetParams {
        let mut g = NetParams::zeros(arch, hidden);
        self.accumulate_grads(tape, &mut g);
        g
    }

    /// Add this tape's parameter adjoints into an accumulator.
    fn accumulate_grads(&self, tape: &Tape, into: &mut NetParams) {
        let pairs: [(NodeId, &mut [f64]); 10] = [
            (self.w_in_vel, &mut into.w_in_vel.data),
            (self.w_in_ctrl, &mut into.w_in_ctrl.data),
            (self.w_in_wind, &mut into.w_in_wind.data),
            (self.w_rec, &mut into.w_rec.data),
            (self.w_h1, &mut into.w_h1.data),
            (self.w_h2, &mut into.w_h2.data),
            (self.w_out, &mut into.w_out.data),
            (self.b0, &mut into.b0),
            (self.b1, &mut into.b1),
            (self.b2, &mut into.b2),
        ];
        for (id, dest) in pairs {
            for (d, g) in dest.iter_mut().zip(tape.grad(id)) {
                *d += g;
            }
        }
    }
}

struct FrameNodes {
    vel: Vec<NodeId>,
    ctrl: Vec<NodeId>,
    wind: Vec<NodeId>,
}

/// Push constants for measured controls/wind over the whole window, and
/// measured velocities for the first `seeded_vels` frames. Control and
/// wind channels are constants, so their input scaling is folded into the
/// leaf values; velocity nodes stay in raw units (the pose chain and the
/// Euler update read them) and are scaled inside each stage.
fn push_frames(
    tape: &mut Tape,
    params: &NetParams,
    t: &Trajectory,
    w: Window,
    len: usize,
    seeded_vels: usize,
) -> FrameNodes {
    let s = &params.input_scale;
    let mut vel = Vec::with_capacity(len);
    let mut ctrl = Vec::with_capacity(len);
    let mut wind = Vec::with_capacity(len);
    for i in 0..len {
        let f = frame_at(t, w.start + i);
        if i < seeded_vels {
            vel.push(tape.leaf(&f.vel_channels()));
        }
        let c = f.ctrl_channels();
        let ww = f.wind_channels();
        ctrl.push(tape.leaf(&[c[0] * s[3], c[1] * s[4]]));
        wind.push(tape.leaf(&[ww[0] * s[5], ww[1] * s[6]]));
    }
    FrameNodes { vel, ctrl, wind }
}

struct LossAccum {
    node: Option<NodeId>,
}

impl LossAccum {
    fn new() -> Self {
        LossAccum { node: None }
    }

    fn push(&mut self, tape: &mut Tape, term: NodeId) {
        self.node = Some(match self.node {
            None => term,
            Some(acc) => tape.add(acc, term),
        });
    }

    fn finish(self, tape: &mut Tape, scale: f64) -> NodeId {
        let node = self.node.expect("at least one loss term");
        tape.scale(node, scale)
    }
}

fn pose_sigmas(stats: &StandardizationStats) -> ([f64; 3], [f64; 3]) {
    let s = &stats.sigma_state;
    (
        [1.0 / s[0], 1.0 / s[2], 1.0 / s[4]],
        [1.0 / s[1], 1.0 / s[3], 1.0 / s[5]],
    )
}

/// Loss and parameter gradients of one window, by taped reverse mode.
pub fn window_grad(
    params: &NetParams,
    dataset: &Dataset,
    w: Window,
    kind: LossKind,
    stats: &StandardizationStats,
    config: &TrainConfig,
    window_index: usize,
) -> Result<(f64, NetParams)> {
    let mut tape = Tape::new();
    let mut grads = NetParams::zeros(params.arch, params.hidden);
    let loss = window_grad_into(
        &mut tape, params, dataset, w, kind, stats, config, window_index, &mut grads,
    )?;
    Ok((loss, grads))
}

/// Same as [`window_grad`], but reusing a caller-owned tape and adding the
/// gradients into an accumulator. The batch driver calls this once per
/// window of a chunk, keeping the arena allocation warm.
#[allow(clippy::too_many_arguments)]
pub(crate) fn window_grad_into(
    tape: &mut Tape,
    params: &NetParams,
    dataset: &Dataset,
    w: Window,
    kind: LossKind,
    stats: &StandardizationStats,
    config: &TrainConfig,
    window_index: usize,
    grads: &mut NetParams,
) -> Result<f64> {
    let t = &dataset.trajectories[w.traj];
    let m = config.memory_steps;
    let n_t = config.predict_steps;
    let len = m + n_t;
    let dt = dataset.dt;
    tape.clear();
    let net = TapeNet::push(tape, params);

    let loss_node = match kind {
        LossKind::Accel => {
            if t.accels.is_none() {
                return Err(Error::MissingAcceleration(w.traj));
            }
            build_acc_loss(tape, &net, params, t, w, stats, m, n_t, len)?
        }
        LossKind::Rollout => build_rollout_loss(
            tape,
            &net,
            params,
            t,
            w,
            stats,
            dt,
            m,
            n_t,
            len,
            window_index,
        )?,
    };

    let loss = tape.scalar(loss_node);
    if !loss.is_finite() {
        return Err(Error::NonFiniteRollout {
            window: window_index,
            step: len,
        });
    }
    tape.backward(loss_node);
    net.accumulate_grads(tape, grads);
    Ok(loss)
}

#[allow(clippy::too_many_arguments)]
fn build_acc_loss(
    tape: &mut Tape,
    net: &TapeNet,
    params: &NetParams,
    t: &Trajectory,
    w: Window,
    stats: &StandardizationStats,
    m: usize,
    n_t: usize,
    len: usize,
) -> Result<NodeId> {
    let frames = push_frames(tape, params, t, w, len, len);
    let inv_sig: [f64; 3] = std::array::from_fn(|j| 1.0 / stats.sigma_accel[j]);
    let accels = t.accels.as_ref().unwrap();
    let mut total = LossAccum::new();
    match params.arch {
        Arch::FiniteMemory { .. } => {
            for i in m..len {
                let mut z = None;
                for k in i + 1 - m..=i {
                    z = Some(net.stage(tape, frames.vel[k], frames.ctrl[k], frames.wind[k], z));
                }
                let a = net.head(tape, z.unwrap());
                let meas = accels[w.start + i];
                let term = tape.norm_sq_err(a, &[meas.du, meas.dvm, meas.dr], &inv_sig);
                total.push(tape, term);
            }
        }
        Arch::FullMemory => {
            let mut z = None;
            for i in 0..len {
                z = Some(net.stage(tape, frames.vel[i], frames.ctrl[i], frames.wind[i], z));
                if i >= m {
                    let a = net.head(tape, z.unwrap());
                    let meas = accels[w.start + i];
                    let term = tape.norm_sq_err(a, &[meas.du, meas.dvm, meas.dr], &inv_sig);
                    total.push(tape, term);
                }
            }
        }
    }
    Ok(total.finish(tape, 1.0 / n_t as f64))
}

/// One taped Euler pose step; returns the advanced (x, y, psi) scalars.
fn tape_pose_step(
    tape: &mut Tape,
    x: NodeId,
    y: NodeId,
    psi: NodeId,
    vel: NodeId,
    dt: f64,
) -> (NodeId, NodeId, NodeId) {
    let u_s = tape.gather(vel, 0);
    let vm_s = tape.gather(vel, 1);
    let r_s = tape.gather(vel, 2);
    let c = tape.cos(psi);
    let s = tape.sin(psi);
    let uc = tape.mul(u_s, c);
    let vs = tape.mul(vm_s, s);
    let xdot = tape.sub(uc, vs);
    let us = tape.mul(u_s, s);
    let vc = tape.mul(vm_s, c);
    let ydot = tape.add(us, vc);
    (
        tape.add_scaled(x, xdot, dt),
        tape.add_scaled(y, ydot, dt),
        tape.add_scaled(psi, r_s, dt),
    )
}

#[allow(clippy::too_many_arguments)]
fn build_rollout_loss(
    tape: &mut Tape,
    net: &TapeNet,
    params: &NetParams,
    t: &Trajectory,
    w: Window,
    stats: &StandardizationStats,
    dt: f64,
    m: usize,
    n_t: usize,
    len: usize,
    window_index: usize,
) -> Result<NodeId> {
    let (inv_pose, inv_vel) = pose_sigmas(stats);
    let mut total = LossAccum::new();

    let (seed_frames, first_step) = match params.arch {
        Arch::FiniteMemory { .. } => (m, m - 1),
        Arch::FullMemory => (1, 0),
    };
    let mut frames = push_frames(tape, params, t, w, len, seed_frames);
    let seed_pose = t.states[w.start + first_step].pose;
    let mut x = tape.leaf_scalar(seed_pose.x);
    let mut y = tape.leaf_scalar(seed_pose.y);
    let mut psi = tape.leaf_scalar(seed_pose.psi);
    let mut z_full = None;

    for i in first_step..len - 1 {
        let a = match params.arch {
            Arch::FiniteMemory { .. } => {
                let mut z = None;
                for k in i + 1 - m..=i {
                    z = Some(net.stage(tape, frames.vel[k], frames.ctrl[k], frames.wind[k], z));
                }
                net.head(tape, z.unwrap())
            }
            Arch::FullMemory => {
                z_full = Some(net.stage(
                    tape,
                    frames.vel[i],
                    frames.ctrl[i],
                    frames.wind[i],
                    z_full,
                ));
                net.head(tape, z_full.unwrap())
            }
        };
        let (xn, yn, psin) = tape_pose_step(tape, x, y, psi, frames.vel[i], dt);
        x = xn;
        y = yn;
        psi = psin;
        let v_next = tape.add_scaled(frames.vel[i], a, dt);
        if !tape.val(v_next).iter().all(|v| v.is_finite())
            || !tape.scalar(x).is_finite()
            || !tape.scalar(y).is_finite()
            || !tape.scalar(psi).is_finite()
        {
            return Err(Error::NonFiniteRollout {
                window: window_index,
                step: i + 1,
            });
        }
        frames.vel.push(v_next);
        debug_assert_eq!(frames.vel.len(), i + 2);

        if i + 1 >= m {
            let meas = t.states[w.start + i + 1].flatten();
            let pose_vec = tape.concat3(x, y, psi);
            let pterm = tape.norm_sq_err(pose_vec, &[meas[0], meas[2], meas[4]], &inv_pose);
            let vterm = tape.norm_sq_err(v_next, &[meas[1], meas[3], meas[5]], &inv_vel);
            let term = tape.add(pterm, vterm);
            total.push(tape, term);
        }
    }
    Ok(total.finish(tape, 1.0 / n_t as f64))
}
