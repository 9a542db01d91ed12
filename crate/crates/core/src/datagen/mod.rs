//! Synthetic free-running-test generation: turning circles, zigzags,
//! random-control runs and berthing-like approach profiles, plus the
//! GNSS-differentiation noise model and dataset composition helpers.

mod io;

pub use io::{read_dataset, read_dataset_str, write_dataset, write_dataset_string};

use crate::error::{Error, Result};
use crate::kinematics::{
    apparent_wind, euler_pose_step, Control, ControlLimits, StateVector, TrueWind, Velocity,
};
use crate::refmodel::{accel, RefModelCoeffs};
use crate::rng::Rng;
use crate::trajectory::{Dataset, ManeuverLabel, Trajectory};

/// Maneuver families and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ManeuverKind {
    /// Constant rudder, constant propeller speed.
    Turning { n: f64, delta: f64 },
    /// Rudder flips sign whenever the heading crosses the switch angle,
    /// which requires closed-loop generation.
    Zigzag { n: f64, delta: f64, switch_angle: f64 },
    /// Piecewise-constant commands resampled uniformly over the actuator
    /// ranges at exponentially distributed dwell times.
    Random { dwell_mean: f64 },
    /// Scripted approach: ahead leg, coasting turn, reverse braking, and a
    /// speed-triggered thrust cutoff that ends the run near rest.
    Berthing { approach_n: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverSpec {
    pub kind: ManeuverKind,
    pub duration: f64,
}

impl ManeuverSpec {
    pub fn label(&self) -> ManeuverLabel {
        match self.kind {
            ManeuverKind::Turning { .. } => ManeuverLabel::Turning,
            ManeuverKind::Zigzag { .. } => ManeuverLabel::Zigzag,
            ManeuverKind::Random { .. } => ManeuverLabel::Random,
            ManeuverKind::Berthing { .. } => ManeuverLabel::Berthing,
        }
    }

    pub fn validate(&self, limits: &ControlLimits) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "maneuver duration {} must be positive",
                self.duration
            )));
        }
        let ok = match self.kind {
            ManeuverKind::Turning { n, delta } => {
                limits.contains(Control { n, delta })
            }
            ManeuverKind::Zigzag { n, delta, switch_angle } => {
                limits.contains(Control { n, delta }) && switch_angle > 0.0
            }
            ManeuverKind::Random { dwell_mean } => dwell_mean > 0.0,
            ManeuverKind::Berthing { approach_n } => approach_n > 0.0 && approach_n <= limits.n_max,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "maneuver violates actuator limits: {self:?}"
            )));
        }
        Ok(())
    }
}

/// True-wind scenario over a run. The gusty variant perturbs speed and
/// direction with an Ornstein-Uhlenbeck walk around the means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindScenario {
    Calm,
    Constant { speed: f64, direction: f64 },
    Gusty {
        mean_speed: f64,
        mean_direction: f64,
        speed_sigma: f64,
        direction_sigma: f64,
        /// Relaxation time of the gust process [s].
        tau: f64,
    },
}

impl WindScenario {
    /// A light breeze with gusts; varies enough within a run that the wind
    /// input channels carry learnable signal.
    pub fn breeze(speed: f64, direction: f64) -> Self {
        WindScenario::Gusty {
            mean_speed: speed,
            mean_direction: direction,
            speed_sigma: 0.25 * speed.max(0.2),
            direction_sigma: 0.25,
            tau: 10.0,
        }
    }

    fn series(&self, samples: usize, dt: f64, rng: &mut Rng) -> Vec<TrueWind> {
        match *self {
            WindScenario::Calm => vec![TrueWind::default(); samples],
            WindScenario::Constant { speed, direction } => {
                vec![TrueWind { speed, direction }; samples]
            }
            WindScenario::Gusty {
                mean_speed,
                mean_direction,
                speed_sigma,
                direction_sigma,
                tau,
            } => {
                let mut out = Vec::with_capacity(samples);
                let mut ds = 0.0f64;
                let mut dd = 0.0f64;
                let k = (2.0 * dt / tau).sqrt();
                for _ in 0..samples {
                    ds += -ds * dt / tau + speed_sigma * k * rng.normal(0.0, 1.0);
                    dd += -dd * dt / tau + direction_sigma * k * rng.normal(0.0, 1.0);
                    out.push(TrueWind {
                        speed: (mean_speed + ds).max(0.0),
                        direction: mean_direction + dd,
                    });
                }
                out
            }
        }
    }
}

/// Measurement-noise model mirroring a GNSS/gyro chain: additive position
/// noise, velocities recovered by differencing positions, a directly
/// measured (lightly noisy) yaw rate, and accelerations optionally
/// recomputed by differencing the noisy velocities, which amplifies the
/// noise by 1/dt per differentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// GNSS position noise standard deviation [m].
    pub pos_sigma: f64,
    /// Yaw-rate noise standard deviation [1/s].
    pub r_sigma: f64,
    /// Recompute accelerations by differencing the noisy velocities.
    pub accel_from_differencing: bool,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            pos_sigma: 0.0,
            r_sigma: 0.0,
            accel_from_differencing: false,
        }
    }

    pub fn gnss(pos_sigma: f64) -> Self {
        NoiseSpec {
            pos_sigma,
            r_sigma: 1e-4,
            accel_from_differencing: true,
        }
    }
}

/// Open-loop command series for a maneuver. Zigzag runs emit the first
/// rudder leg only; the sign flips are applied closed-loop inside
/// [`gen_trajectory`]. Berthing emits the scripted phase profile; the
/// final speed-triggered cutoff likewise lives in the closed loop.
pub fn gen_controls(spec: &ManeuverSpec, dt: f64, seed: u64) -> Result<Vec<Control>> {
    let limits = ControlLimits::default();
    spec.validate(&limits)?;
    let samples = (spec.duration / dt).round() as usize;
    let mut rng = Rng::stream(seed, 1);
    let series = match spec.kind {
        ManeuverKind::Turning { n, delta } | ManeuverKind::Zigzag { n, delta, .. } => {
            vec![Control { n, delta }; samples]
        }
        ManeuverKind::Random { dwell_mean } => {
            let mut out = Vec::with_capacity(samples);
            let mut remaining = 0.0f64;
            let mut cmd = Control::default();
            for _ in 0..samples {
                if remaining <= 0.0 {
                    remaining = rng.exponential(dwell_mean);
                    cmd = Control {
                        n: rng.uniform(-limits.n_max, limits.n_max),
                        delta: rng.uniform(-limits.delta_max, limits.delta_max),
                    };
                }
                remaining -= dt;
                out.push(cmd);
            }
            out
        }
        ManeuverKind::Berthing { approach_n } => {
            let mut out = Vec::with_capacity(samples);
            // Seeded jitter keeps the berthing runs from being clones.
            let n_ahead = approach_n * rng.uniform(0.85, 1.15);
            let n_rev = -approach_n * rng.uniform(1.0, 1.4);
            let turn = rng.uniform(-1.0f64, 1.0).signum() * rng.uniform(0.15, 0.45);
            let t_ahead = 0.35 + rng.uniform(-0.05, 0.05);
            let t_coast = t_ahead + 0.18;
            let t_brake = t_coast + 0.32;
            for i in 0..samples {
                let frac = i as f64 / samples.max(1) as f64;
                let cmd = if frac < t_ahead {
                    Control { n: n_ahead, delta: 0.4 * turn }
                } else if frac < t_coast {
                    Control { n: 0.0, delta: turn }
                } else if frac < t_brake {
                    Control { n: n_rev, delta: -0.5 * turn }
                } else {
                    Control { n: 0.3 * n_rev, delta: 0.0 }
                };
                out.push(limits.clamp(cmd));
            }
            out
        }
    };
    Ok(series)
}

/// Surge speed below which the berthing script cuts thrust.
const BERTHING_STOP_SPEED: f64 = 0.03;

/// Generate one noise-free trajectory by closed-loop simulation against the
/// reference dynamics. Ground-truth accelerations ride along.
pub fn gen_trajectory(
    spec: &ManeuverSpec,
    coeffs: &RefModelCoeffs,
    wind: WindScenario,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    coeffs.validate()?;
    let open_loop = gen_controls(spec, dt, seed)?;
    let samples = open_loop.len();
    let mut wind_rng = Rng::stream(seed, 2);
    let true_winds = wind.series(samples, dt, &mut wind_rng);

    let mut state = StateVector::default();
    let mut states = Vec::with_capacity(samples);
    let mut controls = Vec::with_capacity(samples);
    let mut winds = Vec::with_capacity(samples);
    let mut accels = Vec::with_capacity(samples);

    // Closed-loop state for the zigzag switching rule. Positive rudder
    // turns the bow to port (psi decreasing), so the first leg drives the
    // heading toward -switch_angle.
    let mut zz_delta: Option<f64> = None;
    let mut berthing_stopped = false;

    for i in 0..samples {
        if !state.is_finite() {
            return Err(Error::NonFiniteState {
                step: i,
                what: format!("{state:?}"),
            });
        }
        let w = apparent_wind(true_winds[i], state.vel, state.pose.psi);
        let mut cmd = open_loop[i];
        match spec.kind {
            ManeuverKind::Zigzag { delta, switch_angle, .. } => {
                let current = *zz_delta.get_or_insert(delta);
                let psi = state.pose.psi;
                let flipped = if current > 0.0 && psi <= -switch_angle {
                    -delta.abs()
                } else if current < 0.0 && psi >= switch_angle {
                    delta.abs()
                } else {
                    current
                };
                // First leg with positive command heads to -switch, so a
                // positive initial delta is already consistent.
                zz_delta = Some(flipped);
                cmd.delta = flipped;
            }
            ManeuverKind::Berthing { .. } => {
                // Once braked below the stop speed, keep thrust off.
                if berthing_stopped || (cmd.n < 0.0 && state.vel.u.abs() < BERTHING_STOP_SPEED) {
                    berthing_stopped = true;
                    cmd.n = 0.0;
                }
            }
            _ => {}
        }
        let a = accel(&state, cmd, w, coeffs)?;
        states.push(state);
        controls.push(cmd);
        winds.push(w);
        accels.push(a);
        state = StateVector {
            pose: euler_pose_step(state.pose, state.vel, dt),
            vel: Velocity {
                u: state.vel.u + dt * a.du,
                vm: state.vel.vm + dt * a.dvm,
                r: state.vel.r + dt * a.dr,
            },
        };
    }
    Ok(Trajectory {
        dt,
        label: spec.label(),
        states,
        controls,
        winds,
        accels: Some(accels),
    })
}

/// Inject measurement noise. Positions receive additive Gaussian noise,
/// body velocities are recomputed by one-sided differencing of the noisy
/// positions (rotated into the ship frame), the yaw rate gets small
/// additive noise, and accelerations are optionally recomputed by
/// differencing the noisy velocities.
pub fn add_noise(traj: &Trajectory, noise: &NoiseSpec, seed: u64) -> Trajectory {
    if noise.pos_sigma == 0.0 && noise.r_sigma == 0.0 && !noise.accel_from_differencing {
        return traj.clone();
    }
    let n = traj.len();
    let dt = traj.dt;
    let mut rng = Rng::stream(seed, 3);
    let mut out = traj.clone();

    let mut xs: Vec<f64> = traj.states.iter().map(|s| s.pose.x).collect();
    let mut ys: Vec<f64> = traj.states.iter().map(|s| s.pose.y).collect();
    for i in 0..n {
        xs[i] += rng.normal(0.0, noise.pos_sigma);
        ys[i] += rng.normal(0.0, noise.pos_sigma);
    }

    // Forward differences (backward at the last sample), as a GNSS
    // post-processing chain would produce them.
    let diff = |v: &[f64], i: usize| -> f64 {
        if i + 1 < v.len() {
            (v[i + 1] - v[i]) / dt
        } else {
            (v[i] - v[i - 1]) / dt
        }
    };

    let mut us = vec![0.0; n];
    let mut vms = vec![0.0; n];
    let mut rs = vec![0.0; n];
    for i in 0..n {
        let vx = diff(&xs, i);
        let vy = diff(&ys, i);
        let psi = traj.states[i].pose.psi;
        let (s, c) = psi.sin_cos();
        us[i] = vx * c + vy * s;
        vms[i] = -vx * s + vy * c;
        rs[i] = traj.states[i].vel.r + rng.normal(0.0, noise.r_sigma);
    }

    for i in 0..n {
        out.states[i].pose.x = xs[i];
        out.states[i].pose.y = ys[i];
        out.states[i].vel.u = us[i];
        out.states[i].vel.vm = vms[i];
        out.states[i].vel.r = rs[i];
    }

    if noise.accel_from_differencing {
        let accels = (0..n)
            .map(|i| crate::kinematics::Accel {
                du: diff(&us, i),
                dvm: diff(&vms, i),
                dr: diff(&rs, i),
            })
            .collect();
        out.accels = Some(accels);
    }
    out
}

/// Emulate a bounded test pond: truncate a trajectory at the first sample
/// whose position leaves the square [-half_extent, half_extent]^2. Returns
/// the trajectory unchanged when it never leaves. Off by default in every
/// recipe; opt in with the `pond_half_extent` recipe key.
pub fn truncate_to_bounds(traj: &Trajectory, half_extent: f64) -> Trajectory {
    let cut = traj
        .states
        .iter()
        .position(|s| s.pose.x.abs() > half_extent || s.pose.y.abs() > half_extent)
        .unwrap_or(traj.len());
    if cut == traj.len() {
        return traj.clone();
    }
    Trajectory {
        dt: traj.dt,
        label: traj.label,
        states: traj.states[..cut].to_vec(),
        controls: traj.controls[..cut].to_vec(),
        winds: traj.winds[..cut].to_vec(),
        accels: traj.accels.as_ref().map(|a| a[..cut].to_vec()),
    }
}

/// A dataset recipe: maneuver templates with repeat counts.
pub type Recipe = Vec<(ManeuverSpec, usize)>;

/// Generate a labeled dataset from a recipe. Each trajectory draws its own
/// substream from the master seed, so recipes regenerate bit-identically
/// and trajectories stay independent.
pub fn compose_dataset(
    recipe: &Recipe,
    coeffs: &RefModelCoeffs,
    wind: WindScenario,
    dt: f64,
    master_seed: u64,
) -> Result<Dataset> {
    let mut ds = Dataset::new(dt);
    let mut index = 0u64;
    for (spec, count) in recipe {
        for _ in 0..*count {
            let seed = Rng::stream(master_seed, index).next_u64();
            // Seeded parameter jitter: vary the template per repeat.
            let varied = vary_spec(spec, Rng::stream(master_seed, index ^ 0x5bd1e995));
            ds.trajectories
                .push(gen_trajectory(&varied, coeffs, wind, dt, seed)?);
            index += 1;
        }
    }
    Ok(ds)
}

fn vary_spec(spec: &ManeuverSpec, mut rng: Rng) -> ManeuverSpec {
    let limits = ControlLimits::default();
    let kind = match spec.kind {
        ManeuverKind::Turning { n, delta } => ManeuverKind::Turning {
            n: (n * rng.uniform(0.8, 1.2)).clamp(-limits.n_max, limits.n_max),
            delta: (delta * rng.uniform(0.7, 1.25)).clamp(-limits.delta_max, limits.delta_max)
                * rng.uniform(-1.0f64, 1.0).signum(),
        },
        ManeuverKind::Zigzag { n, delta, switch_angle } => ManeuverKind::Zigzag {
            n: (n * rng.uniform(0.85, 1.15)).clamp(-limits.n_max, limits.n_max),
            delta: (delta * rng.uniform(0.8, 1.2)).clamp(-limits.delta_max, limits.delta_max),
            switch_angle: switch_angle * rng.uniform(0.8, 1.2),
        },
        ManeuverKind::Random { dwell_mean } => ManeuverKind::Random { dwell_mean },
        ManeuverKind::Berthing { approach_n } => ManeuverKind::Berthing {
            approach_n: (approach_n * rng.uniform(0.85, 1.2)).min(limits.n_max),
        },
    };
    ManeuverSpec {
        kind,
        duration: spec.duration,
    }
}

/// Duration shares of the published training mixes, per maneuver class.
/// TZB leaves random maneuvers out; TZRB spends half its budget on them;
/// the plus variant is the same mix at roughly 5.3 times the size.
const TZB_SHARES: [(ManeuverLabel, f64); 4] = [
    (ManeuverLabel::Turning, 1490.0 / 2562.9),
    (ManeuverLabel::Zigzag, 737.1 / 2562.9),
    (ManeuverLabel::Random, 0.0),
    (ManeuverLabel::Berthing, 335.8 / 2562.9),
];
const TZRB_SHARES: [(ManeuverLabel, f64); 4] = [
    (ManeuverLabel::Turning, 556.4 / 2536.3),
    (ManeuverLabel::Zigzag, 342.9 / 2536.3),
    (ManeuverLabel::Random, 1301.2 / 2536.3),
    (ManeuverLabel::Berthing, 335.8 / 2536.3),
];
/// Size ratio of the plus mix to the base mix.
pub const TZRB_PLUS_RATIO: f64 = 13475.8 / 2536.3;

fn template(label: ManeuverLabel) -> (ManeuverKind, f64) {
    match label {
        ManeuverLabel::Turning => (
            ManeuverKind::Turning { n: 9.0, delta: 25f64.to_radians() },
            70.0,
        ),
        ManeuverLabel::Zigzag => (
            ManeuverKind::Zigzag {
                n: 9.0,
                delta: 15f64.to_radians(),
                switch_angle: 15f64.to_radians(),
            },
            70.0,
        ),
        ManeuverLabel::Random => (ManeuverKind::Random { dwell_mean: 5.0 }, 60.0),
        ManeuverLabel::Berthing => (ManeuverKind::Berthing { approach_n: 9.0 }, 90.0),
    }
}

fn recipe_from_shares(total_seconds: f64, shares: &[(ManeuverLabel, f64); 4]) -> Recipe {
    let mut recipe = Recipe::new();
    for (label, share) in shares {
        let target = total_seconds * share;
        if target <= 0.0 {
            continue;
        }
        let (kind, unit) = template(*label);
        let count = (target / unit).round().max(1.0) as usize;
        let duration = target / count as f64;
        recipe.push((ManeuverSpec { kind, duration }, count));
    }
    recipe
}

/// Turning + zigzag + berthing, no random maneuvers.
pub fn recipe_tzb(total_seconds: f64) -> Recipe {
    recipe_from_shares(total_seconds, &TZB_SHARES)
}

/// The full four-class mix.
pub fn recipe_tzrb(total_seconds: f64) -> Recipe {
    recipe_from_shares(total_seconds, &TZRB_SHARES)
}

/// The enlarged four-class mix (about 5.3x the base size).
pub fn recipe_tzrb_plus(base_total_seconds: f64) -> Recipe {
    recipe_from_shares(base_total_seconds * TZRB_PLUS_RATIO, &TZRB_SHARES)
}
