//! Coordinate systems, state/control/wind types and the kinematic relations
//! shared by the simulator, the rollout loss and evaluation.
//!
//! Frames: an earth-fixed frame with x pointing north and y pointing east,
//! and a ship-fixed frame with origin at the midship, x toward the bow and
//! y to starboard. The heading `psi` is the angle from earth-x to ship-x.
//! Headings are kept unwrapped (no modular reduction) so that Euler
//! integration and error metrics stay continuous across full turns.
//!
//! All angles are radians; degrees appear only at CLI and file boundaries.

use std::f64::consts::TAU;

/// Position and heading in the earth-fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    /// North position [m].
    pub x: f64,
    /// East position [m].
    pub y: f64,
    /// Heading [rad], unwrapped.
    pub psi: f64,
}

/// Body-frame velocities at the midship.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity {
    /// Surge velocity [m/s].
    pub u: f64,
    /// Sway velocity at the midship [m/s].
    pub vm: f64,
    /// Yaw rate [1/s].
    pub r: f64,
}

/// Actuator commands.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    /// Propeller revolutions [1/s]; negative means astern.
    pub n: f64,
    /// Rudder angle [rad].
    pub delta: f64,
}

/// Actuator envelope used when generating and validating commands.
#[derive(Debug, Clone, Copy)]
pub struct ControlLimits {
    pub n_max: f64,
    pub delta_max: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        // n in [-20, 20] rps, rudder in [-35, 35] degrees.
        ControlLimits {
            n_max: 20.0,
            delta_max: 35.0_f64.to_radians(),
        }
    }
}

impl ControlLimits {
    pub fn clamp(&self, c: Control) -> Control {
        Control {
            n: c.n.clamp(-self.n_max, self.n_max),
            delta: c.delta.clamp(-self.delta_max, self.delta_max),
        }
    }

    pub fn contains(&self, c: Control) -> bool {
        c.n.abs() <= self.n_max + 1e-12 && c.delta.abs() <= self.delta_max + 1e-12
    }
}

/// Apparent wind as observed on board: speed and the direction the air
/// flows toward, measured in the ship frame (0 = flowing toward the bow
/// direction, pi = coming from dead ahead).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindObs {
    /// Apparent wind speed [m/s], nonnegative.
    pub speed: f64,
    /// Apparent flow direction in the ship frame [rad], in [0, 2*pi).
    pub direction: f64,
}

/// Apparent wind as a ship-frame vector, the network's wind input. Using
/// components instead of the raw direction avoids the 0/2*pi jump.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindVector {
    pub wx: f64,
    pub wy: f64,
}

/// True wind in the earth frame, same flow-direction convention as
/// [`WindObs`] (the direction the air moves toward).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrueWind {
    pub speed: f64,
    pub direction: f64,
}

/// Full maneuvering state. Flattened channel order is
/// `(X, u, Y, v_m, psi, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub pose: Pose,
    pub vel: Velocity,
}

impl StateVector {
    pub fn flatten(&self) -> [f64; 6] {
        [
            self.pose.x,
            self.vel.u,
            self.pose.y,
            self.vel.vm,
            self.pose.psi,
            self.vel.r,
        ]
    }

    pub fn from_flat(v: [f64; 6]) -> Self {
        StateVector {
            pose: Pose {
                x: v[0],
                y: v[2],
                psi: v[4],
            },
            vel: Velocity {
                u: v[1],
                vm: v[3],
                r: v[5],
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Body-frame accelerations, the quantity the networks predict.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accel {
    /// Surge acceleration [m/s^2].
    pub du: f64,
    /// Sway acceleration at the midship [m/s^2].
    pub dvm: f64,
    /// Yaw angular acceleration [1/s^2].
    pub dr: f64,
}

/// Time derivative of the pose given body velocities and the heading:
/// `(u cos psi - v_m sin psi, u sin psi + v_m cos psi, r)`.
pub fn pose_rate(vel: Velocity, psi: f64) -> (f64, f64, f64) {
    let (s, c) = psi.sin_cos();
    (
        vel.u * c - vel.vm * s,
        vel.u * s + vel.vm * c,
        vel.r,
    )
}

/// One explicit-Euler step of the pose.
pub fn euler_pose_step(pose: Pose, vel: Velocity, dt: f64) -> Pose {
    let (dx, dy, dpsi) = pose_rate(vel, pose.psi);
    Pose {
        x: pose.x + dt * dx,
        y: pose.y + dt * dy,
        psi: pose.psi + dt * dpsi,
    }
}

/// Convert the observed (speed, direction) pair into ship-frame components.
pub fn wind_to_vector(w: WindObs) -> WindVector {
    let (s, c) = w.direction.sin_cos();
    WindVector {
        wx: w.speed * c,
        wy: w.speed * s,
    }
}

/// Normalize an angle to [0, 2*pi).
pub fn wrap_angle(a: f64) -> f64 {
    let mut v = a % TAU;
    if v < 0.0 {
        v += TAU;
    }
    v
}

/// Apparent wind observed on a ship with heading `psi` moving at `vel`
/// through a true wind: the true flow vector rotated into the ship frame
/// minus the ship's own velocity. A ship steaming through calm air reports
/// wind coming from dead ahead (direction = pi).
pub fn apparent_wind(true_wind: TrueWind, vel: Velocity, psi: f64) -> WindObs {
    let (s, c) = (true_wind.direction - psi).sin_cos();
    let ax = true_wind.speed * c - vel.u;
    let ay = true_wind.speed * s - vel.vm;
    let speed = (ax * ax + ay * ay).sqrt();
    let direction = if speed > 0.0 {
        wrap_angle(ay.atan2(ax))
    } else {
        0.0
    };
    WindObs { speed, direction }
}
