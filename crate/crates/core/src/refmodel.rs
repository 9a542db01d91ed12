//! Surge-sway-yaw reference dynamics with separated hull, propeller, rudder
//! and wind force components, used both to manufacture synthetic
//! free-running data and as the physics baseline during evaluation.
//!
//! The force submodels are deliberately simple surrogates with documented
//! closed forms (see below and `docs/force_model.md`): they give
//! physically shaped, quadrant-switching dynamics without claiming to match
//! any measured hull. Default coefficients are scaled to a 3 m tanker model
//! (Lpp 3.0 m, B 0.49 m, d 0.20 m, Cb 0.83).
//!
//! Surrogate closed forms, with `u, v = v_m, r` the body velocities:
//!
//! hull:      X_H = -(xu*u + xuu*u|u|) + xvr*v*r
//!            Y_H = -(yv*v + yvv*v|v| + yr*r + yrr*r|r| + yvr*v|r|)
//!            N_H = -(nv*v + nvv*v|v| + nr*r + nrr*r|r| + nrv*r|v|)
//! propeller: up  = (1 - wp) * u
//!            T   = rho*dp^4*(kt0*n^2 + kt1*n*up/dp)   for n >= 0
//!            T   = -rho*dp^4*ktr*n^2                  for n <  0
//!            X_P = (1 - tp) * T,  Y_P = N_P = 0
//! rudder:    uin = u + crace*dp*max(n, 0)
//!            vin = gf * (v + lr*r)
//!            alpha = delta - atan2(vin, uin)
//!            FN  = 0.5*rho*ar*fa*(uin^2 + vin^2)*sin(alpha)
//!            X_R = -(1 - tr)*FN*sin(delta)
//!            Y_R = -(1 + ah)*FN*cos(delta)
//!            N_R = (xr + ah*xh)*FN*cos(delta)
//! wind:      q   = 0.5*rho_air*Ua^2
//!            X_W = q*afr*cxw*cos(g)|cos(g)|
//!            Y_W = q*alat*cyw*sin(g)|sin(g)|
//!            N_W = q*alat*Lpp*cnw*sin(g)*cos(g)
//!
//! Sign conventions: positive rudder angle gives a negative (port-turning)
//! yaw moment at ahead speed; positive n drives the ship ahead.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{
    euler_pose_step, Accel, Control, StateVector, Velocity, WindObs,
};
use crate::mat::{solve_square, Mat};
use crate::trajectory::{ManeuverLabel, Trajectory};

/// Mass, geometry and force-submodel coefficients. All SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RefModelCoeffs {
    /// Ship mass [kg].
    pub m_mass: f64,
    /// Longitudinal added mass [kg].
    pub m_x: f64,
    /// Lateral added mass [kg].
    pub m_y: f64,
    /// Yaw moment of inertia [kg m^2].
    pub i_zz: f64,
    /// Added yaw inertia [kg m^2].
    pub j_zz: f64,
    /// Center of gravity forward of midship [m].
    pub x_g: f64,
    /// Length between perpendiculars [m].
    pub l_pp: f64,
    /// Breadth [m].
    pub breadth: f64,
    /// Draft [m].
    pub draft: f64,
    /// Water density [kg/m^3].
    pub rho: f64,

    // Hull force polynomial / cross-flow coefficients.
    pub hull_xu: f64,
    pub hull_xuu: f64,
    pub hull_xvr: f64,
    pub hull_yv: f64,
    pub hull_yvv: f64,
    pub hull_yr: f64,
    pub hull_yrr: f64,
    pub hull_yvr: f64,
    pub hull_nv: f64,
    pub hull_nvv: f64,
    pub hull_nr: f64,
    pub hull_nrr: f64,
    pub hull_nrv: f64,

    // Propeller.
    pub prop_diameter: f64,
    pub prop_kt0: f64,
    pub prop_kt1: f64,
    pub prop_kt_reverse: f64,
    pub prop_thrust_deduction: f64,
    pub prop_wake_fraction: f64,
    pub prop_race_factor: f64,

    // Rudder.
    pub rudder_area: f64,
    pub rudder_lift_slope: f64,
    pub rudder_drag_factor: f64,
    pub rudder_hull_gain: f64,
    pub rudder_x: f64,
    pub rudder_x_hull: f64,
    pub rudder_flow_straightening: f64,
    pub rudder_inflow_lever: f64,

    // Wind.
    pub rho_air: f64,
    pub wind_area_front: f64,
    pub wind_area_lateral: f64,
    pub wind_cx: f64,
    pub wind_cy: f64,
    pub wind_cn: f64,
    /// Wind forces can be switched off to match a bare hull+prop+rudder model.
    pub wind_on: bool,
}

impl Default for RefModelCoeffs {
    fn default() -> Self {
        RefModelCoeffs {
            m_mass: 244.0,
            m_x: 12.0,
            m_y: 183.0,
            i_zz: 137.0,
            j_zz: 49.0,
            x_g: 0.095,
            l_pp: 3.0,
            breadth: 0.49,
            draft: 0.20,
            rho: 1000.0,

            hull_xu: 1.2,
            hull_xuu: 5.5,
            hull_xvr: 30.0,
            hull_yv: 30.0,
            hull_yvv: 250.0,
            hull_yr: 8.0,
            hull_yrr: 6.0,
            hull_yvr: 40.0,
            hull_nv: 12.0,
            hull_nvv: 35.0,
            hull_nr: 36.0,
            hull_nrr: 20.0,
            hull_nrv: 15.0,

            prop_diameter: 0.084,
            prop_kt0: 0.30,
            prop_kt1: -0.30,
            prop_kt_reverse: 0.25,
            prop_thrust_deduction: 0.20,
            prop_wake_fraction: 0.30,
            prop_race_factor: 0.60,

            rudder_area: 0.0106,
            rudder_lift_slope: 2.4,
            rudder_drag_factor: 0.25,
            rudder_hull_gain: 0.30,
            rudder_x: -1.5,
            rudder_x_hull: -0.75,
            rudder_flow_straightening: 0.45,
            rudder_inflow_lever: -2.0,

            rho_air: 1.225,
            wind_area_front: 0.074,
            wind_area_lateral: 0.45,
            wind_cx: 0.8,
            wind_cy: 0.9,
            wind_cn: 0.1,
            wind_on: true,
        }
    }
}

/// Body-frame force/moment triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceTriple {
    /// Surge force [N].
    pub xf: f64,
    /// Sway force [N].
    pub yf: f64,
    /// Yaw moment [N m].
    pub nf: f64,
}

impl std::ops::Add for ForceTriple {
    type Output = ForceTriple;
    fn add(self, o: ForceTriple) -> ForceTriple {
        ForceTriple {
            xf: self.xf + o.xf,
            yf: self.yf + o.yf,
            nf: self.nf + o.nf,
        }
    }
}

impl RefModelCoeffs {
    pub fn validate(&self) -> Result<()> {
        let ok = self.m_mass > 0.0
            && self.m_x >= 0.0
            && self.m_y >= 0.0
            && self.i_zz + self.j_zz + self.x_g * self.x_g * self.m_mass > 0.0
            && self.l_pp > 0.0
            && self.breadth > 0.0
            && self.draft > 0.0
            && self.rho > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(
                "reference model coefficients violate mass/geometry invariants".into(),
            ));
        }
        Ok(())
    }

    /// The left-hand-side mass matrix of the equations of motion, ordered
    /// (surge, sway, yaw).
    pub fn mass_matrix(&self) -> Mat {
        let xg_m = self.x_g * self.m_mass;
        Mat::from_rows(&[
            vec![self.m_mass + self.m_x, 0.0, 0.0],
            vec![0.0, self.m_mass + self.m_y, xg_m],
            vec![
                0.0,
                xg_m,
                self.i_zz + self.j_zz + self.x_g * self.x_g * self.m_mass,
            ],
        ])
    }
}

/// Hull forces from the documented polynomial + cross-flow surrogate.
pub fn hull_forces(vel: Velocity, c: &RefModelCoeffs) -> ForceTriple {
    let Velocity { u, vm: v, r } = vel;
    ForceTriple {
        xf: -(c.hull_xu * u + c.hull_xuu * u * u.abs()) + c.hull_xvr * v * r,
        yf: -(c.hull_yv * v
            + c.hull_yvv * v * v.abs()
            + c.hull_yr * r
            + c.hull_yrr * r * r.abs()
            + c.hull_yvr * v * r.abs()),
        nf: -(c.hull_nv * v
            + c.hull_nvv * v * v.abs()
            + c.hull_nr * r
            + c.hull_nrr * r * r.abs()
            + c.hull_nrv * r * v.abs()),
    }
}

/// Propeller thrust (quadrant-switching in n) and rudder forces.
pub fn prop_rudder_forces(vel: Velocity, ctrl: Control, c: &RefModelCoeffs) -> ForceTriple {
    let Velocity { u, vm: v, r } = vel;
    let Control { n, delta } = ctrl;
    let dp = c.prop_diameter;

    // Thrust: KT linear in advance ratio ahead, constant coefficient astern.
    let up = (1.0 - c.prop_wake_fraction) * u;
    let thrust = if n >= 0.0 {
        c.rho * dp.powi(4) * (c.prop_kt0 * n * n + c.prop_kt1 * n * up / dp)
    } else {
        -c.rho * dp.powi(4) * c.prop_kt_reverse * n * n
    };
    let x_p = (1.0 - c.prop_thrust_deduction) * thrust;

    // Rudder: quadratic normal force on the effective inflow.
    let uin = u + c.prop_race_factor * dp * n.max(0.0);
    let vin = c.rudder_flow_straightening * (v + c.rudder_inflow_lever * r);
    let alpha = delta - vin.atan2(uin);
    let fn_norm = 0.5
        * c.rho
        * c.rudder_area
        * c.rudder_lift_slope
        * (uin * uin + vin * vin)
        * alpha.sin();
    let x_r = -(1.0 - c.rudder_drag_factor) * fn_norm * delta.sin();
    let y_r = -(1.0 + c.rudder_hull_gain) * fn_norm * delta.cos();
    let n_r = (c.rudder_x + c.rudder_hull_gain * c.rudder_x_hull) * fn_norm * delta.cos();

    ForceTriple {
        xf: x_p + x_r,
        yf: y_r,
        nf: n_r,
    }
}

/// Quadratic wind drag on the above-water body.
pub fn wind_forces(w: WindObs, c: &RefModelCoeffs) -> ForceTriple {
    let q = 0.5 * c.rho_air * w.speed * w.speed;
    let (s, g) = w.direction.sin_cos();
    ForceTriple {
        xf: q * c.wind_area_front * c.wind_cx * g * g.abs(),
        yf: q * c.wind_area_lateral * c.wind_cy * s * s.abs(),
        nf: q * c.wind_area_lateral * c.l_pp * c.wind_cn * s * g,
    }
}

/// Sum of all force components at a given state.
pub fn total_forces(
    vel: Velocity,
    ctrl: Control,
    w: WindObs,
    c: &RefModelCoeffs,
) -> ForceTriple {
    let mut f = hull_forces(vel, c) + prop_rudder_forces(vel, ctrl, c);
    if c.wind_on {
        f = f + wind_forces(w, c);
    }
    f
}

/// Body accelerations: solves the 3x3 equations of motion for
/// (du, dv_m, dr). Reads only the velocity part of the state; pose enters
/// solely through the (already apparent) wind observation.
pub fn accel(
    state: &StateVector,
    ctrl: Control,
    w: WindObs,
    c: &RefModelCoeffs,
) -> Result<Accel> {
    let vel = state.vel;
    let f = total_forces(vel, ctrl, w, c);
    let m = c.m_mass;
    let rhs = [
        f.xf + (m + c.m_y) * vel.vm * vel.r + c.x_g * m * vel.r * vel.r,
        f.yf - (m + c.m_x) * vel.u * vel.r,
        f.nf - c.x_g * m * vel.u * vel.r,
    ];
    let sol = solve_square(&c.mass_matrix(), &rhs)?;
    Ok(Accel {
        du: sol[0],
        dvm: sol[1],
        dr: sol[2],
    })
}

/// Explicit-Euler rollout under given control and wind series. Ground-truth
/// accelerations are recorded at every sample so generated datasets carry
/// targets for the acceleration loss.
pub fn simulate(
    initial: StateVector,
    controls: &[Control],
    winds: &[WindObs],
    dt: f64,
    label: ManeuverLabel,
    c: &RefModelCoeffs,
) -> Result<Trajectory> {
    if controls.len() != winds.len() {
        return Err(Error::LengthMismatch(format!(
            "controls {}, winds {}",
            controls.len(),
            winds.len()
        )));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    c.validate()?;

    let n = controls.len();
    let mut states = Vec::with_capacity(n);
    let mut accels = Vec::with_capacity(n);
    let mut state = initial;
    for i in 0..n {
        if !state.is_finite() {
            return Err(Error::NonFiniteState {
                step: i,
                what: format!("{state:?}"),
            });
        }
        let a = accel(&state, controls[i], winds[i], c)?;
        states.push(state);
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
        label,
        states,
        controls: controls.to_vec(),
        winds: winds.to_vec(),
        accels: Some(accels),
    })
}

const COEFF_FILE_VERSION: u32 = 1;

macro_rules! coeff_fields {
    ($macro:ident) => {
        $macro!(
            (m_mass, "m_mass"),
            (m_x, "m_x"),
            (m_y, "m_y"),
            (i_zz, "i_zz"),
            (j_zz, "j_zz"),
            (x_g, "x_g"),
            (l_pp, "l_pp"),
            (breadth, "breadth"),
            (draft, "draft"),
            (rho, "rho"),
            (hull_xu, "hull_xu"),
            (hull_xuu, "hull_xuu"),
            (hull_xvr, "hull_xvr"),
            (hull_yv, "hull_yv"),
            (hull_yvv, "hull_yvv"),
            (hull_yr, "hull_yr"),
            (hull_yrr, "hull_yrr"),
            (hull_yvr, "hull_yvr"),
            (hull_nv, "hull_nv"),
            (hull_nvv, "hull_nvv"),
            (hull_nr, "hull_nr"),
            (hull_nrr, "hull_nrr"),
            (hull_nrv, "hull_nrv"),
            (prop_diameter, "prop_diameter"),
            (prop_kt0, "prop_kt0"),
            (prop_kt1, "prop_kt1"),
            (prop_kt_reverse, "prop_kt_reverse"),
            (prop_thrust_deduction, "prop_thrust_deduction"),
            (prop_wake_fraction, "prop_wake_fraction"),
            (prop_race_factor, "prop_race_factor"),
            (rudder_area, "rudder_area"),
            (rudder_lift_slope, "rudder_lift_slope"),
            (rudder_drag_factor, "rudder_drag_factor"),
            (rudder_hull_gain, "rudder_hull_gain"),
            (rudder_x, "rudder_x"),
            (rudder_x_hull, "rudder_x_hull"),
            (rudder_flow_straightening, "rudder_flow_straightening"),
            (rudder_inflow_lever, "rudder_inflow_lever"),
            (rho_air, "rho_air"),
            (wind_area_front, "wind_area_front"),
            (wind_area_lateral, "wind_area_lateral"),
            (wind_cx, "wind_cx"),
            (wind_cy, "wind_cy"),
            (wind_cn, "wind_cn")
        );
    };
}

/// Render coefficients as a `key = value` file, one coefficient per line.
pub fn coeffs_to_string(c: &RefModelCoeffs) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {COEFF_FILE_VERSION}");
    macro_rules! emit {
        ($(($field:ident, $name:literal)),*) => {
            $(let _ = writeln!(out, "{} = {}", $name, c.$field);)*
        };
    }
    coeff_fields!(emit);
    let _ = writeln!(out, "wind_on = {}", c.wind_on);
    out
}

/// Parse a coefficient file. Values start from defaults and are overridden
/// key by key; unknown keys are rejected with their line number.
pub fn coeffs_from_str(text: &str, path: &str) -> Result<RefModelCoeffs> {
    let mut c = RefModelCoeffs::default();
    let mut seen_version = false;
    let mut pending: BTreeMap<&str, (usize, String)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedFile {
            path: path.into(),
            line: lineno + 1,
            what: format!("expected 'key = value', got '{raw}'"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key == "version" {
            let v: u32 = value.parse().map_err(|_| Error::MalformedFile {
                path: path.into(),
                line: lineno + 1,
                what: format!("bad version '{value}'"),
            })?;
            if v != COEFF_FILE_VERSION {
                return Err(Error::SchemaVersion {
                    path: path.into(),
                    got: value.into(),
                    expected: COEFF_FILE_VERSION,
                });
            }
            seen_version = true;
            continue;
        }
        pending.insert(
            match known_coeff_key(key) {
                Some(k) => k,
                None => {
                    return Err(Error::UnknownKey {
                        path: path.into(),
                        line: lineno + 1,
                        key: key.into(),
                    })
                }
            },
            (lineno + 1, value.to_string()),
        );
    }
    if !seen_version {
        return Err(Error::SchemaVersion {
            path: path.into(),
            got: "missing".into(),
            expected: COEFF_FILE_VERSION,
        });
    }
    let parse_f64 = |line: usize, v: &str| -> Result<f64> {
        v.parse::<f64>().map_err(|_| Error::MalformedFile {
            path: path.into(),
            line,
            what: format!("bad number '{v}'"),
        })
    };
    for (key, (line, value)) in &pending {
        macro_rules! assign {
            ($(($field:ident, $name:literal)),*) => {
                match *key {
                    $($name => c.$field = parse_f64(*line, value)?,)*
                    "wind_on" => {
                        c.wind_on = match value.as_str() {
                            "true" | "1" => true,
                            "false" | "0" => false,
                            other => {
                                return Err(Error::MalformedFile {
                                    path: path.into(),
                                    line: *line,
                                    what: format!("bad boolean '{other}'"),
                                })
                            }
                        }
                    }
                    _ => unreachable!(),
                }
            };
        }
        coeff_fields!(assign);
    }
    c.validate()?;
    Ok(c)
}

fn known_coeff_key(key: &str) -> Option<&'static str> {
    macro_rules! lookup {
        ($(($field:ident, $name:literal)),*) => {
            match key {
                $($name => return Some($name),)*
                "wind_on" => return Some("wind_on"),
                _ => {}
            }
        };
    }
    coeff_fields!(lookup);
    None
}

pub fn write_coeffs(c: &RefModelCoeffs, path: &Path) -> Result<()> {
    std::fs::write(path, coeffs_to_string(c))?;
    Ok(())
}

pub fn read_coeffs(path: &Path) -> Result<RefModelCoeffs> {
    let text = std::fs::read_to_string(path)?;
    coeffs_from_str(&text, &path.display().to_string())
}
