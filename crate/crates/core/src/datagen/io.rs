//! Dataset file format.
//!
//! One file holds a whole dataset. It opens with a version line, then each
//! trajectory contributes a metadata line, the fixed CSV header and its
//! data rows:
//!
//! ```text
//! # shipsid-dataset version=1
//! # trajectory label=T dt=0.1 samples=700 accels=true
//! t,X,Y,psi,u,vm,r,n,delta,U_A,gamma_a,du,dvm,dr
//! 0,0,0,0,0,0,0,9,0.43,0,0,0.01,0,0
//! ...
//! ```
//!
//! Columns are SI units and radians; `du,dvm,dr` appear only when the
//! trajectory carries accelerations. Floats are written in shortest
//! round-trip form, so write -> read -> write is byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{Accel, Control, Pose, StateVector, Velocity, WindObs};
use crate::trajectory::{Dataset, ManeuverLabel, Trajectory};

const DATASET_VERSION: u32 = 1;
const HEADER_BASE: &str = "t,X,Y,psi,u,vm,r,n,delta,U_A,gamma_a";
const HEADER_ACCEL: &str = "t,X,Y,psi,u,vm,r,n,delta,U_A,gamma_a,du,dvm,dr";
const COLUMNS: [&str; 14] = [
    "t", "X", "Y", "psi", "u", "vm", "r", "n", "delta", "U_A", "gamma_a", "du", "dvm", "dr",
];

pub fn write_dataset_string(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# shipsid-dataset version={DATASET_VERSION}");
    for t in &ds.trajectories {
        let with_acc = t.accels.is_some();
        let _ = writeln!(
            out,
            "# trajectory label={} dt={} samples={} accels={}",
            t.label.letter(),
            t.dt,
            t.len(),
            with_acc
        );
        out.push_str(if with_acc { HEADER_ACCEL } else { HEADER_BASE });
        out.push('\n');
        for i in 0..t.len() {
            let s = &t.states[i];
            let c = &t.controls[i];
            let w = &t.winds[i];
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                i as f64 * t.dt,
                s.pose.x,
                s.pose.y,
                s.pose.psi,
                s.vel.u,
                s.vel.vm,
                s.vel.r,
                c.n,
                c.delta,
                w.speed,
                w.direction
            );
            if let Some(acc) = &t.accels {
                let a = &acc[i];
                let _ = write!(out, ",{},{},{}", a.du, a.dvm, a.dr);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    std::fs::write(path, write_dataset_string(ds))?;
    Ok(())
}

struct TrajMeta {
    label: ManeuverLabel,
    dt: f64,
    samples: usize,
    accels: bool,
}

fn parse_meta(line: &str, path: &str, lineno: usize) -> Result<TrajMeta> {
    let rest = line
        .strip_prefix("# trajectory")
        .ok_or_else(|| Error::MalformedFile {
            path: path.into(),
            line: lineno,
            what: format!("expected '# trajectory ...', got '{line}'"),
        })?;
    let (mut label, mut dt, mut samples, mut accels) = (None, None, None, None);
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::MalformedFile {
            path: path.into(),
            line: lineno,
            what: format!("bad metadata token '{tok}'"),
        })?;
        match k {
            "label" => {
                let ch = v.chars().next().unwrap_or('?');
                label = Some(ManeuverLabel::from_letter(ch).ok_or_else(|| {
                    Error::MalformedFile {
                        path: path.into(),
                        line: lineno,
                        what: format!("unknown label '{v}'"),
                    }
                })?);
            }
            "dt" => {
                let d: f64 = v.parse().map_err(|_| Error::MalformedFile {
                    path: path.into(),
                    line: lineno,
                    what: format!("bad dt '{v}'"),
                })?;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::MalformedFile {
                        path: path.into(),
                        line: lineno,
                        what: format!("dt {d} must be positive"),
                    });
                }
                dt = Some(d);
            }
            "samples" => {
                samples = Some(v.parse().map_err(|_| Error::MalformedFile {
                    path: path.into(),
                    line: lineno,
                    what: format!("bad sample count '{v}'"),
                })?);
            }
            "accels" => {
                accels = Some(match v {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(Error::MalformedFile {
                            path: path.into(),
                            line: lineno,
                            what: format!("bad accels flag '{v}'"),
                        })
                    }
                });
            }
            other => {
                return Err(Error::UnknownKey {
                    path: path.into(),
                    line: lineno,
                    key: other.into(),
                })
            }
        }
    }
    match (label, dt, samples, accels) {
        (Some(label), Some(dt), Some(samples), Some(accels)) => Ok(TrajMeta {
            label,
            dt,
            samples,
            accels,
        }),
        _ => Err(Error::MalformedFile {
            path: path.into(),
            line: lineno,
            what: "trajectory metadata needs label, dt, samples and accels".into(),
        }),
    }
}

pub fn read_dataset_str(text: &str, path: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().peekable();

    let (vline, version_line) = lines.next().ok_or_else(|| Error::MalformedFile {
        path: path.into(),
        line: 1,
        what: "empty file".into(),
    })?;
    let version = version_line
        .strip_prefix("# shipsid-dataset version=")
        .ok_or_else(|| Error::SchemaVersion {
            path: path.into(),
            got: "missing".into(),
            expected: DATASET_VERSION,
        })?;
    let version: u32 = version.trim().parse().map_err(|_| Error::MalformedFile {
        path: path.into(),
        line: vline + 1,
        what: format!("bad version '{version}'"),
    })?;
    if version != DATASET_VERSION {
        return Err(Error::SchemaVersion {
            path: path.into(),
            got: version.to_string(),
            expected: DATASET_VERSION,
        });
    }

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut dataset_dt: Option<f64> = None;
    while let Some((lineno, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let meta = parse_meta(line, path, lineno + 1)?;
        let (hline, header) = lines.next().ok_or_else(|| Error::MalformedFile {
            path: path.into(),
            line: lineno + 2,
            what: "missing column header (truncated file?)".into(),
        })?;
        let expected_header = if meta.accels { HEADER_ACCEL } else { HEADER_BASE };
        if header != expected_header {
            return Err(Error::MalformedFile {
                path: path.into(),
                line: hline + 1,
                what: format!("header '{header}', expected '{expected_header}'"),
            });
        }
        let ncols = if meta.accels { 14 } else { 11 };

        let mut states = Vec::with_capacity(meta.samples);
        let mut controls = Vec::with_capacity(meta.samples);
        let mut winds = Vec::with_capacity(meta.samples);
        let mut accels = if meta.accels {
            Some(Vec::with_capacity(meta.samples))
        } else {
            None
        };
        for row in 0..meta.samples {
            let (rline, raw) = lines.next().ok_or_else(|| Error::MalformedFile {
                path: path.into(),
                line: hline + 2 + row,
                what: format!(
                    "trajectory declared {} samples but the file ends after {row}",
                    meta.samples
                ),
            })?;
            let mut vals = [0.0f64; 14];
            let mut count = 0;
            for (ci, tok) in raw.split(',').enumerate() {
                if ci >= ncols {
                    count = ci + 1;
                    break;
                }
                let v: f64 = tok.parse().map_err(|_| Error::MalformedFile {
                    path: path.into(),
                    line: rline + 1,
                    what: format!("bad number '{tok}' in column '{}'", COLUMNS[ci]),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedFile {
                        path: path.into(),
                        line: rline + 1,
                        what: format!(
                            "non-finite value in column '{}' (row {row} of this trajectory)",
                            COLUMNS[ci]
                        ),
                    });
                }
                vals[ci] = v;
                count = ci + 1;
            }
            if count != ncols {
                return Err(Error::MalformedFile {
                    path: path.into(),
                    line: rline + 1,
                    what: format!("{count} columns, expected {ncols}"),
                });
            }
            states.push(StateVector {
                pose: Pose {
                    x: vals[1],
                    y: vals[2],
                    psi: vals[3],
                },
                vel: Velocity {
                    u: vals[4],
                    vm: vals[5],
                    r: vals[6],
                },
            });
            controls.push(Control {
                n: vals[7],
                delta: vals[8],
            });
            winds.push(WindObs {
                speed: vals[9],
                direction: vals[10],
            });
            if let Some(acc) = accels.as_mut() {
                acc.push(Accel {
                    du: vals[11],
                    dvm: vals[12],
                    dr: vals[13],
                });
            }
        }
        if let Some(d) = dataset_dt {
            if (d - meta.dt).abs() > 1e-12 {
                return Err(Error::MalformedFile {
                    path: path.into(),
                    line: lineno + 1,
                    what: format!("trajectory dt {} differs from dataset dt {d}", meta.dt),
                });
            }
        } else {
            dataset_dt = Some(meta.dt);
        }
        trajectories.push(Trajectory {
            dt: meta.dt,
            label: meta.label,
            states,
            controls,
            winds,
            accels,
        });
    }
    let dt = dataset_dt.ok_or_else(|| Error::MalformedFile {
        path: path.into(),
        line: 1,
        what: "dataset contains no trajectories".into(),
    })?;
    Ok(Dataset { dt, trajectories })
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    read_dataset_str(&text, &path.display().to_string())
}
