//! Forward passes of the two recurrent architectures.
//!
//! Both networks map (body velocity, control, wind vector) frames to body
//! accelerations through three tanh transforms and a linear head. Every
//! tanh layer computes `tanh(W x + b) - tanh(b)`, which pins the output of
//! the whole cascade to zero when all inputs and the memory are zero: a
//! ship with no speed, no actuation and no wind must not accelerate.
//!
//! The full-memory variant threads a hidden vector across all past steps;
//! the finite-memory variant re-unrolls only the most recent `m` frames and
//! forgets everything older. With `m` equal to the sequence length the two
//! coincide.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kinematics::{Accel, Control, Velocity, WindVector};
use crate::mat::Mat;
use crate::rng::Rng;

/// Memory structure of the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Hidden state carries the entire past.
    FullMemory,
    /// Only the last `memory_steps` input frames are consulted.
    FiniteMemory { memory_steps: usize },
}

impl Arch {
    pub fn memory_steps(&self) -> Option<usize> {
        match self {
            Arch::FullMemory => None,
            Arch::FiniteMemory { memory_steps } => Some(*memory_steps),
        }
    }
}

/// One input frame: the channels the network sees at a time step, in the
/// fixed order (u, v_m, r | n, delta | wx, wy).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NetInputFrame {
    pub vel: Velocity,
    pub ctrl: Control,
    pub wind: WindVector,
}

impl NetInputFrame {
    pub fn vel_channels(&self) -> [f64; 3] {
        [self.vel.u, self.vel.vm, self.vel.r]
    }

    pub fn ctrl_channels(&self) -> [f64; 2] {
        [self.ctrl.n, self.ctrl.delta]
    }

    pub fn wind_channels(&self) -> [f64; 2] {
        [self.wind.wx, self.wind.wy]
    }
}

/// Hidden state of the full-memory recurrence; starts at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub z1: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        HiddenState {
            z1: vec![0.0; hidden],
        }
    }
}

/// All weights and biases plus architecture metadata.
///
/// Matrices are stored in application orientation: `w_in_vel` maps the
/// 3-channel velocity into the hidden space, `w_out` maps the last hidden
/// layer to the 3 acceleration channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub arch: Arch,
    pub hidden: usize,
    pub w_in_vel: Mat,  // hidden x 3
    pub w_in_ctrl: Mat, // hidden x 2
    pub w_in_wind: Mat, // hidden x 2
    pub w_rec: Mat,     // hidden x hidden
    pub w_h1: Mat,      // hidden x hidden
    pub w_h2: Mat,      // hidden x hidden
    pub w_out: Mat,     // 3 x hidden
    pub b0: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    /// Optional per-channel input scaling in the order
    /// (u, vm, r, n, delta, wx, wy); all ones means raw physical units.
    /// Scaling is linear through the origin, so the zero-at-origin
    /// property is unaffected.
    pub input_scale: [f64; 7],
}

/// Fixed channel order, recorded in checkpoints as a compatibility guard.
pub const CHANNEL_ORDER: &str = "u,vm,r|n,delta|wx,wy";

/// An input scaling that maps the actuator envelope and typical model-scale
/// speeds roughly onto [-1, 1]; keeps the first tanh out of saturation
/// when commands span the full +-20 rps range.
pub const RANGE_INPUT_SCALE: [f64; 7] = [1.0, 2.0, 2.0, 0.05, 1.6, 0.4, 0.4];

impl NetParams {
    pub fn zeros(arch: Arch, hidden: usize) -> Self {
        NetParams {
            arch,
            hidden,
            w_in_vel: Mat::zeros(hidden, 3),
            w_in_ctrl: Mat::zeros(hidden, 2),
            w_in_wind: Mat::zeros(hidden, 2),
            w_rec: Mat::zeros(hidden, hidden),
            w_h1: Mat::zeros(hidden, hidden),
            w_h2: Mat::zeros(hidden, hidden),
            w_out: Mat::zeros(3, hidden),
            b0: vec![0.0; hidden],
            b1: vec![0.0; hidden],
            b2: vec![0.0; hidden],
            input_scale: [1.0; 7],
        }
    }

    /// Seeded init: weights uniform in +-1/sqrt(fan_in) per matrix, biases
    /// uniform in +-0.1. Small enough to keep every tanh near its linear
    /// region at the start of training.
    pub fn init(arch: Arch, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = NetParams::zeros(arch, hidden);
        for m in [
            &mut p.w_in_vel,
            &mut p.w_in_ctrl,
            &mut p.w_in_wind,
            &mut p.w_rec,
            &mut p.w_h1,
            &mut p.w_h2,
            &mut p.w_out,
        ] {
            let s = 1.0 / (m.cols as f64).sqrt();
            for v in &mut m.data {
                *v = rng.uniform(-s, s);
            }
        }
        for b in [&mut p.b0, &mut p.b1, &mut p.b2] {
            for v in b.iter_mut() {
                *v = rng.uniform(-0.1, 0.1);
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden;
        if h == 0 {
            return Err(Error::InvalidArgument("hidden width must be >= 1".into()));
        }
        if let Arch::FiniteMemory { memory_steps } = self.arch {
            if memory_steps == 0 {
                return Err(Error::InvalidArgument("memory steps must be >= 1".into()));
            }
        }
        let shapes = [
            (&self.w_in_vel, h, 3, "w_in_vel"),
            (&self.w_in_ctrl, h, 2, "w_in_ctrl"),
            (&self.w_in_wind, h, 2, "w_in_wind"),
            (&self.w_rec, h, h, "w_rec"),
            (&self.w_h1, h, h, "w_h1"),
            (&self.w_h2, h, h, "w_h2"),
            (&self.w_out, 3, h, "w_out"),
        ];
        for (m, r, cc, name) in shapes {
            if m.rows != r || m.cols != cc || m.data.len() != r * cc {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: {}x{}, expected {r}x{cc}",
                    m.rows, m.cols
                )));
            }
            if !m.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
            }
        }
        for (b, name) in [(&self.b0, "b0"), (&self.b1, "b1"), (&self.b2, "b2")] {
            if b.len() != h {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: length {}, expected {h}",
                    b.len()
                )));
            }
            if !b.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Visit every parameter tensor as a flat slice, in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 10] {
        [
            ("w_in_vel", &self.w_in_vel.data),
            ("w_in_ctrl", &self.w_in_ctrl.data),
            ("w_in_wind", &self.w_in_wind.data),
            ("w_rec", &self.w_rec.data),
            ("w_h1", &self.w_h1.data),
            ("w_h2", &self.w_h2.data),
            ("w_out", &self.w_out.data),
            ("b0", &self.b0),
            ("b1", &self.b1),
            ("b2", &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        [
            ("w_in_vel", &mut self.w_in_vel.data[..]),
            ("w_in_ctrl", &mut self.w_in_ctrl.data[..]),
            ("w_in_wind", &mut self.w_in_wind.data[..]),
            ("w_rec", &mut self.w_rec.data[..]),
            ("w_h1", &mut self.w_h1.data[..]),
            ("w_h2", &mut self.w_h2.data[..]),
            ("w_out", &mut self.w_out.data[..]),
            ("b0", &mut self.b0[..]),
            ("b1", &mut self.b1[..]),
            ("b2", &mut self.b2[..]),
        ]
    }
}

/// One zero-pinned tanh layer: `tanh(W x + b) - tanh(b)`.
pub fn layer(input: &[f64], w: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    if w.cols != input.len() || w.rows != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "layer: {}x{} applied to input {} with bias {}",
            w.rows,
            w.cols,
            input.len(),
            b.len()
        )));
    }
    let mut out = vec![0.0; w.rows];
    w.matvec(input, &mut out);
    for (o, bi) in out.iter_mut().zip(b) {
        *o = (*o + bi).tanh() - bi.tanh();
    }
    Ok(out)
}

fn first_stage(frame: &NetInputFrame, z_prev: Option<&[f64]>, p: &NetParams) -> Vec<f64> {
    let h = p.hidden;
    let s = &p.input_scale;
    let vel = frame.vel_channels();
    let ctrl = frame.ctrl_channels();
    let wind = frame.wind_channels();
    let vel = [vel[0] * s[0], vel[1] * s[1], vel[2] * s[2]];
    let ctrl = [ctrl[0] * s[3], ctrl[1] * s[4]];
    let wind = [wind[0] * s[5], wind[1] * s[6]];
    let mut pre = vec![0.0; h];
    let mut tmp = vec![0.0; h];
    p.w_in_vel.matvec(&vel, &mut pre);
    p.w_in_ctrl.matvec(&ctrl, &mut tmp);
    for (a, b) in pre.iter_mut().zip(&tmp) {
        *a += b;
    }
    p.w_in_wind.matvec(&wind, &mut tmp);
    for (a, b) in pre.iter_mut().zip(&tmp) {
        *a += b;
    }
    if let Some(z) = z_prev {
        p.w_rec.matvec(z, &mut tmp);
        for (a, b) in pre.iter_mut().zip(&tmp) {
            *a += b;
        }
    }
    for (v, b) in pre.iter_mut().zip(&p.b0) {
        *v = (*v + b).tanh() - b.tanh();
    }
    pre
}

fn head(z1: &[f64], p: &NetParams) -> Result<(Accel, ())> {
    let z2 = layer(z1, &p.w_h1, &p.b1)?;
    let z3 = layer(&z2, &p.w_h2, &p.b2)?;
    let mut out = [0.0; 3];
    p.w_out.matvec(&z3, &mut out);
    Ok((
        Accel {
            du: out[0],
            dvm: out[1],
            dr: out[2],
        },
        (),
    ))
}

/// One step of the full-memory recurrence: consumes the current frame and
/// hidden state, returns the predicted acceleration and the next hidden
/// state.
pub fn step_full(
    frame: &NetInputFrame,
    h: &HiddenState,
    p: &NetParams,
) -> Result<(Accel, HiddenState)> {
    if h.z1.len() != p.hidden {
        return Err(Error::ShapeMismatch(format!(
            "hidden state {} vs width {}",
            h.z1.len(),
            p.hidden
        )));
    }
    let z1 = first_stage(frame, Some(&h.z1), p);
    let (a, ()) = head(&z1, p)?;
    Ok((a, HiddenState { z1 }))
}

/// Finite-memory forward pass: unrolls over exactly `m` frames (oldest
/// first) from a fresh zero memory. The first unrolled step has no
/// recurrent term; the remaining `m - 1` steps do.
pub fn forward_finite(frames: &[NetInputFrame], p: &NetParams) -> Result<Accel> {
    let m = match p.arch {
        Arch::FiniteMemory { memory_steps } => memory_steps,
        Arch::FullMemory => {
            return Err(Error::InvalidArgument(
                "forward_finite called on a full-memory architecture".into(),
            ))
        }
    };
    if frames.len() != m {
        return Err(Error::WrongFrameCount {
            expected: m,
            got: frames.len(),
        });
    }
    let mut z1 = first_stage(&frames[0], None, p);
    for frame in &frames[1..] {
        z1 = first_stage(frame, Some(&z1), p);
    }
    let (a, ()) = head(&z1, p)?;
    Ok(a)
}

const CHECKPOINT_VERSION: u32 = 1;

/// Render parameters as the portable text checkpoint format:
/// a header of `key = value` lines (version, arch, hidden, memory_steps,
/// channel_order) followed by one `tensor <name> <rows> <cols>` block per
/// matrix with one whitespace-separated row per line, closed by `end`.
/// Floats use shortest round-trip formatting, so write/read is bit-exact.
pub fn params_to_string(p: &NetParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {CHECKPOINT_VERSION}");
    let (arch, m) = match p.arch {
        Arch::FullMemory => ("full", 0),
        Arch::FiniteMemory { memory_steps } => ("finite", memory_steps),
    };
    let _ = writeln!(out, "arch = {arch}");
    let _ = writeln!(out, "hidden = {}", p.hidden);
    let _ = writeln!(out, "memory_steps = {m}");
    let _ = writeln!(out, "channel_order = {CHANNEL_ORDER}");
    let mut scale_line = String::from("input_scale =");
    for v in &p.input_scale {
        let _ = write!(scale_line, " {v}");
    }
    out.push_str(&scale_line);
    out.push('\n');
    let mats = [
        ("w_in_vel", &p.w_in_vel),
        ("w_in_ctrl", &p.w_in_ctrl),
        ("w_in_wind", &p.w_in_wind),
        ("w_rec", &p.w_rec),
        ("w_h1", &p.w_h1),
        ("w_h2", &p.w_h2),
        ("w_out", &p.w_out),
    ];
    for (name, m) in mats {
        let _ = writeln!(out, "tensor {name} {} {}", m.rows, m.cols);
        for row in m.data.chunks(m.cols) {
            let mut line = String::new();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{v}");
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    for (name, b) in [("b0", &p.b0), ("b1", &p.b1), ("b2", &p.b2)] {
        let _ = writeln!(out, "tensor {name} {} 1", b.len());
        for v in b {
            let _ = writeln!(out, "{v}");
        }
    }
    out.push_str("end\n");
    out
}

pub fn params_from_str(text: &str, path: &str) -> Result<NetParams> {
    let mut lines = text.lines().enumerate();
    let mut header = std::collections::BTreeMap::new();
    let bad = |line: usize, what: String| Error::MalformedFile {
        path: path.into(),
        line,
        what,
    };

    // Header: key = value until the first tensor block.
    let mut first_tensor: Option<(usize, String)> = None;
    for (lineno, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with("tensor ") {
            first_tensor = Some((lineno, line.to_string()));
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(lineno + 1, format!("expected 'key = value', got '{raw}'")))?;
        header.insert(k.trim().to_string(), (lineno + 1, v.trim().to_string()));
    }

    let (vline, version) = header
        .get("version")
        .ok_or_else(|| Error::SchemaVersion {
            path: path.into(),
            got: "missing".into(),
            expected: CHECKPOINT_VERSION,
        })?
        .clone();
    let version: u32 = version
        .parse()
        .map_err(|_| bad(vline, format!("bad version '{version}'")))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion {
            path: path.into(),
            got: version.to_string(),
            expected: CHECKPOINT_VERSION,
        });
    }
    let get = |key: &str| -> Result<(usize, String)> {
        header
            .get(key)
            .cloned()
            .ok_or_else(|| bad(1, format!("missing header key '{key}'")))
    };
    let (aline, arch_s) = get("arch")?;
    let (hline, hidden_s) = get("hidden")?;
    let (mline, m_s) = get("memory_steps")?;
    let (cline, order) = get("channel_order")?;
    if order != CHANNEL_ORDER {
        return Err(bad(
            cline,
            format!("channel order '{order}', expected '{CHANNEL_ORDER}'"),
        ));
    }
    let hidden: usize = hidden_s
        .parse()
        .map_err(|_| bad(hline, format!("bad hidden width '{hidden_s}'")))?;
    let m: usize = m_s
        .parse()
        .map_err(|_| bad(mline, format!("bad memory steps '{m_s}'")))?;
    let arch = match arch_s.as_str() {
        "full" => Arch::FullMemory,
        "finite" => Arch::FiniteMemory { memory_steps: m },
        other => return Err(bad(aline, format!("unknown arch '{other}'"))),
    };

    let mut p = NetParams::zeros(arch, hidden);
    let (sline, scale_s) = get("input_scale")?;
    let scale_vals: Vec<f64> = scale_s
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad(sline, format!("bad input_scale '{scale_s}'")))?;
    if scale_vals.len() != 7 || !scale_vals.iter().all(|v| v.is_finite() && *v != 0.0) {
        return Err(bad(sline, format!("input_scale needs 7 finite nonzero values, got '{scale_s}'")));
    }
    p.input_scale.copy_from_slice(&scale_vals);
    let mut seen = std::collections::BTreeSet::new();
    let mut tensor_line = first_tensor;
    loop {
        let (lineno, decl) = match tensor_line.take() {
            Some(t) => t,
            None => match lines.next() {
                Some((ln, raw)) if raw.trim() == "end" => {
                    let _ = ln;
                    break;
                }
                Some((ln, raw)) if raw.trim().is_empty() => {
                    tensor_line = None;
                    let _ = ln;
                    continue;
                }
                Some((ln, raw)) if raw.trim().starts_with("tensor ") => {
                    (ln, raw.trim().to_string())
                }
                Some((ln, raw)) => {
                    return Err(bad(ln + 1, format!("expected tensor block or end, got '{raw}'")))
                }
                None => return Err(bad(0, "missing 'end' marker (truncated file?)".into())),
            },
        };
        let parts: Vec<&str> = decl.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad(lineno + 1, format!("bad tensor declaration '{decl}'")));
        }
        let name = parts[1];
        let rows: usize = parts[2]
            .parse()
            .map_err(|_| bad(lineno + 1, format!("bad row count '{}'", parts[2])))?;
        let cols: usize = parts[3]
            .parse()
            .map_err(|_| bad(lineno + 1, format!("bad col count '{}'", parts[3])))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, raw) = lines
                .next()
                .ok_or_else(|| bad(0, format!("truncated tensor '{name}'")))?;
            for tok in raw.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| bad(ln + 1, format!("bad number '{tok}'")))?;
                if !v.is_finite() {
                    return Err(bad(ln + 1, format!("non-finite value in tensor '{name}'")));
                }
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(bad(
                lineno + 1,
                format!(
                    "tensor '{name}': {} values for declared {rows}x{cols}",
                    data.len()
                ),
            ));
        }
        let dest: &mut [f64] = match name {
            "w_in_vel" => &mut p.w_in_vel.data,
            "w_in_ctrl" => &mut p.w_in_ctrl.data,
            "w_in_wind" => &mut p.w_in_wind.data,
            "w_rec" => &mut p.w_rec.data,
            "w_h1" => &mut p.w_h1.data,
            "w_h2" => &mut p.w_h2.data,
            "w_out" => &mut p.w_out.data,
            "b0" => &mut p.b0,
            "b1" => &mut p.b1,
            "b2" => &mut p.b2,
            other => return Err(bad(lineno + 1, format!("unknown tensor '{other}'"))),
        };
        if dest.len() != data.len() {
            return Err(bad(
                lineno + 1,
                format!(
                    "tensor '{name}': {} values, expected {}",
                    data.len(),
                    dest.len()
                ),
            ));
        }
        dest.copy_from_slice(&data);
        seen.insert(name.to_string());
    }
    if seen.len() != 10 {
        return Err(bad(
            0,
            format!("checkpoint has {} of 10 required tensors", seen.len()),
        ));
    }
    p.validate()?;
    Ok(p)
}

pub fn write_params(p: &NetParams, path: &Path) -> Result<()> {
    std::fs::write(path, params_to_string(p))?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<NetParams> {
    let text = std::fs::read_to_string(path)?;
    params_from_str(&text, &path.display().to_string())
}
