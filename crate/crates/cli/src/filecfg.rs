//! Plain-text `key = value` configuration files: the dataset recipe grammar
//! and the training-config grammar. `#` starts a comment; unknown keys are
//! rejected with their line number.

use std::path::Path;

use shipsid_core::datagen::{
    recipe_tzb, recipe_tzrb, recipe_tzrb_plus, NoiseSpec, Recipe, WindScenario,
};
use shipsid_core::error::{Error, Result};
use shipsid_core::netmodel::RANGE_INPUT_SCALE;
use shipsid_core::training::TrainConfig;

fn parse_pairs(text: &str, path: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::MalformedFile {
            path: path.into(),
            line: lineno + 1,
            what: format!("expected 'key = value', got '{raw}'"),
        })?;
        out.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn bad(path: &str, line: usize, what: String) -> Error {
    Error::MalformedFile {
        path: path.into(),
        line,
        what,
    }
}

fn parse_f64(path: &str, line: usize, v: &str) -> Result<f64> {
    v.parse().map_err(|_| bad(path, line, format!("bad number '{v}'")))
}

fn parse_usize(path: &str, line: usize, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(path, line, format!("bad integer '{v}'")))
}

fn parse_bool(path: &str, line: usize, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(bad(path, line, format!("bad boolean '{v}'"))),
    }
}

/// A parsed dataset recipe file.
#[derive(Debug, Clone)]
pub struct RecipeFile {
    pub recipe: Recipe,
    pub dt: f64,
    pub wind: WindScenario,
    pub noise: NoiseSpec,
    pub mix: String,
    pub total_seconds: f64,
    /// Optional pond half-extent [m]; trajectories are truncated where
    /// they leave the square.
    pub pond_half_extent: Option<f64>,
}

/// Recipe grammar:
///
/// ```text
/// version = 1
/// mix = tzrb              # tzb | tzrb | tzrb+
/// total_seconds = 600
/// dt = 0.1                # optional, default 0.1
/// wind = breeze           # calm | constant | breeze, default breeze
/// wind_speed = 0.8        # [m/s]
/// wind_direction_deg = 45
/// noise_pos_sigma = 0.0   # [m]; > 0 switches on the GNSS noise chain
/// noise_r_sigma = 0.0     # [1/s]
/// accel_from_differencing = false
/// pond_half_extent = 50   # [m]; optional, truncates escaping runs
/// ```
pub fn parse_recipe(text: &str, path: &str) -> Result<RecipeFile> {
    let mut version = None;
    let mut mix = "tzrb".to_string();
    let mut total = 600.0;
    let mut dt = 0.1;
    let mut wind_kind = "breeze".to_string();
    let mut wind_speed = 0.8;
    let mut wind_dir = 45.0;
    let mut pos_sigma = 0.0;
    let mut r_sigma = 0.0;
    let mut accel_diff = false;
    let mut pond: Option<f64> = None;
    for (line, key, value) in parse_pairs(text, path)? {
        match key.as_str() {
            "version" => version = Some(parse_usize(path, line, &value)?),
            "mix" => mix = value,
            "total_seconds" => total = parse_f64(path, line, &value)?,
            "dt" => dt = parse_f64(path, line, &value)?,
            "wind" => wind_kind = value,
            "wind_speed" => wind_speed = parse_f64(path, line, &value)?,
            "wind_direction_deg" => wind_dir = parse_f64(path, line, &value)?,
            "noise_pos_sigma" => pos_sigma = parse_f64(path, line, &value)?,
            "noise_r_sigma" => r_sigma = parse_f64(path, line, &value)?,
            "accel_from_differencing" => accel_diff = parse_bool(path, line, &value)?,
            "pond_half_extent" => pond = Some(parse_f64(path, line, &value)?),
            other => {
                return Err(Error::UnknownKey {
                    path: path.into(),
                    line,
                    key: other.into(),
                })
            }
        }
    }
    match version {
        Some(1) => {}
        Some(v) => {
            return Err(Error::SchemaVersion {
                path: path.into(),
                got: v.to_string(),
                expected: 1,
            })
        }
        None => {
            return Err(Error::SchemaVersion {
                path: path.into(),
                got: "missing".into(),
                expected: 1,
            })
        }
    }
    if !(total > 0.0) || !(dt > 0.0) {
        return Err(bad(path, 1, format!("total_seconds {total} and dt {dt} must be positive")));
    }
    let recipe = match mix.as_str() {
        "tzb" => recipe_tzb(total),
        "tzrb" => recipe_tzrb(total),
        "tzrb+" => recipe_tzrb_plus(total),
        other => return Err(bad(path, 1, format!("unknown mix '{other}' (tzb | tzrb | tzrb+)"))),
    };
    let dir = wind_dir.to_radians();
    let wind = match wind_kind.as_str() {
        "calm" => WindScenario::Calm,
        "constant" => WindScenario::Constant {
            speed: wind_speed,
            direction: dir,
        },
        "breeze" => WindScenario::breeze(wind_speed, dir),
        other => return Err(bad(path, 1, format!("unknown wind '{other}' (calm | constant | breeze)"))),
    };
    Ok(RecipeFile {
        recipe,
        dt,
        wind,
        noise: NoiseSpec {
            pos_sigma,
            r_sigma,
            accel_from_differencing: accel_diff,
        },
        mix,
        total_seconds: total,
        pond_half_extent: pond,
    })
}

pub fn read_recipe(path: &Path) -> Result<RecipeFile> {
    let text = std::fs::read_to_string(path)?;
    parse_recipe(&text, &path.display().to_string())
}

/// Training-config grammar, mirroring the training hyperparameters:
///
/// ```text
/// hidden = 200
/// batch_size = 512
/// learning_rate = 2e-5    # omit to use the loss kind's default
/// predict_steps = 60
/// memory_steps = 10
/// max_epochs = 2000
/// patience = 100
/// seeds = 1,2,3,4,5
/// window_stride = 1
/// val_fraction = 0.2
/// split_seed = 42
/// jobs = 1
/// input_scale = raw       # raw | range | seven comma-separated factors
/// ```
pub fn parse_train_config(text: &str, path: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (line, key, value) in parse_pairs(text, path)? {
        match key.as_str() {
            "hidden" => cfg.hidden = parse_usize(path, line, &value)?,
            "batch_size" => cfg.batch_size = parse_usize(path, line, &value)?,
            "learning_rate" => cfg.learning_rate = Some(parse_f64(path, line, &value)?),
            "predict_steps" => cfg.predict_steps = parse_usize(path, line, &value)?,
            "memory_steps" => cfg.memory_steps = parse_usize(path, line, &value)?,
            "max_epochs" => cfg.max_epochs = parse_usize(path, line, &value)?,
            "patience" => cfg.patience = parse_usize(path, line, &value)?,
            "seeds" => {
                let seeds: std::result::Result<Vec<u64>, _> =
                    value.split(',').map(|t| t.trim().parse()).collect();
                cfg.seeds = seeds.map_err(|_| bad(path, line, format!("bad seed list '{value}'")))?;
                if cfg.seeds.is_empty() {
                    return Err(bad(path, line, "seed list is empty".into()));
                }
            }
            "window_stride" => cfg.window_stride = parse_usize(path, line, &value)?,
            "val_fraction" => cfg.val_fraction = parse_f64(path, line, &value)?,
            "split_seed" => {
                cfg.split_seed = value
                    .parse()
                    .map_err(|_| bad(path, line, format!("bad split seed '{value}'")))?
            }
            "jobs" => cfg.jobs = parse_usize(path, line, &value)?,
            "input_scale" => match value.as_str() {
                "raw" => cfg.input_scale = [1.0; 7],
                "range" => cfg.input_scale = RANGE_INPUT_SCALE,
                list => {
                    let vals: std::result::Result<Vec<f64>, _> =
                        list.split(',').map(|t| t.trim().parse()).collect();
                    let vals = vals
                        .map_err(|_| bad(path, line, format!("bad input scale '{list}'")))?;
                    if vals.len() != 7 {
                        return Err(bad(
                            path,
                            line,
                            format!("input_scale needs 7 values, got {}", vals.len()),
                        ));
                    }
                    cfg.input_scale.copy_from_slice(&vals);
                }
            },
            other => {
                return Err(Error::UnknownKey {
                    path: path.into(),
                    line,
                    key: other.into(),
                })
            }
        }
    }
    Ok(cfg)
}

pub fn read_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_train_config(&text, &path.display().to_string())
}
