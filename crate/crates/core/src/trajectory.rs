//! Uniformly sampled maneuver records and labeled collections of them.

use crate::error::{Error, Result};
use crate::kinematics::{Accel, Control, StateVector, WindObs};

/// Maneuver class labels: turning, zigzag, random, berthing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ManeuverLabel {
    Turning,
    Zigzag,
    Random,
    Berthing,
}

impl ManeuverLabel {
    pub const ALL: [ManeuverLabel; 4] = [
        ManeuverLabel::Turning,
        ManeuverLabel::Zigzag,
        ManeuverLabel::Random,
        ManeuverLabel::Berthing,
    ];

    pub fn letter(&self) -> char {
        match self {
            ManeuverLabel::Turning => 'T',
            ManeuverLabel::Zigzag => 'Z',
            ManeuverLabel::Random => 'R',
            ManeuverLabel::Berthing => 'B',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'T' => Some(ManeuverLabel::Turning),
            'Z' => Some(ManeuverLabel::Zigzag),
            'R' => Some(ManeuverLabel::Random),
            'B' => Some(ManeuverLabel::Berthing),
            _ => None,
        }
    }
}

/// One maneuver sampled at a fixed period: states, controls and wind
/// observations, plus accelerations when the source provides them
/// (simulation ground truth or differentiated measurements).
///
/// All series have equal length; sample `i` is at time `i * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub label: ManeuverLabel,
    pub states: Vec<StateVector>,
    pub controls: Vec<Control>,
    pub winds: Vec<WindObs>,
    pub accels: Option<Vec<Accel>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// Consistency check used by file ingestion and the training front end.
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample period {} must be positive",
                self.dt
            )));
        }
        let n = self.states.len();
        if self.controls.len() != n || self.winds.len() != n {
            return Err(Error::LengthMismatch(format!(
                "states {}, controls {}, winds {}",
                n,
                self.controls.len(),
                self.winds.len()
            )));
        }
        if let Some(acc) = &self.accels {
            if acc.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "states {}, accels {}",
                    n,
                    acc.len()
                )));
            }
        }
        Ok(())
    }
}

/// A labeled set of trajectories sharing one sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(dt: f64) -> Self {
        Dataset {
            dt,
            trajectories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.trajectories.iter().map(|t| t.duration()).sum()
    }

    pub fn duration_by_label(&self, label: ManeuverLabel) -> f64 {
        self.trajectories
            .iter()
            .filter(|t| t.label == label)
            .map(|t| t.duration())
            .sum()
    }

    pub fn has_accels(&self) -> bool {
        self.trajectories.iter().all(|t| t.accels.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.trajectories.iter().enumerate() {
            t.validate()?;
            if (t.dt - self.dt).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "trajectory {i} has dt {} but the dataset uses {}",
                    t.dt, self.dt
                )));
            }
        }
        Ok(())
    }
}
