//! Interferometer scan calibration.
//!
//! The PZT that strains the interferometer cavity responds with hysteresis,
//! so the voltage→frequency relation differs between the rising and the
//! falling half of the drive cycle. Each branch is calibrated separately:
//! transmission peaks in a voltage sweep are located, numbered by
//! interference order, placed one free spectral range apart and fitted with a
//! cubic. A scan must draw its frequencies from a single branch.
//!
//! Calibration only fixes frequency *differences*; the absolute anchor of a
//! scan comes from the schedule's start frequency.

mod map;
mod peaks;
mod poly;
mod pzt;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use map::{calibrate_branch, BranchMap, HysteresisMap};
pub use peaks::{assign_orders, find_peaks, Peak, TaggedPeak, DEFAULT_MIN_PROMINENCE};
pub use poly::{fit_branch, BranchFit, Cubic};
pub use pzt::{simulate_calibration_trace, PztModel, TraceNoise};

/// Half of the PZT drive cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Increasing voltage.
    Up,
    /// Decreasing voltage.
    Down,
}

impl Branch {
    /// +1 for the up branch, -1 for the down branch.
    pub fn direction(self) -> f64 {
        match self {
            Branch::Up => 1.0,
            Branch::Down => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Up => "up",
            Branch::Down => "down",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Branch::Up),
            "down" => Ok(Branch::Down),
            other => Err(Error::Parse(format!("unknown branch `{other}` (expected up|down)"))),
        }
    }
}

/// Interferometer transmission recorded during one half of the PZT cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTrace {
    pub branch: Branch,
    /// (voltage V, transmitted power a.u.) in acquisition order.
    pub samples: Vec<(f64, f64)>,
}

impl CalibrationTrace {
    pub fn new(branch: Branch, samples: Vec<(f64, f64)>) -> Result<Self> {
        let trace = Self { branch, samples };
        trace.validate()?;
        Ok(trace)
    }

    /// Voltages must move strictly in the branch direction.
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 3 {
            return Err(Error::validation("trace", "needs at least 3 samples"));
        }
        let dir = self.branch.direction();
        for pair in self.samples.windows(2) {
            if !((pair[1].0 - pair[0].0) * dir > 0.0) {
                return Err(Error::validation(
                    "trace",
                    format!("voltages are not strictly monotone for the {} branch", self.branch),
                ));
            }
        }
        if self.samples.iter().any(|s| !s.0.is_finite() || !s.1.is_finite()) {
            return Err(Error::validation("trace", "non-finite sample"));
        }
        Ok(())
    }
}
