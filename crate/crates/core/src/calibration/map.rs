use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{assign_orders, find_peaks, fit_branch, Branch, CalibrationTrace, Cubic, PztModel, TaggedPeak};

/// Calibrated voltage→frequency relation of one PZT branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchMap {
    pub branch: Branch,
    pub poly: Cubic,
    pub v_min: f64,
    pub v_max: f64,
    /// Largest |fitted − assigned| frequency among the calibration peaks, MHz.
    #[serde(default)]
    pub max_residual_mhz: f64,
    #[serde(default)]
    pub peak_voltages: Vec<f64>,
    #[serde(default)]
    pub peak_frequencies_mhz: Vec<f64>,
    #[serde(default)]
    pub residuals_mhz: Vec<f64>,
}

impl BranchMap {
    pub fn contains(&self, v: f64) -> bool {
        // Slack for voltages recovered through a root-finder.
        let slack = 1e-9 * (self.v_max - self.v_min).abs().max(1.0);
        v >= self.v_min - slack && v <= self.v_max + slack
    }

    pub fn voltage_to_frequency(&self, v: f64) -> Result<f64> {
        if !self.contains(v) {
            return Err(Error::OutOfCalibratedRange {
                voltage: v,
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        Ok(self.poly.eval(v))
    }

    /// Frequency span covered by the valid voltage range, ascending.
    pub fn frequency_span(&self) -> (f64, f64) {
        let a = self.poly.eval(self.v_min);
        let b = self.poly.eval(self.v_max);
        (a.min(b), a.max(b))
    }

    /// Inverse lookup by bracketed Newton iteration on the monotone cubic.
    pub fn frequency_to_voltage(&self, f: f64) -> Result<f64> {
        let (f_min, f_max) = self.frequency_span();
        let tol = 1e-9 * (f_max - f_min).max(1.0);
        if f < f_min - tol || f > f_max + tol {
            return Err(Error::FrequencyOutOfRange {
                frequency: f,
                f_min,
                f_max,
            });
        }
        let increasing = self.poly.eval(self.v_max) >= self.poly.eval(self.v_min);
        let (mut lo, mut hi) = (self.v_min, self.v_max);
        let mut v = lo + (hi - lo) * ((f - f_min) / (f_max - f_min)).clamp(0.0, 1.0);
        if !increasing {
            v = hi - (v - lo);
        }
        for _ in 0..200 {
            let g = self.poly.eval(v) - f;
            let below = if increasing { g < 0.0 } else { g > 0.0 };
            if below {
                lo = v;
            } else {
                hi = v;
            }
            let d = self.poly.derivative(v);
            let newton = v - g / d;
            let next = if d != 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - v).abs() <= 1e-13 * v.abs().max(1.0) {
                return Ok(next);
            }
            v = next;
        }
        Ok(v)
    }
}

/// Per-branch voltage→frequency calibration of the interferometer PZT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HysteresisMap {
    pub fsr_mhz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<BranchMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub down: Option<BranchMap>,
}

impl HysteresisMap {
    pub fn new(fsr_mhz: f64) -> Self {
        Self {
            fsr_mhz,
            up: None,
            down: None,
        }
    }

    pub fn with_branch(mut self, map: BranchMap) -> Self {
        match map.branch {
            Branch::Up => self.up = Some(map),
            Branch::Down => self.down = Some(map),
        }
        self
    }

    /// Exact map of a simulated PZT, valid over its full drive range.
    pub fn from_pzt(model: &PztModel, fsr_mhz: f64) -> Self {
        let exact = |branch| BranchMap {
            branch,
            poly: Cubic::from_power_basis(model.coefficients(branch)),
            v_min: model.v_min,
            v_max: model.v_max,
            max_residual_mhz: 0.0,
            peak_voltages: Vec::new(),
            peak_frequencies_mhz: Vec::new(),
            residuals_mhz: Vec::new(),
        };
        Self {
            fsr_mhz,
            up: Some(exact(Branch::Up)),
            down: Some(exact(Branch::Down)),
        }
    }

    /// The single branch a scan may draw its frequencies from.
    pub fn branch(&self, branch: Branch) -> Result<&BranchMap> {
        let found = match branch {
            Branch::Up => self.up.as_ref(),
            Branch::Down => self.down.as_ref(),
        };
        found.ok_or_else(|| Error::BranchMismatch {
            scan: branch,
            available: self.available(),
        })
    }

    fn available(&self) -> String {
        let names: Vec<&str> = [self.up.as_ref(), self.down.as_ref()]
            .into_iter()
            .flatten()
            .map(|b| b.branch.as_str())
            .collect();
        if names.is_empty() {
            "none".to_string()
        } else {
            names.join(",")
        }
    }

    pub fn voltage_to_frequency(&self, v: f64, branch: Branch) -> Result<f64> {
        self.branch(branch)?.voltage_to_frequency(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fsr_mhz > 0.0) {
            return Err(Error::validation("fsr_mhz", "must be > 0"));
        }
        if self.up.is_none() && self.down.is_none() {
            return Err(Error::validation("hysteresis", "no branch present"));
        }
        for map in [self.up.as_ref(), self.down.as_ref()].into_iter().flatten() {
            if !(map.v_max > map.v_min) {
                return Err(Error::validation(
                    format!("{}.v_max", map.branch),
                    "must exceed v_min",
                ));
            }
            if !map.poly.is_strictly_monotone(map.v_min, map.v_max) {
                return Err(Error::NonMonotone {
                    v_min: map.v_min,
                    v_max: map.v_max,
                });
            }
        }
        Ok(())
    }
}

/// Full single-branch calibration: peak search, order tagging, cubic fit.
pub fn calibrate_branch(trace: &CalibrationTrace, fsr_mhz: f64, min_prominence: f64) -> Result<BranchMap> {
    trace.validate()?;
    let peaks = find_peaks(trace, min_prominence)?;
    let tagged: Vec<TaggedPeak> = assign_orders(&peaks, fsr_mhz)?;
    let fit = fit_branch(&tagged)?;
    Ok(BranchMap {
        branch: trace.branch,
        poly: fit.poly,
        v_min: fit.voltage_range.0,
        v_max: fit.voltage_range.1,
        max_residual_mhz: fit.max_residual,
        peak_voltages: tagged.iter().map(|t| t.voltage).collect(),
        peak_frequencies_mhz: tagged.iter().map(|t| t.frequency).collect(),
        residuals_mhz: fit.residuals,
    })
}
