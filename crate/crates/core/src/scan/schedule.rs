use serde::{Deserialize, Serialize};

use crate::calibration::{Branch, HysteresisMap};
use crate::error::{Error, Result};

/// User-facing description of a frequency scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub n_steps: usize,
    pub freq_step_mhz: f64,
    pub dwell_s: f64,
    pub branch: Branch,
    /// PZT voltage of the first step.
    pub start_voltage: f64,
    /// Absolute interferometer passband position at the first step, in the
    /// Brillouin-shift frame, MHz. Anchors the relative calibration.
    /// Defaults to centring the scan window on the reference shift.
    pub start_frequency_mhz: Option<f64>,
    /// Explicit voltages, overriding the planned ones.
    pub voltages: Option<Vec<f64>>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            n_steps: 40,
            freq_step_mhz: 15.0,
            dwell_s: 1.0,
            branch: Branch::Up,
            start_voltage: 20.0,
            start_frequency_mhz: None,
            voltages: None,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 3 {
            return Err(Error::validation("schedule.n_steps", "must be >= 3"));
        }
        if !(self.freq_step_mhz > 0.0) {
            return Err(Error::validation("schedule.freq_step_mhz", "must be > 0"));
        }
        if !(self.dwell_s > 0.0) {
            return Err(Error::validation("schedule.dwell_s", "must be > 0"));
        }
        if let Some(v) = &self.voltages {
            if v.len() != self.n_steps {
                return Err(Error::validation("schedule.voltages", "length must equal n_steps"));
            }
            check_monotone(v, self.branch)?;
        }
        Ok(())
    }

    /// Start frequency that centres the scan on `nu_center` for the branch's
    /// sweep direction.
    pub fn centred_start(&self, nu_center: f64) -> f64 {
        nu_center - self.branch.direction() * 0.5 * (self.n_steps - 1) as f64 * self.freq_step_mhz
    }
}

fn check_monotone(voltages: &[f64], branch: Branch) -> Result<()> {
    let dir = branch.direction();
    if voltages.windows(2).all(|w| (w[1] - w[0]) * dir > 0.0) {
        Ok(())
    } else {
        Err(Error::validation(
            "schedule.voltages",
            format!("must be strictly monotone along the {branch} branch"),
        ))
    }
}

/// A planned scan: one PZT voltage per step on a single branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSchedule {
    pub n_steps: usize,
    pub freq_step_mhz: f64,
    pub dwell_s: f64,
    pub branch: Branch,
    pub start_frequency_mhz: f64,
    pub voltages: Vec<f64>,
}

impl ScanSchedule {
    /// Picks voltages realising equal frequency steps according to `map`.
    /// Up-branch scans climb in frequency, down-branch scans descend.
    pub fn plan(cfg: &ScheduleConfig, map: &HysteresisMap, start_frequency_mhz: f64) -> Result<Self> {
        cfg.validate()?;
        let branch_map = map.branch(cfg.branch)?;
        let voltages = match &cfg.voltages {
            Some(v) => v.clone(),
            None => {
                let f0 = branch_map.voltage_to_frequency(cfg.start_voltage)?;
                let dir = cfg.branch.direction();
                (0..cfg.n_steps)
                    .map(|k| branch_map.frequency_to_voltage(f0 + dir * k as f64 * cfg.freq_step_mhz))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let schedule = Self {
            n_steps: cfg.n_steps,
            freq_step_mhz: cfg.freq_step_mhz,
            dwell_s: cfg.dwell_s,
            branch: cfg.branch,
            start_frequency_mhz,
            voltages,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 3 {
            return Err(Error::validation("schedule.n_steps", "must be >= 3"));
        }
        if self.voltages.len() != self.n_steps {
            return Err(Error::validation("schedule.voltages", "length must equal n_steps"));
        }
        if !(self.dwell_s > 0.0) {
            return Err(Error::validation("schedule.dwell_s", "must be > 0"));
        }
        check_monotone(&self.voltages, self.branch)
    }

    /// Intended passband positions, MHz.
    pub fn nominal_frequencies(&self) -> Vec<f64> {
        let dir = self.branch.direction();
        (0..self.n_steps)
            .map(|k| self.start_frequency_mhz + dir * k as f64 * self.freq_step_mhz)
            .collect()
    }

    /// Passband positions according to `map`, anchored at the start
    /// frequency. Fails if the map lacks this schedule's branch.
    pub fn frequencies(&self, map: &HysteresisMap) -> Result<Vec<f64>> {
        let branch_map = map.branch(self.branch)?;
        let f0 = branch_map.voltage_to_frequency(self.voltages[0])?;
        self.voltages
            .iter()
            .map(|&v| Ok(self.start_frequency_mhz + branch_map.voltage_to_frequency(v)? - f0))
            .collect()
    }

    pub fn pulses_per_step(&self, rep_rate_khz: f64) -> f64 {
        self.dwell_s * rep_rate_khz * 1e3
    }
}
