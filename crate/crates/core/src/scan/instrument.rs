use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Brillouin sideband the Bragg grating passes. Labels only: the
/// spectrum analysis is identical for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sideband {
    #[default]
    Stokes,
    AntiStokes,
}

impl Sideband {
    pub fn as_str(self) -> &'static str {
        match self {
            Sideband::Stokes => "stokes",
            Sideband::AntiStokes => "anti_stokes",
        }
    }
}

/// Pulse, detector and link-budget parameters of the instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentConfig {
    pub pulse_duration_ns: f64,
    pub peak_power_w: f64,
    pub rep_rate_khz: f64,
    pub group_velocity_m_per_s: f64,
    /// End-to-end photon detection efficiency of the up-conversion detector.
    pub detector_efficiency: f64,
    /// Dark and background counts per second.
    pub noise_rate_cps: f64,
    pub dead_time_ns: f64,
    pub dead_time_enabled: bool,
    pub fbg_suppression_db: f64,
    /// Rayleigh backscatter power relative to Brillouin.
    pub rayleigh_to_brillouin: f64,
    pub bin_width_ns: f64,
    /// Converts pulse energy to detected photon rate per unit backscatter
    /// amplitude, 1/(J s). When absent it is derived from
    /// `target_peak_rate_cps`.
    pub capture_coefficient: Option<f64>,
    /// Instantaneous detected rate at z = 0 with the interferometer on the
    /// Brillouin peak, counts/s. Non-physical link-budget plumbing.
    pub target_peak_rate_cps: f64,
    pub sideband: Sideband,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            pulse_duration_ns: 300.0,
            peak_power_w: 0.1,
            rep_rate_khz: 8.0,
            group_velocity_m_per_s: 2.0e8,
            detector_efficiency: 0.17,
            noise_rate_cps: 700.0,
            dead_time_ns: 23.0,
            dead_time_enabled: true,
            fbg_suppression_db: 35.0,
            rayleigh_to_brillouin: 20.0,
            bin_width_ns: 300.0,
            capture_coefficient: None,
            target_peak_rate_cps: 1e5,
            sideband: Sideband::Stokes,
        }
    }
}

impl InstrumentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("instrument.pulse_duration_ns", self.pulse_duration_ns),
            ("instrument.peak_power_w", self.peak_power_w),
            ("instrument.rep_rate_khz", self.rep_rate_khz),
            ("instrument.group_velocity_m_per_s", self.group_velocity_m_per_s),
            ("instrument.detector_efficiency", self.detector_efficiency),
            ("instrument.dead_time_ns", self.dead_time_ns),
            ("instrument.bin_width_ns", self.bin_width_ns),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(name, "must be > 0"));
            }
        }
        let non_negative = [
            ("instrument.noise_rate_cps", self.noise_rate_cps),
            ("instrument.fbg_suppression_db", self.fbg_suppression_db),
            ("instrument.rayleigh_to_brillouin", self.rayleigh_to_brillouin),
            ("instrument.target_peak_rate_cps", self.target_peak_rate_cps),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::validation(name, "must be >= 0"));
            }
        }
        if self.detector_efficiency > 1.0 {
            return Err(Error::validation("instrument.detector_efficiency", "must be <= 1"));
        }
        if let Some(c) = self.capture_coefficient {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::validation("instrument.capture_coefficient", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn rep_period_s(&self) -> f64 {
        1.0 / (self.rep_rate_khz * 1e3)
    }

    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_ns * 1e-9
    }

    pub fn pulse_energy_j(&self) -> f64 {
        self.peak_power_w * self.pulse_duration_ns * 1e-9
    }

    pub fn dead_time_s(&self) -> Option<f64> {
        self.dead_time_enabled.then_some(self.dead_time_ns * 1e-9)
    }

    /// Multiscaler bins covering one repetition period.
    pub fn n_bins(&self) -> usize {
        (self.rep_period_s() / self.bin_width_s() - 1e-9).ceil() as usize
    }

    /// Longest fiber whose backscatter returns before the next pulse.
    pub fn unambiguous_range_m(&self) -> f64 {
        super::unambiguous_range(self.rep_rate_khz, self.group_velocity_m_per_s)
    }

    /// Rayleigh leakage through the Bragg grating relative to the Brillouin
    /// amplitude at equal interferometer transmission.
    pub fn rayleigh_leak_weight(&self) -> f64 {
        self.rayleigh_to_brillouin * 10f64.powf(-self.fbg_suppression_db / 10.0)
    }

    /// Capture coefficient, derived from the target peak rate when not set.
    /// `insertion_factor` is the interferometer's linear transmission.
    pub fn capture(&self, insertion_factor: f64) -> f64 {
        self.capture_coefficient.unwrap_or_else(|| {
            self.target_peak_rate_cps / (self.pulse_energy_j() * self.detector_efficiency * insertion_factor)
        })
    }

    /// Checks that the fiber fits inside the unambiguous range.
    pub fn check_fiber_length(&self, length_m: f64) -> Result<()> {
        let round_trip = 2.0 * length_m / self.group_velocity_m_per_s;
        if !(self.rep_period_s() > round_trip) {
            return Err(Error::validation(
                "instrument.rep_rate_khz",
                format!(
                    "repetition period {:.1} us is shorter than the {:.1} us round trip of the fiber",
                    self.rep_period_s() * 1e6,
                    round_trip * 1e6
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = InstrumentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_bins(), 417);
        assert!((cfg.unambiguous_range_m() - 12500.0).abs() < 1e-9);
        assert!((cfg.rayleigh_leak_weight() - 20.0 * 10f64.powf(-3.5)).abs() < 1e-15);
        assert!((cfg.rayleigh_leak_weight() - 0.00632).abs() < 1e-5);
    }

    #[test]
    fn negative_pulse_is_rejected() {
        let cfg = InstrumentConfig {
            pulse_duration_ns: -300.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Validation { field, .. }) => assert!(field.contains("pulse_duration")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn long_fiber_is_ambiguous() {
        let cfg = InstrumentConfig::default();
        assert!(cfg.check_fiber_length(12100.0).is_ok());
        assert!(cfg.check_fiber_length(12600.0).is_err());
    }
}
