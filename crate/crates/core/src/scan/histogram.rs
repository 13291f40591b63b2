use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{InstrumentConfig, ScanSchedule, Sideband};

/// Acquisition settings a histogram was recorded with. Everything the
/// inverse pipeline needs besides the calibration and the sensitivity model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub schedule: ScanSchedule,
    pub n_bins: usize,
    pub bin_width_ns: f64,
    pub pulse_duration_ns: f64,
    pub group_velocity_m_per_s: f64,
    pub rep_rate_khz: f64,
    /// Detector dead time when censoring was simulated.
    pub dead_time_ns: Option<f64>,
    pub fiber_length_m: f64,
    pub sideband: Sideband,
    pub seed: u64,
    pub config_hash: String,
}

impl HistogramMeta {
    pub fn new(cfg: &InstrumentConfig, schedule: &ScanSchedule, fiber_length_m: f64, seed: u64) -> Self {
        Self {
            schedule: schedule.clone(),
            n_bins: cfg.n_bins(),
            bin_width_ns: cfg.bin_width_ns,
            pulse_duration_ns: cfg.pulse_duration_ns,
            group_velocity_m_per_s: cfg.group_velocity_m_per_s,
            rep_rate_khz: cfg.rep_rate_khz,
            dead_time_ns: cfg.dead_time_enabled.then_some(cfg.dead_time_ns),
            fiber_length_m,
            sideband: cfg.sideband,
            seed,
            config_hash: String::new(),
        }
    }

    pub fn n_steps(&self) -> usize {
        self.schedule.n_steps
    }

    pub fn pulses_per_step(&self) -> f64 {
        self.schedule.pulses_per_step(self.rep_rate_khz)
    }

    /// Range assigned to a bin: centroid of the fiber stretch illuminated
    /// while the bin is open (bin centre time minus half a pulse).
    pub fn bin_range(&self, bin: usize) -> f64 {
        let t_ns = (bin as f64 + 0.5) * self.bin_width_ns - 0.5 * self.pulse_duration_ns;
        super::time_to_range(t_ns.max(0.0), self.group_velocity_m_per_s)
    }

    /// True when the bin's range centroid lies past the fiber end.
    pub fn is_past_fiber(&self, bin: usize) -> bool {
        self.bin_range(bin) > self.fiber_length_m
    }

    /// Bins opened only after the last backscatter from the fiber end has
    /// arrived.
    pub fn dark_bins(&self) -> std::ops::Range<usize> {
        let last_light_ns = 2.0 * self.fiber_length_m / self.group_velocity_m_per_s * 1e9 + self.pulse_duration_ns;
        let first = (last_light_ns / self.bin_width_ns - 1e-9).ceil().max(0.0) as usize;
        first.min(self.n_bins)..self.n_bins
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.n_bins == 0 {
            return Err(Error::validation("histogram.n_bins", "must be > 0"));
        }
        let positive = [
            ("histogram.bin_width_ns", self.bin_width_ns),
            ("histogram.pulse_duration_ns", self.pulse_duration_ns),
            ("histogram.group_velocity_m_per_s", self.group_velocity_m_per_s),
            ("histogram.rep_rate_khz", self.rep_rate_khz),
            ("histogram.fiber_length_m", self.fiber_length_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::validation(name, "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Anything that provides counts indexed by (scan step, range bin).
pub trait CountSource: Sync {
    fn meta(&self) -> &HistogramMeta;
    fn count(&self, step: usize, bin: usize) -> f64;
}

/// Multiscaler photon-count histogram, one row per scan step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanHistogram {
    pub meta: HistogramMeta,
    /// Row-major `[n_steps × n_bins]`.
    pub counts: Vec<u64>,
}

impl ScanHistogram {
    pub fn new(meta: HistogramMeta, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != meta.n_steps() * meta.n_bins {
            return Err(Error::validation(
                "histogram.counts",
                format!("expected {} cells, got {}", meta.n_steps() * meta.n_bins, counts.len()),
            ));
        }
        Ok(Self { meta, counts })
    }

    pub fn get(&self, step: usize, bin: usize) -> u64 {
        self.counts[step * self.meta.n_bins + bin]
    }
}

impl CountSource for ScanHistogram {
    fn meta(&self) -> &HistogramMeta {
        &self.meta
    }

    fn count(&self, step: usize, bin: usize) -> f64 {
        self.get(step, bin) as f64
    }
}

/// Mean counts per cell, the noiseless counterpart of [`ScanHistogram`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedHistogram {
    pub meta: HistogramMeta,
    pub mean: Vec<f64>,
}

impl CountSource for ExpectedHistogram {
    fn meta(&self) -> &HistogramMeta {
        &self.meta
    }

    fn count(&self, step: usize, bin: usize) -> f64 {
        self.mean[step * self.meta.n_bins + bin]
    }
}
