use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::calibration::HysteresisMap;
use crate::error::{Error, Result};
use crate::model::{eval_fpi, eval_transmission, line_from_environment, BrillouinLine, FpiEtalon, SensitivityModel};

use super::{
    apply_dead_time, ExpectedHistogram, FiberProfile, HistogramMeta, InstrumentConfig, ScanHistogram, ScanSchedule,
};

/// Sub-intervals used to integrate the pulse/bin footprint along the fiber.
const FOOTPRINT_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Per-bin signal model: Brillouin line per segment and the
/// attenuation-weighted footprint of each multiscaler bin on the fiber.
#[derive(Debug, Clone)]
pub struct SignalModel {
    lines: Vec<BrillouinLine>,
    etalon: FpiEtalon,
    /// Counts per pulse at unit backscatter and unit transmission, before
    /// the footprint weights.
    scale: f64,
    leak_weight: f64,
    /// Per bin: (segment, weight) pairs; weights include amplitude and
    /// two-way loss and sum to one over a lossless, fully covered bin.
    footprints: Vec<Vec<(usize, f64)>>,
    profile: FiberProfile,
}

impl SignalModel {
    pub fn new(
        profile: &FiberProfile,
        cfg: &InstrumentConfig,
        model: &SensitivityModel,
        etalon: &FpiEtalon,
    ) -> Result<Self> {
        profile.validate()?;
        cfg.validate()?;
        model.validate()?;
        etalon.validate()?;
        cfg.check_fiber_length(profile.total_length())?;

        let lines = profile
            .segments
            .iter()
            .map(|s| line_from_environment(model, &s.environment(), 1.0))
            .collect::<Result<Vec<_>>>()?;

        let insertion = etalon.insertion_factor();
        let scale = cfg.capture(insertion)
            * cfg.pulse_energy_j()
            * cfg.detector_efficiency
            * insertion
            * cfg.bin_width_s();

        let footprints = (0..cfg.n_bins()).map(|bin| footprint(profile, cfg, bin)).collect();
        Ok(Self {
            lines,
            etalon: *etalon,
            scale,
            leak_weight: cfg.rayleigh_leak_weight(),
            footprints,
            profile: profile.clone(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.footprints.len()
    }

    fn spectral(&self, segment: usize, nu_center: f64) -> f64 {
        eval_transmission(&self.lines[segment], &self.etalon, nu_center) + self.leak_weight * eval_fpi(&self.etalon, nu_center)
    }

    /// Expected signal counts per pulse in `bin` with the passband at
    /// `nu_center`; noise excluded.
    pub fn bin_rate(&self, bin: usize, nu_center: f64) -> Result<f64> {
        let fp = self.footprints.get(bin).ok_or(Error::OutOfRange { bin })?;
        if fp.is_empty() {
            return Err(Error::OutOfRange { bin });
        }
        Ok(self.scale * fp.iter().map(|&(seg, w)| w * self.spectral(seg, nu_center)).sum::<f64>())
    }

    /// Unsmeared backscatter contribution of the point `z`, in counts per
    /// pulse for a bin-width's worth of fiber return.
    pub fn point_rate(&self, z: f64, nu_center: f64) -> Result<f64> {
        let seg = self
            .profile
            .segment_index_at(z)
            .ok_or(Error::OutOfRange { bin: usize::MAX })?;
        let amp = self.profile.segments[seg].amplitude;
        let two_way = 10f64.powf(-2.0 * self.profile.loss_db_to(z) / 10.0);
        Ok(self.scale * amp * two_way * self.spectral(seg, nu_center))
    }
}

/// Fiber stretch seen by a bin: light arriving at time t left from
/// z in [v(t - τ)/2, v t/2], so the bin footprint is the trapezoidal overlap
/// of the bin window with the pulse.
fn footprint(profile: &FiberProfile, cfg: &InstrumentConfig, bin: usize) -> Vec<(usize, f64)> {
    let v_ns = cfg.group_velocity_m_per_s * 1e-9;
    let tau = cfg.pulse_duration_ns;
    let t0 = bin as f64 * cfg.bin_width_ns;
    let t1 = t0 + cfg.bin_width_ns;
    let z_lo = v_ns * (t0 - tau) / 2.0;
    let z_hi = v_ns * t1 / 2.0;
    let length = profile.total_length();
    if z_hi <= 0.0 || z_lo >= length {
        return Vec::new();
    }
    let dz = (z_hi - z_lo) / FOOTPRINT_SAMPLES as f64;
    let norm = cfg.bin_width_ns * tau * v_ns / 2.0;
    let mut weights = vec![0.0; profile.segments.len()];
    for j in 0..FOOTPRINT_SAMPLES {
        let z = z_lo + (j as f64 + 0.5) * dz;
        let Some(seg) = profile.segment_index_at(z) else {
            continue;
        };
        let emit = 2.0 * z / v_ns;
        let overlap = (t1.min(emit + tau) - t0.max(emit)).max(0.0);
        let two_way = 10f64.powf(-2.0 * profile.loss_db_to(z) / 10.0);
        weights[seg] += overlap * dz / norm * profile.segments[seg].amplitude * two_way;
    }
    weights
        .into_iter()
        .enumerate()
        .filter(|&(_, w)| w > 0.0)
        .collect()
}

/// Expected detected signal counts per pulse in `bin` with the interferometer
/// passband at `nu_center` MHz.
pub fn expected_rate(
    profile: &FiberProfile,
    cfg: &InstrumentConfig,
    model: &SensitivityModel,
    etalon: &FpiEtalon,
    nu_center: f64,
    bin: usize,
) -> Result<f64> {
    SignalModel::new(profile, cfg, model, etalon)?.bin_rate(bin, nu_center)
}

struct CellMeans {
    meta: HistogramMeta,
    mean: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn cell_means(
    profile: &FiberProfile,
    cfg: &InstrumentConfig,
    model: &SensitivityModel,
    etalon: &FpiEtalon,
    schedule: &ScanSchedule,
    truth: &HysteresisMap,
    seed: u64,
    execution: Execution,
) -> Result<CellMeans> {
    schedule.validate()?;
    let signal = SignalModel::new(profile, cfg, model, etalon)?;
    let frequencies = schedule.frequencies(truth)?;
    let meta = HistogramMeta::new(cfg, schedule, profile.total_length(), seed);
    let n_bins = meta.n_bins;
    let pulses = meta.pulses_per_step();
    let bin_s = cfg.bin_width_s();
    let noise_per_pulse = cfg.noise_rate_cps * bin_s;
    let dead_time = cfg.dead_time_s();

    let cell = |idx: usize| -> f64 {
        let (step, bin) = (idx / n_bins, idx % n_bins);
        let signal = signal.bin_rate(bin, frequencies[step]).unwrap_or(0.0);
        let per_pulse = signal + noise_per_pulse;
        let per_pulse = match dead_time {
            Some(tau) => apply_dead_time(per_pulse / bin_s, tau) * bin_s,
            None => per_pulse,
        };
        pulses * per_pulse
    };
    let n_cells = schedule.n_steps * n_bins;
    let mean = match execution {
        Execution::Serial => (0..n_cells).map(cell).collect(),
        Execution::Parallel => (0..n_cells).into_par_iter().map(cell).collect(),
    };
    Ok(CellMeans { meta, mean })
}

/// Noiseless histogram: the Poisson mean of every cell.
pub fn expected_histogram(
    profile: &FiberProfile,
    cfg: &InstrumentConfig,
    model: &SensitivityModel,
    etalon: &FpiEtalon,
    schedule: &ScanSchedule,
    truth: &HysteresisMap,
) -> Result<ExpectedHistogram> {
    let CellMeans { meta, mean } = cell_means(profile, cfg, model, etalon, schedule, truth, 0, Execution::Parallel)?;
    Ok(ExpectedHistogram { meta, mean })
}

/// Photon-counting histogram. `truth` is the actual PZT response that sets
/// the passband position at each scheduled voltage.
pub fn simulate_histogram(
    profile: &FiberProfile,
    cfg: &InstrumentConfig,
    model: &SensitivityModel,
    etalon: &FpiEtalon,
    schedule: &ScanSchedule,
    truth: &HysteresisMap,
    seed: u64,
) -> Result<ScanHistogram> {
    simulate_histogram_with(profile, cfg, model, etalon, schedule, truth, seed, Execution::Parallel)
}

/// As [`simulate_histogram`], choosing serial or parallel execution. Each
/// cell draws from its own ChaCha stream, so both give identical counts.
#[allow(clippy::too_many_arguments)]
pub fn simulate_histogram_with(
    profile: &FiberProfile,
    cfg: &InstrumentConfig,
    model: &SensitivityModel,
    etalon: &FpiEtalon,
    schedule: &ScanSchedule,
    truth: &HysteresisMap,
    seed: u64,
    execution: Execution,
) -> Result<ScanHistogram> {
    let CellMeans { meta, mean } = cell_means(profile, cfg, model, etalon, schedule, truth, seed, execution)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    let draw = |(idx, &mu): (usize, &f64)| -> u64 {
        if !(mu > 0.0) {
            return 0;
        }
        let mut rng = base.clone();
        rng.set_stream(idx as u64);
        let poisson = Poisson::new(mu).expect("finite positive mean");
        poisson.sample(&mut rng) as u64
    };
    let counts = match execution {
        Execution::Serial => mean.iter().enumerate().map(draw).collect(),
        Execution::Parallel => mean.par_iter().enumerate().map(draw).collect(),
    };
    ScanHistogram::new(meta, counts)
}
