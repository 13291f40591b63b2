use crate::calibration::HysteresisMap;
use crate::error::{Error, Result};
use crate::scan::{correct_dead_time, CountSource};

/// Brillouin spectrum of one range bin: counts against calibrated passband
/// position, ascending in frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSpectrum {
    pub bin_index: usize,
    pub range_m: f64,
    pub frequencies: Vec<f64>,
    /// Dead-time corrected counts, background not yet removed.
    pub counts: Vec<f64>,
    /// Background level per point, counts.
    pub background: f64,
    /// The bin lies past the fiber end and holds only noise.
    pub noise_only: bool,
    /// At least one cell was at or beyond detector saturation.
    pub saturated: bool,
}

impl BinSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Background-subtracted counts.
    pub fn signal(&self) -> Vec<f64> {
        self.counts.iter().map(|c| c - self.background).collect()
    }
}

/// Count in a cell with the detector dead time undone. `None` when the
/// observed rate is at saturation.
pub fn corrected_count<H: CountSource>(hist: &H, step: usize, bin: usize) -> Option<f64> {
    let meta = hist.meta();
    let raw = hist.count(step, bin);
    match meta.dead_time_ns {
        None => Some(raw),
        Some(tau_ns) => {
            let exposure = meta.pulses_per_step() * meta.bin_width_ns * 1e-9;
            correct_dead_time(raw / exposure, tau_ns * 1e-9).map(|r| r * exposure)
        }
    }
}

/// Mean count per step over the dark bins past the fiber end, or over
/// `region` when given.
pub fn estimate_background<H: CountSource>(hist: &H, region: Option<std::ops::Range<usize>>) -> Result<Vec<f64>> {
    let meta = hist.meta();
    let dark = region.unwrap_or_else(|| meta.dark_bins());
    let dark = dark.start.min(meta.n_bins)..dark.end.min(meta.n_bins);
    if dark.is_empty() {
        return Err(Error::NoDarkRegion);
    }
    let n = dark.len() as f64;
    Ok((0..meta.n_steps())
        .map(|step| {
            dark.clone()
                .map(|bin| corrected_count(hist, step, bin).unwrap_or_else(|| hist.count(step, bin)))
                .sum::<f64>()
                / n
        })
        .collect())
}

/// Pairs each scan step's counts in `bin` with the passband position given by
/// the calibration of the schedule's branch.
pub fn assemble_spectrum<H: CountSource>(
    hist: &H,
    map: &HysteresisMap,
    bin: usize,
    background: f64,
) -> Result<BinSpectrum> {
    let meta = hist.meta();
    if bin >= meta.n_bins {
        return Err(Error::OutOfRange { bin });
    }
    let frequencies = meta.schedule.frequencies(map)?;
    let mut saturated = false;
    let mut points: Vec<(f64, f64)> = frequencies
        .into_iter()
        .enumerate()
        .map(|(step, f)| {
            let c = corrected_count(hist, step, bin).unwrap_or_else(|| {
                saturated = true;
                hist.count(step, bin)
            });
            (f, c)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(BinSpectrum {
        bin_index: bin,
        range_m: meta.bin_range(bin),
        frequencies: points.iter().map(|p| p.0).collect(),
        counts: points.iter().map(|p| p.1).collect(),
        background,
        noise_only: meta.is_past_fiber(bin),
        saturated,
    })
}
