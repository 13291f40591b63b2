use crate::error::{Error, Result};

use super::CalibrationTrace;

pub const DEFAULT_MIN_PROMINENCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub voltage: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedPeak {
    pub voltage: f64,
    pub order: i64,
    /// Relative frequency, MHz (order 0 at the lowest-voltage peak).
    pub frequency: f64,
}

/// Locates transmission peaks that rise above `min_prominence` times the
/// global maximum, with sub-sample voltage from a parabola through log-power.
///
/// Peaks are returned in ascending voltage whatever the sweep direction.
pub fn find_peaks(trace: &CalibrationTrace, min_prominence: f64) -> Result<Vec<Peak>> {
    let mut samples = trace.samples.clone();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let power: Vec<f64> = samples.iter().map(|s| s.1).collect();

    let global_max = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(global_max > 0.0) {
        return Err(Error::TooFewPeaks { found: 0 });
    }
    let threshold = min_prominence * global_max;

    // A flat trace is entirely above any fractional threshold; require the
    // trace to dip below the threshold somewhere.
    let floor = power.iter().copied().fold(f64::INFINITY, f64::min);
    if floor >= threshold {
        return Err(Error::TooFewPeaks { found: 0 });
    }

    let runs = merge_runs(above_threshold_runs(&power, threshold));
    let peaks: Vec<Peak> = runs
        .into_iter()
        // Runs touching the trace ends are truncated peaks.
        .filter(|&(start, end)| start > 0 && end < power.len())
        .map(|(start, end)| refine(&samples, &power, start, end))
        .collect();

    if peaks.len() < 3 {
        return Err(Error::TooFewPeaks { found: peaks.len() });
    }
    Ok(peaks)
}

/// Half-open index ranges where the power exceeds `threshold`.
fn above_threshold_runs(power: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &p) in power.iter().enumerate() {
        match (p > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, power.len()));
    }
    runs
}

/// Noise near the threshold can chop one peak into several runs. Gaps shorter
/// than half of the smaller neighbouring run are bridged.
fn merge_runs(runs: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        if let Some(last) = merged.last_mut() {
            let gap = run.0 - last.1;
            let shorter = (last.1 - last.0).min(run.1 - run.0);
            if 2 * gap < shorter {
                last.1 = run.1;
                continue;
            }
        }
        merged.push(run);
    }
    merged
}

fn refine(samples: &[(f64, f64)], power: &[f64], start: usize, end: usize) -> Peak {
    let (imax, &pmax) = power[start..end]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, p)| (i + start, p))
        .expect("non-empty run");

    // Sample-to-sample changes near the top are buried in noise for densely
    // sampled traces, so the parabola uses points a quarter of the run apart.
    let stride = ((end - start) / 4).max(1);
    if imax < stride || imax + stride >= power.len() {
        return Peak {
            voltage: samples[imax].0,
            height: pmax,
        };
    }
    let (lo, hi) = (imax - stride, imax + stride);
    let (y0, y1, y2) = (power[lo], pmax, power[hi]);
    if y0 <= 0.0 || y2 <= 0.0 {
        return Peak {
            voltage: samples[imax].0,
            height: pmax,
        };
    }
    let (l0, l1, l2) = (y0.ln(), y1.ln(), y2.ln());
    let denom = l0 - 2.0 * l1 + l2;
    if !(denom < 0.0) {
        return Peak {
            voltage: samples[imax].0,
            height: pmax,
        };
    }
    // Vertex offset in units of the stride, bounded to the bracket.
    let delta = (0.5 * (l0 - l2) / denom).clamp(-1.0, 1.0);
    let (v0, v1, v2) = (samples[lo].0, samples[imax].0, samples[hi].0);
    let voltage = if delta >= 0.0 {
        v1 + delta * (v2 - v1)
    } else {
        v1 + delta * (v1 - v0)
    };
    let height = (l1 - 0.25 * (l0 - l2) * delta).exp();
    Peak { voltage, height }
}

/// Numbers consecutive peaks by interference order and places them one free
/// spectral range apart, order 0 at the lowest voltage.
pub fn assign_orders(peaks: &[Peak], fsr_mhz: f64) -> Result<Vec<TaggedPeak>> {
    if peaks.len() < 3 {
        return Err(Error::TooFewPeaks { found: peaks.len() });
    }
    let mut voltages: Vec<f64> = peaks.iter().map(|p| p.voltage).collect();
    voltages.sort_by(f64::total_cmp);
    Ok(voltages
        .into_iter()
        .enumerate()
        .map(|(k, voltage)| TaggedPeak {
            voltage,
            order: k as i64,
            frequency: k as f64 * fsr_mhz,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Branch;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn lorentz_trace(centers: &[f64], hwhm: f64, n: usize, v_max: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|i| {
                let v = v_max * i as f64 / (n - 1) as f64;
                let p = centers
                    .iter()
                    .map(|c| 1.0 / (1.0 + ((v - c) / hwhm).powi(2)))
                    .sum::<f64>();
                (v, p)
            })
            .collect()
    }

    #[test]
    fn seven_peaks_found_within_a_permille() {
        let centers: Vec<f64> = (0..7).map(|k| 7.0 + 13.3 * k as f64 + 0.2 * (k * k) as f64).collect();
        let trace = CalibrationTrace::new(Branch::Up, lorentz_trace(&centers, 0.25, 20_000, 100.0)).unwrap();
        let peaks = find_peaks(&trace, DEFAULT_MIN_PROMINENCE).unwrap();
        assert_eq!(peaks.len(), 7);
        for (p, c) in peaks.iter().zip(&centers) {
            assert!((p.voltage - c).abs() / c < 1e-3, "{} vs {}", p.voltage, c);
        }
    }

    #[test]
    fn flat_trace_has_no_peaks() {
        let samples = (0..100).map(|i| (i as f64, 1.0)).collect();
        let trace = CalibrationTrace::new(Branch::Up, samples).unwrap();
        assert!(matches!(
            find_peaks(&trace, DEFAULT_MIN_PROMINENCE),
            Err(Error::TooFewPeaks { found: 0 })
        ));
    }

    #[test]
    fn down_sweep_peaks_are_reported_ascending() {
        let centers = [20.0, 45.0, 70.0];
        let mut samples = lorentz_trace(&centers, 0.5, 5000, 100.0);
        samples.reverse();
        let trace = CalibrationTrace::new(Branch::Down, samples).unwrap();
        let peaks = find_peaks(&trace, DEFAULT_MIN_PROMINENCE).unwrap();
        let v: Vec<f64> = peaks.iter().map(|p| p.voltage).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        for (p, c) in v.iter().zip(centers) {
            assert!((p - c).abs() < 1e-2);
        }
    }

    /// Monte Carlo spread of the located peak with 1% additive noise stays
    /// within three standard deviations for every trial and well below the
    /// peak half-width.
    #[test]
    fn single_noisy_peak_is_located() {
        let truth = 50.123;
        let hwhm = 0.5;
        let clean = lorentz_trace(&[truth - 30.0, truth, truth + 30.0], hwhm, 10_000, 100.0);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut errors = Vec::new();
        for seed in 0..200 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples = clean.iter().map(|&(v, p)| (v, p + noise.sample(&mut rng))).collect();
            let trace = CalibrationTrace::new(Branch::Up, samples).unwrap();
            let peaks = find_peaks(&trace, DEFAULT_MIN_PROMINENCE).unwrap();
            let nearest = peaks
                .iter()
                .map(|p| p.voltage - truth)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap();
            errors.push(nearest);
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let spacing = 100.0 / 9999.0;
        assert!(mean.abs() < 3.0 * sd / n.sqrt() + 1e-3, "bias {mean}");
        assert!(sd < 2.0 * spacing, "spread {sd}");
        assert!(errors.iter().all(|e| (e - mean).abs() <= 4.0 * sd));
        assert!(errors.iter().all(|e| e.abs() < hwhm / 10.0));
    }

    #[test]
    fn orders_follow_fsr() {
        let peaks: Vec<Peak> = (0..7)
            .map(|k| Peak {
                voltage: 10.0 * k as f64 + 3.0,
                height: 1.0,
            })
            .collect();
        let tagged = assign_orders(&peaks, 4020.0).unwrap();
        let f: Vec<f64> = tagged.iter().map(|t| t.frequency).collect();
        assert_eq!(f, vec![0.0, 4020.0, 8040.0, 12060.0, 16080.0, 20100.0, 24120.0]);
    }

    #[test]
    fn orders_are_assigned_after_sorting() {
        let peaks = [30.0, 20.0, 10.0].map(|voltage| Peak { voltage, height: 1.0 });
        let tagged = assign_orders(&peaks, 1000.0).unwrap();
        assert_eq!(tagged.iter().map(|t| t.voltage).collect::<Vec<_>>(), vec![10.0, 20.0, 30.0]);
        assert_eq!(tagged.iter().map(|t| t.frequency).collect::<Vec<_>>(), vec![0.0, 1000.0, 2000.0]);
    }
}
