//! Experiment orchestration shared by the command-line tool and the tests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_branch, simulate_calibration_trace, Branch, CalibrationTrace, HysteresisMap};
use crate::error::{Error, Result};
use crate::retrieval::{locate_step, retrieve_profile, RetrievedProfile};
use crate::scan::{simulate_histogram_with, CountSource, Execution, ScanHistogram, ScanSchedule};

use super::config::ExperimentConfig;
use super::tables::Provenance;

pub const MAP_SCHEMA: &str = "botdr-hysteresis/1";

/// Exact voltage-to-frequency response of the simulated actuator.
pub fn truth_map(cfg: &ExperimentConfig) -> HysteresisMap {
    HysteresisMap::from_pzt(&cfg.pzt, cfg.etalon.fsr_mhz)
}

pub fn provenance(cfg: &ExperimentConfig) -> Result<Provenance> {
    Ok(Provenance {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
    })
}

/// Synthetic oscilloscope trace of one sweep branch.
pub fn calibration_trace(cfg: &ExperimentConfig, branch: Branch) -> CalibrationTrace {
    simulate_calibration_trace(
        &cfg.pzt,
        &cfg.etalon,
        branch,
        cfg.calibration.n_samples,
        cfg.calibration.noise,
        cfg.seed,
    )
}

/// Calibrates both branches from synthetic traces.
pub fn calibrate_from_config(cfg: &ExperimentConfig) -> Result<HysteresisMap> {
    let mut map = HysteresisMap::new(cfg.etalon.fsr_mhz);
    for branch in [Branch::Up, Branch::Down] {
        let trace = calibration_trace(cfg, branch);
        map = map.with_branch(calibrate_branch(&trace, cfg.etalon.fsr_mhz, cfg.calibration.min_prominence)?);
    }
    Ok(map)
}

/// Plans the scan voltages with the instrument's belief about the actuator.
pub fn plan_schedule(cfg: &ExperimentConfig, belief: &HysteresisMap) -> Result<ScanSchedule> {
    ScanSchedule::plan(&cfg.schedule, belief, cfg.start_frequency())
}

/// Photon-counting histogram for the configured scenario, with the scan
/// planned from `belief` and executed on the true actuator response.
pub fn simulate_from_config(
    cfg: &ExperimentConfig,
    belief: &HysteresisMap,
    execution: Execution,
) -> Result<ScanHistogram> {
    let schedule = plan_schedule(cfg, belief)?;
    let mut hist = simulate_histogram_with(
        &cfg.fiber,
        &cfg.instrument,
        &cfg.sensitivity,
        &cfg.etalon,
        &schedule,
        &truth_map(cfg),
        cfg.seed,
        execution,
    )?;
    hist.meta.config_hash = cfg.hash()?;
    Ok(hist)
}

pub fn retrieve_from_config<H: CountSource>(
    cfg: &ExperimentConfig,
    hist: &H,
    map: &HysteresisMap,
    execution: Execution,
) -> Result<RetrievedProfile> {
    let mut opts = cfg.retrieval.clone();
    opts.execution = execution;
    retrieve_profile(hist, map, &cfg.etalon, &cfg.sensitivity, &opts)
}

/// Per-segment accuracy of a retrieved profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub start_m: f64,
    pub end_m: f64,
    pub configured_temperature_c: f64,
    pub configured_strain_ue: f64,
    /// Accepted bins entirely inside the segment.
    pub n_bins: usize,
    pub mean_temperature_c: Option<f64>,
    pub bias_temperature_c: Option<f64>,
    pub rmse_temperature_c: Option<f64>,
    pub mean_strain_ue: Option<f64>,
    pub bias_strain_ue: Option<f64>,
    pub rmse_strain_ue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySummary {
    pub configured_m: f64,
    /// Step location found in the retrieved Brillouin shift.
    pub located_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripSummary {
    pub config_hash: String,
    pub seed: u64,
    pub accepted_bins: usize,
    pub flagged_bins: usize,
    pub segments: Vec<SegmentSummary>,
    pub boundaries: Vec<BoundarySummary>,
}

fn stats(values: &[f64], truth: f64) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(mean - truth), Some(mse.sqrt()))
}

/// Compares a retrieved profile with the configured fiber. Bins closer than
/// one pulse length to a segment edge see both segments and are left out of
/// the segment statistics.
pub fn summarize(cfg: &ExperimentConfig, profile: &RetrievedProfile) -> RoundtripSummary {
    let guard = crate::scan::time_to_range(cfg.instrument.pulse_duration_ns, cfg.instrument.group_velocity_m_per_s);
    let accepted: Vec<_> = profile.accepted().collect();
    let mut start = 0.0;
    let mut segments = Vec::with_capacity(cfg.fiber.segments.len());
    for (index, seg) in cfg.fiber.segments.iter().enumerate() {
        let end = start + seg.length_m;
        let inside: Vec<_> = accepted
            .iter()
            .filter(|b| b.range_m >= start + guard - 1e-9 && b.range_m <= end - guard + 1e-9)
            .collect();
        let temps: Vec<f64> = inside.iter().filter_map(|b| b.temperature).collect();
        let strains: Vec<f64> = inside.iter().filter_map(|b| b.strain).collect();
        let (mean_t, bias_t, rmse_t) = stats(&temps, seg.temperature_c);
        let (mean_e, bias_e, rmse_e) = stats(&strains, seg.strain_ue);
        segments.push(SegmentSummary {
            index,
            start_m: start,
            end_m: end,
            configured_temperature_c: seg.temperature_c,
            configured_strain_ue: seg.strain_ue,
            n_bins: inside.len(),
            mean_temperature_c: mean_t,
            bias_temperature_c: bias_t,
            rmse_temperature_c: rmse_t,
            mean_strain_ue: mean_e,
            bias_strain_ue: bias_e,
            rmse_strain_ue: rmse_e,
        });
        start = end;
    }

    // Each interior boundary is searched between the neighbouring ones.
    let edges: Vec<f64> = std::iter::once(0.0)
        .chain(cfg.fiber.boundaries())
        .chain(std::iter::once(cfg.fiber.total_length()))
        .collect();
    let boundaries = (1..edges.len() - 1)
        .map(|i| {
            let samples: Vec<(f64, f64)> = accepted
                .iter()
                .filter(|b| b.range_m > edges[i - 1] && b.range_m < edges[i + 1])
                .filter_map(|b| Some((b.range_m, b.nu_b?)))
                .collect();
            BoundarySummary {
                configured_m: edges[i],
                located_m: locate_step(&samples),
            }
        })
        .collect();

    RoundtripSummary {
        config_hash: profile.config_hash.clone(),
        seed: profile.seed,
        accepted_bins: accepted.len(),
        flagged_bins: profile.bins.len() - accepted.len(),
        segments,
        boundaries,
    }
}

pub fn map_to_toml(map: &HysteresisMap, prov: &Provenance) -> Result<String> {
    let body = toml::to_string(map).map_err(|e| Error::Parse(format!("cannot serialize map: {e}")))?;
    Ok(format!(
        "# schema: {MAP_SCHEMA}\n# config_hash: {}\n# seed: {}\n{body}",
        prov.config_hash, prov.seed
    ))
}

pub fn map_from_toml(text: &str) -> Result<HysteresisMap> {
    let map: HysteresisMap = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    map.validate()?;
    Ok(map)
}

pub fn load_map(path: &Path) -> Result<HysteresisMap> {
    map_from_toml(&std::fs::read_to_string(path)?).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Record of one tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{QualityFlags, RetrievedBin};
    use crate::scan::{FiberProfile, FiberSegment};

    #[test]
    fn map_toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let map = truth_map(&cfg);
        let text = map_to_toml(&map, &provenance(&cfg).unwrap()).unwrap();
        assert!(text.starts_with("# schema: botdr-hysteresis/1\n"));
        assert_eq!(map_from_toml(&text).unwrap(), map);
    }

    #[test]
    fn calibrated_map_has_both_branches() {
        let cfg = ExperimentConfig::default();
        let map = calibrate_from_config(&cfg).unwrap();
        assert!(map.up.is_some() && map.down.is_some());
        let up = map.up.as_ref().unwrap();
        assert!(up.peak_voltages.len() >= 7);
        assert!(up.max_residual_mhz < 0.005 * cfg.etalon.fsr_mhz);
    }

    fn bin(range_m: f64, t: f64, nu: f64) -> RetrievedBin {
        RetrievedBin {
            bin_index: (range_m / 30.0) as usize,
            range_m,
            amplitude: Some(1.0),
            nu_b: Some(nu),
            sigma_nu: Some(0.1),
            omega_b: Some(15.0),
            sigma_omega: Some(0.1),
            temperature: Some(t),
            sigma_t: Some(0.1),
            strain: Some(0.0),
            sigma_strain: Some(0.0),
            flags: QualityFlags::empty(),
            fit: None,
        }
    }

    #[test]
    fn summary_excludes_boundary_bins() {
        let cfg = ExperimentConfig {
            fiber: FiberProfile::new(vec![FiberSegment::new(600.0, 10.0, 0.0), FiberSegment::new(600.0, 20.0, 0.0)])
                .unwrap(),
            ..Default::default()
        };
        let bins = (0..40)
            .map(|i| {
                let z = 30.0 * i as f64;
                if z < 600.0 {
                    bin(z, 10.0, 1.0)
                } else {
                    bin(z, 20.5, 2.0)
                }
            })
            .collect();
        let profile = RetrievedProfile {
            bins,
            background: None,
            seed: 1,
            config_hash: String::new(),
        };
        let s = summarize(&cfg, &profile);
        assert_eq!(s.segments[0].n_bins, 19);
        assert_eq!(s.segments[0].bias_temperature_c, Some(0.0));
        assert!((s.segments[1].bias_temperature_c.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(s.boundaries[0].located_m, Some(585.0));
    }
}
