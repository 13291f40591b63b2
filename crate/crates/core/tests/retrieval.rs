//! End-to-end checks of the inverse chain against the forward simulator.

use botdr_core::calibration::{Branch, HysteresisMap};
use botdr_core::io::{plan_schedule, truth_map, ExperimentConfig};
use botdr_core::retrieval::{
    assemble_spectrum, estimate_background, fit_lorentzian, retrieve_profile, BinSpectrum, FitOptions, Inversion,
    QualityFlags, RetrievalOptions,
};
use botdr_core::scan::{expected_histogram, simulate_histogram, ExpectedHistogram, FiberProfile, ScanHistogram};
use botdr_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn homogeneous(length_m: f64, temperature_c: f64, strain_ue: f64) -> ExperimentConfig {
    ExperimentConfig {
        fiber: FiberProfile::homogeneous(length_m, temperature_c, strain_ue),
        ..Default::default()
    }
}

fn expected(cfg: &ExperimentConfig) -> (ExpectedHistogram, HysteresisMap) {
    let map = truth_map(cfg);
    let schedule = plan_schedule(cfg, &map).unwrap();
    let hist = expected_histogram(&cfg.fiber, &cfg.instrument, &cfg.sensitivity, &cfg.etalon, &schedule, &map).unwrap();
    (hist, map)
}

fn poisson(cfg: &ExperimentConfig) -> (ScanHistogram, HysteresisMap) {
    let map = truth_map(cfg);
    let schedule = plan_schedule(cfg, &map).unwrap();
    let hist =
        simulate_histogram(&cfg.fiber, &cfg.instrument, &cfg.sensitivity, &cfg.etalon, &schedule, &map, cfg.seed)
            .unwrap();
    (hist, map)
}

fn noiseless_options() -> RetrievalOptions {
    RetrievalOptions {
        subtract_background: false,
        ..Default::default()
    }
}

#[test]
fn forty_steps_span_585_mhz() {
    let cfg = homogeneous(2000.0, 20.0, 0.0);
    let (hist, map) = expected(&cfg);
    let spec = assemble_spectrum(&hist, &map, 10, 0.0).unwrap();
    assert_eq!(spec.len(), 40);
    let span = spec.frequencies[39] - spec.frequencies[0];
    assert!((span - 585.0).abs() < 1e-6, "span {span}");
    assert!(spec.frequencies.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn bins_past_the_fiber_are_noise_only() {
    let cfg = homogeneous(2000.0, 20.0, 0.0);
    let (hist, map) = poisson(&cfg);
    let spec = assemble_spectrum(&hist, &map, 200, 0.0).unwrap();
    assert!(spec.noise_only);
    let profile = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &RetrievalOptions::default()).unwrap();
    assert!(profile.bins[200].flags.contains(QualityFlags::NOISE_ONLY));
    assert!(profile.bins[200].nu_b.is_none());
}

#[test]
fn down_schedule_with_up_map_is_a_branch_mismatch() {
    let mut cfg = homogeneous(2000.0, 20.0, 0.0);
    cfg.schedule.branch = Branch::Down;
    let (hist, truth) = expected(&cfg);
    let up_only = HysteresisMap::new(truth.fsr_mhz).with_branch(truth.up.clone().unwrap());
    let err = assemble_spectrum(&hist, &up_only, 10, 0.0).unwrap_err();
    assert!(matches!(err, Error::BranchMismatch { scan: Branch::Down, .. }), "{err}");
    let err = retrieve_profile(&hist, &up_only, &cfg.etalon, &cfg.sensitivity, &RetrievalOptions::default()).unwrap_err();
    assert_eq!(err.kind(), "BranchMismatch");
}

#[test]
fn noise_only_background_matches_the_dark_count_mean() {
    let mut cfg = homogeneous(2000.0, 20.0, 0.0);
    cfg.instrument.capture_coefficient = Some(0.0);
    let (hist, _) = poisson(&cfg);
    let per_step = estimate_background(&hist, None).unwrap();
    let mu = cfg.instrument.noise_rate_cps * cfg.schedule.dwell_s * cfg.instrument.bin_width_s() * 1e3
        * cfg.instrument.rep_rate_khz;
    let dark = hist.meta.dark_bins().len() as f64;
    let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
    let se = (mu / (dark * per_step.len() as f64)).sqrt();
    assert!((mean - mu).abs() < 3.0 * se, "mean {mean}, expected {mu} ± {se}");
}

#[test]
fn silent_detector_background_is_zero() {
    let mut cfg = homogeneous(2000.0, 20.0, 0.0);
    cfg.instrument.noise_rate_cps = 0.0;
    let (hist, _) = poisson(&cfg);
    let per_step = estimate_background(&hist, None).unwrap();
    assert!(per_step.iter().all(|&b| b == 0.0));
}

#[test]
fn full_fiber_has_no_dark_region() {
    let cfg = homogeneous(12_480.0, 20.0, 0.0);
    let (hist, map) = expected(&cfg);
    assert!(matches!(estimate_background(&hist, None), Err(Error::NoDarkRegion)));
    // Retrieval falls back to the fitted offset alone.
    let profile = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &RetrievalOptions::default()).unwrap();
    assert_eq!(profile.background, None);
}

#[test]
fn capture_scaling_scales_amplitude_only() {
    let cfg = homogeneous(3000.0, 22.0, 100.0);
    let mut scaled = cfg.clone();
    let k = 3.0;
    let c = cfg.instrument.capture(cfg.etalon.insertion_factor());
    scaled.instrument.capture_coefficient = Some(k * c);
    let (a, map) = expected(&cfg);
    let (b, _) = expected(&scaled);
    let opts = noiseless_options();
    let pa = retrieve_profile(&a, &map, &cfg.etalon, &cfg.sensitivity, &opts).unwrap();
    let pb = retrieve_profile(&b, &map, &cfg.etalon, &cfg.sensitivity, &opts).unwrap();
    for bin in [5, 40, 80] {
        let (fa, fb) = (pa.bins[bin].fit.unwrap(), pb.bins[bin].fit.unwrap());
        assert!((fb.amplitude / fa.amplitude - k).abs() < 1e-4, "bin {bin}");
        assert!((fb.nu_b - fa.nu_b).abs() / fa.nu_b < 1e-6);
        assert!((fb.omega_total - fa.omega_total).abs() / fa.omega_total < 1e-6);
    }
}

#[test]
fn relabelled_frequency_axis_shifts_the_fit() {
    let cfg = homogeneous(3000.0, 22.0, 0.0);
    let (hist, map) = expected(&cfg);
    let mut shifted = hist.clone();
    let delta = 7.25;
    shifted.meta.schedule.start_frequency_mhz += delta;
    let opts = noiseless_options();
    let p0 = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &opts).unwrap();
    let p1 = retrieve_profile(&shifted, &map, &cfg.etalon, &cfg.sensitivity, &opts).unwrap();
    for bin in [3, 50, 90] {
        let d = p1.bins[bin].nu_b.unwrap() - p0.bins[bin].nu_b.unwrap();
        assert!((d - delta).abs() < 1e-6, "bin {bin}: shift {d}");
    }
}

#[test]
fn poisson_profile_has_no_silent_gaps() {
    let cfg = ExperimentConfig::default();
    let (hist, map) = poisson(&cfg);
    let profile = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &cfg.retrieval).unwrap();
    assert_eq!(profile.bins.len(), hist.meta.n_bins);
    for b in &profile.bins {
        let values = [
            b.amplitude,
            b.nu_b,
            b.sigma_nu,
            b.omega_b,
            b.sigma_omega,
            b.temperature,
            b.sigma_t,
            b.strain,
            b.sigma_strain,
        ];
        if b.flags.is_empty() {
            assert!(values.iter().all(|v| v.is_some_and(f64::is_finite)), "bin {}: {values:?}", b.bin_index);
            assert!(b.omega_b.unwrap() > 0.0);
        } else {
            assert!(values.iter().flatten().all(|v| v.is_finite() || b.flags.contains(QualityFlags::FIT_FAILED)));
        }
        if let Some(w) = b.omega_b {
            if w <= 0.0 {
                assert!(b.flags.contains(QualityFlags::NON_PHYSICAL));
            }
        }
    }
}

#[test]
fn brillouin_width_of_twenty_mhz_is_recovered() {
    let mut cfg = homogeneous(3000.0, 20.0, 0.0);
    cfg.sensitivity.omega_ref = 20.0;
    cfg.instrument.target_peak_rate_cps = 1e6;
    cfg.retrieval.inversion = Inversion::KnownStrain(0.0);
    let (hist, map) = poisson(&cfg);
    let profile = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &cfg.retrieval).unwrap();
    let bins: Vec<_> = profile.accepted().filter(|b| b.range_m > 60.0 && b.range_m < 2940.0).collect();
    assert!(bins.len() > 90);
    let within = bins
        .iter()
        .filter(|b| (b.omega_b.unwrap() - 20.0).abs() < 3.0 * b.sigma_omega.unwrap())
        .count();
    assert!(within as f64 >= 0.95 * bins.len() as f64, "{within} of {}", bins.len());
    let mean = bins.iter().map(|b| b.omega_b.unwrap()).sum::<f64>() / bins.len() as f64;
    assert!((mean - 20.0).abs() < 1.0, "mean width {mean}");
}

#[test]
fn unstrained_fiber_gives_zero_mean_strain() {
    let mut cfg = homogeneous(6000.0, 24.4, 0.0);
    cfg.seed = 11;
    let (hist, map) = poisson(&cfg);
    let profile = retrieve_profile(&hist, &map, &cfg.etalon, &cfg.sensitivity, &cfg.retrieval).unwrap();
    let strains: Vec<f64> = profile
        .accepted()
        .filter(|b| b.range_m > 60.0 && b.range_m < 5940.0)
        .filter_map(|b| b.strain)
        .collect();
    let n = strains.len() as f64;
    let mean = strains.iter().sum::<f64>() / n;
    let sd = (strains.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    // Adjacent bins share half their fiber, so only every other one is independent.
    let se = sd / (n / 2.0).sqrt();
    assert!(mean.abs() < 3.0 * se, "mean strain {mean} µε, standard error {se}");
}

/// Location estimate on a fine grid with amplitude and offset solved in
/// closed form for every (centre, width) pair.
fn grid_search_centre(f: &[f64], y: &[f64], centre_guess: f64) -> f64 {
    let mut best = (f64::INFINITY, centre_guess);
    let n = f.len() as f64;
    for i in 0..=800 {
        let c = centre_guess - 20.0 + 0.05 * i as f64;
        for j in 0..=60 {
            let w = 60.0 + 0.5 * j as f64;
            let g: Vec<f64> = f.iter().map(|x| 1.0 / (1.0 + ((x - c) / w).powi(2))).collect();
            let (sg, sy) = (g.iter().sum::<f64>(), y.iter().sum::<f64>());
            let sgg = g.iter().map(|v| v * v).sum::<f64>();
            let sgy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            let det = n * sgg - sg * sg;
            let a = (n * sgy - sg * sy) / det;
            let b = (sy - a * sg) / n;
            let sse: f64 = g.iter().zip(y).map(|(gi, yi)| (a * gi + b - yi).powi(2)).sum();
            if sse < best.0 {
                best = (sse, c);
            }
        }
    }
    best.1
}

#[test]
fn fitter_precision_is_close_to_a_grid_search_oracle() {
    let freqs: Vec<f64> = (0..40).map(|k| 10557.5 + 15.0 * k as f64).collect();
    let (a, c, w, b) = (1000.0, 10850.0, 75.0, 30.0);
    let mean: Vec<f64> = freqs.iter().map(|x| a / (1.0 + ((x - c) / w).powi(2)) + b).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut lm, mut grid) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        let counts: Vec<f64> = mean.iter().map(|&m| Poisson::new(m).unwrap().sample(&mut rng)).collect();
        let spec = BinSpectrum {
            bin_index: 0,
            range_m: 0.0,
            frequencies: freqs.clone(),
            counts: counts.clone(),
            background: 0.0,
            noise_only: false,
            saturated: false,
        };
        lm.push(fit_lorentzian(&spec, None, &FitOptions::default()).unwrap().nu_b);
        grid.push(grid_search_centre(&freqs, &counts, c));
    }
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let (s_lm, s_grid) = (sd(&lm), sd(&grid));
    assert!(s_lm <= 2.0 * s_grid, "fitter σ {s_lm} MHz vs grid σ {s_grid} MHz");
}
