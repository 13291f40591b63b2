use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use botdr_core::calibration::calibrate_branch;
use botdr_core::io::{
    calibrate_from_config, calibration_trace, hash_bytes, load_config, load_map, map_to_toml, provenance,
    read_histogram, read_profile, read_trace, retrieve_from_config, simulate_from_config, summarize, truth_map,
    write_histogram, write_profile, write_trace, ExperimentConfig, Header, Provenance, RunManifest, TRACE_SCHEMA,
};
use botdr_core::retrieval::{assemble_spectrum, estimate_background, fit_lorentzian, FitOptions, RetrievedProfile};
use botdr_core::{Branch, Error, Execution, HysteresisMap, ScanHistogram};
use serde_json::json;

use crate::svg::{Plot, Series, Style};

/// A failed command: the error and whether it stems from bad input.
pub struct Failure {
    error: Error,
    input: bool,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        if self.input || self.error.is_config_error() {
            2
        } else {
            3
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> String {
        json!({
            "status": "error",
            "error": self.error.kind(),
            "message": self.error.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Failures while reading inputs are configuration errors.
fn input<T>(r: botdr_core::Result<T>) -> CmdResult<T> {
    r.map_err(|error| Failure { error, input: true })
}

fn stage<T>(r: botdr_core::Result<T>) -> CmdResult<T> {
    r.map_err(|error| Failure { error, input: false })
}

fn read_text(path: &Path) -> CmdResult<String> {
    input(std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    let r = (|| {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, bytes)
    })();
    stage(r.map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))
}

fn config(path: &Path) -> CmdResult<ExperimentConfig> {
    let mut cfg = input(load_config(path))?;
    input(cfg.apply_seed_override())?;
    Ok(cfg)
}

fn execution(serial: bool) -> Execution {
    if serial {
        Execution::Serial
    } else {
        Execution::Parallel
    }
}

pub fn calibrate(trace: &Path, branch: Branch, out: &Path, fsr: f64, min_prominence: f64, merge: bool) -> CmdResult {
    let text = read_text(trace)?;
    let header = input(Header::parse(&text, TRACE_SCHEMA))?;
    let trace = input(read_trace(&text, Some(branch)))?;
    let fitted = stage(calibrate_branch(&trace, fsr, min_prominence))?;

    let base = if merge && out.exists() {
        let existing = input(load_map(out))?;
        if existing.fsr_mhz != fsr {
            return Err(Failure {
                error: Error::Validation {
                    field: "fsr".into(),
                    reason: format!("existing map uses {} MHz", existing.fsr_mhz),
                },
                input: true,
            });
        }
        existing
    } else {
        HysteresisMap::new(fsr)
    };
    let map = base.with_branch(fitted.clone());
    let prov = Provenance {
        config_hash: header
            .get("config_hash")
            .map(str::to_string)
            .unwrap_or_else(|| hash_bytes(text.as_bytes())),
        seed: header.seed().unwrap_or(0),
    };
    write_file(out, stage(map_to_toml(&map, &prov))?)?;

    println!(
        "{} branch: {} peaks, voltage range {:.4}..{:.4} V, max residual {:.3} MHz ({:.3}% of FSR)",
        fitted.branch,
        fitted.peak_voltages.len(),
        fitted.v_min,
        fitted.v_max,
        fitted.max_residual_mhz,
        100.0 * fitted.max_residual_mhz / fsr
    );
    println!("voltage_v,frequency_mhz,residual_mhz");
    for ((v, f), r) in fitted
        .peak_voltages
        .iter()
        .zip(&fitted.peak_frequencies_mhz)
        .zip(&fitted.residuals_mhz)
    {
        println!("{v:.6},{f},{r:.6}");
    }
    Ok(())
}

pub fn trace(config_path: &Path, branch: Branch, out: &Path) -> CmdResult {
    let cfg = config(config_path)?;
    let trace = calibration_trace(&cfg, branch);
    write_file(out, stage(write_trace(&trace, &stage(provenance(&cfg))?))?)
}

pub fn simulate(config_path: &Path, out: &Path, cal: Option<&Path>, serial: bool) -> CmdResult {
    let cfg = config(config_path)?;
    let belief = match cal {
        Some(p) => input(load_map(p))?,
        None => truth_map(&cfg),
    };
    let hist = stage(simulate_from_config(&cfg, &belief, execution(serial)))?;
    write_file(out, stage(write_histogram(&hist))?)
}

fn warn_on_hash_mismatch(cfg: &ExperimentConfig, hist: &ScanHistogram) -> CmdResult {
    let hash = stage(cfg.hash())?;
    if hash != hist.meta.config_hash {
        eprintln!(
            "{}",
            json!({
                "status": "warning",
                "message": "histogram was recorded with a different configuration",
                "histogram_config_hash": hist.meta.config_hash,
                "config_hash": hash,
            })
        );
    }
    Ok(())
}

pub fn retrieve(hist: &Path, cal: &Path, config_path: &Path, out: &Path, serial: bool) -> CmdResult {
    let hist = input(read_histogram(&read_text(hist)?))?;
    let map = input(load_map(cal))?;
    let cfg = config(config_path)?;
    warn_on_hash_mismatch(&cfg, &hist)?;
    let profile = stage(retrieve_from_config(&cfg, &hist, &map, execution(serial)))?;
    write_file(out, stage(write_profile(&profile))?)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn roundtrip(config_path: &Path, out_dir: &Path) -> CmdResult {
    let started = unix_now();
    let cfg = config(config_path)?;
    let prov = stage(provenance(&cfg))?;
    let mut outputs: Vec<PathBuf> = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> CmdResult {
        let path = out_dir.join(name);
        write_file(&path, bytes)?;
        outputs.push(path);
        Ok(())
    };

    emit("config.toml", stage(cfg.to_toml())?.into_bytes())?;
    for branch in [Branch::Up, Branch::Down] {
        let trace = calibration_trace(&cfg, branch);
        emit(&format!("trace_{branch}.csv"), stage(write_trace(&trace, &prov))?)?;
    }
    let map = stage(calibrate_from_config(&cfg))?;
    emit("hysteresis.toml", stage(map_to_toml(&map, &prov))?.into_bytes())?;
    let hist = stage(simulate_from_config(&cfg, &map, Execution::Parallel))?;
    emit("histogram.csv", stage(write_histogram(&hist))?)?;
    let profile = stage(retrieve_from_config(&cfg, &hist, &map, Execution::Parallel))?;
    emit("profile.csv", stage(write_profile(&profile))?)?;
    let summary = summarize(&cfg, &profile);
    let summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    emit("summary.json", format!("{summary_json}\n").into_bytes())?;
    for (name, svg) in profile_plots(&profile, Some((&hist, &map, &cfg)), &[])? {
        emit(&format!("plots/{name}"), svg.into_bytes())?;
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: "roundtrip".into(),
        config_hash: prov.config_hash,
        seed: prov.seed,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        outputs: outputs
            .iter()
            .map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_file(&out_dir.join("manifest.json"), stage(manifest.to_json())? + "\n")?;
    println!("{summary_json}");
    Ok(())
}

pub fn report(
    profile: &Path,
    out: &Path,
    hist: Option<&Path>,
    cal: Option<&Path>,
    config_path: Option<&Path>,
    bins: &[usize],
) -> CmdResult {
    let profile = input(read_profile(&read_text(profile)?))?;
    let cfg = match config_path {
        Some(p) => config(p)?,
        None => ExperimentConfig::default(),
    };
    let spectra = match (hist, cal) {
        (Some(h), Some(c)) => Some((input(read_histogram(&read_text(h)?))?, input(load_map(c))?)),
        _ => None,
    };
    let plots = profile_plots(&profile, spectra.as_ref().map(|(h, m)| (h, m, &cfg)), bins)?;
    for (name, svg) in plots {
        write_file(&out.join(name), svg)?;
    }
    Ok(())
}

fn along_fiber(profile: &RetrievedProfile, value: impl Fn(&botdr_core::retrieval::RetrievedBin) -> Option<f64>) -> Vec<(f64, f64)> {
    profile
        .accepted()
        .filter_map(|b| Some((b.range_m, value(b)?)))
        .collect()
}

fn profile_plots(
    profile: &RetrievedProfile,
    spectra: Option<(&ScanHistogram, &HysteresisMap, &ExperimentConfig)>,
    bins: &[usize],
) -> CmdResult<Vec<(String, String)>> {
    let note = format!("config_hash: {} seed: {}", profile.config_hash, profile.seed);
    let line_plot = |title: &str, y_label: &str, points: Vec<(f64, f64)>| Plot {
        title: title.into(),
        x_label: "distance (m)".into(),
        y_label: y_label.into(),
        series: vec![Series {
            label: title.into(),
            color: "#1f5fa8",
            style: Style::Line,
            points,
        }],
        note: note.clone(),
    };
    let mut plots = vec![
        (
            "temperature.svg".to_string(),
            line_plot("Temperature", "T (°C)", along_fiber(profile, |b| b.temperature)).render(),
        ),
        (
            "strain.svg".to_string(),
            line_plot("Strain", "strain (µε)", along_fiber(profile, |b| b.strain)).render(),
        ),
        (
            "brillouin_shift.svg".to_string(),
            line_plot("Brillouin shift", "shift (MHz)", along_fiber(profile, |b| b.nu_b)).render(),
        ),
    ];

    let Some((hist, map, cfg)) = spectra else {
        return Ok(plots);
    };
    let chosen: Vec<usize> = if bins.is_empty() {
        let accepted: Vec<usize> = profile.accepted().map(|b| b.bin_index).collect();
        (1..=4)
            .filter_map(|k| accepted.get(k * accepted.len() / 5).copied())
            .collect()
    } else {
        bins.to_vec()
    };
    let background = if cfg.retrieval.subtract_background {
        match estimate_background(hist, cfg.retrieval.dark_region.map(|(a, b)| a..b)) {
            Ok(v) => v.iter().sum::<f64>() / v.len() as f64,
            Err(Error::NoDarkRegion) => 0.0,
            Err(e) => return Err(Failure { error: e, input: false }),
        }
    } else {
        0.0
    };
    let opts = FitOptions {
        weighting: cfg.retrieval.weighting,
        ..Default::default()
    };
    for bin in chosen {
        let spec = stage(assemble_spectrum(hist, map, bin, background))?;
        let measured: Vec<(f64, f64)> = spec.frequencies.iter().copied().zip(spec.signal()).collect();
        let mut series = vec![Series {
            label: "counts".into(),
            color: "#333333",
            style: Style::Markers,
            points: measured,
        }];
        if let Ok(fit) = fit_lorentzian(&spec, None, &opts) {
            let (lo, hi) = (spec.frequencies[0], spec.frequencies[spec.len() - 1]);
            let curve = (0..=400)
                .map(|i| {
                    let nu = lo + (hi - lo) * i as f64 / 400.0;
                    (nu, fit.eval(nu))
                })
                .collect();
            series.push(Series {
                label: format!("fit, shift {:.1} MHz", fit.nu_b),
                color: "#c0392b",
                style: Style::Line,
                points: curve,
            });
        }
        let plot = Plot {
            title: format!("Bin {bin} at {:.0} m", spec.range_m),
            x_label: "interferometer position (MHz)".into(),
            y_label: "counts".into(),
            series,
            note: note.clone(),
        };
        plots.push((format!("spectrum_bin_{bin:04}.svg"), plot.render()));
    }
    Ok(plots)
}
