//! Inverse pipeline: per-bin spectra from the histogram, Lorentzian fits,
//! width deconvolution and temperature/strain inversion.

mod fit;
mod spectrum;

use std::fmt;

use bitflags::bitflags;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::HysteresisMap;
use crate::error::{Error, Result};
use crate::model::{environment_from_line, BrillouinLine, FpiEtalon, SensitivityModel};
use crate::scan::{CountSource, Execution};

pub use fit::{fit_lorentzian, FitOptions, FitResult, Weighting, MIN_POINTS};
pub use spectrum::{assemble_spectrum, corrected_count, estimate_background, BinSpectrum};

bitflags! {
    /// Per-bin quality flags. An empty set means the bin was fully retrieved.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct QualityFlags: u16 {
        const NOISE_ONLY = 1 << 0;
        const NOT_CONVERGED = 1 << 1;
        const DEGENERATE = 1 << 2;
        const NON_PHYSICAL = 1 << 3;
        const ILL_CONDITIONED = 1 << 4;
        const SATURATED = 1 << 5;
        const FIT_FAILED = 1 << 6;
    }
}

const FLAG_NAMES: [(QualityFlags, &str); 7] = [
    (QualityFlags::NOISE_ONLY, "noise_only"),
    (QualityFlags::NOT_CONVERGED, "not_converged"),
    (QualityFlags::DEGENERATE, "degenerate"),
    (QualityFlags::NON_PHYSICAL, "non_physical"),
    (QualityFlags::ILL_CONDITIONED, "ill_conditioned"),
    (QualityFlags::SATURATED, "saturated"),
    (QualityFlags::FIT_FAILED, "fit_failed"),
];

impl fmt::Display for QualityFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return f.write_str("ok");
        }
        let names: Vec<&str> = FLAG_NAMES
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join("|"))
    }
}

impl std::str::FromStr for QualityFlags {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "ok" {
            return Ok(QualityFlags::empty());
        }
        s.split('|').try_fold(QualityFlags::empty(), |acc, name| {
            FLAG_NAMES
                .iter()
                .find(|(_, n)| *n == name)
                .map(|(flag, _)| acc | *flag)
                .ok_or_else(|| Error::Parse(format!("unknown quality flag `{name}`")))
        })
    }
}

/// How fitted line parameters are turned into temperature and strain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inversion {
    /// Solve the 2x2 system on (ν_B, ω_B).
    #[default]
    Joint,
    /// Strain known (µε); temperature from ν_B alone.
    KnownStrain(f64),
    /// Temperature known (°C); strain from ν_B alone.
    KnownTemperature(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalOptions {
    pub weighting: Weighting,
    pub inversion: Inversion,
    pub subtract_background: bool,
    /// Half-open bin range used for the background instead of the bins past
    /// the fiber end.
    pub dark_region: Option<(usize, usize)>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Unweighted,
            inversion: Inversion::Joint,
            subtract_background: true,
            dark_region: None,
            execution: Execution::Parallel,
        }
    }
}

impl RetrievalOptions {
    fn fit_options(&self) -> FitOptions {
        FitOptions {
            weighting: self.weighting,
            ..Default::default()
        }
    }
}

/// Brillouin HWHM after removing the passband width. Widths of Lorentzians
/// add under convolution, so this is a subtraction; a non-positive result is
/// returned as-is together with the NON_PHYSICAL flag.
pub fn deconvolve_width(fit: &FitResult, etalon: &FpiEtalon) -> (f64, QualityFlags) {
    let omega_b = fit.omega_total - etalon.omega_fpi_mhz;
    let flags = if omega_b > 0.0 {
        QualityFlags::empty()
    } else {
        QualityFlags::NON_PHYSICAL
    };
    (omega_b, flags)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedBin {
    pub bin_index: usize,
    pub range_m: f64,
    pub amplitude: Option<f64>,
    pub nu_b: Option<f64>,
    pub sigma_nu: Option<f64>,
    pub omega_b: Option<f64>,
    pub sigma_omega: Option<f64>,
    pub temperature: Option<f64>,
    pub sigma_t: Option<f64>,
    pub strain: Option<f64>,
    pub sigma_strain: Option<f64>,
    pub flags: QualityFlags,
    pub fit: Option<FitResult>,
}

impl RetrievedBin {
    fn empty(bin_index: usize, range_m: f64, flags: QualityFlags) -> Self {
        Self {
            bin_index,
            range_m,
            amplitude: None,
            nu_b: None,
            sigma_nu: None,
            omega_b: None,
            sigma_omega: None,
            temperature: None,
            sigma_t: None,
            strain: None,
            sigma_strain: None,
            flags,
            fit: None,
        }
    }

    /// Bin retrieved without any quality flag.
    pub fn is_accepted(&self) -> bool {
        self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedProfile {
    pub bins: Vec<RetrievedBin>,
    /// Mean background per cell that was subtracted, `None` if none was.
    pub background: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

impl RetrievedProfile {
    pub fn accepted(&self) -> impl Iterator<Item = &RetrievedBin> {
        self.bins.iter().filter(|b| b.is_accepted())
    }
}

fn invert(
    fit: &FitResult,
    omega_b: f64,
    model: &SensitivityModel,
    inversion: Inversion,
) -> Result<(f64, f64, f64, f64)> {
    let var_nu = fit.covariance[1][1];
    match inversion {
        Inversion::Joint => {
            let line = BrillouinLine {
                g0: fit.amplitude.max(0.0),
                nu_b: fit.nu_b,
                omega_b,
            };
            let env = environment_from_line(model, &line)?;
            let m = model.inverse_matrix()?;
            let cov = [
                [fit.covariance[1][1], fit.covariance[1][2]],
                [fit.covariance[2][1], fit.covariance[2][2]],
            ];
            // Delta method: Σ_env = M⁻¹ Σ M⁻ᵀ
            let var = |row: [f64; 2]| {
                let mut acc = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        acc += row[i] * cov[i][j] * row[j];
                    }
                }
                acc.max(0.0)
            };
            Ok((env.temperature, var(m[0]).sqrt(), env.strain, var(m[1]).sqrt()))
        }
        Inversion::KnownStrain(strain) => {
            let t = model.temperature_from_shift(fit.nu_b, strain);
            Ok((t, var_nu.max(0.0).sqrt() / model.c_nu_t.abs(), strain, 0.0))
        }
        Inversion::KnownTemperature(temperature) => {
            let e = model.strain_from_shift(fit.nu_b, temperature);
            Ok((temperature, 0.0, e, var_nu.max(0.0).sqrt() / model.c_nu_e.abs()))
        }
    }
}

fn retrieve_bin(
    spec: &BinSpectrum,
    etalon: &FpiEtalon,
    model: &SensitivityModel,
    opts: &RetrievalOptions,
) -> RetrievedBin {
    let mut out = RetrievedBin::empty(spec.bin_index, spec.range_m, QualityFlags::empty());
    if spec.saturated {
        out.flags |= QualityFlags::SATURATED;
    }
    if spec.noise_only {
        out.flags |= QualityFlags::NOISE_ONLY;
        return out;
    }
    let fit = match fit_lorentzian(spec, None, &opts.fit_options()) {
        Ok(fit) => fit,
        Err(e) => {
            out.flags |= match e {
                Error::NotConverged { .. } => QualityFlags::NOT_CONVERGED,
                Error::DegenerateSpectrum { .. } => QualityFlags::DEGENERATE,
                _ => QualityFlags::FIT_FAILED,
            };
            return out;
        }
    };
    let (omega_b, width_flags) = deconvolve_width(&fit, etalon);
    out.flags |= width_flags;
    out.amplitude = Some(fit.amplitude);
    out.nu_b = Some(fit.nu_b);
    out.sigma_nu = Some(fit.sigma(1));
    out.omega_b = Some(omega_b);
    out.sigma_omega = Some(fit.sigma(2));
    out.fit = Some(fit);
    if !width_flags.is_empty() {
        return out;
    }
    match invert(&fit, omega_b, model, opts.inversion) {
        Ok((t, st, e, se)) => {
            out.temperature = Some(t);
            out.sigma_t = Some(st);
            out.strain = Some(e);
            out.sigma_strain = Some(se);
        }
        Err(Error::IllConditioned { .. }) => out.flags |= QualityFlags::ILL_CONDITIONED,
        Err(_) => out.flags |= QualityFlags::NON_PHYSICAL,
    }
    out
}

/// Runs the inverse chain on every range bin. Bin-level failures become
/// quality flags; only inconsistent inputs (wrong calibration branch,
/// voltages outside the calibration) abort.
pub fn retrieve_profile<H: CountSource>(
    hist: &H,
    map: &HysteresisMap,
    etalon: &FpiEtalon,
    model: &SensitivityModel,
    opts: &RetrievalOptions,
) -> Result<RetrievedProfile> {
    let meta = hist.meta();
    meta.validate()?;
    etalon.validate()?;
    model.validate()?;
    // Surface calibration problems once instead of per bin.
    meta.schedule.frequencies(map)?;

    let background = if opts.subtract_background {
        let region = opts.dark_region.map(|(a, b)| a..b);
        match estimate_background(hist, region) {
            Ok(per_step) => Some(per_step.iter().sum::<f64>() / per_step.len() as f64),
            Err(Error::NoDarkRegion) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let level = background.unwrap_or(0.0);

    let work = |bin: usize| -> Result<RetrievedBin> {
        let spec = assemble_spectrum(hist, map, bin, level)?;
        Ok(retrieve_bin(&spec, etalon, model, opts))
    };
    let bins = match opts.execution {
        Execution::Serial => (0..meta.n_bins).map(work).collect::<Result<Vec<_>>>()?,
        Execution::Parallel => (0..meta.n_bins).into_par_iter().map(work).collect::<Result<Vec<_>>>()?,
    };
    Ok(RetrievedProfile {
        bins,
        background,
        seed: meta.seed,
        config_hash: meta.config_hash.clone(),
    })
}

/// Least-squares location of a single step in `(range, value)` samples,
/// reported midway between the last sample before and the first after it.
/// Needs at least two samples on each side.
pub fn locate_step(samples: &[(f64, f64)]) -> Option<f64> {
    let n = samples.len();
    if n < 4 {
        return None;
    }
    let mut prefix = vec![(0.0, 0.0); n + 1];
    for (i, &(_, v)) in samples.iter().enumerate() {
        prefix[i + 1] = (prefix[i].0 + v, prefix[i].1 + v * v);
    }
    let sse = |a: usize, b: usize| {
        let k = (b - a) as f64;
        let s = prefix[b].0 - prefix[a].0;
        let s2 = prefix[b].1 - prefix[a].1;
        s2 - s * s / k
    };
    (2..=n - 2)
        .map(|k| (k, sse(0, k) + sse(k, n)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| 0.5 * (samples[k - 1].0 + samples[k].0))
}
