use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{PztModel, TraceNoise, DEFAULT_MIN_PROMINENCE};
use crate::error::{Error, Result};
use crate::model::{FpiEtalon, SensitivityModel};
use crate::retrieval::RetrievalOptions;
use crate::scan::{FiberProfile, InstrumentConfig, ScheduleConfig};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "BOTDR_SEED";

/// Synthetic calibration sweep settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub n_samples: usize,
    pub noise: TraceNoise,
    pub min_prominence: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            noise: TraceNoise::multiplicative(0.002),
            min_prominence: DEFAULT_MIN_PROMINENCE,
        }
    }
}

impl CalibrationSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 16 {
            return Err(Error::validation("calibration.n_samples", "must be >= 16"));
        }
        if !(self.noise.additive >= 0.0) || !(self.noise.multiplicative >= 0.0) {
            return Err(Error::validation("calibration.noise", "noise levels must be >= 0"));
        }
        if !(self.min_prominence > 0.0 && self.min_prominence < 1.0) {
            return Err(Error::validation("calibration.min_prominence", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Everything one experiment needs. Omitted sections take the instrument
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub instrument: InstrumentConfig,
    pub etalon: FpiEtalon,
    pub sensitivity: SensitivityModel,
    pub schedule: ScheduleConfig,
    pub pzt: PztModel,
    pub calibration: CalibrationSettings,
    pub retrieval: RetrievalOptions,
    pub fiber: FiberProfile,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("out"),
            instrument: InstrumentConfig::default(),
            etalon: FpiEtalon::default(),
            sensitivity: SensitivityModel::default(),
            schedule: ScheduleConfig::default(),
            pzt: PztModel::default(),
            calibration: CalibrationSettings::default(),
            retrieval: RetrievalOptions::default(),
            fiber: FiberProfile::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.instrument.validate()?;
        self.etalon.validate()?;
        self.sensitivity.validate()?;
        self.schedule.validate()?;
        self.pzt.validate()?;
        self.calibration.validate()?;
        self.fiber.validate()?;
        self.instrument.check_fiber_length(self.fiber.total_length())?;
        if let Some((a, b)) = self.retrieval.dark_region {
            if a >= b {
                return Err(Error::validation("retrieval.dark_region", "start must be below end"));
            }
        }
        Ok(())
    }

    /// Canonical TOML text. The config hash is taken over exactly these bytes.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize config: {e}")))
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hash_bytes(self.to_toml()?.as_bytes()))
    }

    /// Interferometer position of the first scan step. Unless configured, the
    /// scan is centred on the reference Brillouin shift.
    pub fn start_frequency(&self) -> f64 {
        self.schedule
            .start_frequency_mhz
            .unwrap_or_else(|| self.schedule.centred_start(self.sensitivity.nu_ref))
    }

    /// Replaces the seed with the value of `BOTDR_SEED` when set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = parse_seed(&raw)?;
        }
        Ok(())
    }
}

fn parse_seed(raw: &str) -> Result<u64> {
    raw.trim()
        .parse()
        .map_err(|_| Error::validation(SEED_ENV, format!("`{raw}` is not an unsigned integer")))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses and validates a config. Missing fields take their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::Branch;
    use crate::retrieval::Inversion;
    use crate::scan::FiberSegment;

    #[test]
    fn empty_file_gives_instrument_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.instrument.pulse_duration_ns, 300.0);
        assert_eq!(cfg.instrument.rep_rate_khz, 8.0);
        assert_eq!(cfg.etalon.fsr_mhz, 4020.0);
        assert_eq!(cfg.etalon.omega_fpi_mhz, 60.0);
        assert_eq!(cfg.instrument.noise_rate_cps, 700.0);
        assert_eq!(cfg.instrument.dead_time_ns, 23.0);
        assert_eq!(cfg.schedule.n_steps, 40);
        assert_eq!(cfg.schedule.freq_step_mhz, 15.0);
    }

    #[test]
    fn negative_pulse_is_rejected_by_name() {
        let err = parse_config("[instrument]\npulse_duration_ns = -300.0\n").unwrap_err();
        assert_eq!(err.kind(), "ValidationError");
        assert!(err.to_string().contains("pulse_duration"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse_config("[instrument]\npulse_duration_ns = \"long\"\n").unwrap_err();
        assert_eq!(err.kind(), "ParseError");
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("pulse_duration_ns"), "{msg}");

        let err = parse_config("[etalon]\nfinesse = 3\n").unwrap_err();
        assert!(err.to_string().contains("finesse"), "{err}");
    }

    #[test]
    fn serialize_load_round_trip() {
        let mut cfg = ExperimentConfig {
            seed: 42,
            ..Default::default()
        };
        cfg.schedule.branch = Branch::Down;
        cfg.schedule.start_frequency_mhz = Some(10_900.0);
        cfg.retrieval.inversion = Inversion::KnownTemperature(32.6);
        cfg.retrieval.dark_region = Some((300, 417));
        cfg.fiber = FiberProfile::new(vec![
            FiberSegment::new(300.0, 32.6, 1500.0),
            FiberSegment::new(9100.0, 24.4, 0.0).with_attenuation(0.25),
        ])
        .unwrap();
        let text = cfg.to_toml().unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml().unwrap(), text);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed += 1;
        assert_eq!(a.hash().unwrap().len(), 64);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn seed_text_must_be_numeric() {
        assert_eq!(parse_seed(" 17 ").unwrap(), 17);
        assert!(parse_seed("seventeen").is_err());
    }

    #[test]
    fn ambiguous_fiber_is_a_config_error() {
        let err = parse_config("[[fiber.segments]]\nlength_m = 13000.0\ntemperature_c = 20.0\n").unwrap_err();
        assert!(err.is_config_error());
    }
}
