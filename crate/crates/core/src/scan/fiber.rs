use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSegment {
    pub length_m: f64,
    pub temperature_c: f64,
    #[serde(default)]
    pub strain_ue: f64,
    #[serde(default = "default_attenuation")]
    pub attenuation_db_per_km: f64,
    /// Relative backscatter amplitude.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_attenuation() -> f64 {
    0.2
}

fn default_amplitude() -> f64 {
    1.0
}

impl FiberSegment {
    pub fn new(length_m: f64, temperature_c: f64, strain_ue: f64) -> Self {
        Self {
            length_m,
            temperature_c,
            strain_ue,
            attenuation_db_per_km: default_attenuation(),
            amplitude: default_amplitude(),
        }
    }

    pub fn with_attenuation(mut self, db_per_km: f64) -> Self {
        self.attenuation_db_per_km = db_per_km;
        self
    }

    pub fn environment(&self) -> Environment {
        Environment::new(self.temperature_c, self.strain_ue)
    }
}

/// Piecewise-constant description of the sensing fiber from the launch end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberProfile {
    pub segments: Vec<FiberSegment>,
}

impl Default for FiberProfile {
    /// A 3 km coil at 19.7 °C followed by 9.1 km at 24.4 °C, both unstrained.
    fn default() -> Self {
        Self {
            segments: vec![FiberSegment::new(3000.0, 19.7, 0.0), FiberSegment::new(9100.0, 24.4, 0.0)],
        }
    }
}

impl FiberProfile {
    pub fn new(segments: Vec<FiberSegment>) -> Result<Self> {
        let profile = Self { segments };
        profile.validate()?;
        Ok(profile)
    }

    pub fn homogeneous(length_m: f64, temperature_c: f64, strain_ue: f64) -> Self {
        Self {
            segments: vec![FiberSegment::new(length_m, temperature_c, strain_ue)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::validation("fiber.segments", "at least one segment is required"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.length_m > 0.0 && s.length_m.is_finite()) {
                return Err(Error::validation(format!("fiber.segments[{i}].length_m"), "must be > 0"));
            }
            if !(s.attenuation_db_per_km >= 0.0) {
                return Err(Error::validation(
                    format!("fiber.segments[{i}].attenuation_db_per_km"),
                    "must be >= 0",
                ));
            }
            if !(s.amplitude >= 0.0) {
                return Err(Error::validation(format!("fiber.segments[{i}].amplitude"), "must be >= 0"));
            }
            if !s.temperature_c.is_finite() || !s.strain_ue.is_finite() {
                return Err(Error::validation(format!("fiber.segments[{i}]"), "non-finite environment"));
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length_m).sum()
    }

    /// Distances of the interior segment boundaries from the launch end.
    pub fn boundaries(&self) -> Vec<f64> {
        self.segments
            .iter()
            .scan(0.0, |z, s| {
                *z += s.length_m;
                Some(*z)
            })
            .take(self.segments.len().saturating_sub(1))
            .collect()
    }

    /// Index of the segment containing `z`; `None` outside the fiber.
    pub fn segment_index_at(&self, z: f64) -> Option<usize> {
        if z < 0.0 {
            return None;
        }
        let mut end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            end += s.length_m;
            if z < end {
                return Some(i);
            }
        }
        None
    }

    /// One-way loss from the launch end to `z`, in dB.
    pub fn loss_db_to(&self, z: f64) -> f64 {
        let mut remaining = z.max(0.0);
        let mut loss = 0.0;
        for s in &self.segments {
            let l = remaining.min(s.length_m);
            loss += s.attenuation_db_per_km * l / 1000.0;
            remaining -= l;
            if remaining <= 0.0 {
                break;
            }
        }
        loss
    }
}
