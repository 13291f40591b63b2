//! Spectral physics of the sensing chain.
//!
//! The local spontaneous Brillouin spectrum and the scanning interferometer
//! passband are both unit-peak Lorentzians. Scanning the interferometer across
//! the Brillouin line therefore records another Lorentzian, centred on the
//! Brillouin shift, whose half-width is the sum of the two half-widths.
//!
//! The Brillouin shift and half-width are affine in temperature and strain;
//! [`SensitivityModel`] holds the four coefficients and both directions of the
//! mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local Brillouin gain line: peak amplitude, centre shift and HWHM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrillouinLine {
    /// Relative peak amplitude.
    pub g0: f64,
    /// Brillouin frequency shift, MHz.
    pub nu_b: f64,
    /// Half-width at half maximum, MHz.
    pub omega_b: f64,
}

impl BrillouinLine {
    pub fn new(g0: f64, nu_b: f64, omega_b: f64) -> Result<Self> {
        let line = Self { g0, nu_b, omega_b };
        line.validate()?;
        Ok(line)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g0 >= 0.0) {
            return Err(Error::validation("g0", "must be >= 0"));
        }
        if !(self.nu_b > 0.0) {
            return Err(Error::validation("nu_b", "must be > 0"));
        }
        if !(self.omega_b > 0.0) {
            return Err(Error::NonPhysicalWidth {
                omega_b: self.omega_b,
            });
        }
        Ok(())
    }
}

#[inline]
fn lorentzian(offset: f64, hwhm: f64) -> f64 {
    let u = offset / hwhm;
    1.0 / (1.0 + u * u)
}

/// Brillouin gain spectrum at frequency `nu` (MHz).
pub fn eval_brillouin(line: &BrillouinLine, nu: f64) -> f64 {
    line.g0 * lorentzian(nu - line.nu_b, line.omega_b)
}

/// Scanning fiber Fabry-Perot interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpiEtalon {
    /// Free spectral range, MHz.
    pub fsr_mhz: f64,
    /// Passband HWHM, MHz.
    pub omega_fpi_mhz: f64,
    pub insertion_loss_db: f64,
    /// Neighbouring interference orders modelled on each side of the main
    /// passband. Zero gives a single Lorentzian.
    pub comb_orders: u32,
}

impl Default for FpiEtalon {
    fn default() -> Self {
        Self {
            fsr_mhz: 4020.0,
            omega_fpi_mhz: 60.0,
            insertion_loss_db: 2.25,
            comb_orders: 0,
        }
    }
}

impl FpiEtalon {
    pub fn validate(&self) -> Result<()> {
        if !(self.fsr_mhz > 0.0) {
            return Err(Error::validation("etalon.fsr_mhz", "must be > 0"));
        }
        if !(self.omega_fpi_mhz > 0.0 && self.omega_fpi_mhz < self.fsr_mhz / 2.0) {
            return Err(Error::validation(
                "etalon.omega_fpi_mhz",
                "must satisfy 0 < omega_fpi < fsr/2",
            ));
        }
        if !(self.insertion_loss_db >= 0.0) {
            return Err(Error::validation("etalon.insertion_loss_db", "must be >= 0"));
        }
        Ok(())
    }

    /// Linear power transmission factor from the insertion loss.
    pub fn insertion_factor(&self) -> f64 {
        10f64.powf(-self.insertion_loss_db / 10.0)
    }

    fn orders(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.comb_orders as i64;
        (-k..=k).map(move |m| m as f64 * self.fsr_mhz)
    }
}

/// Interferometer transmittance at `nu` MHz from the passband centre, before
/// insertion loss.
pub fn eval_fpi(etalon: &FpiEtalon, nu: f64) -> f64 {
    if etalon.comb_orders == 0 {
        return lorentzian(nu, etalon.omega_fpi_mhz);
    }
    let sum: f64 = etalon
        .orders()
        .map(|shift| lorentzian(nu - shift, etalon.omega_fpi_mhz))
        .sum();
    sum.min(1.0)
}

/// Power transmitted through the interferometer when its passband is centred
/// at `nu_center`, as a function of the scan position.
///
/// The amplitude is the line's `g0`: every scale factor (convolution
/// constant, losses, gain) is absorbed into it, only the shape is physics.
pub fn eval_transmission(line: &BrillouinLine, etalon: &FpiEtalon, nu_center: f64) -> f64 {
    let width = etalon.omega_fpi_mhz + line.omega_b;
    let offset = nu_center - line.nu_b;
    if etalon.comb_orders == 0 {
        return line.g0 * lorentzian(offset, width);
    }
    line.g0
        * etalon
            .orders()
            .map(|shift| lorentzian(offset - shift, width))
            .sum::<f64>()
}

/// Temperature and strain at a point of the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    /// °C
    pub temperature: f64,
    /// Microstrain.
    pub strain: f64,
}

impl Environment {
    pub fn new(temperature: f64, strain: f64) -> Self {
        Self {
            temperature,
            strain,
        }
    }
}

/// Affine dependence of the Brillouin shift and half-width on temperature and
/// strain around a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityModel {
    /// Shift at `t_ref` and zero strain, MHz.
    pub nu_ref: f64,
    /// HWHM at `t_ref` and zero strain, MHz.
    pub omega_ref: f64,
    pub t_ref: f64,
    /// MHz/°C
    pub c_nu_t: f64,
    /// MHz/µε
    pub c_nu_e: f64,
    /// MHz/°C
    pub c_w_t: f64,
    /// MHz/µε
    pub c_w_e: f64,
    /// Largest accepted 2-norm condition number of the coefficient matrix.
    pub max_condition: f64,
}

impl Default for SensitivityModel {
    fn default() -> Self {
        Self {
            nu_ref: 10850.0,
            omega_ref: 15.0,
            t_ref: 20.0,
            c_nu_t: 1.0,
            c_nu_e: 0.05,
            c_w_t: 0.1,
            c_w_e: 0.001,
            max_condition: 1e6,
        }
    }
}

impl SensitivityModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sensitivity.nu_ref", self.nu_ref),
            ("sensitivity.omega_ref", self.omega_ref),
        ];
        for (name, value) in fields {
            if !(value > 0.0) {
                return Err(Error::validation(name, "must be > 0"));
            }
        }
        let coefficients = [
            ("sensitivity.t_ref", self.t_ref),
            ("sensitivity.c_nu_t", self.c_nu_t),
            ("sensitivity.c_nu_e", self.c_nu_e),
            ("sensitivity.c_w_t", self.c_w_t),
            ("sensitivity.c_w_e", self.c_w_e),
        ];
        for (name, value) in coefficients {
            if !value.is_finite() {
                return Err(Error::validation(name, "must be finite"));
            }
        }
        if !(self.max_condition >= 1.0) {
            return Err(Error::validation("sensitivity.max_condition", "must be >= 1"));
        }
        Ok(())
    }

    fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.c_nu_t, self.c_nu_e], [self.c_w_t, self.c_w_e]]
    }

    /// 2-norm condition number of the coefficient matrix (infinite when
    /// singular).
    pub fn condition_number(&self) -> f64 {
        let [[a, b], [c, d]] = self.matrix();
        let frob2 = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        if det == 0.0 {
            return f64::INFINITY;
        }
        // Singular values of a 2x2 matrix from its Frobenius norm and determinant.
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
        let s_max = ((frob2 + disc) / 2.0).sqrt();
        let s_min = det / s_max;
        s_max / s_min
    }

    /// Inverse of the coefficient matrix, rows mapping (Δν, Δω) to (ΔT, Δε).
    pub fn inverse_matrix(&self) -> Result<[[f64; 2]; 2]> {
        let condition = self.condition_number();
        if !(condition <= self.max_condition) {
            return Err(Error::IllConditioned {
                condition,
                bound: self.max_condition,
            });
        }
        let [[a, b], [c, d]] = self.matrix();
        let det = a * d - b * c;
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }

    pub fn shift_at(&self, env: &Environment) -> f64 {
        self.nu_ref + self.c_nu_t * (env.temperature - self.t_ref) + self.c_nu_e * env.strain
    }

    pub fn width_at(&self, env: &Environment) -> f64 {
        self.omega_ref + self.c_w_t * (env.temperature - self.t_ref) + self.c_w_e * env.strain
    }

    /// Temperature implied by a measured shift when the strain is known.
    pub fn temperature_from_shift(&self, nu_b: f64, strain: f64) -> f64 {
        self.t_ref + (nu_b - self.nu_ref - self.c_nu_e * strain) / self.c_nu_t
    }

    /// Strain implied by a measured shift when the temperature is known.
    pub fn strain_from_shift(&self, nu_b: f64, temperature: f64) -> f64 {
        (nu_b - self.nu_ref - self.c_nu_t * (temperature - self.t_ref)) / self.c_nu_e
    }
}

pub fn line_from_environment(
    model: &SensitivityModel,
    env: &Environment,
    g0: f64,
) -> Result<BrillouinLine> {
    let omega_b = model.width_at(env);
    if !(omega_b > 0.0) {
        return Err(Error::NonPhysicalWidth { omega_b });
    }
    BrillouinLine::new(g0, model.shift_at(env), omega_b)
}

/// Solves the 2x2 sensitivity system for the environment that produced `line`.
pub fn environment_from_line(model: &SensitivityModel, line: &BrillouinLine) -> Result<Environment> {
    let inv = model.inverse_matrix()?;
    let d_nu = line.nu_b - model.nu_ref;
    let d_w = line.omega_b - model.omega_ref;
    Ok(Environment {
        temperature: model.t_ref + inv[0][0] * d_nu + inv[0][1] * d_w,
        strain: inv[1][0] * d_nu + inv[1][1] * d_w,
    })
}
