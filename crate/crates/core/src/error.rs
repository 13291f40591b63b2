use thiserror::Error;

use crate::calibration::Branch;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-physical Brillouin width {omega_b} MHz (environment outside linear range)")]
    NonPhysicalWidth { omega_b: f64 },

    #[error("sensitivity matrix is ill-conditioned (condition number {condition:.3e} > {bound:.3e})")]
    IllConditioned { condition: f64, bound: f64 },

    #[error("range bin {bin} lies outside the fiber")]
    OutOfRange { bin: usize },

    #[error("only {found} peaks found, at least 3 are required")]
    TooFewPeaks { found: usize },

    #[error("cubic fit needs at least 4 points, got {got}")]
    InsufficientPoints { got: usize },

    #[error("fitted branch polynomial is not monotone over [{v_min}, {v_max}] V")]
    NonMonotone { v_min: f64, v_max: f64 },

    #[error("voltage {voltage} V outside calibrated range [{v_min}, {v_max}] V")]
    OutOfCalibratedRange { voltage: f64, v_min: f64, v_max: f64 },

    #[error("frequency {frequency} MHz outside calibrated span [{f_min}, {f_max}] MHz")]
    FrequencyOutOfRange { frequency: f64, f_min: f64, f_max: f64 },

    #[error("scan branch {scan} has no matching calibration branch (map provides {available})")]
    BranchMismatch { scan: Branch, available: String },

    #[error("histogram has no dark region past the fiber end")]
    NoDarkRegion,

    #[error("spectrum has {got} points, at least {need} are required")]
    TooFewSpectrumPoints { got: usize, need: usize },

    #[error("Lorentzian fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("spectral peak at {nu_b:.1} MHz lies within one half-width of the scan edge")]
    DegenerateSpectrum { nu_b: f64 },

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPhysicalWidth { .. } => "NonPhysicalWidth",
            Error::IllConditioned { .. } => "IllConditioned",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::TooFewPeaks { .. } => "TooFewPeaks",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::NonMonotone { .. } => "NonMonotone",
            Error::OutOfCalibratedRange { .. } => "OutOfCalibratedRange",
            Error::FrequencyOutOfRange { .. } => "FrequencyOutOfRange",
            Error::BranchMismatch { .. } => "BranchMismatch",
            Error::NoDarkRegion => "NoDarkRegion",
            Error::TooFewSpectrumPoints { .. } => "TooFewSpectrumPoints",
            Error::NotConverged { .. } => "NotConverged",
            Error::DegenerateSpectrum { .. } => "DegenerateSpectrum",
            Error::Validation { .. } => "ValidationError",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }

    /// True for errors caused by bad configuration or input files rather than
    /// by a failing processing stage.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Parse(_))
    }
}
