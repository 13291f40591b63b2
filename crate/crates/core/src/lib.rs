//! Digital twin of a photon-counting Brillouin optical time-domain
//! reflectometer with a scanning fiber Fabry-Perot interferometer.
//!
//! The forward chain turns a fiber description into a photon-count histogram
//! over (scan step, range bin). The inverse chain calibrates the PZT-driven
//! interferometer scan, fits a Lorentzian to every range bin's spectrum and
//! maps the fitted Brillouin shift and width to temperature and strain.

pub mod calibration;
pub mod error;
pub mod io;
pub mod model;
pub mod retrieval;
pub mod scan;

pub use calibration::{Branch, CalibrationTrace, HysteresisMap, PztModel};
pub use error::{Error, Result};
pub use io::ExperimentConfig;
pub use model::{
    environment_from_line, eval_brillouin, eval_fpi, eval_transmission, line_from_environment, BrillouinLine,
    Environment, FpiEtalon, SensitivityModel,
};
pub use retrieval::{retrieve_profile, FitResult, QualityFlags, RetrievalOptions, RetrievedProfile};
pub use scan::{
    simulate_histogram, Execution, FiberProfile, FiberSegment, InstrumentConfig, ScanHistogram, ScanSchedule,
};
