//! Configuration, file formats and experiment orchestration.

mod config;
mod run;
mod tables;

pub use config::{hash_bytes, load_config, parse_config, CalibrationSettings, ExperimentConfig, SEED_ENV};
pub use run::{
    calibrate_from_config, calibration_trace, load_map, map_from_toml, map_to_toml, plan_schedule, provenance,
    retrieve_from_config, simulate_from_config, summarize, truth_map, BoundarySummary, RoundtripSummary,
    RunManifest, SegmentSummary, MAP_SCHEMA,
};
pub use tables::{
    read_histogram, read_profile, read_trace, write_histogram, write_profile, write_trace, Header, Provenance,
    HISTOGRAM_SCHEMA, PROFILE_SCHEMA, TRACE_SCHEMA,
};
