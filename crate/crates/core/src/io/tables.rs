//! Versioned CSV codecs. Every file starts with `#` header lines carrying the
//! schema version and provenance, followed by a regular CSV table.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::{Branch, CalibrationTrace};
use crate::error::{Error, Result};
use crate::retrieval::{QualityFlags, RetrievedBin, RetrievedProfile};
use crate::scan::{HistogramMeta, ScanHistogram};

pub const TRACE_SCHEMA: &str = "botdr-trace/1";
pub const HISTOGRAM_SCHEMA: &str = "botdr-histogram/1";
pub const PROFILE_SCHEMA: &str = "botdr-profile/1";

/// `key: value` pairs from the leading comment block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub entries: Vec<(String, String)>,
}

impl Header {
    fn new(schema: &str) -> Self {
        Self {
            entries: vec![("schema".into(), schema.into())],
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("missing `# {key}:` header line")))
    }

    fn write(&self, out: &mut Vec<u8>) {
        for (k, v) in &self.entries {
            // Writes into a Vec cannot fail.
            let _ = writeln!(out, "# {k}: {v}");
        }
    }

    /// Reads the header block and checks the schema line.
    pub fn parse(text: &str, schema: &str) -> Result<Self> {
        let entries: Vec<(String, String)> = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .filter_map(|l| {
                let (k, v) = l.trim_start_matches('#').split_once(':')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .collect();
        let header = Self { entries };
        match header.get("schema") {
            Some(s) if s == schema => Ok(header),
            Some(s) => Err(Error::Parse(format!("expected schema `{schema}`, found `{s}`"))),
            None => Err(Error::Parse(format!("missing schema header, expected `{schema}`"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.require("seed")?
            .parse()
            .map_err(|_| Error::Parse("seed header is not an unsigned integer".into()))
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse(format!("CSV line {}: {e}", pos.line())),
        None => Error::Parse(format!("CSV: {e}")),
    }
}

fn write_rows<R: Serialize>(header: &Header, rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    header.write(&mut out);
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut out);
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn read_rows<R: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<R>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(csv_error)
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    voltage_v: f64,
    power: f64,
}

/// Provenance written into output headers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

pub fn write_trace(trace: &CalibrationTrace, prov: &Provenance) -> Result<Vec<u8>> {
    let header = Header::new(TRACE_SCHEMA)
        .with("branch", trace.branch)
        .with("config_hash", &prov.config_hash)
        .with("seed", prov.seed);
    write_rows(
        &header,
        trace.samples.iter().map(|&(voltage_v, power)| TraceRow { voltage_v, power }),
    )
}

/// Reads a trace. `branch` overrides the header; one of the two must be
/// present.
pub fn read_trace(text: &str, branch: Option<Branch>) -> Result<CalibrationTrace> {
    let header = Header::parse(text, TRACE_SCHEMA)?;
    let branch = match (branch, header.get("branch")) {
        (Some(b), _) => b,
        (None, Some(s)) => s.parse()?,
        (None, None) => return Err(Error::Parse("trace has no branch header and none was given".into())),
    };
    let rows: Vec<TraceRow> = read_rows(text)?;
    CalibrationTrace::new(branch, rows.into_iter().map(|r| (r.voltage_v, r.power)).collect())
}

#[derive(Serialize, Deserialize)]
struct HistogramRow {
    step_index: usize,
    frequency_mhz: f64,
    bin_index: usize,
    range_m: f64,
    counts: u64,
}

/// Long-format histogram. The frequency column holds the scheduled
/// (nominal) passband position; retrieval recomputes frequencies from the
/// voltages in the header and a calibration map.
pub fn write_histogram(hist: &ScanHistogram) -> Result<Vec<u8>> {
    let meta = &hist.meta;
    let meta_json = serde_json::to_string(meta).map_err(|e| Error::Parse(e.to_string()))?;
    let header = Header::new(HISTOGRAM_SCHEMA)
        .with("config_hash", &meta.config_hash)
        .with("seed", meta.seed)
        .with("branch", meta.schedule.branch)
        .with("n_steps", meta.n_steps())
        .with("n_bins", meta.n_bins)
        .with(
            "voltages",
            meta.schedule.voltages.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
        )
        .with("meta", meta_json);
    let freqs = meta.schedule.nominal_frequencies();
    let ranges: Vec<f64> = (0..meta.n_bins).map(|b| meta.bin_range(b)).collect();
    let rows = (0..meta.n_steps()).flat_map(|step| {
        let freqs = &freqs;
        let ranges = &ranges;
        (0..meta.n_bins).map(move |bin| HistogramRow {
            step_index: step,
            frequency_mhz: freqs[step],
            bin_index: bin,
            range_m: ranges[bin],
            counts: hist.get(step, bin),
        })
    });
    write_rows(&header, rows)
}

pub fn read_histogram(text: &str) -> Result<ScanHistogram> {
    let header = Header::parse(text, HISTOGRAM_SCHEMA)?;
    let meta: HistogramMeta =
        serde_json::from_str(header.require("meta")?).map_err(|e| Error::Parse(format!("meta header: {e}")))?;
    meta.validate()?;
    if let Some(b) = header.get("branch") {
        if b != meta.schedule.branch.as_str() {
            return Err(Error::Parse(format!(
                "branch header `{b}` disagrees with the recorded {} schedule",
                meta.schedule.branch
            )));
        }
    }
    let rows: Vec<HistogramRow> = read_rows(text)?;
    let n_cells = meta.n_steps() * meta.n_bins;
    if rows.len() != n_cells {
        return Err(Error::Parse(format!("expected {n_cells} histogram rows, found {}", rows.len())));
    }
    let mut counts = vec![None; n_cells];
    for r in rows {
        if r.step_index >= meta.n_steps() || r.bin_index >= meta.n_bins {
            return Err(Error::Parse(format!("cell ({}, {}) out of bounds", r.step_index, r.bin_index)));
        }
        let slot = &mut counts[r.step_index * meta.n_bins + r.bin_index];
        if slot.replace(r.counts).is_some() {
            return Err(Error::Parse(format!("duplicate cell ({}, {})", r.step_index, r.bin_index)));
        }
    }
    let counts = counts.into_iter().map(|c| c.expect("all cells seen")).collect();
    ScanHistogram::new(meta, counts)
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    bin_index: usize,
    range_m: f64,
    amplitude: Option<f64>,
    nu_b_mhz: Option<f64>,
    sigma_nu_mhz: Option<f64>,
    omega_b_mhz: Option<f64>,
    sigma_omega_mhz: Option<f64>,
    temperature_c: Option<f64>,
    sigma_t_c: Option<f64>,
    strain_ue: Option<f64>,
    sigma_strain_ue: Option<f64>,
    flags: String,
}

/// Missing values are written as empty fields, never as NaN.
pub fn write_profile(profile: &RetrievedProfile) -> Result<Vec<u8>> {
    let mut header = Header::new(PROFILE_SCHEMA)
        .with("config_hash", &profile.config_hash)
        .with("seed", profile.seed);
    if let Some(bg) = profile.background {
        header = header.with("background_counts", bg);
    }
    let finite = |x: Option<f64>| x.filter(|v| v.is_finite());
    write_rows(
        &header,
        profile.bins.iter().map(|b| ProfileRow {
            bin_index: b.bin_index,
            range_m: b.range_m,
            amplitude: finite(b.amplitude),
            nu_b_mhz: finite(b.nu_b),
            sigma_nu_mhz: finite(b.sigma_nu),
            omega_b_mhz: finite(b.omega_b),
            sigma_omega_mhz: finite(b.sigma_omega),
            temperature_c: finite(b.temperature),
            sigma_t_c: finite(b.sigma_t),
            strain_ue: finite(b.strain),
            sigma_strain_ue: finite(b.sigma_strain),
            flags: b.flags.to_string(),
        }),
    )
}

/// Reads a profile back. Fit details are not stored, so `fit` is `None`.
pub fn read_profile(text: &str) -> Result<RetrievedProfile> {
    let header = Header::parse(text, PROFILE_SCHEMA)?;
    let rows: Vec<ProfileRow> = read_rows(text)?;
    let bins = rows
        .into_iter()
        .map(|r| {
            Ok(RetrievedBin {
                bin_index: r.bin_index,
                range_m: r.range_m,
                amplitude: r.amplitude,
                nu_b: r.nu_b_mhz,
                sigma_nu: r.sigma_nu_mhz,
                omega_b: r.omega_b_mhz,
                sigma_omega: r.sigma_omega_mhz,
                temperature: r.temperature_c,
                sigma_t: r.sigma_t_c,
                strain: r.strain_ue,
                sigma_strain: r.sigma_strain_ue,
                flags: r.flags.parse::<QualityFlags>()?,
                fit: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let background = header
        .get("background_counts")
        .map(|s| s.parse().map_err(|_| Error::Parse("bad background_counts header".into())))
        .transpose()?;
    Ok(RetrievedProfile {
        bins,
        background,
        seed: header.seed()?,
        config_hash: header.get("config_hash").unwrap_or_default().to_string(),
    })
}
