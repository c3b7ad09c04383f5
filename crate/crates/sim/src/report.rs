//! Metric rows, the transport byte model, and CSV/JSON output.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Serialize, Serializer};

use crate::config::Transport;

/// Framing overhead applied to conventional transfers.
pub const CONVENTIONAL_OVERHEAD: f64 = 0.05;
/// Bytes per complex symbol on the semantic transport (two 64-bit reals).
pub const SEMANTIC_SYMBOL_BYTES: usize = 2 * 64 / 8;

/// Bytes of a conventional transfer of `payload` bytes: payload plus 5% framing.
pub fn conventional_bytes(payload: usize) -> usize {
    (payload as f64 * (1.0 + CONVENTIONAL_OVERHEAD)).ceil() as usize
}

/// Bytes of a semantic transfer of `symbols` complex symbols plus its
/// authentication bundle on the control channel.
pub fn semantic_bytes(symbols: usize, bundle: usize) -> usize {
    symbols * SEMANTIC_SYMBOL_BYTES + bundle
}

/// Bytes to move a blob of `blob_len` bytes carrying `reals` scalars.
pub fn transfer_bytes(transport: Transport, blob_len: usize, reals: usize, bundle: usize) -> usize {
    match transport {
        Transport::Conventional => conventional_bytes(blob_len),
        Transport::Semantic => semantic_bytes(reals.div_ceil(2), bundle),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Update,
    Sync,
    Communication,
}

/// One metric point. Optional coordinates are empty in CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub seed: u64,
    pub config_hash: String,
    pub phase: Phase,
    pub round: Option<usize>,
    pub device: Option<String>,
    pub metric: String,
    #[serde(serialize_with = "real_opt")]
    pub snr_db: Option<f64>,
    pub kb_prefix: Option<usize>,
    pub feature_prefix: Option<usize>,
    #[serde(serialize_with = "real")]
    pub value: f64,
    /// Observations behind `value`.
    pub samples: Option<usize>,
    /// Closed-form prediction `value` is compared with.
    #[serde(serialize_with = "real_opt")]
    pub predicted: Option<f64>,
    pub detail: String,
}

/// Column order of the CSV report.
pub const COLUMNS: [&str; 13] = [
    "seed",
    "config_hash",
    "phase",
    "round",
    "device",
    "metric",
    "snr_db",
    "kb_prefix",
    "feature_prefix",
    "value",
    "samples",
    "predicted",
    "detail",
];

// Non-finite reals are written as text so JSON keeps them.
fn real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

fn real_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => real(v, s),
        None => s.serialize_none(),
    }
}

/// Entry of the phase event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub phase: Phase,
    pub round: Option<usize>,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<MetricRow>,
    pub events: Vec<Event>,
}

/// Builds rows stamped with the run's seed and config hash.
#[derive(Debug, Clone)]
pub struct RowBuilder {
    pub seed: u64,
    pub config_hash: String,
}

impl RowBuilder {
    pub fn row(&self, phase: Phase, metric: &str, value: f64) -> MetricRow {
        MetricRow {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            phase,
            round: None,
            device: None,
            metric: metric.to_owned(),
            snr_db: None,
            kb_prefix: None,
            feature_prefix: None,
            value,
            samples: None,
            predicted: None,
            detail: String::new(),
        }
    }
}

impl MetricRow {
    pub fn round(mut self, round: usize) -> Self {
        self.round = Some(round);
        self
    }

    pub fn device(mut self, id: &str) -> Self {
        self.device = Some(id.to_owned());
        self
    }

    pub fn point(mut self, snr_db: f64, kb_prefix: usize, feature_prefix: usize) -> Self {
        self.snr_db = Some(snr_db);
        self.kb_prefix = Some(kb_prefix);
        self.feature_prefix = Some(feature_prefix);
        self
    }

    pub fn snr(mut self, snr_db: f64) -> Self {
        self.snr_db = Some(snr_db);
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = Some(n);
        self
    }

    pub fn predicted(mut self, p: f64) -> Self {
        self.predicted = Some(p);
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

/// CSV text of `rows`: a header, then one line per row.
pub fn to_csv(rows: &[MetricRow]) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn to_json(report: &RunReport) -> io::Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(report)?;
    out.push(b'\n');
    Ok(out)
}

/// Writes the CSV and JSON forms, creating parent directories.
pub fn emit_report(report: &RunReport, csv_path: &Path, json_path: &Path) -> io::Result<()> {
    for (path, bytes) in [
        (csv_path, to_csv(&report.rows)?),
        (json_path, to_json(report)?),
    ] {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
    }
    Ok(())
}
