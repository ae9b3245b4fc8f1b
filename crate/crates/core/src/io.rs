//! CSV ingestion, the bundled temperature fixture, report serialization and
//! the on-disk quantile cache.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{AnalysisReport, Segments};
use crate::error::{Error, Result};
use crate::gp_limit::{NullDistribution, NullSpec};
use crate::series::{DetectionConfig, Execution, TimeSeries};

/// Version of the JSON report and cache layouts.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable overriding the quantile cache directory.
pub const CACHE_DIR_ENV: &str = "JOINPOINT_CACHE_DIR";

/// Annual global land–ocean temperature anomalies, 1850–2023.
pub const NOAA_FIXTURE_CSV: &str = include_str!("../data/noaa_global_land_ocean_1850_2023.csv");

pub fn noaa_fixture() -> TimeSeries {
    parse_series(NOAA_FIXTURE_CSV.as_bytes(), &SeriesFileSpec::labelled("year", "anomaly"))
        .expect("bundled fixture parses")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Column {
    Name(String),
    /// 0-based position.
    Index(usize),
}

impl From<&str> for Column {
    /// Digits select by position, anything else by header name.
    fn from(s: &str) -> Self {
        s.parse().map(Column::Index).unwrap_or_else(|_| Column::Name(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeriesFileSpec {
    pub path: PathBuf,
    pub label_column: Option<Column>,
    pub value_column: Column,
    pub has_header: bool,
    pub delimiter: u8,
}

impl SeriesFileSpec {
    /// Header row with named label and value columns.
    pub fn labelled(label: &str, value: &str) -> Self {
        Self {
            path: PathBuf::new(),
            label_column: Some(label.into()),
            value_column: value.into(),
            has_header: true,
            delimiter: b',',
        }
    }

    /// Column layout guessed from the first line: a header is assumed when
    /// its last field is not numeric; with two or more columns the first
    /// holds labels and the second values.
    pub fn sniff(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let text = std::fs::read_to_string(&path)?;
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        let fields: Vec<&str> = first.split(',').map(str::trim).collect();
        let has_header = fields
            .last()
            .is_some_and(|f| f.trim_matches('"').parse::<f64>().is_err());
        let (label_column, value_column) = if fields.len() >= 2 {
            (Some(Column::Index(0)), Column::Index(1))
        } else {
            (None, Column::Index(0))
        };
        Ok(Self {
            path,
            label_column,
            value_column,
            has_header,
            delimiter: b',',
        })
    }
}

pub fn read_series(spec: &SeriesFileSpec) -> Result<TimeSeries> {
    let file = std::fs::File::open(&spec.path)?;
    parse_series(file, spec)
}

fn column_index(col: &Column, headers: Option<&csv::StringRecord>) -> Result<usize> {
    match col {
        Column::Index(i) => Ok(*i),
        Column::Name(name) => headers
            .and_then(|h| h.iter().position(|f| f.trim() == name))
            .ok_or_else(|| Error::Parse {
                line: 1,
                column: 0,
                message: format!("no column named {name:?}"),
            }),
    }
}

/// [`read_series`] on any reader; `spec.path` is ignored.
pub fn parse_series(input: impl Read, spec: &SeriesFileSpec) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .delimiter(spec.delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = if spec.has_header {
        Some(rdr.headers().map_err(csv_error)?.clone())
    } else {
        None
    };
    let value_col = column_index(&spec.value_column, headers.as_ref())?;
    let label_col = spec
        .label_column
        .as_ref()
        .map(|c| column_index(c, headers.as_ref()))
        .transpose()?;

    let mut values = Vec::new();
    let mut first_label = None;
    let mut prev_label: Option<i64> = None;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |col: usize| {
            record.get(col).ok_or_else(|| Error::Parse {
                line,
                column: col + 1,
                message: "missing field".into(),
            })
        };
        let raw = field(value_col)?;
        let value: f64 = raw.parse().map_err(|_| Error::Parse {
            line,
            column: value_col + 1,
            message: format!("not a number: {raw:?}"),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                line,
                column: value_col + 1,
                message: format!("non-finite value {raw:?}"),
            });
        }
        if let Some(col) = label_col {
            let raw = field(col)?;
            let label: i64 = raw.parse().map_err(|_| Error::Parse {
                line,
                column: col + 1,
                message: format!("not an integer label: {raw:?}"),
            })?;
            if let Some(p) = prev_label {
                if label <= p {
                    return Err(Error::NonMonotoneLabels { line });
                }
                if label != p + 1 {
                    return Err(Error::GapInLabels {
                        line,
                        expected: p + 1,
                        found: label,
                    });
                }
            }
            first_label.get_or_insert(label);
            prev_label = Some(label);
        }
        values.push(value);
    }
    TimeSeries::from_values(values, first_label)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub k: usize,
    pub label: Option<i64>,
    #[serde(rename = "J")]
    pub j: f64,
}

/// The JSON report layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub config: DetectionConfig,
    pub null: crate::detection::NullSummary,
    pub n: usize,
    pub tau_hat: usize,
    pub tau_label: Option<i64>,
    pub statistic: f64,
    pub p_value: f64,
    pub detected: bool,
    pub critical_values: BTreeMap<String, f64>,
    pub segments: Segments,
    pub profile: Vec<ProfileRow>,
}

impl From<&AnalysisReport> for ReportDocument {
    fn from(r: &AnalysisReport) -> Self {
        let label = |k: usize| r.start_label.map(|s| s + k as i64 - 1);
        Self {
            schema_version: SCHEMA_VERSION,
            config: r.config.clone(),
            null: r.null.clone(),
            n: r.n,
            tau_hat: r.tau_hat(),
            tau_label: r.tau_label(),
            statistic: r.statistic,
            p_value: r.p_value,
            detected: r.detected,
            critical_values: r.critical_values.clone(),
            segments: r.segments.clone(),
            profile: r
                .profile
                .entries
                .iter()
                .map(|e| ProfileRow {
                    k: e.k,
                    label: label(e.k),
                    j: e.j,
                })
                .collect(),
        }
    }
}

pub fn parse_report_json(bytes: &[u8]) -> Result<ReportDocument> {
    Ok(serde_json::from_slice(bytes)?)
}

/// `x` rounded to four significant figures.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.9996 -> 10.000).
    if s.trim_start_matches('-').replace('.', "").trim_start_matches('0').len() > 4 && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn percent(q: f64) -> String {
    format!("{}%", (q * 1000.0).round() / 10.0)
}

pub fn detection_message(report: &AnalysisReport) -> String {
    let level = percent(1.0 - report.config.level);
    if report.detected {
        format!("changepoint detected at {level} level")
    } else {
        format!("no changepoint detected at {level} level")
    }
}

fn write_text(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let tau = match r.tau_label() {
        Some(l) => format!("{l} (t = {})", r.tau_hat()),
        None => format!("t = {}", r.tau_hat()),
    };
    let confidence = 1.0 - r.config.level;
    let _ = writeln!(out, "{}", detection_message(r));
    let _ = writeln!(out, "n: {}  delta: {}", r.n, r.config.delta);
    let _ = writeln!(out, "tau_hat: {tau}");
    let _ = writeln!(out, "statistic: {}", sig4(r.statistic));
    if let Some(cv) = r.critical_value(confidence) {
        let _ = writeln!(out, "{} quantile: {}", percent(confidence), sig4(cv));
    }
    let _ = writeln!(out, "p_value: {}", sig4(r.p_value));
    for (name, seg) in [("left", &r.segments.left), ("right", &r.segments.right)] {
        let _ = write!(out, "{name}: slope {}  intercept(t) {}", sig4(seg.slope), sig4(seg.intercept_t));
        if let Some(b) = seg.intercept_label {
            let _ = write!(out, "  intercept(label) {}", sig4(b));
        }
        out.push('\n');
    }
    let cvs: Vec<String> = crate::gp_limit::STANDARD_LEVELS
        .iter()
        .filter_map(|&q| Some(format!("{} {}", percent(q), sig4(r.critical_value(q)?))))
        .collect();
    let _ = writeln!(out, "critical values: {}", cvs.join(", "));
    let _ = writeln!(
        out,
        "null: {} with {} replicates, seed {}",
        r.null.method.as_str(),
        r.null.replicates,
        r.null.seed
    );
    out
}

fn write_csv(r: &AnalysisReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "label", "J"]).map_err(csv_error)?;
    for row in ReportDocument::from(r).profile {
        let label = row.label.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([row.k.to_string(), label, format!("{:?}", row.j)])
            .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_report(report: &AnalysisReport, format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(&ReportDocument::from(report))?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ReportFormat::Csv => write_csv(report),
        ReportFormat::Text => Ok(write_text(report).into_bytes()),
    }
}

/// Quantile-table text for one null distribution, one row per `δ`.
pub fn format_quantile_rows(tables: &[crate::gp_limit::QuantileTable]) -> String {
    let mut out = String::new();
    if let Some(first) = tables.first() {
        let head: Vec<String> = first.levels.iter().map(|&q| format!("{:>8}", percent(q))).collect();
        let _ = writeln!(out, "{:<8}{}", "delta", head.join(""));
    }
    for t in tables {
        let cells: Vec<String> = t.values.iter().map(|v| format!("{v:>8.3}")).collect();
        let _ = writeln!(out, "{:<8}{}", t.delta, cells.join(""));
        let ses: Vec<String> = t.standard_errors.iter().map(|v| format!("{v:>8.3}")).collect();
        let _ = writeln!(out, "{:<8}{}", "  (se)", ses.join(""));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub spec: NullSpec,
    pub schema_version: u32,
    pub code_version: String,
}

impl CacheKey {
    pub fn new(spec: NullSpec) -> Self {
        Self {
            spec,
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn file_name(&self) -> String {
        let json = serde_json::to_vec(self).expect("key serializes");
        format!("{}.json", hex_digest(&json))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: CacheKey,
    draws_sha256: String,
    levels: Vec<f64>,
    quantiles: Vec<f64>,
    distribution: NullDistribution,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn draws_digest(draws: &[f64]) -> String {
    let bytes: Vec<u8> = draws.iter().flat_map(|d| d.to_le_bytes()).collect();
    hex_digest(&bytes)
}

/// Simulated null distributions stored as one JSON file per key.
#[derive(Clone, Debug)]
pub struct QuantileCache {
    dir: PathBuf,
}

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Directory from [`CACHE_DIR_ENV`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    /// Stored distribution for `key`; unreadable, mismatched or corrupted
    /// entries count as misses.
    pub fn get(&self, key: &CacheKey) -> Option<NullDistribution> {
        let bytes = std::fs::read(self.path_for(key)).ok()?;
        let entry: CacheEntry = serde_json::from_slice(&bytes).ok()?;
        (entry.key == *key && entry.draws_sha256 == draws_digest(&entry.distribution.draws))
            .then_some(entry.distribution)
    }

    pub fn put(&self, key: &CacheKey, dist: &NullDistribution) -> Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        let levels = crate::gp_limit::STANDARD_LEVELS.to_vec();
        let entry = CacheEntry {
            key: key.clone(),
            draws_sha256: draws_digest(&dist.draws),
            quantiles: levels.iter().map(|&q| dist.quantile(q)).collect::<Result<_>>()?,
            levels,
            distribution: dist.clone(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, &entry)?;
        tmp.persist(self.path_for(key)).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn get_or_simulate(&self, spec: &NullSpec, exec: Execution) -> Result<NullDistribution> {
        let key = CacheKey::new(spec.clone());
        if let Some(d) = self.get(&key) {
            return Ok(d);
        }
        let d = spec.simulate(exec)?;
        self.put(&key, &d)?;
        Ok(d)
    }
}

/// Simulate `spec`, going through `cache` when one is given.
pub fn null_distribution(
    spec: &NullSpec,
    cache: Option<&QuantileCache>,
    exec: Execution,
) -> Result<NullDistribution> {
    match cache {
        Some(c) => c.get_or_simulate(spec, exec),
        None => spec.simulate(exec),
    }
}
