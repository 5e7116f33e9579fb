//! Measurement ingestion: CSV parsing, cleaning, outlier removal and the
//! link-budget inversion from RSSI to path loss.

mod forest;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{
    average_path_length, flag_top_scores, isolation_forest_outliers, ForestConfig, IsolationForest,
    OutlierSplit,
};

/// Column names of the measurement CSV, in canonical order.
pub const MEASUREMENT_COLUMNS: [&str; 10] = [
    "timestamp",
    "device_id",
    "sf",
    "rssi",
    "snr",
    "temperature",
    "humidity",
    "pressure",
    "pm25",
    "co2",
];

/// One timestamped uplink with its radio metadata and environmental readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub timestamp: DateTime<Utc>,
    pub device_id: String,
    pub spreading_factor: u8,
    /// dBm
    pub rssi: f64,
    /// dB
    pub snr: f64,
    /// °C
    pub temperature: f64,
    /// % relative
    pub humidity: f64,
    /// hPa
    pub pressure: f64,
    /// µg/m³
    pub pm25: f64,
    /// ppm
    pub co2: f64,
}

/// Numeric measurement fields usable as outlier-detection features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementField {
    Rssi,
    Snr,
    Temperature,
    Humidity,
    Pressure,
    Pm25,
    Co2,
}

impl MeasurementField {
    pub const ALL: [MeasurementField; 7] = [
        MeasurementField::Rssi,
        MeasurementField::Snr,
        MeasurementField::Temperature,
        MeasurementField::Humidity,
        MeasurementField::Pressure,
        MeasurementField::Pm25,
        MeasurementField::Co2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasurementField::Rssi => "rssi",
            MeasurementField::Snr => "snr",
            MeasurementField::Temperature => "temperature",
            MeasurementField::Humidity => "humidity",
            MeasurementField::Pressure => "pressure",
            MeasurementField::Pm25 => "pm25",
            MeasurementField::Co2 => "co2",
        }
    }

    pub fn value(self, record: &MeasurementRecord) -> f64 {
        match self {
            MeasurementField::Rssi => record.rssi,
            MeasurementField::Snr => record.snr,
            MeasurementField::Temperature => record.temperature,
            MeasurementField::Humidity => record.humidity,
            MeasurementField::Pressure => record.pressure,
            MeasurementField::Pm25 => record.pm25,
            MeasurementField::Co2 => record.co2,
        }
    }
}

impl fmt::Display for MeasurementField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeasurementField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MeasurementField::ALL
            .into_iter()
            .find(|f| f.name() == s.trim())
            .ok_or_else(|| Error::invalid("feature", format!("unknown measurement field '{s}'")))
    }
}

/// Geometry of one end device's link to the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub device_id: String,
    #[serde(rename = "distance_m")]
    pub distance: f64,
    pub brick_walls: u32,
    pub wood_walls: u32,
}

impl LinkProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(Error::invalid(
                "distance_m",
                format!(
                    "device {}: distance must be positive, got {}",
                    self.device_id, self.distance
                ),
            ));
        }
        Ok(())
    }
}

/// Radio constants used to turn RSSI into path loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadioConfig {
    #[serde(rename = "tx_power_dbm")]
    pub tx_power: f64,
    #[serde(rename = "tx_gain_dbi")]
    pub tx_gain: f64,
    #[serde(rename = "rx_gain_dbi")]
    pub rx_gain: f64,
    #[serde(rename = "frequency_mhz")]
    pub frequency: f64,
    #[serde(rename = "d0_m")]
    pub reference_distance: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power: 14.0,
            tx_gain: 0.0,
            rx_gain: 0.0,
            frequency: 868.0,
            reference_distance: 1.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0) {
            return Err(Error::invalid("frequency_mhz", "must be positive"));
        }
        if !(self.reference_distance > 0.0) {
            return Err(Error::invalid("d0_m", "must be positive"));
        }
        let all = [self.tx_power, self.tx_gain, self.rx_gain];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("radio", "power and gains must be finite"));
        }
        Ok(())
    }

    /// Transmit power plus both antenna gains, the link budget before loss.
    pub fn eirp_plus_rx_gain(&self) -> f64 {
        self.tx_power + self.tx_gain + self.rx_gain
    }
}

/// Path loss in dB implied by a received RSSI.
pub fn compute_path_loss(record: &MeasurementRecord, radio: &RadioConfig) -> f64 {
    radio.eirp_plus_rx_gain() - record.rssi
}

/// How malformed CSV rows are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowErrorPolicy {
    /// Drop the row, keep a note of it, continue.
    #[default]
    Skip,
    /// Fail on the first bad row.
    Abort,
}

/// A rejected CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<MeasurementRecord>,
    pub rejected: Vec<RowIssue>,
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(format!("timestamp '{s}' is not ISO-8601"))
}

fn parse_real(column: &str, raw: &str) -> std::result::Result<f64, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(format!("missing value for '{column}'"));
    }
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("'{column}' value '{raw}' is not a number"))?;
    if !v.is_finite() {
        return Err(format!("'{column}' value '{raw}' is not finite"));
    }
    Ok(v)
}

fn parse_row(fields: &[&str; 10]) -> std::result::Result<MeasurementRecord, String> {
    let timestamp = parse_timestamp(fields[0])?;
    let device_id = fields[1].trim();
    if device_id.is_empty() {
        return Err("missing device_id".into());
    }
    let sf_raw = fields[2].trim();
    let spreading_factor: u8 = sf_raw
        .parse()
        .map_err(|_| format!("'sf' value '{sf_raw}' is not an integer"))?;
    if !(7..=12).contains(&spreading_factor) {
        return Err(format!("spreading factor {spreading_factor} outside 7..=12"));
    }
    let rec = MeasurementRecord {
        timestamp,
        device_id: device_id.to_string(),
        spreading_factor,
        rssi: parse_real("rssi", fields[3])?,
        snr: parse_real("snr", fields[4])?,
        temperature: parse_real("temperature", fields[5])?,
        humidity: parse_real("humidity", fields[6])?,
        pressure: parse_real("pressure", fields[7])?,
        pm25: parse_real("pm25", fields[8])?,
        co2: parse_real("co2", fields[9])?,
    };
    if !(0.0..=100.0).contains(&rec.humidity) {
        return Err(format!("humidity {} outside [0, 100]", rec.humidity));
    }
    if rec.pm25 < 0.0 {
        return Err(format!("pm25 {} is negative", rec.pm25));
    }
    if rec.co2 < 0.0 {
        return Err(format!("co2 {} is negative", rec.co2));
    }
    Ok(rec)
}

/// Parses a header-bearing measurement CSV.
///
/// Column order is free; the ten names in [`MEASUREMENT_COLUMNS`] must all
/// be present. Bad rows are either skipped (and listed in the outcome) or
/// abort the parse, depending on `policy`.
pub fn parse_measurements<R: Read>(source: R, policy: RowErrorPolicy) -> Result<ParseOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 10];
    let mut missing = Vec::new();
    for (slot, name) in index.iter_mut().zip(MEASUREMENT_COLUMNS) {
        match headers.iter().position(|h| h == name) {
            Some(i) => *slot = i,
            None => missing.push(name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!(
            "missing required column(s): {}",
            missing.join(", ")
        )));
    }

    let mut outcome = ParseOutcome::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fields = index.map(|i| row.get(i).unwrap_or(""));
        match parse_row(&fields) {
            Ok(rec) => outcome.records.push(rec),
            Err(message) => {
                if policy == RowErrorPolicy::Abort {
                    return Err(Error::Row { line, message });
                }
                log::warn!("skipping line {line}: {message}");
                outcome.rejected.push(RowIssue { line, message });
            }
        }
    }
    if !outcome.rejected.is_empty() {
        log::info!(
            "parsed {} records, skipped {} malformed rows",
            outcome.records.len(),
            outcome.rejected.len()
        );
    }
    Ok(outcome)
}

/// Writes records using the canonical measurement CSV schema.
pub fn write_measurements<W: Write>(sink: W, records: &[MeasurementRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(MEASUREMENT_COLUMNS)?;
    for r in records {
        writer.write_record([
            r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            r.device_id.clone(),
            r.spreading_factor.to_string(),
            r.rssi.to_string(),
            r.snr.to_string(),
            r.temperature.to_string(),
            r.humidity.to_string(),
            r.pressure.to_string(),
            r.pm25.to_string(),
            r.co2.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Drops repeated `(device_id, timestamp)` keys (first wins) and keeps only
/// spreading factors in `[sf_low, sf_high]`. Order is preserved.
pub fn dedup_and_filter_sf(
    records: &[MeasurementRecord],
    sf_low: u8,
    sf_high: u8,
) -> Vec<MeasurementRecord> {
    let mut seen: HashSet<(&str, i64)> = HashSet::with_capacity(records.len());
    records
        .iter()
        .filter(|r| seen.insert((r.device_id.as_str(), r.timestamp.timestamp())))
        .filter(|r| (sf_low..=sf_high).contains(&r.spreading_factor))
        .cloned()
        .collect()
}

/// Parses link profiles from their JSON array form and validates them.
pub fn read_link_profiles<R: Read>(source: R) -> Result<Vec<LinkProfile>> {
    let profiles: Vec<LinkProfile> = serde_json::from_reader(source)?;
    let mut ids = HashSet::new();
    for p in &profiles {
        p.validate()?;
        if !ids.insert(p.device_id.as_str()) {
            return Err(Error::invalid(
                "link profiles",
                format!("device '{}' listed twice", p.device_id),
            ));
        }
    }
    Ok(profiles)
}

pub fn read_radio_config<R: Read>(source: R) -> Result<RadioConfig> {
    let radio: RadioConfig = serde_json::from_reader(source)?;
    radio.validate()?;
    Ok(radio)
}

/// A measurement paired with the geometry of its link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedSample {
    pub record: MeasurementRecord,
    pub link: LinkProfile,
}

/// Attaches each record's link profile. Every device must have a profile.
pub fn join_links(
    records: &[MeasurementRecord],
    profiles: &[LinkProfile],
) -> Result<Vec<LinkedSample>> {
    let by_id: HashMap<&str, &LinkProfile> =
        profiles.iter().map(|p| (p.device_id.as_str(), p)).collect();
    records
        .iter()
        .map(|r| {
            by_id
                .get(r.device_id.as_str())
                .map(|&link| LinkedSample {
                    record: r.clone(),
                    link: link.clone(),
                })
                .ok_or_else(|| Error::UnknownDevice(r.device_id.clone()))
        })
        .collect()
}
