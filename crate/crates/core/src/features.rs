//! Design-matrix construction for the multi-wall, environment-aware path
//! loss model
//!
//! ```text
//! PL = β + 10·n·log10(d/d0) + 20·log10(f) + Σ W_k·L_k + Σ θ_j·E_j + k_snr·SNR + ε
//! ```
//!
//! With a single carrier frequency the `20·log10(f)` term is constant and
//! would be collinear with the intercept, so it is subtracted from the
//! response instead of entering as a regressor. The fitted intercept is
//! then `β` directly. Expressing `f` in MHz (rather than Hz or GHz) only
//! shifts that intercept.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{compute_path_loss, LinkedSample, RadioConfig};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const INTERCEPT: &str = "intercept";
pub const LOG_DISTANCE: &str = "log_distance";
pub const BRICK_WALLS: &str = "brick_walls";
pub const WOOD_WALLS: &str = "wood_walls";
pub const SNR: &str = "snr";

/// Environmental regressors, in their canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvTerm {
    Co2,
    Humidity,
    Pm25,
    Pressure,
    Temperature,
}

impl EnvTerm {
    pub const ALL: [EnvTerm; 5] = [
        EnvTerm::Co2,
        EnvTerm::Humidity,
        EnvTerm::Pm25,
        EnvTerm::Pressure,
        EnvTerm::Temperature,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EnvTerm::Co2 => "co2",
            EnvTerm::Humidity => "humidity",
            EnvTerm::Pm25 => "pm25",
            EnvTerm::Pressure => "pressure",
            EnvTerm::Temperature => "temperature",
        }
    }

    fn value(self, s: &LinkedSample) -> f64 {
        let r = &s.record;
        match self {
            EnvTerm::Co2 => r.co2,
            EnvTerm::Humidity => r.humidity,
            EnvTerm::Pm25 => r.pm25,
            EnvTerm::Pressure => r.pressure,
            EnvTerm::Temperature => r.temperature,
        }
    }
}

/// Which regressors enter the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub include_environment: bool,
    pub include_snr: bool,
    #[serde(default)]
    pub environmental_terms: Vec<EnvTerm>,
    #[serde(rename = "d0_m", default = "default_d0")]
    pub d0: f64,
    #[serde(rename = "frequency_mhz", default = "default_frequency")]
    pub frequency: f64,
}

fn default_d0() -> f64 {
    1.0
}

fn default_frequency() -> f64 {
    868.0
}

impl ModelSpec {
    /// Distance and walls only.
    pub fn baseline() -> Self {
        Self {
            include_environment: false,
            include_snr: false,
            environmental_terms: Vec::new(),
            d0: default_d0(),
            frequency: default_frequency(),
        }
    }

    /// Distance, walls, all five environmental terms and SNR.
    pub fn environment_aware() -> Self {
        Self {
            include_environment: true,
            include_snr: true,
            environmental_terms: EnvTerm::ALL.to_vec(),
            d0: default_d0(),
            frequency: default_frequency(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.include_environment == self.environmental_terms.is_empty() {
            return Err(Error::invalid(
                "environmental_terms",
                "must be non-empty exactly when include_environment is set",
            ));
        }
        let unique: HashSet<_> = self.environmental_terms.iter().collect();
        if unique.len() != self.environmental_terms.len() {
            return Err(Error::invalid("environmental_terms", "duplicate term"));
        }
        if !(self.d0 > 0.0) || !self.d0.is_finite() {
            return Err(Error::invalid("d0_m", "must be positive"));
        }
        if !(self.frequency > 0.0) || !self.frequency.is_finite() {
            return Err(Error::invalid("frequency_mhz", "must be positive"));
        }
        Ok(())
    }

    fn active_env_terms(&self) -> Vec<EnvTerm> {
        if !self.include_environment {
            return Vec::new();
        }
        EnvTerm::ALL
            .into_iter()
            .filter(|t| self.environmental_terms.contains(t))
            .collect()
    }

    /// Column labels in design-matrix order.
    pub fn column_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = [INTERCEPT, LOG_DISTANCE, BRICK_WALLS, WOOD_WALLS]
            .iter()
            .map(|s| s.to_string())
            .collect();
        labels.extend(self.active_env_terms().iter().map(|t| t.label().to_string()));
        if self.include_snr {
            labels.push(SNR.to_string());
        }
        labels
    }

    /// `20·log10(f)` with `f` in MHz.
    pub fn frequency_offset(&self) -> f64 {
        20.0 * self.frequency.log10()
    }

    /// Regressor values of one sample, in [`column_labels`](Self::column_labels) order.
    pub fn feature_row(&self, sample: &LinkedSample) -> Vec<f64> {
        let mut row = vec![
            1.0,
            10.0 * (sample.link.distance / self.d0).log10(),
            f64::from(sample.link.brick_walls),
            f64::from(sample.link.wood_walls),
        ];
        row.extend(self.active_env_terms().iter().map(|t| t.value(sample)));
        if self.include_snr {
            row.push(sample.record.snr);
        }
        row
    }
}

/// Values tagged with the model column they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabeledVector<T: Real> {
    pub labels: Vec<String>,
    pub values: Vec<T>,
}

impl<T: Real> LabeledVector<T> {
    pub fn new(labels: Vec<String>, values: Vec<T>) -> Self {
        assert_eq!(labels.len(), values.len(), "labels and values differ in length");
        Self { labels, values }
    }

    pub fn get(&self, label: &str) -> Option<T> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.labels.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    /// Errors unless `labels` matches exactly, order included.
    pub fn check_labels(&self, labels: &[String]) -> Result<()> {
        if self.labels != labels {
            return Err(Error::LabelMismatch {
                expected: labels.to_vec(),
                found: self.labels.clone(),
            });
        }
        Ok(())
    }
}

/// Regressors and response of the path loss model.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T: Real> {
    pub columns: Vec<String>,
    pub x: Matrix<T>,
    /// Path loss minus `20·log10(f)`.
    pub y: Vec<T>,
    pub frequency_offset: T,
}

impl<T: Real> DesignMatrix<T> {
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self {
            columns: self.columns.clone(),
            x: self.x.select_rows(keep),
            y: keep.iter().map(|&i| self.y[i]).collect(),
            frequency_offset: self.frequency_offset,
        }
    }

    /// Drops the named columns; the intercept cannot be dropped.
    pub fn without_columns(&self, drop: &[&str]) -> Result<Self> {
        for d in drop {
            if *d == INTERCEPT {
                return Err(Error::invalid("terms", "the intercept cannot be removed"));
            }
            if !self.columns.iter().any(|c| c == d) {
                return Err(Error::invalid("terms", format!("unknown column '{d}'")));
            }
        }
        let keep: Vec<usize> = (0..self.p())
            .filter(|&j| !drop.contains(&self.columns[j].as_str()))
            .collect();
        Ok(Self {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            x: self.x.select_columns(&keep),
            y: self.y.clone(),
            frequency_offset: self.frequency_offset,
        })
    }
}

/// Builds regressors and response from linked samples.
///
/// Column order is fixed: intercept, `10·log10(d/d0)`, brick walls, wood
/// walls, then any of co2, humidity, pm25, pressure, temperature, then snr.
pub fn build_design_matrix<T: Real>(
    samples: &[LinkedSample],
    spec: &ModelSpec,
    radio: &RadioConfig,
) -> Result<DesignMatrix<T>> {
    spec.validate()?;
    let columns = spec.column_labels();
    let p = columns.len();
    let offset = spec.frequency_offset();
    let mut cols = vec![Vec::with_capacity(samples.len()); p];
    let mut y = Vec::with_capacity(samples.len());
    let mut warned = false;
    for (i, s) in samples.iter().enumerate() {
        if !(s.link.distance > 0.0) {
            return Err(Error::invalid(
                "distance_m",
                format!("row {i}: device {} has distance {}", s.link.device_id, s.link.distance),
            ));
        }
        if s.link.distance < spec.d0 && !warned {
            log::warn!(
                "device {} is closer ({} m) than the reference distance {} m",
                s.link.device_id,
                s.link.distance,
                spec.d0
            );
            warned = true;
        }
        let row = spec.feature_row(s);
        for (j, v) in row.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    column: columns[j].clone(),
                });
            }
            cols[j].push(T::lit(v));
        }
        let pl = compute_path_loss(&s.record, radio) - offset;
        if !pl.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                column: "path_loss".into(),
            });
        }
        y.push(T::lit(pl));
    }
    Ok(DesignMatrix {
        columns,
        x: Matrix::from_columns(cols),
        y,
        frequency_offset: T::lit(offset),
    })
}
