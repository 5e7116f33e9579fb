//! Artifact envelope, input digests and file helpers shared by subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<pathloss_core::Error> for CliError {
    fn from(e: pathloss_core::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Where an input came from and what it contained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl InputDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        }
    }
}

/// Common wrapper of every JSON artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<B> {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub inputs: BTreeMap<String, InputDigest>,
    pub seeds: BTreeMap<String, u64>,
    pub result: B,
    /// Wall-clock seconds per stage; the only field that varies between reruns.
    pub timings_s: BTreeMap<String, f64>,
}

impl<B> Artifact<B> {
    pub fn new(command: &str, inputs: &Inputs, seeds: BTreeMap<String, u64>, result: B, timer: Timer) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            inputs: inputs.digests.clone(),
            seeds,
            result,
            timings_s: timer.stages,
        }
    }
}

/// Reads input files whole, recording a digest for each.
#[derive(Debug, Default)]
pub struct Inputs {
    pub digests: BTreeMap<String, InputDigest>,
}

impl Inputs {
    pub fn read(&mut self, role: &str, path: &Path) -> CliResult<Vec<u8>> {
        if !path.exists() {
            return Err(CliError::Data(format!("missing {role} input: {}", path.display())));
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.digests.insert(role.to_string(), InputDigest::of(path, &bytes));
        Ok(bytes)
    }

    pub fn json<T: DeserializeOwned>(&mut self, role: &str, path: &Path) -> CliResult<T> {
        let bytes = self.read(role, path)?;
        serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct Timer {
    last: Instant,
    stages: BTreeMap<String, f64>,
}

impl Timer {
    pub fn start() -> Self {
        Self {
            last: Instant::now(),
            stages: BTreeMap::new(),
        }
    }

    pub fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages
            .insert(stage.to_string(), (now - self.last).as_secs_f64());
        self.last = now;
    }
}

pub fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    create_parent(path)?;
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push(b'\n');
    Ok(text)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    write_bytes(path, &to_json_bytes(value)?)
}

/// Writes a CSV with a header row; every row must match the header width.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `"lo:hi"` or a single value, inclusive.
pub fn parse_range<T>(s: &str) -> Result<(T, T), String>
where
    T: std::str::FromStr + PartialOrd + Copy,
{
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("'{v}' is not a valid bound"));
    let (lo, hi) = match s.split_once(':') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => {
            let v = parse(s)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(format!("empty range '{s}'"));
    }
    Ok((lo, hi))
}
