use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;
use pathloss_core::ingest::{
    dedup_and_filter_sf, isolation_forest_outliers, join_links, parse_measurements, read_link_profiles,
    write_measurements, ForestConfig, MeasurementField, RowErrorPolicy, RowIssue,
};
use serde::{Deserialize, Serialize};

use crate::artifact::{create_parent, parse_range, sibling, write_json, Artifact, CliError, CliResult, Inputs, Timer};

/// Rejected rows listed individually in the summary; the rest are counted.
const LISTED_ISSUES: usize = 100;

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Raw measurement CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Link profiles (JSON array); every kept device must appear here.
    #[arg(long)]
    pub links: PathBuf,
    /// Inclusive spreading-factor range to keep.
    #[arg(long, default_value = "7:10", value_parser = parse_range::<u8>)]
    pub sf: (u8, u8),
    /// Fraction of records removed as outliers.
    #[arg(long, default_value_t = 0.01)]
    pub contamination: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 256)]
    pub subsample: usize,
    /// Comma-separated outlier features (default: all numeric fields).
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<MeasurementField>>,
    /// Fail on the first malformed row instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Cleaned CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON summary (default: `<out stem>.summary.json` next to the output).
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanSummary {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub rejected: Vec<RowIssue>,
    pub rows_duplicate: usize,
    pub rows_outside_sf: usize,
    pub outliers_flagged: usize,
    pub rows_out: usize,
    pub devices: usize,
    pub spreading_factors: (u8, u8),
    pub forest: ForestConfig,
}

pub fn run(args: &CleanArgs) -> CliResult<()> {
    let mut timer = Timer::start();
    let mut inputs = Inputs::default();
    let raw = inputs.read("input", &args.input)?;
    let links = read_link_profiles(inputs.read("links", &args.links)?.as_slice())?;
    let policy = if args.strict {
        RowErrorPolicy::Abort
    } else {
        RowErrorPolicy::Skip
    };
    let parsed = parse_measurements(raw.as_slice(), policy)?;
    for issue in parsed.rejected.iter().take(5) {
        log::warn!("skipped line {}: {}", issue.line, issue.message);
    }
    timer.lap("parse");

    let mut records = parsed.records;
    records.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.device_id.cmp(&b.device_id))
    });
    let unique = dedup_and_filter_sf(&records, 7, 12);
    let (lo, hi) = args.sf;
    let in_range = dedup_and_filter_sf(&unique, lo, hi);
    join_links(&in_range, &links)?;
    timer.lap("dedup");

    let forest = ForestConfig {
        features: args.features.clone().unwrap_or_else(|| MeasurementField::ALL.to_vec()),
        contamination: args.contamination,
        trees: args.trees,
        subsample: args.subsample,
        seed: args.seed,
    };
    let split = isolation_forest_outliers(&in_range, &forest)?;
    timer.lap("outliers");

    create_parent(&args.out)?;
    let file = File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_measurements(BufWriter::new(file), &split.kept)?;
    timer.lap("write");

    let summary = CleanSummary {
        rows_read: records.len() + parsed.rejected.len(),
        rows_rejected: parsed.rejected.len(),
        rejected: parsed.rejected.into_iter().take(LISTED_ISSUES).collect(),
        rows_duplicate: records.len() - unique.len(),
        rows_outside_sf: unique.len() - in_range.len(),
        outliers_flagged: split.flagged.len(),
        rows_out: split.kept.len(),
        devices: split.kept.iter().map(|r| r.device_id.as_str()).collect::<BTreeSet<_>>().len(),
        spreading_factors: args.sf,
        forest,
    };
    log::info!(
        "kept {} of {} rows ({} outliers)",
        summary.rows_out,
        summary.rows_read,
        summary.outliers_flagged
    );
    let seeds = BTreeMap::from([("forest".to_string(), args.seed)]);
    let path = args.summary.clone().unwrap_or_else(|| sibling(&args.out, ".summary.json"));
    write_json(&path, &Artifact::new("clean", &inputs, seeds, summary, timer))
}
