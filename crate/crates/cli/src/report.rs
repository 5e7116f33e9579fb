//! `report`: merges upstream artifacts into one run report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use pathloss_core::features::{LabeledVector, ModelSpec};
use pathloss_core::regression::{unexplained_variance_reduction, LmTrace, Metrics, SolverKind};
use pathloss_core::{CvReport64, FitResult64};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::artifact::{write_json, Artifact, CliResult, InputDigest, Inputs, Timer};
use crate::clean::CleanSummary;
use crate::model::{AnovaBody, FitBody, SplitInfo};
use crate::residuals::ResidualsBody;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `fit` artifact of the baseline model.
    #[arg(long)]
    pub baseline: PathBuf,
    /// `fit` artifact of the environment-aware model.
    #[arg(long)]
    pub fit: PathBuf,
    /// Summary written by `clean`.
    #[arg(long)]
    pub clean: Option<PathBuf>,
    #[arg(long)]
    pub anova: Option<PathBuf>,
    /// `residuals.json` written by `residuals`.
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A fit without its per-row residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub solver: SolverKind,
    pub coefficients: LabeledVector<f64>,
    pub standard_errors: LabeledVector<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub rss: f64,
    pub r2: f64,
    pub rmse: f64,
    pub n_obs: usize,
    pub df_resid: usize,
    pub frequency_offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<LmTrace<f64>>,
}

impl From<FitResult64> for FitSummary {
    fn from(f: FitResult64) -> Self {
        Self {
            solver: f.solver,
            coefficients: f.coefficients,
            standard_errors: f.standard_errors,
            covariance: f.covariance,
            sigma2: f.sigma2,
            rss: f.rss,
            r2: f.r2,
            rmse: f.rmse,
            n_obs: f.n_obs,
            df_resid: f.df_resid,
            frequency_offset: f.frequency_offset,
            optimizer: f.optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub spec: ModelSpec,
    pub split: SplitInfo,
    pub fit: FitSummary,
    pub test: Option<Metrics<f64>>,
    pub cv: Option<CvReport64>,
}

impl From<FitBody> for ModelSection {
    fn from(b: FitBody) -> Self {
        Self {
            spec: b.spec,
            split: b.split,
            fit: b.fit.into(),
            test: b.test,
            cv: b.cv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReduction {
    /// `"test"` when both fits carry held-out metrics, otherwise `"train"`.
    pub r2_source: String,
    pub r2_baseline: f64,
    pub r2_environment_aware: f64,
    pub reduction_pct: f64,
}

/// Provenance of one merged artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Upstream {
    pub command: String,
    pub tool_version: String,
    pub inputs: BTreeMap<String, InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub clean: Option<CleanSummary>,
    pub baseline: ModelSection,
    pub environment_aware: ModelSection,
    pub variance_reduction: VarianceReduction,
    pub anova: Option<AnovaBody>,
    pub residuals: Option<ResidualsBody>,
    pub upstream: BTreeMap<String, Upstream>,
}

struct Merge {
    inputs: Inputs,
    seeds: BTreeMap<String, u64>,
    timings: BTreeMap<String, f64>,
    upstream: BTreeMap<String, Upstream>,
}

impl Merge {
    fn take<B: DeserializeOwned>(&mut self, role: &str, path: &Path) -> CliResult<B> {
        let a: Artifact<B> = self.inputs.json(role, path)?;
        for (k, v) in a.seeds {
            self.seeds.insert(format!("{role}.{k}"), v);
        }
        for (k, v) in a.timings_s {
            self.timings.insert(format!("{role}.{k}"), v);
        }
        self.upstream.insert(
            role.to_string(),
            Upstream {
                command: a.command,
                tool_version: a.tool_version,
                inputs: a.inputs,
            },
        );
        Ok(a.result)
    }

    fn optional<B: DeserializeOwned>(&mut self, role: &str, path: Option<&PathBuf>) -> CliResult<Option<B>> {
        path.map(|p| self.take(role, p)).transpose()
    }
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let mut timer = Timer::start();
    let mut merge = Merge {
        inputs: Inputs::default(),
        seeds: BTreeMap::new(),
        timings: BTreeMap::new(),
        upstream: BTreeMap::new(),
    };
    let baseline: FitBody = merge.take("baseline", &args.baseline)?;
    let full: FitBody = merge.take("fit", &args.fit)?;
    let clean = merge.optional("clean", args.clean.as_ref())?;
    let anova = merge.optional("anova", args.anova.as_ref())?;
    let residuals = merge.optional("residuals", args.residuals.as_ref())?;

    let data_of = |role: &str| merge.upstream[role].inputs.get("data").map(|d| d.sha256.clone());
    if data_of("baseline") != data_of("fit") {
        log::warn!("baseline and environment-aware fits were run on different data");
    }
    let (r2_source, r2_baseline, r2_full) = match (&baseline.test, &full.test) {
        (Some(b), Some(f)) => ("test", b.r2, f.r2),
        _ => ("train", baseline.fit.r2, full.fit.r2),
    };
    let variance_reduction = VarianceReduction {
        r2_source: r2_source.into(),
        r2_baseline,
        r2_environment_aware: r2_full,
        reduction_pct: 100.0 * unexplained_variance_reduction(r2_baseline, r2_full),
    };
    log::info!(
        "unexplained variance reduced by {:.2}% ({} R²)",
        variance_reduction.reduction_pct,
        r2_source
    );
    timer.lap("merge");

    let Merge {
        inputs,
        seeds,
        timings,
        upstream,
    } = merge;
    let report = RunReport {
        clean,
        baseline: baseline.into(),
        environment_aware: full.into(),
        variance_reduction,
        anova,
        residuals,
        upstream,
    };
    let mut artifact = Artifact::new("report", &inputs, seeds, report, timer);
    artifact.timings_s.extend(timings);
    write_json(&args.out, &artifact)
}
