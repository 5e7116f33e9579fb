//! `fit` and `anova`: both build a design matrix from cleaned data.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pathloss_core::diagnostics::{anova_type2, coefficient_t_tests, single_column_terms, CoefficientTest};
use pathloss_core::features::{build_design_matrix, ModelSpec};
use pathloss_core::ingest::{join_links, parse_measurements, read_link_profiles, read_radio_config, RadioConfig, RowErrorPolicy};
use pathloss_core::regression::{evaluate, kfold_cv, ols_fit, split_indices, LmOptions, Metrics, SolverKind};
use pathloss_core::{AnovaTable64, CvReport64, DesignMatrix64, FitResult64, Solver64};
use serde::{Deserialize, Serialize};

use crate::artifact::{write_json, Artifact, CliError, CliResult, Inputs, Timer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Distance and walls.
    Baseline,
    /// Distance, walls, environmental terms and SNR.
    Environment,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cleaned measurement CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Link profiles (JSON array).
    #[arg(long)]
    pub links: PathBuf,
    /// Radio constants (JSON); defaults apply when omitted.
    #[arg(long)]
    pub radio: Option<PathBuf>,
    /// Model specification (JSON); overrides `--model`.
    #[arg(long, conflicts_with = "model")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "environment")]
    pub model: ModelKind,
}

struct Loaded {
    design: DesignMatrix64,
    spec: ModelSpec,
    radio: RadioConfig,
}

fn load(args: &DataArgs, inputs: &mut Inputs) -> CliResult<Loaded> {
    let radio = match &args.radio {
        Some(path) => read_radio_config(inputs.read("radio", path)?.as_slice())?,
        None => RadioConfig::default(),
    };
    let spec = match &args.spec {
        Some(path) => {
            let spec: ModelSpec = inputs.json("spec", path)?;
            if spec.frequency != radio.frequency || spec.d0 != radio.reference_distance {
                log::warn!("model spec frequency/d0 differ from the radio config; using the spec's");
            }
            spec
        }
        None => {
            let preset = match args.model {
                ModelKind::Baseline => ModelSpec::baseline(),
                ModelKind::Environment => ModelSpec::environment_aware(),
            };
            ModelSpec {
                d0: radio.reference_distance,
                frequency: radio.frequency,
                ..preset
            }
        }
    };
    let links = read_link_profiles(inputs.read("links", &args.links)?.as_slice())?;
    let parsed = parse_measurements(inputs.read("data", &args.data)?.as_slice(), RowErrorPolicy::Abort)?;
    let linked = join_links(&parsed.records, &links)?;
    let design = build_design_matrix(&linked, &spec, &radio)?;
    log::info!("design matrix: {} rows, columns {:?}", design.n(), design.columns);
    Ok(Loaded { design, spec, radio })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Ols,
    Lm,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "ols")]
    pub solver: SolverArg,
    /// Training fraction in (0, 1]; 1 trains on everything.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Cross-validation folds on the training rows; 0 disables.
    #[arg(long, default_value_t = 5)]
    pub cv: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub ratio: f64,
    pub n_train: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBody {
    pub spec: ModelSpec,
    pub radio: RadioConfig,
    pub solver: SolverKind,
    pub split: SplitInfo,
    /// Fitted on the training rows.
    pub fit: FitResult64,
    /// Held-out metrics, absent when training on everything.
    pub test: Option<Metrics<f64>>,
    pub cv: Option<CvReport64>,
}

pub fn run_fit(args: &FitArgs) -> CliResult<()> {
    if !(args.split > 0.0 && args.split <= 1.0) {
        return Err(CliError::Usage(format!("--split {} is outside (0, 1]", args.split)));
    }
    if args.cv == 1 {
        return Err(CliError::Usage("--cv needs at least 2 folds (0 disables)".into()));
    }
    let mut timer = Timer::start();
    let mut inputs = Inputs::default();
    let loaded = load(&args.data, &mut inputs)?;
    timer.lap("load");

    let solver = match args.solver {
        SolverArg::Ols => Solver64::Ols,
        SolverArg::Lm => Solver64::Lm {
            options: LmOptions::default(),
            initial: None,
        },
    };
    let (train, test) = if args.split < 1.0 {
        let (tr, te) = split_indices(loaded.design.n(), args.split, args.seed)?;
        (loaded.design.select_rows(&tr), Some(loaded.design.select_rows(&te)))
    } else {
        (loaded.design, None)
    };
    let fit = solver.fit(&train)?;
    timer.lap("fit");
    let test_metrics = match &test {
        Some(t) => {
            let predicted: Vec<f64> = (0..t.n()).map(|i| fit.linear_predictor(&t.x.row(i))).collect();
            Some(evaluate(&predicted, &t.y)?)
        }
        None => None,
    };
    let cv = match args.cv {
        0 => None,
        k => Some(kfold_cv(&train, k, args.seed, &solver)?),
    };
    timer.lap("validate");
    if let Some(m) = &test_metrics {
        log::info!("test RMSE {:.3} dB, R² {:.4}", m.rmse, m.r2);
    }

    let body = FitBody {
        spec: loaded.spec,
        radio: loaded.radio,
        solver: solver.kind(),
        split: SplitInfo {
            ratio: args.split,
            n_train: train.n(),
            n_test: test.as_ref().map_or(0, |t| t.n()),
        },
        fit,
        test: test_metrics,
        cv,
    };
    let seeds = BTreeMap::from([("split".to_string(), args.seed), ("cv".to_string(), args.seed)]);
    write_json(&args.out, &Artifact::new("fit", &inputs, seeds, body, timer))
}

#[derive(Debug, Args)]
pub struct AnovaArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaBody {
    pub spec: ModelSpec,
    pub n_obs: usize,
    pub r2: f64,
    pub table: AnovaTable64,
    pub coefficients: Vec<CoefficientTest<f64>>,
}

/// Type II ANOVA and coefficient t-tests on all cleaned rows.
pub fn run_anova(args: &AnovaArgs) -> CliResult<()> {
    let mut timer = Timer::start();
    let mut inputs = Inputs::default();
    let loaded = load(&args.data, &mut inputs)?;
    timer.lap("load");
    let fit = ols_fit(&loaded.design)?;
    let table = anova_type2(&loaded.design, &single_column_terms(&loaded.design))?;
    timer.lap("anova");
    let body = AnovaBody {
        spec: loaded.spec,
        n_obs: fit.n_obs,
        r2: fit.r2,
        table,
        coefficients: coefficient_t_tests(&fit),
    };
    write_json(&args.out, &Artifact::new("anova", &inputs, BTreeMap::new(), body, timer))
}
