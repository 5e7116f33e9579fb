//! `residuals`: normality diagnostics and distribution fits of a fit's residuals.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use pathloss_core::distfit::{
    fit_gmm, fit_mle, histogram_density, qq_points, rank_candidates, Family, GmmOptions, MleOptions,
    MAX_COMPONENTS,
};
use pathloss_core::{residual_diagnostics, DistributionFit64, ResidualDiagnostics64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{parse_range, write_json, write_table, Artifact, CliError, CliResult, Inputs, Timer};
use crate::model::FitBody;

#[derive(Debug, Args)]
pub struct ResidualsArgs {
    /// Artifact written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Mixture sizes to try; the best by BIC enters the comparison.
    #[arg(long, default_value = "1:5", value_parser = parse_range::<usize>)]
    pub gmm_components: (usize, usize),
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
    /// Upper bound on rows per Q–Q file.
    #[arg(long, default_value_t = 1000)]
    pub qq_points: usize,
    /// Grid size of the fitted-density table.
    #[arg(long, default_value_t = 400)]
    pub pdf_points: usize,
    /// Directory for `residuals.json` and the plot tables.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmScanRow {
    pub components: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotFiles {
    pub qq: BTreeMap<String, String>,
    pub histogram: String,
    pub pdf: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualsBody {
    pub n: usize,
    pub diagnostics: ResidualDiagnostics64,
    /// Candidate fits, best first (ascending BIC).
    pub fits: Vec<DistributionFit64>,
    pub winner: String,
    pub gmm_options: GmmOptions<f64>,
    pub gmm_scan: Vec<GmmScanRow>,
    pub plots: PlotFiles,
}

pub fn run(args: &ResidualsArgs) -> CliResult<()> {
    let (lo, hi) = args.gmm_components;
    if lo == 0 || hi > MAX_COMPONENTS {
        return Err(CliError::Usage(format!(
            "--gmm-components must lie within 1:{MAX_COMPONENTS}"
        )));
    }
    if args.qq_points < 2 || args.pdf_points < 2 || args.bins == 0 {
        return Err(CliError::Usage("--qq-points and --pdf-points need 2+, --bins 1+".into()));
    }
    let mut timer = Timer::start();
    let mut inputs = Inputs::default();
    let source: Artifact<FitBody> = inputs.json("fit", &args.fit)?;
    let residuals = source.result.fit.residuals;
    timer.lap("load");

    let diagnostics = residual_diagnostics(&residuals)?;
    timer.lap("diagnostics");

    let mle = MleOptions::default();
    let mut fits = Family::PARAMETRIC
        .par_iter()
        .map(|&family| fit_mle(family, &residuals, &mle))
        .collect::<Result<Vec<_>, _>>()?;
    timer.lap("mle");

    let gmm_options = GmmOptions {
        restarts: args.restarts,
        max_iter: args.max_iter,
        tol: args.tol,
        seed: args.seed,
    };
    let mixtures = (lo..=hi)
        .map(|m| fit_gmm(&residuals, m, &gmm_options))
        .collect::<Result<Vec<_>, _>>()?;
    let gmm_scan = mixtures
        .iter()
        .zip(lo..=hi)
        .map(|(f, m)| GmmScanRow {
            components: m,
            loglik: f.loglik,
            aic: f.aic,
            bic: f.bic,
            ks: f.ks,
        })
        .collect();
    let best_mixture = if mixtures.len() == 1 {
        mixtures.into_iter().next().expect("one mixture")
    } else {
        rank_candidates(mixtures)?.fits.swap_remove(0)
    };
    fits.push(best_mixture);
    let ranking = rank_candidates(fits)?;
    timer.lap("gmm");

    let mut qq = BTreeMap::new();
    for fit in &ranking.fits {
        let name = format!("qq_{}.csv", fit.family().name());
        let points = qq_points(&fit.distribution, &residuals, args.qq_points)?;
        write_table(
            &args.out_dir.join(&name),
            &["theoretical", "empirical"],
            points.iter().map(|p| vec![p.theoretical, p.empirical]),
        )?;
        qq.insert(fit.label(), name);
    }
    let histogram = histogram_density(&residuals, args.bins)?;
    write_table(
        &args.out_dir.join("histogram.csv"),
        &["center", "width", "density"],
        histogram.iter().map(|b| vec![b.center, b.width, b.density]),
    )?;
    let first = &histogram[0];
    let last = &histogram[histogram.len() - 1];
    let (x0, x1) = (first.center - 0.5 * first.width, last.center + 0.5 * last.width);
    let labels: Vec<String> = ranking.fits.iter().map(|f| f.label()).collect();
    let mut header = vec!["x"];
    header.extend(labels.iter().map(String::as_str));
    let step = (x1 - x0) / (args.pdf_points - 1) as f64;
    write_table(
        &args.out_dir.join("pdf.csv"),
        &header,
        (0..args.pdf_points).map(|i| {
            let x = x0 + step * i as f64;
            let mut row = vec![x];
            row.extend(ranking.fits.iter().map(|f| f.distribution.pdf(x)));
            row
        }),
    )?;
    timer.lap("plots");

    let body = ResidualsBody {
        n: residuals.len(),
        diagnostics,
        winner: ranking.winner().label(),
        fits: ranking.fits,
        gmm_options,
        gmm_scan,
        plots: PlotFiles {
            qq,
            histogram: "histogram.csv".into(),
            pdf: "pdf.csv".into(),
        },
    };
    log::info!("best residual model: {}", body.winner);
    let seeds = BTreeMap::from([("gmm".to_string(), args.seed)]);
    write_json(
        &args.out_dir.join("residuals.json"),
        &Artifact::new("residuals", &inputs, seeds, body, timer),
    )
}
