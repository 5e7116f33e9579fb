//! Maximum-likelihood fits of the single-component families.

use serde::{Deserialize, Serialize};

use super::simplex::{nelder_mead, SimplexOptions, SimplexResult};
use super::{sorted_sample, Distribution, DistributionFit, Family};
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Simplex settings, applied to every start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MleOptions<T: Real> {
    pub max_evals: usize,
    pub ftol: T,
    pub xtol: T,
}

impl<T: Real> Default for MleOptions<T> {
    fn default() -> Self {
        Self {
            max_evals: 4000,
            ftol: T::lit(1e-11).max(T::epsilon() * T::lit(64.0)),
            xtol: T::lit(1e-7).max(T::epsilon().sqrt()),
        }
    }
}

const MIN_OBSERVATIONS: usize = 10;
const SCREEN_SIZE: usize = 4096;
// log(df) is confined to [ln 0.05, ln 1e6]; beyond that the likelihood is flat.
const LN_DF_MIN: f64 = -2.995_732_273_553_991;
const LN_DF_MAX: f64 = 13.815_510_557_964_274;

struct Summary<T> {
    mean: T,
    sd: T,
    median: T,
    iqr: T,
    skew: T,
}

fn interpolated<T: Real>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn summarize<T: Real>(sorted: &[T]) -> Summary<T> {
    let n = T::count(sorted.len());
    let mean = compensated_sum(sorted.iter().copied()) / n;
    let m2 = compensated_sum(sorted.iter().map(|&x| (x - mean) * (x - mean))) / n;
    let m3 = compensated_sum(sorted.iter().map(|&x| (x - mean).powi(3))) / n;
    let sd = m2.sqrt();
    Summary {
        mean,
        sd,
        median: interpolated(sorted, 0.5),
        iqr: interpolated(sorted, 0.75) - interpolated(sorted, 0.25),
        skew: if m2 > T::zero() { m3 / (m2 * sd) } else { T::zero() },
    }
}

/// Unconstrained coordinates → distribution, `None` outside the support.
fn decode<T: Real>(family: Family, theta: &[T]) -> Option<Distribution<T>> {
    let d = match family {
        Family::Cauchy => Distribution::Cauchy {
            location: theta[0],
            scale: theta[1].exp(),
        },
        Family::StudentT => {
            if theta[0] < T::lit(LN_DF_MIN) || theta[0] > T::lit(LN_DF_MAX) {
                return None;
            }
            Distribution::StudentT {
                df: theta[0].exp(),
                location: theta[1],
                scale: theta[2].exp(),
            }
        }
        Family::SkewNormal => Distribution::SkewNormal {
            shape: theta[0],
            location: theta[1],
            scale: theta[2].exp(),
        },
        Family::Normal | Family::Gmm => return None,
    };
    d.validate().ok().map(|_| d)
}

/// Method-of-moments skew-normal start from the sample skewness.
fn skew_normal_moments<T: Real>(s: &Summary<T>) -> Vec<T> {
    let max_skew = 0.99 * 0.995_271_746_431_156;
    let g = s.skew.as_f64().clamp(-max_skew, max_skew);
    let g23 = g.abs().powf(2.0 / 3.0);
    let c = ((4.0 - std::f64::consts::PI) / 2.0).powf(2.0 / 3.0);
    let delta = (std::f64::consts::FRAC_PI_2 * g23 / (g23 + c)).sqrt().copysign(g);
    let alpha = delta / (1.0 - delta * delta).sqrt();
    let omega = s.sd.as_f64() / (1.0 - 2.0 * delta * delta / std::f64::consts::PI).sqrt();
    let xi = s.mean.as_f64() - omega * delta * std::f64::consts::FRAC_2_PI.sqrt();
    vec![T::lit(alpha), T::lit(xi), T::lit(omega.ln())]
}

fn starts<T: Real>(family: Family, s: &Summary<T>) -> (Vec<Vec<T>>, Vec<T>) {
    let robust = if s.iqr > T::zero() {
        s.iqr / T::lit(1.349)
    } else {
        s.sd
    };
    let ln = |v: T| v.ln();
    match family {
        Family::Cauchy => {
            let half_iqr = if s.iqr > T::zero() { s.iqr / T::lit(2.0) } else { s.sd };
            (
                vec![
                    vec![s.median, ln(half_iqr)],
                    vec![s.median, ln(half_iqr / T::lit(4.0))],
                    vec![s.mean, ln(s.sd)],
                ],
                vec![T::lit(0.25) * half_iqr, T::lit(0.3)],
            )
        }
        Family::StudentT => (
            [2.0, 5.0, 30.0]
                .iter()
                .map(|&df| vec![T::lit(f64::ln(df)), s.median, ln(robust)])
                .collect(),
            vec![T::lit(0.5), T::lit(0.25) * robust, T::lit(0.2)],
        ),
        Family::SkewNormal => {
            let sign = if s.skew < T::zero() { -T::one() } else { T::one() };
            (
                vec![
                    // the normal MLE, so the fit can never be worse than it
                    vec![T::zero(), s.mean, ln(s.sd)],
                    skew_normal_moments(s),
                    vec![sign * T::lit(3.0), s.median - sign * robust, ln(s.sd)],
                ],
                vec![T::lit(0.5), T::lit(0.25) * s.sd, T::lit(0.2)],
            )
        }
        Family::Normal | Family::Gmm => (Vec::new(), Vec::new()),
    }
}

fn objective<T: Real>(family: Family, data: &[T]) -> impl Fn(&[T]) -> T + '_ {
    move |theta: &[T]| match decode(family, theta) {
        Some(d) => -d.loglik(data),
        None => T::infinity(),
    }
}

/// Tracks the best run overall and the best converged run.
fn keep<T: Real>(
    run: SimplexResult<T>,
    best: &mut Option<SimplexResult<T>>,
    best_any: &mut Option<SimplexResult<T>>,
) {
    let better = |cur: &Option<SimplexResult<T>>| cur.as_ref().is_none_or(|b| run.f < b.f);
    if better(best_any) {
        *best_any = Some(run.clone());
    }
    if run.converged && better(best) {
        *best = Some(run);
    }
}

/// Simplex from `x0`, restarted once from where it stopped.
fn descend<T: Real, F: Fn(&[T]) -> T>(
    f: &F,
    x0: &[T],
    steps: &[T],
    options: &SimplexOptions<T>,
) -> SimplexResult<T> {
    let first = nelder_mead(f, x0, steps, options);
    let mut run = nelder_mead(f, &first.x, steps, options);
    run.evals += first.evals;
    log::trace!(
        "start {:?}: objective {} (converged: {})",
        x0.iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
        run.f,
        run.converged
    );
    run
}

/// Maximum-likelihood fit of one of the single-component families.
///
/// Normal parameters are the closed-form mean and `1/n` standard deviation.
/// The other families maximise the log-likelihood over unconstrained
/// coordinates (log-scale, log-df) by Nelder–Mead from several
/// quantile-based starts; each start is restarted once from its optimum,
/// and the best converged run is returned. From 8192 observations on, the
/// starts compete on 4096 evenly spaced order statistics and only the
/// winner is refined on the full sample. Student t fits whose df runs into
/// its cap of 1e6 (data no heavier-tailed than normal) are finished with df
/// held at the cap.
pub fn fit_mle<T: Real>(
    family: Family,
    data: &[T],
    options: &MleOptions<T>,
) -> Result<DistributionFit<T>> {
    if family == Family::Gmm {
        return Err(Error::invalid("family", "use fit_gmm for mixtures"));
    }
    let sorted = sorted_sample(data, MIN_OBSERVATIONS)?;
    let s = summarize(&sorted);
    if !(s.sd > T::zero()) {
        return Err(Error::Degenerate("data have zero spread".into()));
    }
    if family == Family::Normal {
        let d = Distribution::Normal {
            location: s.mean,
            scale: s.sd,
        };
        let ll = d.loglik(&sorted);
        return Ok(DistributionFit::from_sorted(d, ll, &sorted));
    }

    let simplex = SimplexOptions {
        max_evals: options.max_evals,
        ftol: options.ftol,
        xtol: options.xtol,
    };
    let (inits, steps) = starts(family, &s);
    let full = objective(family, &sorted);
    let mut total_evals = 0;

    // Large samples: pick the start on an evenly spaced order-statistic
    // subsample, then polish on everything.
    let (candidates, polish_steps) = if sorted.len() >= 2 * SCREEN_SIZE {
        let stride = sorted.len() as f64 / SCREEN_SIZE as f64;
        let sub: Vec<T> = (0..SCREEN_SIZE)
            .map(|i| sorted[((i as f64 + 0.5) * stride) as usize])
            .collect();
        let screen = objective(family, &sub);
        let mut pick: Option<SimplexResult<T>> = None;
        for x0 in &inits {
            let run = descend(&screen, x0, &steps, &simplex);
            total_evals += run.evals;
            if pick.as_ref().is_none_or(|b| run.f < b.f) {
                pick = Some(run);
            }
        }
        let pick = pick.expect("at least one start");
        let quarter: Vec<T> = steps.iter().map(|&v| v * T::lit(0.25)).collect();
        (vec![pick.x], quarter)
    } else {
        (inits.clone(), steps.clone())
    };

    // Light-tailed data push df against its cap, where the simplex stalls on
    // the wall; there location and scale are fitted with df pinned.
    let near_cap = |x: &[T]| family == Family::StudentT && x[0] > T::lit(LN_DF_MAX - std::f64::consts::LN_10);
    let pinned_run = |x: &[T]| {
        let cap = T::lit(LN_DF_MAX);
        let pinned = |v: &[T]| full(&[cap, v[0], v[1]]);
        let run = descend(&pinned, &x[1..], &steps[1..], &simplex);
        SimplexResult {
            x: vec![cap, run.x[0], run.x[1]],
            ..run
        }
    };
    let mut pinned_done = false;

    let mut best: Option<SimplexResult<T>> = None;
    let mut best_any: Option<SimplexResult<T>> = None;
    for x0 in &candidates {
        let run = if candidates.len() < inits.len() && near_cap(x0) {
            pinned_done = true;
            pinned_run(x0)
        } else {
            descend(&full, x0, &polish_steps, &simplex)
        };
        total_evals += run.evals;
        keep(run, &mut best, &mut best_any);
    }
    // Never end up worse than a start (the skew-normal start is the normal
    // MLE), and fall back to every start if the polish did not converge.
    if candidates.len() < inits.len() {
        for x0 in &inits {
            let reached = best_any.as_ref().map_or(T::infinity(), |b| b.f);
            if best.is_none() || full(x0) < reached {
                let run = descend(&full, x0, &steps, &simplex);
                total_evals += run.evals;
                keep(run, &mut best, &mut best_any);
            }
        }
    }
    if family == Family::StudentT && !pinned_done {
        let from = best.as_ref().or(best_any.as_ref()).expect("at least one start");
        if best.is_none() || near_cap(&from.x) {
            let run = pinned_run(&from.x.clone());
            total_evals += run.evals;
            keep(run, &mut best, &mut best_any);
        }
    }
    log::debug!("{family}: {total_evals} objective evaluations");
    match best {
        Some(r) => {
            let d = decode(family, &r.x).ok_or_else(|| {
                Error::Degenerate(format!("{family} optimum left the parameter space"))
            })?;
            Ok(DistributionFit::from_sorted(d, -r.f, &sorted))
        }
        None => {
            let r = best_any.expect("at least one start");
            Err(Error::NotConverged {
                solver: "nelder-mead",
                iterations: total_evals,
                best_objective: r.f.as_f64(),
                best_params: r.x.iter().map(|v| v.as_f64()).collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as _, Normal, StudentT};

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(2.0, 3.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn normal_closed_form() {
        let data: [f64; 12] = [-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let fit = fit_mle(Family::Normal, &data, &MleOptions::default()).unwrap();
        match fit.distribution {
            Distribution::Normal { location, scale } => {
                assert!(location.abs() < 1e-15);
                assert!((scale - 0.5f64.sqrt()).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        assert_eq!(fit.aic, 4.0 - 2.0 * fit.loglik);
    }

    #[test]
    fn skew_normal_nests_normal() {
        let data = normal_draws(5000, 3);
        let opts = MleOptions::default();
        let nf = fit_mle(Family::Normal, &data, &opts).unwrap();
        let sf = fit_mle(Family::SkewNormal, &data, &opts).unwrap();
        assert!(sf.loglik >= nf.loglik - 1e-6);
        assert!((sf.loglik - nf.loglik).abs() < 1e-3 * data.len() as f64);
    }

    #[test]
    fn light_tails_pin_df_at_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [2000, 20_000] {
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let opts = MleOptions::default();
            let tf = fit_mle(Family::StudentT, &data, &opts).unwrap();
            let nf = fit_mle(Family::Normal, &data, &opts).unwrap();
            let Distribution::StudentT { df, .. } = tf.distribution else {
                unreachable!()
            };
            assert!(df > 1e5, "{df}");
            let gap = nf.loglik - tf.loglik;
            assert!(gap > -1e-6 && gap < 1e-5 * n as f64, "{gap}");
        }
    }

    #[test]
    fn student_t_recovers_df() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = StudentT::new(5.0).unwrap();
        let data: Vec<f64> = (0..20_000).map(|_| 1.0 + 2.0 * t.sample(&mut rng)).collect();
        let fit = fit_mle(Family::StudentT, &data, &MleOptions::default()).unwrap();
        match fit.distribution {
            Distribution::StudentT { df, location, scale } => {
                assert!((df - 5.0).abs() < 1.0, "df {df}");
                assert!((location - 1.0).abs() < 0.05);
                assert!((scale - 2.0).abs() < 0.1);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn argument_checks() {
        let opts = MleOptions::default();
        assert!(fit_mle(Family::Cauchy, &[1.0; 9], &opts).is_err());
        assert!(matches!(
            fit_mle(Family::Cauchy, &[1.0; 20], &opts),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_mle(Family::Gmm, &normal_draws(50, 1), &opts).is_err());
        let mut bad = normal_draws(50, 1);
        bad[3] = f64::NAN;
        assert!(matches!(
            fit_mle(Family::Normal, &bad, &opts),
            Err(Error::NonFinite { row: 3, .. })
        ));
    }

    #[test]
    fn single_precision_cauchy() {
        let data: Vec<f32> = (1..400)
            .map(|i| {
                let p = i as f64 / 400.0;
                (3.0 + 2.0 * (std::f64::consts::PI * (p - 0.5)).tan()) as f32
            })
            .collect();
        let fit = fit_mle(Family::Cauchy, &data, &MleOptions::default()).unwrap();
        match fit.distribution {
            Distribution::Cauchy { location, scale } => {
                assert!((location - 3.0).abs() < 0.05);
                assert!((scale - 2.0).abs() < 0.05);
            }
            _ => unreachable!(),
        }
    }
}
