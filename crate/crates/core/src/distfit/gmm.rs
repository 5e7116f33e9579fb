//! Gaussian mixtures by expectation–maximisation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ln_sqrt_2pi, sorted_sample, Distribution, DistributionFit, GmmParams};
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

pub const MAX_COMPONENTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GmmOptions<T: Real> {
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative log-likelihood change treated as converged.
    pub tol: T,
    pub seed: u64,
}

impl<T: Real> Default for GmmOptions<T> {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iter: 500,
            tol: T::lit(1e-8),
            seed: 42,
        }
    }
}

/// One EM run from one initialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmRun<T: Real> {
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    pub loglik: T,
    /// Log-likelihood of the initial parameters and after every accepted
    /// M-step.
    pub loglik_history: Vec<T>,
    /// Size of the final step's log-likelihood drop when that step was
    /// rejected (rounding at the fixed point, in practice).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_decrease: Option<T>,
    #[serde(skip)]
    pub params: Option<GmmParams<T>>,
    pub floor_active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EmSummary<T: Real> {
    pub seed: u64,
    pub best_restart: usize,
    pub variance_floor: T,
    /// Some component of the returned fit sits on the variance floor.
    pub floor_active: bool,
    pub runs: Vec<EmRun<T>>,
}

fn check_inputs<T: Real>(data: &[T], m: usize) -> Result<(Vec<T>, T)> {
    if m == 0 || m > MAX_COMPONENTS {
        return Err(Error::invalid(
            "components",
            format!("{m} is outside 1..={MAX_COMPONENTS}"),
        ));
    }
    let sorted = sorted_sample(data, 10 * m)?;
    let n = T::count(sorted.len());
    let mean = compensated_sum(sorted.iter().copied()) / n;
    let var = compensated_sum(sorted.iter().map(|&x| (x - mean) * (x - mean))) / n;
    if sorted[0] == sorted[sorted.len() - 1] || !(var > T::zero()) {
        return Err(Error::Degenerate("all observations are equal".into()));
    }
    Ok((sorted, var))
}

const LLOYD_MAX_ITER: usize = 100;

/// k-means++ seeding on the scalars, refined by Lloyd iterations.
/// `sorted` must be ascending: clusters are then contiguous runs whose
/// sums come from prefix sums.
fn initialise<T: Real>(sorted: &[T], m: usize, var: T, rng: &mut ChaCha8Rng) -> GmmParams<T> {
    let n = sorted.len();
    let mut centers = vec![sorted[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = sorted
        .iter()
        .map(|&x| (x - centers[0]).as_f64().powi(2))
        .collect();
    while centers.len() < m {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|&d| {
                    acc += d;
                    acc > u
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = sorted[pick];
        centers.push(c);
        for (d, &x) in d2.iter_mut().zip(sorted) {
            *d = d.min((x - c).as_f64().powi(2));
        }
    }
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    let mut acc = T::zero();
    for &x in sorted {
        acc += x;
        prefix.push(acc);
    }
    let half = T::lit(0.5);
    let cuts = |centers: &[T]| -> Vec<usize> {
        let mut cuts = vec![0];
        for w in centers.windows(2) {
            let mid = half * (w[0] + w[1]);
            cuts.push(sorted.partition_point(|&x| x <= mid));
        }
        cuts.push(n);
        cuts
    };
    let mut bounds = cuts(&centers);
    for _ in 0..LLOYD_MAX_ITER {
        for j in 0..m {
            let (lo, hi) = (bounds[j], bounds[j + 1]);
            if hi > lo {
                centers[j] = (prefix[hi] - prefix[lo]) / T::count(hi - lo);
            }
        }
        let next = cuts(&centers);
        if next == bounds {
            break;
        }
        bounds = next;
    }

    let fallback = var / T::count(m * m);
    let mut params = GmmParams {
        weights: Vec::with_capacity(m),
        means: Vec::with_capacity(m),
        variances: Vec::with_capacity(m),
    };
    for j in 0..m {
        let cluster = &sorted[bounds[j]..bounds[j + 1]];
        let c = T::count(cluster.len().max(1));
        let mean = if cluster.is_empty() {
            centers[j]
        } else {
            compensated_sum(cluster.iter().copied()) / c
        };
        let v = compensated_sum(cluster.iter().map(|&x| (x - mean) * (x - mean))) / c;
        params.weights.push(c / T::count(n));
        params.means.push(mean);
        params
            .variances
            .push(if cluster.len() >= 2 && v > T::zero() { v } else { fallback });
    }
    let total = compensated_sum(params.weights.iter().copied());
    params.weights.iter_mut().for_each(|w| *w /= total);
    params
}

/// Per-component sufficient statistics of one E-step. Squared deviations
/// are taken about the means that produced the responsibilities.
struct Moments<T> {
    nk: [T; MAX_COMPONENTS],
    sx: [T; MAX_COMPONENTS],
    sdd: [T; MAX_COMPONENTS],
}

/// E-step with responsibilities computed in log space and folded straight
/// into the statistics the M-step needs. Returns the log-likelihood.
fn e_step<T: Real>(data: &[T], p: &GmmParams<T>) -> (T, Moments<T>) {
    match p.components() {
        1 => e_step_fixed::<T, 1>(data, p),
        2 => e_step_fixed::<T, 2>(data, p),
        3 => e_step_fixed::<T, 3>(data, p),
        4 => e_step_fixed::<T, 4>(data, p),
        5 => e_step_fixed::<T, 5>(data, p),
        6 => e_step_fixed::<T, 6>(data, p),
        7 => e_step_fixed::<T, 7>(data, p),
        _ => e_step_fixed::<T, MAX_COMPONENTS>(data, p),
    }
}

fn e_step_fixed<T: Real, const M: usize>(data: &[T], p: &GmmParams<T>) -> (T, Moments<T>) {
    let half = T::lit(0.5);
    let mut mu = [T::zero(); M];
    let mut offset = [T::zero(); M];
    let mut inv = [T::zero(); M];
    for j in 0..M {
        mu[j] = p.means[j];
        offset[j] = p.weights[j].ln() - half * p.variances[j].ln() - ln_sqrt_2pi();
        inv[j] = half / p.variances[j];
    }
    let mut nk = [T::zero(); M];
    let mut sx = [T::zero(); M];
    let mut sdd = [T::zero(); M];
    let cutoff = T::epsilon().ln() - T::lit(4.0);
    let (mut sum, mut comp) = (T::zero(), T::zero());
    let mut add = |l: T| {
        let t = sum + l;
        if sum.abs() >= l.abs() {
            comp += (sum - t) + l;
        } else {
            comp += (l - t) + sum;
        }
        sum = t;
    };
    // Each normaliser lies in [1, M]; their product over a block stays finite,
    // so one logarithm serves the whole block.
    let block = ((T::max_value().ln() / T::lit(8f64.ln())).as_f64() as usize).clamp(1, 256);
    for chunk in data.chunks(block) {
        let mut tops = T::zero();
        let mut prod = T::one();
        for &x in chunk {
            let mut dev = [T::zero(); M];
            let mut terms = [T::zero(); M];
            let mut top = T::neg_infinity();
            for j in 0..M {
                dev[j] = x - mu[j];
                terms[j] = offset[j] - inv[j] * dev[j] * dev[j];
                top = top.max(terms[j]);
            }
            let mut s = T::zero();
            for t in terms.iter_mut() {
                let gap = *t - top;
                // anything below this vanishes against the top term's 1
                *t = if gap < cutoff { T::zero() } else { gap.exp() };
                s += *t;
            }
            let inv_s = s.recip();
            for j in 0..M {
                let r = terms[j] * inv_s;
                nk[j] += r;
                sx[j] += r * x;
                sdd[j] += r * dev[j] * dev[j];
            }
            tops += top;
            prod *= s;
        }
        add(tops);
        add(prod.ln());
    }
    let mut st = Moments {
        nk: [T::zero(); MAX_COMPONENTS],
        sx: [T::zero(); MAX_COMPONENTS],
        sdd: [T::zero(); MAX_COMPONENTS],
    };
    st.nk[..M].copy_from_slice(&nk);
    st.sx[..M].copy_from_slice(&sx);
    st.sdd[..M].copy_from_slice(&sdd);
    (sum + comp, st)
}

/// Weighted maximum-likelihood update. Components that lose all
/// responsibility keep their location and spread.
fn m_step<T: Real>(st: &Moments<T>, prev: &GmmParams<T>, floor: T) -> (GmmParams<T>, bool) {
    let m = prev.components();
    let total: T = st.nk[..m].iter().copied().sum();
    let mut floored = false;
    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    let mut weights = Vec::with_capacity(m);
    for j in 0..m {
        if st.nk[j] > T::zero() {
            let mu = st.sx[j] / st.nk[j];
            if mu.is_finite() {
                // deviations were accumulated about the previous mean
                let shift = mu - prev.means[j];
                let v = st.sdd[j] / st.nk[j] - shift * shift;
                means[j] = mu;
                if v.is_finite() {
                    variances[j] = v.max(T::zero());
                }
            }
        }
        if variances[j] <= floor {
            variances[j] = floor;
            floored = true;
        }
        weights.push(st.nk[j] / total);
    }
    (
        GmmParams {
            weights,
            means,
            variances,
        },
        floored,
    )
}

fn run_em<T: Real>(
    data: &[T],
    init: GmmParams<T>,
    floor: T,
    restart: usize,
    options: &GmmOptions<T>,
) -> EmRun<T> {
    let mut params = init;
    let mut floor_active = params.variances.iter().any(|&v| v <= floor);
    let (mut ll_prev, mut stats) = e_step(data, &params);
    let mut history = vec![ll_prev];
    let mut converged = false;
    let mut rejected_decrease = None;
    let mut iterations = 0;
    while iterations < options.max_iter {
        let (next, floored) = m_step(&stats, &params, floor);
        let (ll, next_stats) = e_step(data, &next);
        iterations += 1;
        let change = ll - ll_prev;
        if change < T::zero() {
            // only rounding can lower the likelihood; the step is not taken
            rejected_decrease = Some(-change);
            converged = -change <= options.tol * ll_prev.abs();
            if !converged {
                log::warn!("EM restart {restart}: log-likelihood fell by {}", -change);
            }
            break;
        }
        history.push(ll);
        params = next;
        stats = next_stats;
        floor_active = floored;
        ll_prev = ll;
        if change <= options.tol * ll.abs() {
            converged = true;
            break;
        }
    }
    params.canonicalize();
    EmRun {
        restart,
        iterations,
        converged,
        loglik: ll_prev,
        loglik_history: history,
        rejected_decrease,
        params: Some(params),
        floor_active,
    }
}

/// A single EM run: restart `restart` of the stream seeded by `options.seed`.
pub fn em_restart<T: Real>(
    data: &[T],
    m: usize,
    restart: usize,
    options: &GmmOptions<T>,
) -> Result<EmRun<T>> {
    let (sorted, var) = check_inputs(data, m)?;
    Ok(single_run(&sorted, m, var, restart, options))
}

fn single_run<T: Real>(sorted: &[T], m: usize, var: T, restart: usize, options: &GmmOptions<T>) -> EmRun<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(restart as u64);
    let init = initialise(sorted, m, var, &mut rng);
    run_em(sorted, init, var * T::lit(1e-6), restart, options)
}

/// Fits an `m`-component Gaussian mixture by EM.
///
/// Each restart seeds k-means++ (refined by Lloyd iterations) from its own
/// ChaCha stream, runs EM with
/// responsibilities computed in log space until the relative log-likelihood
/// change falls below `tol`, and the highest-likelihood run wins (earliest
/// restart on ties). Variances are floored at `1e-6·var(data)`.
pub fn fit_gmm<T: Real>(data: &[T], m: usize, options: &GmmOptions<T>) -> Result<DistributionFit<T>> {
    if options.restarts == 0 {
        return Err(Error::invalid("restarts", "must be at least 1"));
    }
    let (sorted, var) = check_inputs(data, m)?;
    let mut runs: Vec<EmRun<T>> = (0..options.restarts)
        .into_par_iter()
        .map(|r| single_run(&sorted, m, var, r, options))
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.loglik > runs[b].loglik { i } else { b });
    let params = runs[best].params.clone().expect("run parameters");
    let floor_active = runs[best].floor_active;
    let loglik = runs[best].loglik;
    runs.iter_mut().for_each(|r| r.params = None);
    if floor_active {
        log::warn!("gmm-{m}: a component variance sits on the floor");
    }
    let mut fit = DistributionFit::from_sorted(Distribution::Gmm(params), loglik, &sorted);
    fit.em = Some(EmSummary {
        seed: options.seed,
        best_restart: best,
        variance_floor: var * T::lit(1e-6),
        floor_active,
        runs,
    });
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution as _, Normal};

    fn two_clusters(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| z.sample(&mut rng) + if i % 2 == 0 { -10.0 } else { 10.0 })
            .collect()
    }

    fn params(fit: &DistributionFit<f64>) -> &GmmParams<f64> {
        match &fit.distribution {
            Distribution::Gmm(g) => g,
            _ => unreachable!(),
        }
    }

    #[test]
    fn one_component_is_the_normal_mle() {
        let data = two_clusters(400, 1);
        let fit = fit_gmm(&data, 1, &GmmOptions::default()).unwrap();
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let g = params(&fit);
        assert!((g.means[0] - mean).abs() < 1e-12);
        assert!((g.variances[0] - var).abs() < 1e-10 * var);
        assert_eq!(g.weights, vec![1.0]);
        assert_eq!(fit.k, 2);
    }

    #[test]
    fn separated_clusters() {
        let data = two_clusters(20_000, 2);
        let fit = fit_gmm(&data, 2, &GmmOptions::default()).unwrap();
        let g = params(&fit);
        assert!((g.means[0] + 10.0).abs() < 0.1 && (g.means[1] - 10.0).abs() < 0.1);
        assert!(g.weights.iter().all(|w| (w - 0.5).abs() < 0.02));
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let em = fit.em.as_ref().unwrap();
        for run in &em.runs {
            assert!(run.loglik_history.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn seed_determinism() {
        let data = two_clusters(2000, 3);
        let opts = GmmOptions {
            restarts: 3,
            ..GmmOptions::default()
        };
        let a = fit_gmm(&data, 3, &opts).unwrap();
        let b = fit_gmm(&data, 3, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn extra_component_never_lowers_likelihood() {
        let data = two_clusters(3000, 4);
        let opts = GmmOptions::default();
        let two = fit_gmm(&data, 2, &opts).unwrap();
        let three = fit_gmm(&data, 3, &opts).unwrap();
        assert!(three.loglik >= two.loglik - 1e-6);
    }

    #[test]
    fn argument_checks() {
        let data = two_clusters(50, 5);
        let opts = GmmOptions::default();
        assert!(fit_gmm(&data, 0, &opts).is_err());
        assert!(fit_gmm(&data, 9, &opts).is_err());
        assert!(fit_gmm(&data, 6, &opts).is_err());
        assert!(matches!(
            fit_gmm(&[4.0; 100], 2, &opts),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn variance_floor_reported() {
        // a tight spike of identical values pulls one component onto the floor
        let mut data = two_clusters(400, 6);
        data.extend(std::iter::repeat_n(3.0, 200));
        let fit = fit_gmm(&data, 3, &GmmOptions::default()).unwrap();
        let em = fit.em.unwrap();
        assert!(em.floor_active);
        let g = match fit.distribution {
            Distribution::Gmm(g) => g,
            _ => unreachable!(),
        };
        assert!(g.variances.iter().all(|&v| v >= em.variance_floor));
    }
}
