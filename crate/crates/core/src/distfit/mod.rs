//! Residual distribution families, maximum-likelihood fitting, information
//! criteria and goodness-of-fit summaries.

mod gmm;
mod mle;
mod simplex;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};
use crate::special::{
    ln_gamma, ln_normal_cdf, normal_cdf, normal_pdf, owens_t, student_t_cdf,
};

pub use gmm::{em_restart, fit_gmm, EmRun, EmSummary, GmmOptions, MAX_COMPONENTS};
pub use mle::{fit_mle, MleOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    SkewNormal,
    Cauchy,
    StudentT,
    Gmm,
}

impl Family {
    /// The single-component families handled by [`fit_mle`].
    pub const PARAMETRIC: [Family; 4] = [
        Family::Normal,
        Family::SkewNormal,
        Family::Cauchy,
        Family::StudentT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::SkewNormal => "skew_normal",
            Family::Cauchy => "cauchy",
            Family::StudentT => "student_t",
            Family::Gmm => "gmm",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "normal" => Ok(Family::Normal),
            "skew_normal" | "skewnormal" => Ok(Family::SkewNormal),
            "cauchy" => Ok(Family::Cauchy),
            "student_t" | "t" => Ok(Family::StudentT),
            "gmm" => Ok(Family::Gmm),
            other => Err(Error::invalid("family", format!("unknown family '{other}'"))),
        }
    }
}

/// Gaussian mixture parameters, components in ascending order of mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GmmParams<T: Real> {
    pub weights: Vec<T>,
    pub means: Vec<T>,
    /// dB²
    pub variances: Vec<T>,
}

impl<T: Real> GmmParams<T> {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 || self.means.len() != m || self.variances.len() != m {
            return Err(Error::invalid("gmm", "weights, means and variances must have one entry per component"));
        }
        if self.weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::invalid("gmm", "weights must be positive"));
        }
        let total = compensated_sum(self.weights.iter().copied());
        if (total - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(16.0)) {
            return Err(Error::invalid("gmm", format!("weights sum to {total}")));
        }
        if self.variances.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
            return Err(Error::invalid("gmm", "variances must be positive and finite"));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("gmm", "means must be finite"));
        }
        Ok(())
    }

    /// Sorts components by mean (then variance).
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.components()).collect();
        order.sort_by(|&a, &b| {
            self.means[a]
                .partial_cmp(&self.means[b])
                .unwrap_or(Ordering::Equal)
                .then(
                    self.variances[a]
                        .partial_cmp(&self.variances[b])
                        .unwrap_or(Ordering::Equal),
                )
        });
        self.weights = order.iter().map(|&j| self.weights[j]).collect();
        self.means = order.iter().map(|&j| self.means[j]).collect();
        self.variances = order.iter().map(|&j| self.variances[j]).collect();
    }
}

/// A fully specified member of one of the candidate families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "family", content = "params", rename_all = "snake_case")]
pub enum Distribution<T: Real> {
    Normal { location: T, scale: T },
    /// Azzalini skew-normal; `shape = 0` is the normal distribution.
    SkewNormal { shape: T, location: T, scale: T },
    Cauchy { location: T, scale: T },
    StudentT { df: T, location: T, scale: T },
    Gmm(GmmParams<T>),
}

fn ln_sqrt_2pi<T: Real>() -> T {
    T::lit(0.918_938_533_204_672_8)
}

impl<T: Real> Distribution<T> {
    pub fn family(&self) -> Family {
        match self {
            Distribution::Normal { .. } => Family::Normal,
            Distribution::SkewNormal { .. } => Family::SkewNormal,
            Distribution::Cauchy { .. } => Family::Cauchy,
            Distribution::StudentT { .. } => Family::StudentT,
            Distribution::Gmm(_) => Family::Gmm,
        }
    }

    /// Number of free parameters `k`.
    pub fn parameter_count(&self) -> usize {
        match self {
            Distribution::Normal { .. } | Distribution::Cauchy { .. } => 2,
            Distribution::SkewNormal { .. } | Distribution::StudentT { .. } => 3,
            Distribution::Gmm(g) => 3 * g.components() - 1,
        }
    }

    /// `"normal"`, `"gmm-4"`, ...
    pub fn label(&self) -> String {
        match self {
            Distribution::Gmm(g) => format!("gmm-{}", g.components()),
            other => other.family().name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        let finite = |name: &'static str, v: T| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be finite"))
            }
        };
        match *self {
            Distribution::Normal { location, scale } | Distribution::Cauchy { location, scale } => {
                finite("location", location)?;
                positive("scale", scale)
            }
            Distribution::SkewNormal {
                shape,
                location,
                scale,
            } => {
                finite("shape", shape)?;
                finite("location", location)?;
                positive("scale", scale)
            }
            Distribution::StudentT {
                df,
                location,
                scale,
            } => {
                positive("df", df)?;
                finite("location", location)?;
                positive("scale", scale)
            }
            Distribution::Gmm(ref g) => g.validate(),
        }
    }

    pub fn ln_pdf(&self, x: T) -> T {
        match *self {
            Distribution::Normal { location, scale } => {
                let z = (x - location) / scale;
                -T::lit(0.5) * z * z - scale.ln() - ln_sqrt_2pi()
            }
            Distribution::SkewNormal {
                shape,
                location,
                scale,
            } => {
                let z = (x - location) / scale;
                T::LN_2() - T::lit(0.5) * z * z - scale.ln() - ln_sqrt_2pi()
                    + ln_normal_cdf(shape * z)
            }
            Distribution::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                -(T::PI() * scale).ln() - (z * z).ln_1p()
            }
            Distribution::StudentT {
                df,
                location,
                scale,
            } => {
                let z = (x - location) / scale;
                let half = T::lit(0.5);
                ln_gamma((df + T::one()) * half)
                    - ln_gamma(df * half)
                    - half * (df * T::PI()).ln()
                    - scale.ln()
                    - (df + T::one()) * half * (z * z / df).ln_1p()
            }
            Distribution::Gmm(ref g) => {
                let mut terms = [T::zero(); MAX_COMPONENTS];
                let m = g.components().min(MAX_COMPONENTS);
                let mut top = T::neg_infinity();
                for j in 0..m {
                    let d = x - g.means[j];
                    let l = g.weights[j].ln()
                        - T::lit(0.5) * (d * d / g.variances[j] + g.variances[j].ln())
                        - ln_sqrt_2pi();
                    terms[j] = l;
                    top = top.max(l);
                }
                if !top.is_finite() {
                    return top;
                }
                top + terms[..m].iter().map(|&l| (l - top).exp()).sum::<T>().ln()
            }
        }
    }

    pub fn pdf(&self, x: T) -> T {
        match *self {
            Distribution::Gmm(ref g) => (0..g.components())
                .map(|j| {
                    let s = g.variances[j].sqrt();
                    g.weights[j] * normal_pdf((x - g.means[j]) / s) / s
                })
                .sum(),
            _ => self.ln_pdf(x).exp(),
        }
    }

    pub fn cdf(&self, x: T) -> T {
        if x == T::neg_infinity() {
            return T::zero();
        }
        if x == T::infinity() {
            return T::one();
        }
        let clamp = |p: T| p.max(T::zero()).min(T::one());
        match *self {
            Distribution::Normal { location, scale } => normal_cdf((x - location) / scale),
            Distribution::SkewNormal {
                shape,
                location,
                scale,
            } => {
                clamp(skew_normal_cdf((x - location) / scale, shape))
            }
            Distribution::Cauchy { location, scale } => {
                let z = (x - location) / scale;
                if z < T::zero() {
                    (-z.recip()).atan() / T::PI()
                } else {
                    T::lit(0.5) + z.atan() / T::PI()
                }
            }
            Distribution::StudentT {
                df,
                location,
                scale,
            } => student_t_cdf((x - location) / scale, df),
            Distribution::Gmm(ref g) => clamp(
                (0..g.components())
                    .map(|j| g.weights[j] * normal_cdf((x - g.means[j]) / g.variances[j].sqrt()))
                    .sum(),
            ),
        }
    }

    pub fn density_and_cdf(&self, x: T) -> (T, T) {
        (self.pdf(x), self.cdf(x))
    }

    /// `Σ ln f(xᵢ)`, with the per-observation constants pulled out.
    pub fn loglik(&self, data: &[T]) -> T {
        let n = T::count(data.len());
        let half = T::lit(0.5);
        let standardized = |location: T, scale: T| {
            let inv = scale.recip();
            data.iter().map(move |&x| (x - location) * inv)
        };
        match *self {
            Distribution::Normal { location, scale } => {
                -half * compensated_sum(standardized(location, scale).map(|z| z * z))
                    - n * (scale.ln() + ln_sqrt_2pi())
            }
            Distribution::SkewNormal {
                shape,
                location,
                scale,
            } => {
                compensated_sum(
                    standardized(location, scale).map(|z| ln_normal_cdf(shape * z) - half * z * z),
                ) + n * (T::LN_2() - scale.ln() - ln_sqrt_2pi())
            }
            Distribution::Cauchy { location, scale } => {
                -compensated_sum(standardized(location, scale).map(|z| (z * z).ln_1p()))
                    - n * (T::PI() * scale).ln()
            }
            Distribution::StudentT {
                df,
                location,
                scale,
            } => {
                let c = ln_gamma((df + T::one()) * half)
                    - ln_gamma(df * half)
                    - half * (df * T::PI()).ln()
                    - scale.ln();
                let inv_df = df.recip();
                -(df + T::one())
                    * half
                    * compensated_sum(standardized(location, scale).map(|z| (z * z * inv_df).ln_1p()))
                    + n * c
            }
            Distribution::Gmm(_) => compensated_sum(data.iter().map(|&x| self.ln_pdf(x))),
        }
    }

    fn center_and_spread(&self) -> (T, T) {
        match *self {
            Distribution::Normal { location, scale }
            | Distribution::Cauchy { location, scale }
            | Distribution::SkewNormal {
                location, scale, ..
            }
            | Distribution::StudentT {
                location, scale, ..
            } => (location, scale),
            Distribution::Gmm(ref g) => {
                let center = (0..g.components()).map(|j| g.weights[j] * g.means[j]).sum();
                let spread = g.variances.iter().fold(T::zero(), |a, &v| a.max(v)).sqrt();
                (center, spread)
            }
        }
    }

    /// Inverse CDF by bracketed bisection to an absolute tolerance of 1e-9
    /// (or the precision of `T`, whichever is coarser).
    pub fn quantile(&self, p: T) -> T {
        if !(p > T::zero()) {
            return if p == T::zero() { T::neg_infinity() } else { T::nan() };
        }
        if !(p < T::one()) {
            return if p == T::one() { T::infinity() } else { T::nan() };
        }
        let (center, spread) = self.center_and_spread();
        let two = T::lit(2.0);
        let mut step = spread;
        let mut lo = center - step;
        while self.cdf(lo) > p && lo.is_finite() {
            step = step * two;
            lo = center - step;
        }
        step = spread;
        let mut hi = center + step;
        while self.cdf(hi) < p && hi.is_finite() {
            step = step * two;
            hi = center + step;
        }
        let tol = T::lit(QUANTILE_TOL);
        for _ in 0..400 {
            let mid = lo + (hi - lo) / two;
            if hi - lo <= tol || mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo + (hi - lo) / two
    }
}

const QUANTILE_TOL: f64 = 1e-9;

/// Standard skew-normal CDF `Φ(z) − 2·T(z, α)`.
///
/// For `z < 0 < α` the two terms nearly cancel in the tail; once the
/// difference drops below a thousandth of `Φ(z)` the defining integral
/// `2∫ φ(t)Φ(αt) dt` over `(−∞, z]` is evaluated directly instead.
pub(crate) fn skew_normal_cdf<T: Real>(z: T, shape: T) -> T {
    if z > T::zero() && shape < T::zero() {
        // upper tail through the reflected lower tail
        return T::one() - skew_normal_cdf(-z, -shape);
    }
    let phi = normal_cdf(z);
    let direct = phi - T::lit(2.0) * owens_t(z, shape);
    if z < T::zero() && shape > T::zero() && direct < T::lit(1e-3) * phi {
        skew_normal_lower_tail(z, shape)
    } else {
        direct
    }
}

fn skew_normal_lower_tail<T: Real>(z: T, shape: T) -> T {
    let half = T::lit(0.5);
    let ln_f = |t: T| T::LN_2() - half * t * t - ln_sqrt_2pi() + ln_normal_cdf(shape * t);
    let u = shape * z;
    // log-slope of the integrand at z; being log-concave it decays at least this fast
    let mills = (-half * u * u - ln_sqrt_2pi() - ln_normal_cdf(u)).exp();
    let rate = -z + shape * mills;
    let f0 = ln_f(z);
    let edges = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let mut sum = T::zero();
    for w in edges.windows(2) {
        let (mid, half_width) = (T::lit(0.5 * (w[0] + w[1])), T::lit(0.5 * (w[1] - w[0])));
        for &(node, weight) in crate::special::gauss_legendre() {
            let s = mid + half_width * T::lit(node);
            sum += T::lit(weight) * half_width * (ln_f(z - s / rate) - f0).exp();
        }
    }
    f0.exp() / rate * sum
}

/// `(AIC, BIC) = (2k − 2ℓ, k·ln n − 2ℓ)`.
pub fn information_criteria<T: Real>(k: usize, n: usize, loglik: T) -> (T, T) {
    let k = T::count(k);
    let two = T::lit(2.0);
    (two * k - two * loglik, k * T::count(n).ln() - two * loglik)
}

/// A fitted distribution with its fit statistics on the data it was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DistributionFit<T: Real> {
    #[serde(flatten)]
    pub distribution: Distribution<T>,
    pub k: usize,
    pub n: usize,
    pub loglik: T,
    pub aic: T,
    pub bic: T,
    pub ks: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub em: Option<EmSummary<T>>,
}

impl<T: Real> DistributionFit<T> {
    /// Computes the information criteria and the KS statistic on `sorted`.
    pub(crate) fn from_sorted(distribution: Distribution<T>, loglik: T, sorted: &[T]) -> Self {
        let k = distribution.parameter_count();
        let n = sorted.len();
        let (aic, bic) = information_criteria(k, n, loglik);
        let ks = ks_sorted(&distribution, sorted);
        Self {
            distribution,
            k,
            n,
            loglik,
            aic,
            bic,
            ks,
            em: None,
        }
    }

    pub fn family(&self) -> Family {
        self.distribution.family()
    }

    pub fn label(&self) -> String {
        self.distribution.label()
    }

    pub fn density_and_cdf(&self, x: T) -> (T, T) {
        self.distribution.density_and_cdf(x)
    }
}

/// Finite copy of `data` in ascending order, with at least `min_n` values.
pub(crate) fn sorted_sample<T: Real>(data: &[T], min_n: usize) -> Result<Vec<T>> {
    if data.len() < min_n {
        return Err(Error::invalid(
            "data",
            format!("need at least {min_n} observations, got {}", data.len()),
        ));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: i,
            column: "residual".into(),
        });
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(sorted)
}

fn ks_sorted<T: Real>(dist: &Distribution<T>, sorted: &[T]) -> T {
    let n = T::count(sorted.len());
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            let above = T::count(i + 1) / n - f;
            let below = f - T::count(i) / n;
            above.max(below)
        })
        .fold(T::zero(), T::max)
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `data` and
/// `dist`. Statistic only: with estimated parameters the usual p-values
/// do not apply.
pub fn ks_statistic<T: Real>(dist: &Distribution<T>, data: &[T]) -> Result<T> {
    Ok(ks_sorted(dist, &sorted_sample(data, 1)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QqPoint<T: Real> {
    pub theoretical: T,
    pub empirical: T,
}

/// Q–Q pairs at plotting positions `(i − 0.5)/n`, thinned evenly to at most
/// `max_points` (always keeping both extremes).
pub fn qq_points<T: Real>(
    dist: &Distribution<T>,
    data: &[T],
    max_points: usize,
) -> Result<Vec<QqPoint<T>>> {
    if max_points < 2 {
        return Err(Error::invalid("max_points", "must be at least 2"));
    }
    let sorted = sorted_sample(data, 1)?;
    let n = sorted.len();
    let len = n.min(max_points);
    let nt = T::count(n);
    let index = |k: usize| {
        if len == n {
            k
        } else {
            (k * (n - 1) + (len - 1) / 2) / (len - 1)
        }
    };
    Ok((0..len)
        .map(|k| {
            let i = index(k);
            let p = (T::count(i) + T::lit(0.5)) / nt;
            QqPoint {
                theoretical: dist.quantile(p),
                empirical: sorted[i],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HistogramBin<T: Real> {
    pub center: T,
    pub width: T,
    pub density: T,
}

/// Equal-width histogram over `[min, max]` normalised to unit area.
///
/// Data with no spread produce one bin of width 1 and density 1.
pub fn histogram_density<T: Real>(data: &[T], bins: usize) -> Result<Vec<HistogramBin<T>>> {
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let sorted = sorted_sample(data, 1)?;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi == lo {
        return Ok(vec![HistogramBin {
            center: lo,
            width: T::one(),
            density: T::one(),
        }]);
    }
    let range = hi - lo;
    let nb = T::count(bins);
    let mut counts = vec![0usize; bins];
    for &x in &sorted {
        let b = ((x - lo) / range * nb).floor().to_usize().unwrap_or(0).min(bins - 1);
        counts[b] += 1;
    }
    let width = range / nb;
    let scale = T::count(sorted.len()) * width;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(b, &c)| HistogramBin {
            center: lo + (T::count(b) + T::lit(0.5)) * width,
            width,
            density: T::count(c) / scale,
        })
        .collect())
}

/// Candidate fits ordered best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Ranking<T: Real> {
    pub fits: Vec<DistributionFit<T>>,
}

impl<T: Real> Ranking<T> {
    pub fn winner(&self) -> &DistributionFit<T> {
        &self.fits[0]
    }
}

const BIC_TIE: f64 = 1e-6;

fn bic_tied<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(BIC_TIE) * a.abs().max(b.abs())
}

/// Orders fits by ascending BIC. Fits whose BIC agrees within 1e-6
/// (relative) with the first of their run are ordered by parameter count,
/// then by KS statistic.
pub fn rank_candidates<T: Real>(mut fits: Vec<DistributionFit<T>>) -> Result<Ranking<T>> {
    if fits.len() < 2 {
        return Err(Error::invalid("fits", "need at least two candidates"));
    }
    let n = fits[0].n;
    if let Some(f) = fits.iter().find(|f| f.n != n) {
        return Err(Error::invalid(
            "fits",
            format!("{} was fitted to {} observations, expected {n}", f.label(), f.n),
        ));
    }
    let by = |a: T, b: T| a.partial_cmp(&b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()));
    fits.sort_by(|a, b| by(a.bic, b.bic));
    let mut start = 0;
    while start < fits.len() {
        let mut end = start + 1;
        while end < fits.len() && bic_tied(fits[start].bic, fits[end].bic) {
            end += 1;
        }
        fits[start..end].sort_by(|a, b| {
            a.k.cmp(&b.k)
                .then_with(|| by(a.ks, b.ks))
                .then_with(|| by(a.bic, b.bic))
        });
        start = end;
    }
    Ok(Ranking { fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(location: f64, scale: f64) -> Distribution<f64> {
        Distribution::Normal { location, scale }
    }

    fn all_families() -> Vec<Distribution<f64>> {
        vec![
            normal(1.0, 2.0),
            Distribution::SkewNormal {
                shape: 3.0,
                location: -1.0,
                scale: 2.5,
            },
            Distribution::Cauchy {
                location: 3.0,
                scale: 2.0,
            },
            Distribution::StudentT {
                df: 4.0,
                location: 0.5,
                scale: 1.5,
            },
            Distribution::Gmm(GmmParams {
                weights: vec![0.3, 0.5, 0.2],
                means: vec![-4.0, 0.0, 6.0],
                variances: vec![1.0, 4.0, 9.0],
            }),
        ]
    }

    #[test]
    fn standard_normal_values() {
        let (pdf, cdf) = normal(0.0, 1.0).density_and_cdf(0.0);
        assert!((pdf - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(cdf, 0.5);
    }

    #[test]
    fn parameter_counts() {
        let ks: Vec<usize> = all_families().iter().map(|d| d.parameter_count()).collect();
        assert_eq!(ks, vec![2, 3, 2, 3, 8]);
    }

    #[test]
    fn skew_normal_shape_zero_is_normal() {
        let sn = Distribution::SkewNormal {
            shape: 0.0,
            location: 1.0,
            scale: 2.0,
        };
        let nd = normal(1.0, 2.0);
        for i in 0..20 {
            let x = -9.0 + i as f64 * 0.97;
            assert!((sn.cdf(x) - nd.cdf(x)).abs() < 1e-10);
            assert!((sn.ln_pdf(x) - nd.ln_pdf(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn skew_normal_lower_tail_is_relative_accurate() {
        let d = Distribution::SkewNormal {
            shape: 3.0,
            location: -1.0,
            scale: 2.5,
        };
        // 40-digit quadrature of the defining integral
        for (x, want) in [
            (-9.0, 5.845_160_874_952_185e-26),
            (-7.68, 4.473_048_069_048_781e-19),
            (-4.0, 4.605_572_660_500_410e-6),
        ] {
            let got: f64 = d.cdf(x);
            assert!(((got - want) / want).abs() < 1e-10, "{x}: {got} vs {want}");
        }
    }

    #[test]
    fn pdf_integrates_to_cdf_increments() {
        // Simpson over [-3, 5] against the CDF difference.
        for d in all_families() {
            let (a, b, m) = (-3.0, 5.0, 2000);
            let h = (b - a) / m as f64;
            let mut s = d.pdf(a) + d.pdf(b);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * d.pdf(a + i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!(
                (integral - (d.cdf(b) - d.cdf(a))).abs() < 1e-9,
                "{}: {integral}",
                d.label()
            );
        }
    }

    #[test]
    fn cdfs_monotone_with_limits() {
        for d in all_families() {
            let mut prev = 0.0;
            for i in 0..1000 {
                let x = -60.0 + i as f64 * 0.12;
                let c = d.cdf(x);
                assert!(c >= prev, "{} not monotone at {x}", d.label());
                assert!(d.pdf(x) >= 0.0);
                prev = c;
            }
            assert_eq!(d.cdf(f64::NEG_INFINITY), 0.0);
            assert_eq!(d.cdf(f64::INFINITY), 1.0);
        }
    }

    #[test]
    fn gmm_cdf_saturates() {
        let d = &all_families()[4];
        assert!((d.cdf(6.0 + 40.0 * 3.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in all_families() {
            for &p in &[1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
                let x = d.quantile(p);
                assert!((d.cdf(x) - p).abs() < 1e-9, "{} at {p}", d.label());
            }
        }
        assert_eq!(normal(0.0, 1.0).quantile(0.0), f64::NEG_INFINITY);
        assert!(normal(0.0, 1.0).quantile(1.5).is_nan());
    }

    #[test]
    fn ks_of_exact_quantiles_is_half_step() {
        for d in all_families() {
            let n = 400;
            let data: Vec<f64> = (0..n)
                .map(|i| d.quantile((i as f64 + 0.5) / n as f64))
                .collect();
            let ks = ks_statistic(&d, &data).unwrap();
            assert!((ks - 0.5 / n as f64).abs() < 1e-8, "{}: {ks}", d.label());
            let qq = qq_points(&d, &data, 1000).unwrap();
            assert_eq!(qq.len(), n);
            assert!(qq.iter().all(|q| (q.theoretical - q.empirical).abs() < 1e-8));
        }
    }

    #[test]
    fn qq_thinning_keeps_extremes() {
        let data: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let qq = qq_points(&normal(500.0, 300.0), &data, 7).unwrap();
        assert_eq!(qq.len(), 7);
        assert_eq!(qq[0].empirical, 0.0);
        assert_eq!(qq[6].empirical, 999.0);
        assert!(qq_points(&normal(0.0, 1.0), &data, 1).is_err());
    }

    #[test]
    fn histogram_uniform_grid_and_degenerate() {
        let data: Vec<f64> = (0..100).map(f64::from).collect();
        let h = histogram_density(&data, 10).unwrap();
        assert!(h.iter().all(|b| (b.density - h[0].density).abs() < 1e-15));
        let area: f64 = h.iter().map(|b| b.density * b.width).sum();
        assert!((area - 1.0).abs() < 1e-12);
        let flat = histogram_density(&[2.0; 5], 4).unwrap();
        assert_eq!(flat, vec![HistogramBin { center: 2.0, width: 1.0, density: 1.0 }]);
        assert!(histogram_density(&data, 0).is_err());
    }

    #[test]
    fn aic_matches_reported_table_value() {
        let (aic, bic) = information_criteria(2, 1_000_000, -2.6330e6f64);
        assert!((aic - 5.2660e6).abs() < 1e3);
        assert!((bic - (2.0 * (1e6f64).ln() + 5.2660e6)).abs() < 1e-6);
    }

    fn dummy(k_components: usize, bic: f64, ks: f64, n: usize) -> DistributionFit<f64> {
        let distribution = if k_components == 0 {
            normal(0.0, 1.0)
        } else {
            Distribution::StudentT {
                df: 5.0,
                location: 0.0,
                scale: 1.0,
            }
        };
        DistributionFit {
            k: distribution.parameter_count(),
            distribution,
            n,
            loglik: 0.0,
            aic: 0.0,
            bic,
            ks,
            em: None,
        }
    }

    #[test]
    fn ranking_rules() {
        let r = rank_candidates(vec![dummy(0, 20.0, 0.1, 10), dummy(0, 10.0, 0.2, 10)]).unwrap();
        assert_eq!(r.winner().bic, 10.0);
        let r = rank_candidates(vec![dummy(1, 10.0, 0.01, 10), dummy(0, 10.0, 0.5, 10)]).unwrap();
        assert_eq!(r.winner().k, 2);
        let r = rank_candidates(vec![dummy(0, 10.0, 0.3, 10), dummy(0, 10.0, 0.1, 10)]).unwrap();
        assert_eq!(r.winner().ks, 0.1);
        assert!(rank_candidates(vec![dummy(0, 1.0, 0.1, 10), dummy(0, 2.0, 0.1, 11)]).is_err());
        assert!(rank_candidates(vec![dummy(0, 1.0, 0.1, 10)]).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::Normal, Family::SkewNormal, Family::Cauchy, Family::StudentT, Family::Gmm] {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert_eq!("skew-normal".parse::<Family>().unwrap(), Family::SkewNormal);
        assert!("lognormal".parse::<Family>().is_err());
    }

    #[test]
    fn fit_serializes_flat() {
        let mut fit = dummy(0, 1.0, 0.1, 10);
        fit.distribution = normal(0.5, 2.0);
        let v = serde_json::to_value(&fit).unwrap();
        assert_eq!(v["family"], "normal");
        assert_eq!(v["params"]["scale"], 2.0);
        let back: DistributionFit<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, fit);
    }
}
