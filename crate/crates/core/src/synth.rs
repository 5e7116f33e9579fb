//! Synthetic measurement campaigns with known ground truth, and brute-force
//! reference computations used to check the estimators.

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution as _, Normal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::distfit::{Distribution, Family};
use crate::error::{Error, Result};
use crate::features::{
    LabeledVector, ModelSpec, BRICK_WALLS, INTERCEPT, LOG_DISTANCE, SNR, WOOD_WALLS,
};
use crate::ingest::{LinkProfile, LinkedSample, MeasurementRecord, RadioConfig};

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, name: &'static str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::invalid(name, format!("bad range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvRanges {
    pub temperature: Range,
    pub humidity: Range,
    pub pressure: Range,
    pub pm25: Range,
    pub co2: Range,
}

impl Default for EnvRanges {
    fn default() -> Self {
        Self {
            temperature: Range::new(18.0, 28.0),
            humidity: Range::new(25.0, 65.0),
            pressure: Range::new(960.0, 1000.0),
            pm25: Range::new(0.0, 25.0),
            co2: Range::new(400.0, 1500.0),
        }
    }
}

/// Table I of the reference campaign, in environment-aware column order.
pub fn reference_coefficients() -> LabeledVector<f64> {
    let pairs = [
        (INTERCEPT, 5.435),
        (LOG_DISTANCE, 3.195),
        (BRICK_WALLS, 8.521),
        (WOOD_WALLS, 2.981),
        ("co2", -0.002554),
        ("humidity", -0.073037),
        ("pm25", -0.153732),
        ("pressure", -0.011584),
        ("temperature", -0.005193),
        (SNR, -1.980319),
    ];
    LabeledVector::new(
        pairs.iter().map(|(l, _)| l.to_string()).collect(),
        pairs.iter().map(|&(_, v)| v).collect(),
    )
}

/// Ten office links spread over 2.5–38 m with mixed wall counts.
pub fn default_links() -> Vec<LinkProfile> {
    let table: [(f64, u32, u32); 10] = [
        (2.5, 0, 0),
        (4.0, 0, 1),
        (6.5, 1, 0),
        (9.0, 0, 2),
        (12.0, 1, 1),
        (15.5, 2, 0),
        (19.0, 1, 3),
        (24.0, 2, 1),
        (30.0, 3, 0),
        (38.0, 2, 2),
    ];
    table
        .iter()
        .enumerate()
        .map(|(i, &(distance, brick_walls, wood_walls))| LinkProfile {
            device_id: format!("node-{:02}", i + 1),
            distance,
            brick_walls,
            wood_walls,
        })
        .collect()
}

/// Everything needed to generate one synthetic campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub model: ModelSpec,
    /// In `model.column_labels()` order.
    pub coefficients: LabeledVector<f64>,
    pub link_profiles: Vec<LinkProfile>,
    pub env_ranges: EnvRanges,
    pub snr_range: Range,
    /// Inclusive spreading-factor range, drawn uniformly.
    pub spreading_factors: (u8, u8),
    pub noise: Distribution<f64>,
    pub radio: RadioConfig,
    pub start: DateTime<Utc>,
    pub n: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            model: ModelSpec::environment_aware(),
            coefficients: reference_coefficients(),
            link_profiles: default_links(),
            env_ranges: EnvRanges::default(),
            snr_range: Range::new(-10.0, 10.0),
            spreading_factors: (7, 10),
            noise: Distribution::Normal {
                location: 0.0,
                scale: 8.0,
            },
            radio: RadioConfig::default(),
            start: DateTime::from_timestamp(1_700_000_000, 0).expect("valid epoch"),
            n: 50_000,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        self.model.validate()?;
        self.coefficients.check_labels(&self.model.column_labels())?;
        if self.coefficients.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients", "must be finite"));
        }
        if self.link_profiles.is_empty() {
            return Err(Error::invalid("link_profiles", "need at least one link"));
        }
        for l in &self.link_profiles {
            l.validate()?;
        }
        self.noise.validate()?;
        self.radio.validate()?;
        if self.radio.frequency != self.model.frequency || self.radio.reference_distance != self.model.d0 {
            return Err(Error::invalid(
                "radio",
                "frequency and reference distance must match the model",
            ));
        }
        let r = &self.env_ranges;
        r.temperature.check("temperature")?;
        r.humidity.check("humidity")?;
        r.pressure.check("pressure")?;
        r.pm25.check("pm25")?;
        r.co2.check("co2")?;
        self.snr_range.check("snr_range")?;
        if r.humidity.min < 0.0 || r.humidity.max > 100.0 || r.pm25.min < 0.0 || r.co2.min < 0.0 {
            return Err(Error::invalid(
                "env_ranges",
                "humidity must lie in [0, 100]; pm25 and co2 must be non-negative",
            ));
        }
        let (lo, hi) = self.spreading_factors;
        if !(7..=12).contains(&lo) || !(7..=12).contains(&hi) || lo > hi {
            return Err(Error::invalid("spreading_factors", format!("bad range {lo}:{hi}")));
        }
        Ok(())
    }
}

/// Ground truth echoed next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEcho {
    pub model: ModelSpec,
    pub coefficients: LabeledVector<f64>,
    pub noise: Distribution<f64>,
    pub radio: RadioConfig,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<MeasurementRecord>,
    pub links: Vec<LinkProfile>,
    pub truth: TruthEcho,
    /// The noise term added to each record's path loss.
    pub noise: Vec<f64>,
}

/// One draw from `dist`.
pub fn draw<R: Rng + ?Sized>(dist: &Distribution<f64>, rng: &mut R) -> f64 {
    match *dist {
        Distribution::Normal { location, scale } => {
            location + scale * rng.sample::<f64, _>(StandardNormal)
        }
        Distribution::SkewNormal {
            shape,
            location,
            scale,
        } => {
            let delta = shape / (1.0 + shape * shape).sqrt();
            let u0: f64 = rng.sample(StandardNormal);
            let u1: f64 = rng.sample(StandardNormal);
            location + scale * (delta * u0.abs() + (1.0 - delta * delta).sqrt() * u1)
        }
        Distribution::Cauchy { location, scale } => Cauchy::new(location, scale)
            .expect("validated scale")
            .sample(rng),
        Distribution::StudentT {
            df,
            location,
            scale,
        } => location + scale * StudentT::new(df).expect("validated df").sample(rng),
        Distribution::Gmm(ref g) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let last = g.components() - 1;
            let j = (0..last)
                .find(|&j| {
                    acc += g.weights[j];
                    u < acc
                })
                .unwrap_or(last);
            Normal::new(g.means[j], g.variances[j].sqrt())
                .expect("validated variance")
                .sample(rng)
        }
    }
}

/// Generates `spec.n` records from the linear path loss model.
///
/// Each record picks a link uniformly, draws environmental readings and SNR
/// uniformly from their ranges, evaluates the model with the spec
/// coefficients, adds one noise draw and converts the path loss back to an
/// RSSI. Timestamps advance by one second per record. The whole dataset
/// comes from a single ChaCha stream, so equal specs give equal output.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = spec.model.frequency_offset();
    let budget = spec.radio.eirp_plus_rx_gain();
    let (sf_lo, sf_hi) = spec.spreading_factors;
    let r = &spec.env_ranges;
    let mut records = Vec::with_capacity(spec.n);
    let mut noise = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let link = &spec.link_profiles[rng.random_range(0..spec.link_profiles.len())];
        let record = MeasurementRecord {
            timestamp: spec.start + Duration::seconds(i as i64),
            device_id: link.device_id.clone(),
            spreading_factor: rng.random_range(sf_lo..=sf_hi),
            rssi: 0.0,
            snr: spec.snr_range.draw(&mut rng),
            temperature: r.temperature.draw(&mut rng),
            humidity: r.humidity.draw(&mut rng),
            pressure: r.pressure.draw(&mut rng),
            pm25: r.pm25.draw(&mut rng),
            co2: r.co2.draw(&mut rng),
        };
        let mut sample = LinkedSample {
            record,
            link: link.clone(),
        };
        let mean: f64 = spec
            .model
            .feature_row(&sample)
            .iter()
            .zip(&spec.coefficients.values)
            .map(|(x, b)| x * b)
            .sum();
        let e = draw(&spec.noise, &mut rng);
        sample.record.rssi = budget - (offset + mean + e);
        noise.push(e);
        records.push(sample.record);
    }
    Ok(SyntheticDataset {
        records,
        links: spec.link_profiles.clone(),
        truth: TruthEcho {
            model: spec.model.clone(),
            coefficients: spec.coefficients.clone(),
            noise: spec.noise.clone(),
            radio: spec.radio,
            n: spec.n,
            seed: spec.seed,
        },
        noise,
    })
}

fn kahan<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Population moments from Kahan-summed two-pass sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// `None` when the variance is zero.
    pub skewness: Option<f64>,
    /// Raw kurtosis; `None` when the variance is zero.
    pub kurtosis: Option<f64>,
}

pub fn moment_oracle(data: &[f64]) -> Result<Moments> {
    if data.len() < 2 {
        return Err(Error::invalid("data", "need at least two values"));
    }
    let n = data.len() as f64;
    let mean = kahan(data.iter().copied()) / n;
    let m2 = kahan(data.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = kahan(data.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = kahan(data.iter().map(|x| (x - mean).powi(4))) / n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2)))
    } else {
        (None, None)
    };
    Ok(Moments {
        mean,
        variance: m2,
        skewness,
        kurtosis,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBest {
    pub distribution: Distribution<f64>,
    pub loglik: f64,
}

/// Largest sample the exhaustive search accepts.
pub const GRID_MAX_N: usize = 2000;

/// Exhaustive log-likelihood search over the Cartesian product of `axes`.
///
/// Axes follow each family's parameter order: normal and cauchy
/// `[location, scale]`, student t `[df, location, scale]`, skew-normal
/// `[shape, location, scale]`. Grid points outside the parameter space
/// are skipped.
pub fn grid_loglik_oracle(family: Family, data: &[f64], axes: &[Vec<f64>]) -> Result<GridBest> {
    if data.is_empty() || data.len() > GRID_MAX_N {
        return Err(Error::invalid(
            "data",
            format!("need 1..={GRID_MAX_N} values, got {}", data.len()),
        ));
    }
    let dims = match family {
        Family::Normal | Family::Cauchy => 2,
        Family::StudentT | Family::SkewNormal => 3,
        Family::Gmm => return Err(Error::invalid("family", "mixtures are not searched")),
    };
    if axes.len() != dims || axes.iter().any(|a| a.is_empty()) {
        return Err(Error::invalid("grid", format!("need {dims} non-empty axes")));
    }
    let build = |p: &[f64]| match family {
        Family::Normal => Distribution::Normal {
            location: p[0],
            scale: p[1],
        },
        Family::Cauchy => Distribution::Cauchy {
            location: p[0],
            scale: p[1],
        },
        Family::StudentT => Distribution::StudentT {
            df: p[0],
            location: p[1],
            scale: p[2],
        },
        _ => Distribution::SkewNormal {
            shape: p[0],
            location: p[1],
            scale: p[2],
        },
    };
    let total: usize = axes.iter().map(Vec::len).product();
    let mut best: Option<GridBest> = None;
    let mut point = vec![0.0; dims];
    for flat in 0..total {
        let mut rem = flat;
        for (d, axis) in axes.iter().enumerate().rev() {
            point[d] = axis[rem % axis.len()];
            rem /= axis.len();
        }
        let dist = build(&point);
        if dist.validate().is_err() {
            continue;
        }
        let ll = kahan(data.iter().map(|&x| dist.ln_pdf(x)));
        if best.as_ref().is_none_or(|b| ll > b.loglik) {
            best = Some(GridBest {
                distribution: dist,
                loglik: ll,
            });
        }
    }
    best.ok_or_else(|| Error::invalid("grid", "no grid point lies in the parameter space"))
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
