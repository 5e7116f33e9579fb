//! Shared helpers for the integration tests: an adaptive Gauss–Kronrod
//! integrator used as an independent reference for the special functions,
//! and random regression instances.
#![allow(dead_code)]

use pathloss_core::features::DesignMatrix;
use pathloss_core::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// (Kronrod 15-point estimate, |K15 − G7|) on [a, b].
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive G7–K15 quadrature to a relative tolerance of about 1e-14.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (rough, _) = gk15(&f, a, b);
    let mut pieces = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut scale = rough.abs();
    while let Some((lo, hi, depth)) = pieces.pop() {
        let (k, err) = gk15(&f, lo, hi);
        scale = scale.max(k.abs());
        let budget = 1e-15 * scale.max(f64::MIN_POSITIVE) * ((hi - lo) / (b - a)).abs().max(1e-3);
        if err <= budget || depth >= 60 || err <= 1e-300 {
            total += k;
        } else {
            let mid = 0.5 * (lo + hi);
            pieces.push((lo, mid, depth + 1));
            pieces.push((mid, hi, depth + 1));
        }
    }
    total
}

/// `∫_lo^∞ f(t) dt` through `t = lo + s/(1 − s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, lo: f64) -> f64 {
    integrate(
        |s| {
            let one_s = 1.0 - s;
            f(lo + s / one_s) / (one_s * one_s)
        },
        0.0,
        1.0,
    )
}

pub fn erf_oracle(x: f64) -> f64 {
    let v = integrate(|t| (-t * t).exp(), 0.0, x.abs());
    (2.0 / std::f64::consts::PI.sqrt() * v).copysign(x)
}

/// Regularized lower incomplete gamma as `∫_0^x / (∫_0^x + ∫_x^∞)`.
pub fn gamma_p_oracle(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    // integrand scaled by its peak to stay in range for large a
    let mode = (a - 1.0).max(0.0);
    let peak = if mode > 0.0 { (a - 1.0) * mode.ln() - mode } else { 0.0 };
    let g = |t: f64| {
        if t <= 0.0 {
            0.0
        } else {
            ((a - 1.0) * t.ln() - t - peak).exp()
        }
    };
    let lower_direct = |lo: f64, hi: f64| integrate(g, lo, hi);
    let lower = if a < 1.0 {
        // u = t^a removes the singularity at 0
        integrate(|u| (-(u.powf(1.0 / a)) - peak).exp() / a, 0.0, x.powf(a))
    } else if x > mode && mode > 0.0 {
        lower_direct(0.0, mode) + lower_direct(mode, x)
    } else {
        lower_direct(0.0, x)
    };
    let upper = if x < mode {
        integrate(g, x, mode) + integrate_to_infinity(g, mode)
    } else {
        integrate_to_infinity(g, x)
    };
    lower / (lower + upper)
}

/// Regularized incomplete beta as `∫_0^x / ∫_0^1`, with power substitutions
/// at singular endpoints.
pub fn beta_inc_oracle(x: f64, a: f64, b: f64) -> f64 {
    let mode_log = |t: f64| (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln();
    let shift = {
        let m = if a > 1.0 && b > 1.0 { (a - 1.0) / (a + b - 2.0) } else { 0.5 };
        mode_log(m)
    };
    let left = |lo: f64, hi: f64| {
        if a < 1.0 {
            integrate(
                |u| {
                    let t = u.powf(1.0 / a);
                    ((b - 1.0) * (1.0 - t).ln() - shift).exp() / a
                },
                lo.powf(a),
                hi.powf(a),
            )
        } else {
            integrate(|t| (mode_log(t) - shift).exp(), lo, hi)
        }
    };
    let right = |lo: f64, hi: f64| {
        if b < 1.0 {
            integrate(
                |v| {
                    let t = 1.0 - v.powf(1.0 / b);
                    ((a - 1.0) * t.ln() - shift).exp() / b
                },
                (1.0 - hi).powf(b),
                (1.0 - lo).powf(b),
            )
        } else {
            integrate(|t| (mode_log(t) - shift).exp(), lo, hi)
        }
    };
    let (lower, upper) = if x <= 0.5 {
        (left(0.0, x), left(x, 0.5) + right(0.5, 1.0))
    } else {
        (left(0.0, 0.5) + right(0.5, x), right(x, 1.0))
    };
    lower / (lower + upper)
}

pub fn owens_t_oracle(h: f64, a: f64) -> f64 {
    let v = integrate(
        |x| {
            let q = 1.0 + x * x;
            (-0.5 * h * h * q).exp() / q
        },
        0.0,
        a.abs(),
    );
    (v / (2.0 * std::f64::consts::PI)).copysign(a)
}

/// Full-rank random regression: intercept plus `p − 1` columns on mixed
/// scales, coefficients in [−5, 5], uniform noise.
pub fn random_instance(n: usize, p: usize, seed: u64) -> DesignMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols = vec![vec![1.0; n]];
    for _ in 1..p {
        let scale = 10f64.powf(rng.random_range(-1.0..2.0));
        let shift = rng.random_range(-3.0..3.0) * scale;
        cols.push((0..n).map(|_| shift + rng.random_range(-1.0..1.0) * scale).collect());
    }
    let x = Matrix::from_columns(cols);
    let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
    let y = x
        .mul_vec(&beta)
        .into_iter()
        .map(|v| v + rng.random_range(-2.0..2.0))
        .collect();
    DesignMatrix {
        columns: (0..p)
            .map(|j| if j == 0 { "intercept".to_string() } else { format!("x{j}") })
            .collect(),
        x,
        y,
        frequency_offset: 0.0,
    }
}
