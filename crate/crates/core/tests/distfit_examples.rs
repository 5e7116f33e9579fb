use pathloss_core::distfit::{
    fit_gmm, fit_mle, histogram_density, information_criteria, ks_statistic, qq_points, Distribution, Family,
    GmmOptions, GmmParams, MleOptions,
};
use pathloss_core::special::normal_pdf;
use pathloss_core::synth::draw;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample(dist: &Distribution<f64>, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| draw(dist, &mut rng)).collect()
}

fn four_peaks() -> Distribution<f64> {
    Distribution::Gmm(GmmParams {
        weights: vec![0.2, 0.3, 0.3, 0.2],
        means: vec![-15.0, -5.0, 5.0, 15.0],
        variances: vec![4.0, 2.25, 6.25, 4.0],
    })
}

fn any_distribution() -> impl Strategy<Value = Distribution<f64>> {
    let loc = -50.0f64..50.0;
    let scale = 0.01f64..30.0;
    prop_oneof![
        (loc.clone(), scale.clone()).prop_map(|(location, scale)| Distribution::Normal { location, scale }),
        (-20.0f64..20.0, loc.clone(), scale.clone())
            .prop_map(|(shape, location, scale)| Distribution::SkewNormal { shape, location, scale }),
        (loc.clone(), scale.clone()).prop_map(|(location, scale)| Distribution::Cauchy { location, scale }),
        (0.2f64..200.0, loc.clone(), scale.clone())
            .prop_map(|(df, location, scale)| Distribution::StudentT { df, location, scale }),
        prop::collection::vec((0.05f64..1.0, loc, scale), 1..=5).prop_map(|parts| {
            let total: f64 = parts.iter().map(|p| p.0).sum();
            let mut params = GmmParams {
                weights: parts.iter().map(|p| p.0 / total).collect(),
                means: parts.iter().map(|p| p.1).collect(),
                variances: parts.iter().map(|p| p.2 * p.2).collect(),
            };
            params.canonicalize();
            Distribution::Gmm(params)
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cdf_monotone_and_pdf_non_negative(dist in any_distribution()) {
        let (lo, hi) = (dist.quantile(1e-4), dist.quantile(1.0 - 1e-4));
        let mut previous = 0.0;
        for i in 0..1000 {
            let x = lo - 10.0 + (hi - lo + 20.0) * i as f64 / 999.0;
            let (pdf, cdf) = (dist.pdf(x), dist.cdf(x));
            prop_assert!(pdf >= 0.0);
            prop_assert!((0.0..=1.0).contains(&cdf));
            prop_assert!(cdf >= previous, "cdf falls at {}: {} < {}", x, cdf, previous);
            previous = cdf;
        }
    }

    #[test]
    fn ks_lies_in_unit_interval(dist in any_distribution(), data in prop::collection::vec(-200.0f64..200.0, 1..300)) {
        let d = ks_statistic(&dist, &data).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn ks_of_exact_quantiles(dist in any_distribution(), n in 1usize..400) {
        let data: Vec<f64> = (0..n).map(|i| dist.quantile((i as f64 + 0.5) / n as f64)).collect();
        let d = ks_statistic(&dist, &data).unwrap();
        prop_assert!((d - 0.5 / n as f64).abs() < 1e-8, "{} vs {}", d, 0.5 / n as f64);
    }

    #[test]
    fn qq_of_exact_quantiles_is_diagonal(dist in any_distribution(), n in 2usize..600, max_points in 2usize..300) {
        let data: Vec<f64> = (0..n).map(|i| dist.quantile((i as f64 + 0.5) / n as f64)).collect();
        let points = qq_points(&dist, &data, max_points).unwrap();
        prop_assert_eq!(points.len(), n.min(max_points));
        for p in &points {
            prop_assert!((p.theoretical - p.empirical).abs() <= 1e-8 * p.empirical.abs().max(1.0));
        }
    }

    #[test]
    fn histogram_has_unit_area(data in prop::collection::vec(-1e4f64..1e4, 1..500), bins in 1usize..200) {
        let h = histogram_density(&data, bins).unwrap();
        let area: f64 = h.iter().map(|b| b.density * b.width).sum();
        prop_assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skew_normal_nests_normal(seed in any::<u64>(), n in 50usize..1500, shape in -4.0f64..4.0) {
        let data = sample(&Distribution::SkewNormal { shape, location: 1.0, scale: 2.0 }, n, seed);
        let options = MleOptions::default();
        let normal = fit_mle(Family::Normal, &data, &options).unwrap();
        let skew = fit_mle(Family::SkewNormal, &data, &options).unwrap();
        prop_assert!(skew.loglik >= normal.loglik - 1e-6, "{} < {}", skew.loglik, normal.loglik);
        for fit in [&normal, &skew] {
            let (aic, bic) = information_criteria(fit.k, fit.n, fit.loglik);
            prop_assert_eq!(fit.aic, aic);
            prop_assert_eq!(fit.bic, bic);
            prop_assert_eq!(aic, 2.0 * fit.k as f64 - 2.0 * fit.loglik);
            prop_assert_eq!(bic, fit.k as f64 * (fit.n as f64).ln() - 2.0 * fit.loglik);
        }
    }
}

#[test]
fn cauchy_parameters_recovered() {
    let data = sample(&Distribution::Cauchy { location: 3.0, scale: 2.0 }, 100_000, 17);
    let fit = fit_mle(Family::Cauchy, &data, &MleOptions::default()).unwrap();
    let Distribution::Cauchy { location, scale } = fit.distribution else {
        panic!("wrong family");
    };
    assert!((location / 3.0 - 1.0).abs() < 0.02, "{location}");
    assert!((scale / 2.0 - 1.0).abs() < 0.02, "{scale}");
}

#[test]
fn two_separated_clusters() {
    let truth = Distribution::Gmm(GmmParams {
        weights: vec![0.5, 0.5],
        means: vec![-10.0, 10.0],
        variances: vec![1.0, 1.0],
    });
    let fit = fit_gmm(&sample(&truth, 20_000, 4), 2, &GmmOptions::default()).unwrap();
    let Distribution::Gmm(p) = &fit.distribution else {
        panic!("wrong family");
    };
    for (got, want) in p.means.iter().zip([-10.0, 10.0]) {
        assert!((got - want).abs() < 0.1);
    }
    for w in &p.weights {
        assert!((w - 0.5).abs() < 0.02);
    }
}

#[test]
fn mixture_self_consistency() {
    let truth = four_peaks();
    let d = ks_statistic(&truth, &sample(&truth, 100_000, 8)).unwrap();
    assert!(d < 0.01, "{d}");
}

#[test]
fn mixture_likelihood_grows_with_components() {
    let data = sample(&four_peaks(), 5000, 21);
    let options = GmmOptions::default();
    let fits: Vec<_> = (1..=6).map(|m| fit_gmm(&data, m, &options).unwrap()).collect();
    for pair in fits.windows(2) {
        assert!(
            pair[1].loglik >= pair[0].loglik - 1e-6,
            "m={}: {} < {}",
            pair[1].k,
            pair[1].loglik,
            pair[0].loglik
        );
    }
    for fit in &fits {
        for run in &fit.em.as_ref().unwrap().runs {
            assert!(run.loglik_history.windows(2).all(|w| w[1] >= w[0]));
        }
    }
    let again = fit_gmm(&data, 4, &options).unwrap();
    assert_eq!(again, fits[3]);
}

#[test]
fn cauchy_fitted_to_normal_data_overshoots_upper_tail() {
    let data = sample(&Distribution::Normal { location: 0.0, scale: 1.0 }, 20_000, 5);
    let fit = fit_mle(Family::Cauchy, &data, &MleOptions::default()).unwrap();
    let points = qq_points(&fit.distribution, &data, 1000).unwrap();
    let top = &points[points.len() * 9 / 10..];
    assert!(top.iter().all(|p| p.theoretical > p.empirical));
}

#[test]
fn histogram_tracks_standard_normal() {
    let data = sample(&Distribution::Normal { location: 0.0, scale: 1.0 }, 1_000_000, 99);
    let h = histogram_density(&data, 100).unwrap();
    let worst = h
        .iter()
        .map(|b| (b.density - normal_pdf(b.center)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
}
