use fracfou::fou::{functional_variance, rho, rho_decay_coefficient, FouConfig, FouSampler};
use fracfou::gaussian::{fgn_autocovariance, sample_fgn, Hurst, TimeGrid};
use fracfou::mc::{increment_moment_slope, Ensemble};
use fracfou::numerics::{integrate_panels, linear_fit};
use fracfou::rng::Streams;
use fracfou::stats::{variance, Moments};
use proptest::prelude::*;

fn hu(h: f64) -> Hurst {
    Hurst::new(h).unwrap()
}

#[test]
fn brownian_increments_pass_variance_ratio_test() {
    let mut rng = Streams::new(21).rng("vr", 0);
    let x = sample_fgn(1 << 16, 1.0, hu(0.5), &mut rng).unwrap();
    let v1 = variance(&x);
    for q in [2, 4, 8, 16] {
        let sums: Vec<f64> = x.chunks_exact(q).map(|c| c.iter().sum()).collect();
        let vr = variance(&sums) / (q as f64 * v1);
        // Asymptotic sd of the ratio is sqrt(2(q-1)/n) for non-overlapping blocks.
        let sd = (2.0 * (q as f64 - 1.0) / sums.len() as f64).sqrt();
        assert!((vr - 1.0).abs() < 4.0 * sd, "q = {q}: {vr}");
    }
}

#[test]
fn scaled_process_has_rescaled_autocorrelation() {
    let (h, eps) = (hu(0.7), 0.2);
    let grid = TimeGrid::new(4.0, 400).unwrap();
    let sampler = FouSampler::new(grid, FouConfig::new(h, eps).unwrap()).unwrap();
    let rows = Ensemble::new(Streams::new(3), "acf", 4000).map(|_, rng| Ok(sampler.sample(rng).values)).unwrap();
    let at = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[0] * r[k]).collect() };
    let var = Moments::of(&rows.iter().map(|r| r[0]).collect::<Vec<_>>()).variance;
    assert!((var - 1.0).abs() < 0.07, "{var}");
    for lag in [0.1, 0.2, 0.5, 1.0, 2.0] {
        let k = grid.index_of(lag);
        let m = Moments::of(&at(k));
        let expected = rho(lag / eps, h);
        // The scheme's own error at dt = eps/50 is well below the MC error.
        assert!((m.mean - expected).abs() < 4.0 * m.mean_se + 0.01, "lag {lag}: {} vs {expected}", m.mean);
    }
}

#[test]
fn increments_have_hurst_regularity_below_the_fast_scale() {
    for h in [0.3, 0.7] {
        let grid = TimeGrid::new(2.0, 2000).unwrap();
        let sampler = FouSampler::new(grid, FouConfig::new(hu(h), 1.0).unwrap()).unwrap();
        let paths = Ensemble::new(Streams::new(5), "holder", 200).map(|_, rng| Ok(sampler.sample(rng))).unwrap();
        let slope = increment_moment_slope(&paths, 2.0, &[2, 4, 8, 16]) / 2.0;
        assert!((slope - h).abs() < 0.06, "H = {h}: {slope}");
    }
}

#[test]
fn double_integral_change_of_variables() {
    let h = hu(0.65);
    for (m, eps) in [(1, 0.1), (2, 0.05), (3, 0.2)] {
        let lhs = functional_variance(m, h, 1.0, eps).unwrap() / (2.0 * fracfou::numerics::factorial(m));
        let top = 1.0 / eps;
        let breaks: Vec<f64> = (0..=200).map(|k| top * (k as f64 / 200.0).powi(3)).collect();
        let rhs = eps * eps * integrate_panels(|w| (top - w) * rho(w, h).powi(m as i32), &breaks, 1e-11);
        assert!((lhs / rhs - 1.0).abs() < 1e-7, "m = {m}: {lhs} vs {rhs}");
    }
}

#[test]
fn autocorrelation_tail_matches_fitted_power_law() {
    for h in [0.3, 0.75] {
        let lags: Vec<f64> = (0..10).map(|k| 50.0 * 1.5f64.powi(k)).collect();
        let x: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
        let y: Vec<f64> = lags.iter().map(|l| rho(*l, hu(h)).abs().ln()).collect();
        let (slope, _) = linear_fit(&x, &y);
        assert!((slope - (2.0 * h - 2.0)).abs() < 0.02, "H = {h}: {slope}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn autocorrelation_obeys_power_bound(s in 0.0f64..500.0, h in 0.1f64..0.9) {
        let h = hu(h);
        let c = 2.0 * rho_decay_coefficient(h).abs().max(1.0);
        let r = rho(s, h);
        prop_assert!(r.abs() <= 1.0 + 1e-12);
        prop_assert!(r.abs() <= c * s.powf(2.0 * h.value() - 2.0).min(1.0) + 1e-12);
    }

    #[test]
    fn fgn_sums_reproduce_fbm_variance(n in 1usize..200, h in 0.05f64..0.95) {
        let h = hu(h);
        let mut v = n as f64 * fgn_autocovariance(0, h);
        for k in 1..n {
            v += 2.0 * (n - k) as f64 * fgn_autocovariance(k, h);
        }
        prop_assert!((v / (n as f64).powf(2.0 * h.value()) - 1.0).abs() < 1e-9);
    }
}
