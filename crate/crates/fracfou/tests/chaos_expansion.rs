use fracfou::chaos::{h_hat, h_star, hermite_rank, ChaosFunction, Regime, ScalingRegime};
use fracfou::gaussian::Hurst;
use fracfou::numerics::{factorial, hermite, NormalRule};
use proptest::prelude::*;

#[test]
fn hermite_polynomials_are_orthogonal() {
    let rule = NormalRule::new(40);
    for j in 0..=10 {
        for k in 0..=10 {
            let ip = rule.expect(|x| hermite(j, x) * hermite(k, x));
            let expected = if j == k { factorial(k) } else { 0.0 };
            assert!((ip - expected).abs() <= 1e-8 * factorial(j.max(k)), "({j}, {k}): {ip}");
        }
    }
}

#[test]
fn rank_of_a_mixed_polynomial() {
    assert_eq!(hermite_rank(&[0.0, 0.0, 0.0, 2.0], 1e-12).unwrap(), 3);
    // H_3 + H_2
    let g = ChaosFunction::from_fn(|x: f64| x.powi(3) - 3.0 * x + x * x - 1.0, 12).unwrap();
    assert_eq!(g.rank(), 2);
    assert!(g.coefficient(1).abs() < 1e-10);
    assert!((g.coefficient(2) - 1.0).abs() < 1e-10);
    assert!((g.coefficient(3) - 1.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parseval_for_polynomials(c in proptest::collection::vec(-2.0f64..2.0, 2..8)) {
        let mut c = c;
        c[0] = 0.0;
        prop_assume!(c.iter().skip(1).any(|v| v.abs() > 1e-3));
        let g = ChaosFunction::from_coefficients(c.clone()).unwrap();
        let direct = NormalRule::new(40).expect(|x| g.eval(x).powi(2));
        prop_assert!((g.norm_sq() - direct).abs() <= 1e-9 * direct.max(1.0));
        let recovered = ChaosFunction::from_fn(move |x| {
            c.iter().enumerate().map(|(k, ck)| ck * hermite(k, x)).sum()
        }, 10).unwrap();
        for k in 0..8 {
            prop_assert!((recovered.coefficient(k) - g.coefficient(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn classification_agrees_with_inverse_map(m in 1usize..4, h in 0.05f64..0.95) {
        let hs = h_star(m, Hurst::new(h).unwrap());
        prop_assert!((h_hat(m, hs) - h).abs() < 1e-12);
        let r = Regime::new(m, Hurst::new(h).unwrap());
        let expected = if hs < 0.5 - 1e-12 {
            ScalingRegime::ShortRange
        } else if hs > 0.5 + 1e-12 {
            ScalingRegime::LongRange
        } else {
            ScalingRegime::Boundary
        };
        prop_assert_eq!(r.kind, expected);
    }
}
