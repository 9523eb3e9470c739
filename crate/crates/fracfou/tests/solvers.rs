use fracfou::chaos::ChaosFunction;
use fracfou::fou::{FouConfig, FouSampler};
use fracfou::gaussian::{Hurst, SamplePath, TimeGrid};
use fracfou::mc::Ensemble;
use fracfou::numerics::linear_fit;
use fracfou::rng::Streams;
use fracfou::solver::{
    rough_lift_1d, sample_brownian, solve_limit_stratonovich, young_integrate, MultiscaleConfig, ScalarField,
    SlowFastSolver, YoungScheme,
};
use fracfou::stats::Moments;
use proptest::prelude::*;

fn hu(h: f64) -> Hurst {
    Hurst::new(h).unwrap()
}

fn kinetic_solver(h: f64, eps: f64, grid: TimeGrid) -> SlowFastSolver {
    SlowFastSolver::new(MultiscaleConfig {
        f: ScalarField::Cosine { amplitude: 0.5, frequency: 1.0, offset: 1.0 },
        h: ScalarField::Zero,
        chaos: ChaosFunction::hermite(1).unwrap(),
        g: ScalarField::Zero,
        hurst: hu(h),
        eps,
        x0: 0.3,
        grid,
        seed: 0,
    })
    .unwrap()
}

#[test]
fn kinetic_system_approaches_the_young_solution() {
    let h = 0.7;
    let f = |x: f64| 0.5 * x.cos() + 1.0;
    let sigma = fracfou::fou::stationary_sigma(hu(h));
    let eps_list = [0.1, 0.05, 0.02, 0.01];
    let errs: Vec<f64> = eps_list
        .iter()
        .map(|eps| {
            let grid = TimeGrid::with_max_step(1.0, eps / 20.0).unwrap();
            let fast = FouSampler::new(grid, FouConfig::new(hu(h), *eps).unwrap()).unwrap();
            let solver = kinetic_solver(h, *eps, grid);
            let sups = Ensemble::new(Streams::new(12), format!("ks/{eps}"), 200)
                .map(|_, rng| {
                    let d = fast.sample_driven(rng);
                    let x = solver.solve_on(&d.fou)?;
                    let lim = young_integrate(0.3, f, &d.fbm.scaled(sigma), YoungScheme::Trapezoid);
                    Ok(x.values.iter().zip(&lim.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                })
                .unwrap();
            Moments::of(&sups).mean
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let x: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let slope = linear_fit(&x, &y).0;
    assert!(slope >= h - 0.5 * h - 0.15, "{slope}");
}

#[test]
fn refinement_moves_endpoints_less_than_the_mc_error() {
    let (c, n) = (0.7, 2000);
    let f = |x: f64| x.sin() + 2.0;
    let fine = TimeGrid::new(1.0, 400).unwrap();
    let coarse = TimeGrid::new(1.0, 200).unwrap();
    let pairs = Ensemble::new(Streams::new(3), "refine", n)
        .map(|_, rng| {
            let w = sample_brownian(fine, rng);
            let w2 = SamplePath::new(coarse, w.values.iter().step_by(2).copied().collect())?;
            let a = solve_limit_stratonovich(0.0, f, |_| 0.0, 0.0, c, &w).last();
            let b = solve_limit_stratonovich(0.0, f, |_| 0.0, 0.0, c, &w2).last();
            Ok((a, b))
        })
        .unwrap();
    let ends: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let se = Moments::of(&ends).mean_se;
    let shift = pairs.iter().map(|p| (p.0 - p.1).abs()).fold(0.0, f64::max);
    assert!(shift < se, "{shift} vs {se}");
}

#[test]
fn stratonovich_chain_rule_with_linear_drift() {
    let (c, g_bar) = (0.9, 0.4);
    let grid = TimeGrid::new(1.0, 4000).unwrap();
    for i in 0..5 {
        let w = sample_brownian(grid, &mut Streams::new(31).rng("chain", i));
        let x = solve_limit_stratonovich(2.0, |x| x, |x| x, g_bar, c, &w);
        for k in [1000, 2500, 4000] {
            let expected = 2f64.ln() + c * w.values[k] + g_bar * grid.time(k);
            assert!((x.values[k].ln() - expected).abs() < 2e-3, "{} vs {expected}", x.values[k].ln());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_dimensional_lift_satisfies_chen(values in proptest::collection::vec(-5.0f64..5.0, 8..20), s in 0usize..3, u in 3usize..5) {
        let grid = TimeGrid::new(1.0, values.len() - 1).unwrap();
        let lift = rough_lift_1d(SamplePath::new(grid, values.clone()).unwrap());
        let t = values.len() - 1;
        prop_assert!(lift.chen_defect(s, u, t).abs() < 1e-10);
    }
}
