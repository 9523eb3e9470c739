use std::sync::Arc;

use anyhow::Context;
use fracfou::acceptance::{run_criterion, CriterionReport, Suite};
use fracfou::chaos::{
    c_constant, h_star, hermite_limit_factor, k_normalizer, kernel_constant, limit_covariance_a, limit_spec, ChaosFunction,
    Regime, ScalingRegime,
};
use fracfou::fou::{rho, stationary_sigma, FouConfig};
use fracfou::gaussian::{sample_fbm, Hurst, SamplePath, TimeGrid};
use fracfou::hermite::{HermiteSampler, HermiteSpec, SharedNoise};
use fracfou::mc::{boundary_ratios, l2_convergence_hermite, variance_scan, Ensemble, ScanResult};
use fracfou::rng::Streams;
use fracfou::solver::{homogenization_endpoints, kinetic_error_scan, HomogenizationSetup, ScalarField};
use fracfou::Error;
use serde_json::json;

use crate::args::*;
use crate::output::Report;

/// Failure of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Numerical(String),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            RunError::Usage(e.to_string())
        } else {
            RunError::Numerical(e.to_string())
        }
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Usage(format!("{e:#}"))
    }
}

type Outcome = Result<Report, RunError>;

pub fn run(cfg: &ExperimentConfig) -> Outcome {
    let streams = Streams::new(cfg.seed);
    let n = cfg.replicas;
    match &cfg.experiment {
        Command::SampleFbm(a) => sample_fbm_cmd(a, n, streams),
        Command::SampleFou(a) => sample_fou_cmd(a, n, streams),
        Command::Rho(a) => rho_cmd(a),
        Command::Chaos(a) => chaos_cmd(a),
        Command::Constants(a) => constants_cmd(a),
        Command::HermiteSample(a) => hermite_cmd(a, n, streams),
        Command::CltScan(a) => clt_scan_cmd(a, n, streams),
        Command::L2Hermite(a) => l2_cmd(a, n, streams),
        Command::KineticScan(a) => kinetic_cmd(a, n, streams),
        Command::Homogenize(a) => homogenize_cmd(a, n, streams),
        Command::Verify(a) => verify_cmd(a, streams),
    }
}

fn hurst(h: f64) -> Result<Hurst, RunError> {
    Ok(Hurst::new(h)?)
}

fn paths_report(paths: &[SamplePath]) -> Report {
    let mut r = Report::new(vec!["replica", "t", "value"]);
    for (i, p) in paths.iter().enumerate() {
        for (k, v) in p.values.iter().enumerate() {
            r.push(vec![i.into(), p.grid.time(k).into(), (*v).into()]);
        }
    }
    r
}

fn sample_fbm_cmd(a: &SampleFbm, n: usize, s: Streams) -> Outcome {
    let (h, grid) = (hurst(a.hurst)?, TimeGrid::new(a.horizon, a.steps)?);
    let paths = Ensemble::new(s, "sample-fbm", n).map(|_, rng| sample_fbm(grid, h, rng))?;
    Ok(paths_report(&paths))
}

fn sample_fou_cmd(a: &SampleFou, n: usize, s: Streams) -> Outcome {
    let sampler = fracfou::mc::fou_sampler(hurst(a.hurst)?, a.horizon, a.eps)?;
    let paths = Ensemble::new(s, "sample-fou", n).map(|_, rng| Ok(sampler.sample(rng)))?;
    let cfg: FouConfig = sampler.config();
    Ok(paths_report(&paths).summary(json!({ "sigma": cfg.sigma(), "burn_in": cfg.burn_in, "dt": sampler.grid().dt() })))
}

fn rho_cmd(a: &Rho) -> Outcome {
    let h = hurst(a.hurst)?;
    if !(a.from > 0.0 && a.to > a.from && a.points >= 2) {
        return Err(RunError::Usage("need 0 < from < to and at least 2 points".into()));
    }
    let mut r = Report::new(vec!["s", "rho"]);
    let step = (a.to / a.from).ln() / (a.points - 1) as f64;
    for k in 0..a.points {
        let lag = a.from * (step * k as f64).exp();
        r.push(vec![lag.into(), rho(lag, h).into()]);
    }
    Ok(r.summary(json!({ "sigma": stationary_sigma(h) })))
}

fn chaos_function(coeffs: &[f64]) -> Result<ChaosFunction, RunError> {
    Ok(ChaosFunction::from_coefficients(coeffs.to_vec())?)
}

fn chaos_cmd(a: &Chaos) -> Outcome {
    let h = hurst(a.hurst)?;
    let g = chaos_function(&a.coeffs)?;
    let m = g.rank();
    let regime = Regime::new(m, h);
    let mut r = Report::new(vec!["k", "coefficient"]);
    for (k, c) in g.coefficients().iter().enumerate() {
        r.push(vec![k.into(), (*c).into()]);
    }
    let limit = limit_spec(&g, h).ok();
    Ok(r.summary(json!({
        "rank": m,
        "h_star": h_star(m, h),
        "regime": regime.kind.to_string(),
        "alpha_formula": regime.alpha_formula(),
        "alpha": a.eps.map(|e| regime.alpha(e)),
        "limit": limit,
    })))
}

fn constants_cmd(a: &Constants) -> Outcome {
    let h = hurst(a.hurst)?;
    let gs: Vec<ChaosFunction> = a
        .coeffs
        .iter()
        .map(|s| {
            let c: Vec<f64> = s
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("cannot parse coefficients {s:?}"))?;
            chaos_function(&c)
        })
        .collect::<Result<_, _>>()?;
    let mut r = Report::new(vec!["i", "j", "A"]);
    let short: Vec<bool> = gs.iter().map(|g| Regime::new(g.rank(), h).kind == ScalingRegime::ShortRange).collect();
    for i in 0..gs.len() {
        for j in 0..gs.len() {
            if short[i] && short[j] {
                r.push(vec![i.into(), j.into(), limit_covariance_a(&gs[i], &gs[j], h, None)?.value.into()]);
            }
        }
    }
    let components: Vec<_> = gs
        .iter()
        .map(|g| {
            let regime = Regime::new(g.rank(), h);
            let long = regime.kind == ScalingRegime::LongRange;
            Ok(json!({
                "rank": g.rank(),
                "regime": regime.kind.to_string(),
                "c": c_constant(g, h)?,
                "K": if long { Some(k_normalizer(regime.h_star, g.rank())?) } else { None },
                "kappa": if long { Some(hermite_limit_factor(g, h)?) } else { None },
            }))
        })
        .collect::<Result<_, Error>>()?;
    let kernel = if a.hurst > 0.5 { Some(kernel_constant(h)?) } else { None };
    Ok(r.summary(json!({ "sigma": stationary_sigma(h), "kernel_constant": kernel, "components": components })))
}

fn hermite_cmd(a: &HermiteSample, n: usize, s: Streams) -> Outcome {
    let spec = HermiteSpec::new(a.hurst, a.order, a.n_xi)?;
    let layout = Arc::new(spec.layout(a.horizon)?);
    let sampler = HermiteSampler::with_layout(TimeGrid::new(a.horizon, a.points)?, spec, layout.clone())?;
    let paths =
        Ensemble::new(s, "hermite-sample", n).map(|_, rng| sampler.sample(&SharedNoise::sample(layout.clone(), rng)))?;
    let var = sampler.discrete_variance(a.points);
    Ok(paths_report(&paths).summary(json!({ "discrete_variance_at_horizon": var })))
}

fn scan_report(scan: &ScanResult) -> Report {
    let mut r = Report::new(vec!["eps", "statistic", "stderr", "n"]);
    for p in &scan.points {
        r.push(vec![p.eps.into(), p.statistic.into(), p.stderr.into(), p.n.into()]);
    }
    r
}

fn clt_scan_cmd(a: &CltScan, n: usize, s: Streams) -> Outcome {
    let h = hurst(a.hurst)?;
    let g = chaos_function(&a.coeffs)?;
    let regime = Regime::new(g.rank(), h);
    let scan = variance_scan(&g, h, a.horizon, &a.eps, n, a.scaled, s)?;
    let boundary = (regime.kind == ScalingRegime::Boundary && !a.scaled).then(|| boundary_ratios(&scan));
    Ok(scan_report(&scan).summary(json!({
        "regime": regime.kind.to_string(),
        "slope_axis": "ln eps",
        "slope": scan.slope,
        "boundary_ratios": boundary,
    })))
}

fn l2_cmd(a: &L2Hermite, n: usize, s: Streams) -> Outcome {
    let g = chaos_function(&a.coeffs)?;
    let report = l2_convergence_hermite(&g, hurst(a.hurst)?, a.horizon, &a.eps, n, a.n_xi, s)?;
    let d = report.scan.statistics();
    let ratio = d[d.len() - 1] / d[0];
    Ok(scan_report(&report.scan).summary(json!({
        "slope_axis": "ln eps",
        "slope": report.scan.slope,
        "ratio_last_first": ratio,
        "leading_term_distance": report.leading_term,
    })))
}

fn kinetic_cmd(a: &KineticScan, n: usize, s: Streams) -> Outcome {
    let gamma = a.holder.unwrap_or(0.5 * a.hurst);
    let scan = kinetic_error_scan(hurst(a.hurst)?, &a.eps, a.horizon, gamma, n, s)?;
    Ok(scan_report(&scan.sup_error).summary(json!({
        "slope_axis": "ln eps",
        "sup_error_slope": scan.sup_error.slope,
        "holder_exponent": scan.holder_exponent,
        "holder": scan.holder,
        "identity_residual": scan.identity_residual,
    })))
}

fn field(s: &str) -> Result<ScalarField, RunError> {
    Ok(s.parse::<ScalarField>()?)
}

fn homogenize_cmd(a: &Homogenize, n: usize, s: Streams) -> Outcome {
    let setup = HomogenizationSetup {
        f: field(&a.f)?,
        h: field(&a.h)?,
        chaos: chaos_function(&a.coeffs)?,
        g: field(&a.g)?,
        hurst: hurst(a.hurst)?,
        eps: a.eps,
        x0: a.x0,
        horizon: a.horizon,
        limit_steps: a.limit_steps,
        n_xi: a.n_xi,
    };
    let res = homogenization_endpoints(&setup, n, s)?;
    let mut r = Report::new(vec!["replica", "slow_fast", "limit"]);
    for (i, (x, y)) in res.slow_fast.iter().zip(&res.limit).enumerate() {
        r.push(vec![i.into(), (*x).into(), (*y).into()]);
    }
    Ok(r.summary(json!({
        "regime": res.regime.to_string(),
        "limit_constant": res.constant,
        "g_bar": res.g_bar,
        "ks": res.ks,
    })))
}

fn verify_cmd(a: &Verify, s: Streams) -> Outcome {
    let suite = match a.suite {
        SuiteArg::Quick => Suite::Quick,
        SuiteArg::Full => Suite::Full,
    };
    let ids: Vec<usize> = if a.criteria.is_empty() { (1..=12).collect() } else { a.criteria.clone() };
    if let Some(bad) = ids.iter().find(|i| !(1..=12).contains(*i)) {
        return Err(RunError::Usage(format!("no criterion {bad}")));
    }
    let reports: Vec<CriterionReport> = ids
        .iter()
        .map(|id| {
            let r = run_criterion(*id, suite, s).unwrap_or_else(|e| CriterionReport {
                id: *id,
                name: fracfou::acceptance::NAMES[id - 1].to_string(),
                passed: false,
                detail: format!("error: {e}"),
                metrics: Vec::new(),
            });
            eprintln!("{}", r.line());
            r
        })
        .collect();
    let mut r = Report::new(vec!["id", "name", "passed", "detail"]);
    for c in &reports {
        r.push(vec![c.id.into(), c.name.as_str().into(), c.passed.into(), c.detail.as_str().into()]);
    }
    r.ok = reports.iter().all(|c| c.passed);
    Ok(r.summary(json!({ "criteria": reports })))
}
