//! Numerical acceptance checks, one per criterion.
//!
//! The quick suite uses fewer replicas than the full suite; tolerances are the same.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chaos::{h_star, limit_covariance_a, ChaosFunction};
use crate::error::Result;
use crate::fou::{functional_variance, rho, rho_power_integral, rho_power_integral_with_cutoff, FouConfig, FouSampler};
use crate::gaussian::{fbm_covariance, sample_fbm, Hurst, SamplePath, TimeGrid};
use crate::hermite::{HermiteSampler, HermiteSpec, SharedNoise};
use crate::mc::{
    boundary_ratios, fou_sampler, functional_samples, l2_convergence_hermite,
    spread_about_mean, variance_scan, with_threads, Ensemble,
};
use crate::numerics::linear_fit;
use crate::rng::Streams;
use crate::solver::{
    homogenization_endpoints, kinetic_error_scan, sample_brownian, solve_limit_stratonovich, young_integrate,
    HomogenizationSetup, ScalarField, YoungScheme,
};
use crate::stats::{bootstrap_se, ks_two_sample, variance, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Quick,
    Full,
}

impl Suite {
    /// `full` replicas in the full suite, `full / divisor` (at least `floor`) in the quick one.
    fn replicas(self, full: usize, divisor: usize, floor: usize) -> usize {
        match self {
            Suite::Full => full,
            Suite::Quick => (full / divisor).max(floor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: Vec<Metric>,
}

impl CriterionReport {
    /// `[PASS] 3 name: detail`.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

/// Collects sub-checks of one criterion.
struct Checks {
    passed: bool,
    detail: String,
    metrics: Vec<Metric>,
}

impl Checks {
    fn new() -> Self {
        Self { passed: true, detail: String::new(), metrics: Vec::new() }
    }

    fn check(&mut self, ok: bool, text: String) {
        self.passed &= ok;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let _ = write!(self.detail, "{text}{}", if ok { "" } else { " (failed)" });
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric { name: name.into(), value });
    }

    fn finish(self, id: usize) -> CriterionReport {
        CriterionReport { id, name: NAMES[id - 1].to_string(), passed: self.passed, detail: self.detail, metrics: self.metrics }
    }
}

pub const NAMES: [&str; 12] = [
    "fbm-covariance",
    "fou-stationarity",
    "degenerate-clt-constant",
    "scaling-regimes",
    "limit-covariance",
    "gaussian-vs-hermite",
    "hermite-sampler",
    "coupled-l2",
    "kinetic-rate",
    "homogenization",
    "solver-oracles",
    "determinism",
];

fn hu(h: f64) -> Result<Hurst> {
    Hurst::new(h)
}

fn hermite(m: usize) -> ChaosFunction {
    ChaosFunction::hermite(m).expect("Hermite polynomials of small order")
}

/// Runs criterion `id` (1 to 12).
pub fn run_criterion(id: usize, suite: Suite, streams: Streams) -> Result<CriterionReport> {
    let s = streams.child(NAMES[id - 1]);
    let checks = match id {
        1 => fbm_exactness(suite, s)?,
        2 => fou_stationarity(suite, s)?,
        3 => degenerate_constant()?,
        4 => scaling_regimes(suite, s)?,
        5 => limit_covariance(suite, s)?,
        6 => gaussian_vs_hermite(suite, s)?,
        7 => hermite_sampler(suite, s)?,
        8 => coupled_l2(suite, s)?,
        9 => kinetic_rate(suite, s)?,
        10 => homogenization(suite, s)?,
        11 => solver_oracles(suite, s)?,
        12 => determinism(s)?,
        _ => return Err(crate::Error::Domain(format!("no criterion {id}"))),
    };
    Ok(checks.finish(id))
}

/// Runs every criterion; a numerical error becomes a failed report.
pub fn run_suite(suite: Suite, streams: Streams, mut progress: impl FnMut(&CriterionReport)) -> Vec<CriterionReport> {
    (1..=12)
        .map(|id| {
            let r = run_criterion(id, suite, streams).unwrap_or_else(|e| CriterionReport {
                id,
                name: NAMES[id - 1].to_string(),
                passed: false,
                detail: format!("error: {e}"),
                metrics: Vec::new(),
            });
            progress(&r);
            r
        })
        .collect()
}

fn fbm_exactness(suite: Suite, s: Streams) -> Result<Checks> {
    let n = 256;
    let paths = suite.replicas(20_000, 4, 5000);
    let mut c = Checks::new();
    let grid = TimeGrid::new(1.0, n)?;
    for h in [0.3, 0.5, 0.7] {
        let hurst = hu(h)?;
        let rows = Ensemble::new(s, format!("fbm/{h}"), paths).map(|_, rng| Ok(sample_fbm(grid, hurst, rng)?.values))?;
        let x = DMatrix::from_fn(paths, n, |r, k| rows[r][k + 1]);
        let sq = x.map(|v| v * v);
        let nf = paths as f64;
        let mean = x.transpose() * &x / nf;
        let second = sq.transpose() * &sq / nf;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (t, u) = (grid.time(i + 1), grid.time(j + 1));
                let se = ((second[(i, j)] - mean[(i, j)].powi(2)) / nf).sqrt();
                worst = worst.max((mean[(i, j)] - fbm_covariance(t, u, hurst)?).abs() / se);
            }
        }
        c.metric(format!("max_z/H={h}"), worst);
        c.check(worst < 5.0, format!("H={h}: max |z| {worst:.2} < 5"));
    }
    Ok(c)
}

fn fou_stationarity(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let paths = suite.replicas(4000, 4, 1000);
    for h in [0.3, 0.5, 0.75] {
        let sampler = fou_sampler(hu(h)?, 1.0, 0.1)?;
        let rows = Ensemble::new(s, format!("fou/{h}"), paths).map(|_, rng| Ok(sampler.sample(rng).values))?;
        let pooled: Vec<f64> = rows.into_iter().flatten().collect();
        let m = Moments::of(&pooled);
        let v = m.variance + m.mean * m.mean;
        c.metric(format!("variance/H={h}"), v);
        c.check((v - 1.0).abs() <= 0.03, format!("H={h}: Var {v:.4} = 1 +- 0.03"));
    }
    let h = hu(0.75)?;
    let lags: Vec<f64> = (0..=20).map(|k| 10f64 * 10f64.powf(k as f64 / 20.0)).collect();
    let x: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let y: Vec<f64> = lags.iter().map(|l| rho(*l, h).ln()).collect();
    let slope = linear_fit(&x, &y).0;
    c.metric("rho_slope", slope);
    c.check((slope + 0.5).abs() <= 0.1, format!("rho slope on [10,100] {slope:.4} = -0.5 +- 0.1"));

    // The same decay read off sampled paths at unit scale.
    let grid = TimeGrid::new(400.0, 4000)?;
    let sampler = FouSampler::new(grid, FouConfig::new(h, 1.0)?)?;
    let n = suite.replicas(200, 4, 50);
    let rows = Ensemble::new(s, "fou/acf", n).map(|_, rng| Ok(sampler.sample(rng).values))?;
    let emp_lags = [10.0, 20.0, 50.0, 100.0];
    let acf: Vec<f64> = emp_lags
        .iter()
        .map(|l| {
            let k = (l / grid.dt()).round() as usize;
            let prods: Vec<f64> = rows.iter().flat_map(|r| r.windows(k + 1).step_by(10).map(move |w| w[0] * w[k])).collect();
            Moments::of(&prods).mean
        })
        .collect();
    let (ex, ey): (Vec<f64>, Vec<f64>) = emp_lags
        .iter()
        .zip(&acf)
        .filter(|(_, a)| **a > 0.0)
        .map(|(l, a)| (l.ln(), a.ln()))
        .unzip();
    if ex.len() >= 2 {
        c.metric("empirical_rho_slope", linear_fit(&ex, &ey).0);
    }
    Ok(c)
}

fn degenerate_constant() -> Result<Checks> {
    let mut c = Checks::new();
    let i1 = rho_power_integral(1, hu(0.4)?)?;
    c.metric("int_rho/H=0.4", i1);
    c.check(i1.abs() < 0.01, format!("H=0.4: |int rho| {:.2e} < 0.01", i1.abs()));
    let h = hu(0.6)?;
    let vals: Vec<f64> = [500.0, 1000.0, 2000.0]
        .iter()
        .map(|s| rho_power_integral_with_cutoff(2, h, *s))
        .collect::<Result<_>>()?;
    c.metric("int_rho2/H=0.6", vals[1]);
    c.check(vals[1] > 0.0, format!("H=0.6: int rho^2 {:.6} > 0", vals[1]));
    let spread = vals.iter().map(|v| (v / vals[1] - 1.0).abs()).fold(0.0, f64::max);
    c.metric("cutoff_spread", spread);
    c.check(spread < 0.01, format!("cutoff spread {spread:.2e} < 1%"));
    Ok(c)
}

const SCAN_EPS: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

fn scaling_regimes(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(10_000, 4, 2000);
    for (name, m, h, target) in [("short-range", 2, 0.6, 1.0), ("long-range", 1, 0.8, 0.4)] {
        let scan = variance_scan(&hermite(m), hu(h)?, 1.0, &SCAN_EPS, n, false, s.child(name))?;
        let fit = scan.slope.expect("variance scans fit a slope");
        c.metric(format!("slope/{name}"), fit.slope);
        c.check(
            fit.within(target, 0.1),
            format!("{name} slope {:.3} [{:.3}, {:.3}] = {target} +- 0.1", fit.slope, fit.ci_low, fit.ci_high),
        );
    }
    let scan = variance_scan(&hermite(2), hu(0.75)?, 1.0, &SCAN_EPS, n, false, s.child("boundary"))?;
    let ratios = boundary_ratios(&scan);
    let spread = spread_about_mean(&ratios);
    let exact: Vec<f64> = SCAN_EPS
        .iter()
        .map(|e| Ok(functional_variance(2, hu(0.75)?, 1.0, *e)? / (e * e.ln().abs())))
        .collect::<Result<_>>()?;
    c.metric("boundary_spread", spread);
    c.metric("boundary_spread_exact", spread_about_mean(&exact));
    c.check(spread <= 0.15, format!("boundary Var/(eps|ln eps|) spread {:.1}% <= 15%", 100.0 * spread));
    Ok(c)
}

fn limit_covariance(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let (g, h, eps) = (hermite(2), hu(0.6)?, 0.005);
    let n = suite.replicas(10_000, 4, 2500);
    let x = scaled_endpoints(&g, h, eps, n, s)?;
    let v = variance(&x);
    let target = 2.0 * limit_covariance_a(&g, &g, h, None)?.value;
    c.metric("variance", v);
    c.metric("variance_exact", functional_variance(2, h, 1.0, eps)? / eps);
    c.metric("target", target);
    c.check((v / target - 1.0).abs() <= 0.1, format!("Var {v:.4} vs 2A = {target:.4} within 10%"));
    Ok(c)
}

/// `alpha(eps) int_0^1 G(y^eps)` over `n` replicas.
fn scaled_endpoints(g: &ChaosFunction, h: Hurst, eps: f64, n: usize, s: Streams) -> Result<Vec<f64>> {
    let alpha = crate::chaos::Regime::new(g.rank(), h).alpha(eps);
    Ok(functional_samples(g, h, 1.0, &[eps], n, s)?.remove(0).into_iter().map(|v| alpha * v).collect())
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    Moments::of(x).excess_kurtosis
}

fn gaussian_vs_hermite(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(10_000, 4, 2500);
    let eps = 0.005;
    let short = scaled_endpoints(&hermite(2), hu(0.6)?, eps, n, s.child("short"))?;
    let k_short = excess_kurtosis(&short);
    c.metric("kurtosis/short-range", k_short);
    c.check(k_short.abs() < 0.2, format!("short-range |kurtosis| {:.3} < 0.2", k_short.abs()));

    let h = hu(0.85)?;
    let long = scaled_endpoints(&hermite(2), h, eps, n, s.child("long"))?;
    let mut boot = s.rng("bootstrap", 0);
    let (k_long, se_long) = (excess_kurtosis(&long), bootstrap_se(&long, excess_kurtosis, &mut boot));
    c.metric("kurtosis/long-range", k_long);
    c.check(k_long > 0.3, format!("long-range kurtosis {k_long:.3} > 0.3"));

    let z = hermite_endpoints(h_star(2, h), 2, 512, n, s.child("direct"))?;
    let (k_z, se_z) = (excess_kurtosis(&z), bootstrap_se(&z, excess_kurtosis, &mut boot));
    let zscore = (k_long - k_z).abs() / se_long.hypot(se_z);
    c.metric("kurtosis/direct", k_z);
    c.metric("kurtosis_z", zscore);
    c.check(zscore <= 3.0, format!("direct sampler kurtosis {k_z:.3}, |z| {zscore:.2} <= 3"));
    Ok(c)
}

/// `Z_1` of the Hermite process over `n` replicas.
fn hermite_endpoints(h: f64, m: usize, n_xi: usize, n: usize, s: Streams) -> Result<Vec<f64>> {
    Ok(hermite_paths(h, m, n_xi, 1, n, s)?.into_iter().map(|p| p.last()).collect())
}

fn hermite_paths(h: f64, m: usize, n_xi: usize, points: usize, n: usize, s: Streams) -> Result<Vec<SamplePath>> {
    let spec = HermiteSpec::new(h, m, n_xi)?;
    let layout = Arc::new(spec.layout(1.0)?);
    let sampler = HermiteSampler::with_layout(TimeGrid::new(1.0, points)?, spec, layout.clone())?;
    Ensemble::new(s, format!("hermite/{h}/{m}"), n).map(|_, rng| sampler.sample(&SharedNoise::sample(layout.clone(), rng)))
}

fn hermite_sampler(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(40_000, 4, 10_000);
    let (h, m, points) = (0.8, 2, 8);
    let paths = hermite_paths(h, m, 512, points, n, s.child("rosenblatt"))?;
    let ends: Vec<f64> = paths.iter().map(|p| p.last()).collect();
    let v = Moments::of(&ends).variance;
    c.metric("variance", v);
    c.check((v - 1.0).abs() <= 0.03, format!("H={h} m={m}: Var(Z_1) {v:.4} = 1 +- 0.03"));
    let hurst = hu(h)?;
    let mut worst: f64 = 0.0;
    for i in 1..=points {
        for j in i..=points {
            let prods: Vec<f64> = paths.iter().map(|p| p.values[i] * p.values[j]).collect();
            let mo = Moments::of(&prods);
            let (t, u) = (i as f64 / points as f64, j as f64 / points as f64);
            worst = worst.max((mo.mean - fbm_covariance(t, u, hurst)?).abs() / mo.mean_se);
        }
    }
    c.metric("covariance_max_z", worst);
    c.check(worst < 5.0, format!("covariance max |z| {worst:.2} < 5"));

    let h = 0.7;
    let n = suite.replicas(2000, 1, 2000);
    let z = hermite_endpoints(h, 1, 512, n, s.child("gaussian"))?;
    let grid = TimeGrid::new(1.0, 256)?;
    let hurst = hu(h)?;
    let b = Ensemble::new(s, "fbm", n).map(|_, rng| Ok(sample_fbm(grid, hurst, rng)?.last()))?;
    let ks = ks_two_sample(&z, &b);
    c.metric("ks_p_value", ks.p_value);
    c.check(!ks.rejects(0.01), format!("m=1 vs fBM KS p {:.3} >= 0.01", ks.p_value));
    Ok(c)
}

fn coupled_l2(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(2000, 2, 1000);
    let report = l2_convergence_hermite(&hermite(1), hu(0.8)?, 1.0, &[0.2, 0.1, 0.05], n, 512, s)?;
    let d = report.scan.statistics();
    let ratio = d[2] / d[0];
    c.metric("distance/0.2", d[0]);
    c.metric("distance/0.05", d[2]);
    c.metric("ratio", ratio);
    c.check(ratio < 0.5, format!("L2 distance {:.4} at 0.05 over {:.4} at 0.2 = {ratio:.3} < 1/2", d[2], d[0]));
    Ok(c)
}

fn kinetic_rate(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(400, 4, 100);
    for h in [0.3, 0.7] {
        let scan = kinetic_error_scan(hu(h)?, &SCAN_EPS, 1.0, 0.5 * h, n, s.child(&format!("{h}")))?;
        let fit = scan.sup_error.slope.expect("kinetic scans fit a slope");
        c.metric(format!("slope/H={h}"), fit.slope);
        c.metric(format!("identity/H={h}"), scan.identity_residual);
        c.check(
            fit.within(h, 0.1),
            format!("H={h}: slope {:.3} [{:.3}, {:.3}] = {h} +- 0.1", fit.slope, fit.ci_low, fit.ci_high),
        );
        c.check(scan.identity_residual <= 1e-6, format!("identity residual {:.1e} <= 1e-6", scan.identity_residual));
    }
    Ok(c)
}

/// The scalar test system `f = sin x + 2`, `h = 0`, `G = H_2`.
pub fn homogenization_setup(h: f64, eps: f64) -> Result<HomogenizationSetup> {
    Ok(HomogenizationSetup {
        f: ScalarField::Sine { amplitude: 1.0, frequency: 1.0, offset: 2.0 },
        h: ScalarField::Zero,
        chaos: hermite(2),
        g: ScalarField::Zero,
        hurst: hu(h)?,
        eps,
        x0: 0.0,
        horizon: 1.0,
        limit_steps: 512,
        n_xi: 512,
    })
}

fn homogenization(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let n = suite.replicas(2000, 1, 2000);
    for (name, h) in [("short-range", 0.6), ("long-range", 0.85)] {
        let r = homogenization_endpoints(&homogenization_setup(h, 0.02)?, n, s.child(name))?;
        c.metric(format!("ks_p/{name}"), r.ks.p_value);
        c.check(!r.ks.rejects(0.01), format!("{name}: KS D {:.4}, p {:.3} >= 0.01", r.ks.statistic, r.ks.p_value));
        // Smaller scale, reported only: the distance to the limit keeps shrinking.
        let r = homogenization_endpoints(&homogenization_setup(h, 0.005)?, n, s.child(&format!("{name}/fine")))?;
        c.metric(format!("ks_d/{name}/eps=0.005"), r.ks.statistic);
    }
    Ok(c)
}

fn solver_oracles(suite: Suite, s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    // Smooth driver z(t) = sin(2t); x' = x z' has x_1 = exp(sin 2).
    let exact = 2f64.sin().exp();
    let steps = [100, 200, 400, 800];
    let errs: Vec<f64> = steps
        .iter()
        .map(|n| {
            let grid = TimeGrid::new(1.0, *n)?;
            let z = SamplePath::new(grid, grid.times().map(|t| (2.0 * t).sin()).collect())?;
            Ok((young_integrate(1.0, |x| x, &z, YoungScheme::Trapezoid).last() - exact).abs())
        })
        .collect::<Result<_>>()?;
    let x: Vec<f64> = steps.iter().map(|n| (1.0 / *n as f64).ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let order = linear_fit(&x, &y).0;
    c.metric("young_order", order);
    c.check(order >= 1.0, format!("Young order {order:.3} >= 1"));

    let (coef, t) = (0.8, 1.0);
    let n = suite.replicas(10_000, 1, 10_000);
    let grid = TimeGrid::new(t, 200)?;
    let ends = Ensemble::new(s, "heun", n).map(|_, rng| {
        let w = sample_brownian(grid, rng);
        Ok(solve_limit_stratonovich(1.0, |x| x, |_| 0.0, 0.0, coef, &w).last().ln())
    })?;
    let v = variance(&ends);
    let target = coef * coef * t;
    c.metric("log_variance", v);
    c.check((v / target - 1.0).abs() <= 0.05, format!("Heun log-variance {v:.4} vs c^2 t = {target:.4} within 5%"));
    Ok(c)
}

/// A fingerprint of a small pipeline touching every sampler.
fn pipeline_fingerprint(s: Streams) -> Result<String> {
    let mut out = String::new();
    let scan = variance_scan(&hermite(2), hu(0.6)?, 1.0, &[0.1, 0.05, 0.02], 64, true, s)?;
    for p in &scan.points {
        let _ = writeln!(out, "{:.16e},{:.16e}", p.statistic, p.stderr);
    }
    let fit = scan.slope.expect("scans fit a slope");
    let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", fit.slope, fit.ci_low, fit.ci_high);
    for z in hermite_endpoints(0.7, 2, 64, 32, s)? {
        let _ = writeln!(out, "{z:.16e}");
    }
    let mut setup = homogenization_setup(0.85, 0.05)?;
    setup.limit_steps = 64;
    setup.n_xi = 64;
    let r = homogenization_endpoints(&setup, 32, s)?;
    for v in r.slow_fast.iter().chain(&r.limit) {
        let _ = writeln!(out, "{v:.16e}");
    }
    let k = kinetic_error_scan(hu(0.7)?, &[0.2, 0.1, 0.05], 1.0, 0.35, 16, s)?;
    for p in &k.sup_error.points {
        let _ = writeln!(out, "{:.16e}", p.statistic);
    }
    let path = sample_fbm(TimeGrid::new(1.0, 100)?, hu(0.3)?, &mut s.rng("fbm", 0))?;
    let _ = writeln!(out, "{:.16e}", path.last());
    Ok(out)
}

fn determinism(s: Streams) -> Result<Checks> {
    let mut c = Checks::new();
    let runs: Vec<String> = [Some(1), Some(2), Some(4), Some(1)]
        .into_iter()
        .map(|t| with_threads(t, || pipeline_fingerprint(s)))
        .collect::<Result<_>>()?;
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    c.metric("bytes", runs[0].len() as f64);
    c.check(same, format!("{} bytes identical across 1, 2 and 4 threads", runs[0].len()));
    Ok(c)
}
