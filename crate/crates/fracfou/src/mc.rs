//! Replica-parallel Monte Carlo experiments on functionals of the fast process.
//!
//! Every replica draws from its own stream, results are collected in replica
//! order and reduced sequentially, so outputs do not depend on the number of
//! worker threads.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{limit_covariance_a, ChaosFunction, Regime, ScalingRegime};
use crate::error::{Error, Result};
use crate::fou::{rho_power_integral, FouConfig, FouSampler};
use crate::gaussian::{Hurst, SamplePath, TimeGrid};
use crate::hermite::{CoupledFunctional, NoiseLayout, SharedNoise};
use crate::numerics::{compensated_sum, linear_fit, NeumaierSum};
use crate::rng::{StreamRng, Streams};
use crate::stats::{bootstrap_log_slope, ks_normal, rms, variance, KsResult, Moments, SlopeFit};

/// A batch of replicas of one experiment.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub streams: Streams,
    pub label: String,
    pub replicas: usize,
}

impl Ensemble {
    pub fn new(streams: Streams, label: impl Into<String>, replicas: usize) -> Self {
        Self { streams, label: label.into(), replicas }
    }

    /// Runs `f(index, rng)` for every replica, in parallel, keeping index order.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64, &mut StreamRng) -> Result<T> + Sync,
    {
        (0..self.replicas as u64)
            .into_par_iter()
            .map(|i| f(i, &mut self.streams.rng(&self.label, i)))
            .collect()
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

/// `t -> alpha int_0^t G(y_s) ds` by the trapezoidal rule.
pub fn functional_integral(g: &ChaosFunction, y: &SamplePath, alpha: f64) -> SamplePath {
    let dt = y.grid.dt();
    let mut values = Vec::with_capacity(y.values.len());
    values.push(0.0);
    let mut acc = NeumaierSum::default();
    let mut prev = g.eval(y.values[0]);
    for v in &y.values[1..] {
        let cur = g.eval(*v);
        acc.add(0.5 * dt * (prev + cur));
        values.push(alpha * acc.value());
        prev = cur;
    }
    SamplePath { grid: y.grid, values }
}

/// Fast-process sampler resolving `eps` on `[0, t]`.
pub fn fou_sampler(h: Hurst, t: f64, eps: f64) -> Result<FouSampler> {
    let grid = TimeGrid::with_max_step(t, eps / crate::fou::RESOLUTION)?;
    FouSampler::new(grid, FouConfig::new(h, eps)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub eps: f64,
    pub statistic: f64,
    pub stderr: f64,
    pub n: usize,
}

/// A statistic along decreasing scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Slope of `ln statistic` against `ln eps`.
    pub slope: Option<SlopeFit>,
}

impl ScanResult {
    pub fn statistics(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.statistic).collect()
    }

    /// Whether the statistic decreases strictly as `eps` decreases.
    pub fn is_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].statistic < w[0].statistic)
    }
}

pub(crate) fn check_scales(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::Domain(format!("a scan needs at least 3 scales, got {}", eps.len())));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(Error::Domain(format!("scales {eps:?} must decrease strictly within (0, 1)")));
    }
    Ok(())
}

pub(crate) fn log_scales(eps: &[f64]) -> Vec<f64> {
    eps.iter().map(|e| e.ln()).collect()
}

/// Samples of `int_0^t G(y^eps)` (unscaled) per scale, replicas in columns.
pub fn functional_samples(
    g: &ChaosFunction,
    h: Hurst,
    t: f64,
    eps: &[f64],
    replicas: usize,
    streams: Streams,
) -> Result<Vec<Vec<f64>>> {
    eps.iter()
        .enumerate()
        .map(|(i, e)| {
            let sampler = fou_sampler(h, t, *e)?;
            Ensemble::new(streams, format!("functional/{i}"), replicas)
                .map(|_, rng| Ok(functional_integral(g, &sampler.sample(rng), 1.0).last()))
        })
        .collect()
}

/// Variance of `int_0^t G(y^eps)` along `eps`, scaled by `alpha(eps)^2` when
/// `scaled`. The slope is fitted on the unscaled variances.
pub fn variance_scan(
    g: &ChaosFunction,
    h: Hurst,
    t: f64,
    eps: &[f64],
    replicas: usize,
    scaled: bool,
    streams: Streams,
) -> Result<ScanResult> {
    check_scales(eps)?;
    let regime = Regime::new(g.rank(), h);
    let samples = functional_samples(g, h, t, eps, replicas, streams)?;
    let points = eps
        .iter()
        .zip(&samples)
        .map(|(e, s)| {
            let m = Moments::of(s);
            let k = if scaled { regime.alpha(*e).powi(2) } else { 1.0 };
            ScanPoint { eps: *e, statistic: k * m.variance, stderr: k * m.variance_se, n: s.len() }
        })
        .collect();
    let slope = bootstrap_log_slope(&log_scales(eps), &samples, variance, &mut streams.rng("bootstrap", 0));
    Ok(ScanResult { points, slope: Some(slope) })
}

/// `Var / (eps |ln eps|)` at each point of an unscaled scan.
pub fn boundary_ratios(scan: &ScanResult) -> Vec<f64> {
    scan.points.iter().map(|p| p.statistic / (p.eps * p.eps.ln().abs())).collect()
}

/// Largest relative deviation of `values` from their mean.
pub fn spread_about_mean(values: &[f64]) -> f64 {
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    values.iter().map(|v| (v / mean - 1.0).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub moments: Moments,
    /// Against `N(0, sample variance)`.
    pub ks: KsResult,
}

pub fn clt_diagnostics(samples: &[f64]) -> CltReport {
    let moments = Moments::of(samples);
    CltReport { moments, ks: ks_normal(samples, 0.0, moments.sd()) }
}

/// Empirical against predicted `E(X^i_t X^j_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub empirical: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// `None` where the limit theory gives no value to compare with.
    pub predicted: Vec<Vec<Option<f64>>>,
}

impl CovarianceReport {
    /// Largest `|empirical - predicted| / stderr` over predicted entries.
    pub fn max_z(&self) -> f64 {
        let mut z: f64 = 0.0;
        for i in 0..self.empirical.len() {
            for j in 0..self.empirical.len() {
                if let Some(p) = self.predicted[i][j] {
                    z = z.max((self.empirical[i][j] - p).abs() / self.stderr[i][j]);
                }
            }
        }
        z
    }
}

fn predicted_covariance(gi: &ChaosFunction, gj: &ChaosFunction, h: Hurst, t: f64, s: f64) -> Result<Option<f64>> {
    let (ri, rj) = (Regime::new(gi.rank(), h), Regime::new(gj.rank(), h));
    use ScalingRegime::*;
    Ok(match (ri.kind, rj.kind) {
        (ShortRange, ShortRange) => Some(2.0 * t.min(s) * limit_covariance_a(gi, gj, h, None)?.value),
        (LongRange, LongRange) if gi.rank() == gj.rank() => {
            let (ki, kj) = (crate::chaos::hermite_limit_factor(gi, h)?, crate::chaos::hermite_limit_factor(gj, h)?);
            let hs = Hurst::new(ri.h_star)?;
            Some(ki * kj * crate::gaussian::fbm_covariance(t, s, hs)?)
        }
        (LongRange, LongRange) => Some(0.0),
        (LongRange, _) | (_, LongRange) => Some(0.0),
        _ if gi.rank() != gj.rank() => Some(0.0),
        _ => None,
    })
}

/// Covariances of the scaled functionals `X^i_t`, `X^j_s` on shared paths.
pub fn joint_covariance_check(
    gs: &[ChaosFunction],
    h: Hurst,
    t: f64,
    s: f64,
    eps: f64,
    replicas: usize,
    streams: Streams,
) -> Result<CovarianceReport> {
    let horizon = t.max(s);
    let sampler = fou_sampler(h, horizon, eps)?;
    let grid = sampler.grid();
    let (it, is) = (grid.index_of(t), grid.index_of(s));
    let alphas: Vec<f64> = gs.iter().map(|g| Regime::new(g.rank(), h).alpha(eps)).collect();
    let rows = Ensemble::new(streams, "joint-covariance", replicas).map(|_, rng| {
        let y = sampler.sample(rng);
        Ok(gs
            .iter()
            .zip(&alphas)
            .map(|(g, a)| {
                let x = functional_integral(g, &y, *a);
                (x.values[it], x.values[is])
            })
            .collect::<Vec<_>>())
    })?;
    let k = gs.len();
    let n = rows.len() as f64;
    let mut empirical = vec![vec![0.0; k]; k];
    let mut stderr = vec![vec![0.0; k]; k];
    let mut predicted = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            let prod: Vec<f64> = rows.iter().map(|r| r[i].0 * r[j].1).collect();
            let m = Moments::of(&prod);
            empirical[i][j] = m.mean;
            stderr[i][j] = m.sd() / n.sqrt();
            predicted[i][j] = predicted_covariance(&gs[i], &gs[j], h, t, s)?;
        }
    }
    Ok(CovarianceReport { empirical, stderr, predicted })
}

/// Coupled `L^2` distances between the long-range functional and its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Report {
    pub scan: ScanResult,
    /// Exact distance of the discretised leading term at each scale.
    pub leading_term: Vec<f64>,
}

/// `n_xi` noise cells on `[0, t]`; `y^eps` and the limit share each replica's noise
/// at all scales.
pub fn l2_convergence_hermite(
    g: &ChaosFunction,
    h: Hurst,
    t: f64,
    eps: &[f64],
    replicas: usize,
    n_xi: usize,
    streams: Streams,
) -> Result<L2Report> {
    check_scales(eps)?;
    let grid = TimeGrid::new(t, 1)?;
    let layout = Arc::new(NoiseLayout::standard(t, n_xi)?);
    let coupled: Vec<CoupledFunctional> = eps
        .iter()
        .map(|e| CoupledFunctional::new(g.clone(), h, *e, grid, layout.clone()))
        .collect::<Result<_>>()?;
    let diffs = Ensemble::new(streams, "l2-coupled", replicas).map(|_, rng| {
        let noise = SharedNoise::sample(layout.clone(), rng);
        coupled
            .iter()
            .map(|c| {
                let p = c.sample(&noise)?;
                Ok(p.functional.last() - p.limit.last())
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let columns: Vec<Vec<f64>> = (0..eps.len()).map(|i| diffs.iter().map(|d| d[i]).collect()).collect();
    let points = eps
        .iter()
        .zip(&columns)
        .map(|(e, c)| {
            let d = rms(c);
            let sq: Vec<f64> = c.iter().map(|v| v * v).collect();
            let se_sq = Moments::of(&sq).mean_se;
            ScanPoint { eps: *e, statistic: d, stderr: se_sq / (2.0 * d), n: c.len() }
        })
        .collect();
    let slope = bootstrap_log_slope(&log_scales(eps), &columns, rms, &mut streams.rng("bootstrap", 0));
    let leading_term = if g.rank() == 1 {
        coupled.iter().map(|c| c.leading_term_distance(1)).collect()
    } else {
        Vec::new()
    };
    Ok(L2Report { scan: ScanResult { points, slope: Some(slope) }, leading_term })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub eps: f64,
    /// `||int_0^t G(y^eps)||_p`.
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub p: f64,
    pub points: Vec<MomentPoint>,
}

impl MomentReport {
    /// Largest over smallest ratio.
    pub fn ratio_spread(&self) -> f64 {
        let r: Vec<f64> = self.points.iter().map(|p| p.ratio).collect();
        r.iter().copied().fold(0.0, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Regime-dependent shape of `||int_0^t G(y^eps)||_p`.
pub fn moment_bound_shape(m: usize, h: Hurst, t: f64, eps: f64) -> Result<f64> {
    let r = Regime::new(m, h);
    Ok(match r.kind {
        ScalingRegime::ShortRange => (eps * t * rho_power_integral(m, h)?).sqrt(),
        ScalingRegime::Boundary => (eps * t * eps.ln().abs()).sqrt(),
        ScalingRegime::LongRange => (t / eps).powf(r.h_star) * eps,
    })
}

pub fn moment_bound_check(
    g: &ChaosFunction,
    p: f64,
    h: Hurst,
    t: f64,
    eps: &[f64],
    replicas: usize,
    streams: Streams,
) -> Result<MomentReport> {
    if !(p > 2.0) {
        return Err(Error::Domain(format!("moment order {p} must exceed 2")));
    }
    if g.has_map() && g.lp().is_none_or(|q| q < p) {
        return Err(Error::Domain(format!("G is not declared L^{p}")));
    }
    check_scales(eps)?;
    let samples = functional_samples(g, h, t, eps, replicas, streams)?;
    let points = eps
        .iter()
        .zip(&samples)
        .map(|(e, s)| {
            let norm = (compensated_sum(s.iter().map(|v| v.abs().powf(p))) / s.len() as f64).powf(p.recip());
            let bound = moment_bound_shape(g.rank(), h, t, *e)?;
            Ok(MomentPoint { eps: *e, norm, bound, ratio: norm / bound })
        })
        .collect::<Result<_>>()?;
    Ok(MomentReport { p, points })
}

/// Relative change of `Var(X^eps_t)` when `G` is replaced by its leading term,
/// on the same paths.
pub fn reduction_gap(g: &ChaosFunction, h: Hurst, t: f64, eps: f64, replicas: usize, streams: Streams) -> Result<f64> {
    let sampler = fou_sampler(h, t, eps)?;
    let lead = g.leading_term();
    let pairs = Ensemble::new(streams, "reduction", replicas).map(|_, rng| {
        let y = sampler.sample(rng);
        Ok((functional_integral(g, &y, 1.0).last(), functional_integral(&lead, &y, 1.0).last()))
    })?;
    let full: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lead: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((variance(&full) / variance(&lead) - 1.0).abs())
}

/// Slope of `ln E|X_{t+l} - X_t|^p` against `ln l` over the given lags (in steps).
pub fn increment_moment_slope(paths: &[SamplePath], p: f64, lags: &[usize]) -> f64 {
    let dt = paths[0].grid.dt();
    let x: Vec<f64> = lags.iter().map(|l| (*l as f64 * dt).ln()).collect();
    let y: Vec<f64> = lags
        .iter()
        .map(|l| {
            let mut acc = NeumaierSum::default();
            let mut count = 0usize;
            for path in paths {
                for w in path.values.windows(l + 1) {
                    acc.add((w[*l] - w[0]).abs().powf(p));
                    count += 1;
                }
            }
            (acc.value() / count as f64).ln()
        })
        .collect();
    linear_fit(&x, &y).0
}
