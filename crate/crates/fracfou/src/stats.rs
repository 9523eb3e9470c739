//! Sample moments, Kolmogorov-Smirnov tests and bootstrap slope fits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::numerics::{compensated_sum, NeumaierSum};

/// First four sample moments with large-sample standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub skewness: f64,
    pub skewness_se: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
}

impl Moments {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len();
        let nf = n as f64;
        let mean = compensated_sum(x.iter().copied()) / nf;
        let (mut m2, mut m3, mut m4) = (NeumaierSum::default(), NeumaierSum::default(), NeumaierSum::default());
        for v in x {
            let d = v - mean;
            m2.add(d * d);
            m3.add(d * d * d);
            m4.add(d * d * d * d);
        }
        let (c2, c3, c4) = (m2.value() / nf, m3.value() / nf, m4.value() / nf);
        let variance = c2 * nf / (nf - 1.0);
        Self {
            n,
            mean,
            mean_se: (variance / nf).sqrt(),
            variance,
            variance_se: ((c4 - c2 * c2).max(0.0) / nf).sqrt(),
            skewness: c3 / c2.powf(1.5),
            skewness_se: (6.0 / nf).sqrt(),
            excess_kurtosis: c4 / (c2 * c2) - 3.0,
            kurtosis_se: (24.0 / nf).sqrt(),
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        acc += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size entering the asymptotic law.
    pub effective_n: f64,
}

impl KsResult {
    fn new(statistic: f64, effective_n: f64) -> Self {
        let r = effective_n.sqrt();
        let p_value = kolmogorov_survival((r + 0.12 + 0.11 / r) * statistic);
        Self { statistic, p_value, effective_n }
    }

    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }

    /// Statistic at which the test rejects at `level`.
    pub fn critical_value(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if kolmogorov_survival(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = self.effective_n.sqrt();
        hi / (r + 0.12 + 0.11 / r)
    }
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample test against `N(mean, sd^2)`.
pub fn ks_normal(x: &[f64], mean: f64, sd: f64) -> KsResult {
    let v = sorted(x);
    let n = v.len() as f64;
    let law = Normal::new(mean, sd).expect("positive standard deviation");
    let d = v
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let f = law.cdf(*xi);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    KsResult::new(d, n)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult::new(d, na * nb / (na + nb))
}

/// `E|Z|^p` for a standard normal `Z`.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    let g = statrs::function::gamma::gamma;
    2f64.powf(0.5 * p) * g(0.5 * (p + 1.0)) / std::f64::consts::PI.sqrt()
}

/// Weighted least squares `y = slope x + intercept`.
pub fn weighted_fit(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw = compensated_sum(w.iter().copied());
    let mx = compensated_sum(x.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let my = compensated_sum(y.iter().zip(w).map(|(a, b)| a * b)) / sw;
    let sxy = compensated_sum(x.iter().zip(y).zip(w).map(|((a, b), c)| c * (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().zip(w).map(|(a, c)| c * (a - mx) * (a - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope estimate with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

impl SlopeFit {
    /// Whether the whole interval lies within `target +- tol`.
    pub fn within(&self, target: f64, tol: f64) -> bool {
        self.ci_low >= target - tol && self.ci_high <= target + tol
    }
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Fit of `ln stat(sample_i)` against `x_i`.
///
/// Replicas are resampled jointly across points (point `i` of replica `r` is
/// `samples[i][r]`), so noise shared between points is respected. Points are
/// weighted by the inverse bootstrap variance of their log statistic.
pub fn bootstrap_log_slope<T, R, S>(x: &[f64], samples: &[Vec<T>], stat: S, rng: &mut R) -> SlopeFit
where
    T: Clone,
    R: Rng + ?Sized,
    S: Fn(&[T]) -> f64,
{
    let n = samples[0].len();
    let point: Vec<f64> = samples.iter().map(|s| stat(s).ln()).collect();
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        draws.push(
            samples
                .iter()
                .map(|s| {
                    let buf: Vec<T> = idx.iter().map(|i| s[*i].clone()).collect();
                    stat(&buf).ln()
                })
                .collect(),
        );
    }
    let weights: Vec<f64> = (0..x.len())
        .map(|i| {
            let col: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let v = Moments::of(&col).variance;
            if v > 0.0 {
                v.recip()
            } else {
                1.0
            }
        })
        .collect();
    let slope = weighted_fit(x, &point, &weights).0;
    let mut slopes: Vec<f64> = draws.iter().map(|d| weighted_fit(x, d, &weights).0).collect();
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round() as usize).min(slopes.len() - 1)];
    SlopeFit { slope, ci_low: q(0.025), ci_high: q(0.975), level: 0.95 }
}

/// Bootstrap standard error of `stat` over `x`.
pub fn bootstrap_se<R, S>(x: &[f64], stat: S, rng: &mut R) -> f64
where
    R: Rng + ?Sized,
    S: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let mut buf = vec![0.0; n];
    let draws: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = x[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    Moments::of(&draws).sd()
}

/// Sample variance.
pub fn variance(x: &[f64]) -> f64 {
    Moments::of(x).variance
}

/// Root mean square.
pub fn rms(x: &[f64]) -> f64 {
    (compensated_sum(x.iter().map(|v| v * v)) / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Streams::new(seed).rng("stats", 0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn gaussian_calibration() {
        let x = normals(20_000, 1);
        let m = Moments::of(&x);
        assert!(m.mean.abs() < 3.0 * m.mean_se);
        assert!((m.variance - 1.0).abs() < 3.0 * m.variance_se);
        assert!(m.excess_kurtosis.abs() < 3.0 * m.kurtosis_se);
        assert!(!ks_normal(&x, 0.0, 1.0).rejects(0.01));
        assert!(ks_normal(&x, 0.1, 1.0).rejects(0.01));
    }

    #[test]
    fn kolmogorov_law_values() {
        // Tabulated quantiles: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn two_sample_detects_shift() {
        let a = normals(2000, 12);
        let b = normals(2000, 13);
        assert!(!ks_two_sample(&a, &b).rejects(0.01));
        let c: Vec<f64> = b.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&a, &c).rejects(0.01));
        let r = ks_two_sample(&a, &b);
        assert!((r.critical_value(0.01) - 1.6276 / (1000f64).sqrt()).abs() < 2e-3);
    }

    #[test]
    fn abs_moments() {
        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((gaussian_abs_moment(4.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_recovers_power_law() {
        // Var of N(0, e^{-x}) samples has log-slope -1 in x.
        let xs = [0.0, 1.0, 2.0, 3.0];
        let base = normals(4000, 4);
        let samples: Vec<Vec<f64>> = xs.iter().map(|x: &f64| base.iter().map(|z| z * (-0.5 * x).exp()).collect()).collect();
        let fit = bootstrap_log_slope(&xs, &samples, variance, &mut Streams::new(5).rng("boot", 0));
        assert!((fit.slope + 1.0).abs() < 1e-9);
        assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
        assert!(fit.within(-1.0, 1e-6));
    }
}
