//! Fractional Gaussian noise and fractional Brownian motion.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hurst exponent, validated to lie in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidHurst(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Brownian case: increments are independent.
    pub fn is_classical(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Hurst::new(h)
    }
}

impl From<Hurst> for f64 {
    fn from(h: Hurst) -> f64 {
        h.0
    }
}

/// Uniform grid `t_k = k * horizon / n_steps`, k = 0..=n_steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Finest grid on `[0, horizon]` whose step does not exceed `max_dt`.
    pub fn with_max_step(horizon: f64, max_dt: f64) -> Result<Self> {
        let n = (horizon / max_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::new(horizon, n)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.n_steps as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|k| self.time(k))
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the grid point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.n_steps)
    }
}

/// A realisation on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn at(&self, t: f64) -> f64 {
        self.values[self.grid.index_of(t)]
    }

    /// Path scaled by a constant.
    pub fn scaled(&self, c: f64) -> SamplePath {
        SamplePath { grid: self.grid, values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// ½(t^{2H} + s^{2H} − |t−s|^{2H}).
pub fn fbm_covariance(t: f64, s: f64, h: Hurst) -> Result<f64> {
    if t < 0.0 || s < 0.0 {
        return Err(Error::Domain(format!("negative time in covariance ({t}, {s})")));
    }
    let p = 2.0 * h.value();
    Ok(0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p)))
}

/// Autocovariance of unit-step fractional Gaussian noise at integer lag `k`.
pub fn fgn_autocovariance(k: usize, h: Hurst) -> f64 {
    let p = 2.0 * h.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// Exact sampler for a stationary Gaussian sequence with given autocovariance.
///
/// Circulant embedding is used when its spectrum is non-negative; otherwise a
/// dense Cholesky factor is built for sequences up to [`DENSE_LIMIT`].
#[derive(Clone)]
pub struct StationarySampler {
    n: usize,
    method: Method,
}

#[derive(Clone)]
enum Method {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Dense { lower: DMatrix<f64> },
}

pub const DENSE_LIMIT: usize = 4096;
const CLAMP_REL: f64 = 1e-10;

impl StationarySampler {
    /// `autocov[k]` is the covariance at lag k, for k = 0..n.
    pub fn new(autocov: &[f64]) -> Result<Self> {
        let n = autocov.len();
        if n == 0 {
            return Err(Error::InvalidGrid("empty sequence".into()));
        }
        if n == 1 {
            return Ok(Self {
                n,
                method: Method::Dense { lower: DMatrix::from_element(1, 1, autocov[0].sqrt()) },
            });
        }
        let m = 2 * (n - 1);
        let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
        row.extend(autocov.iter().map(|&c| Complex::new(c, 0.0)));
        row.extend(autocov[1..n - 1].iter().rev().map(|&c| Complex::new(c, 0.0)));
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|z| z.re).fold(0.0, f64::max);
        let min = row.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min >= -CLAMP_REL * max {
            let sqrt_eig = row.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
            return Ok(Self { n, method: Method::Circulant { sqrt_eig, fft } });
        }
        log::debug!("circulant embedding failed (min eigenvalue {min:e}); using dense factor");
        Self::dense(autocov, min)
    }

    /// Forces the dense factorisation.
    pub fn dense(autocov: &[f64], min_eigenvalue: f64) -> Result<Self> {
        let n = autocov.len();
        if n > DENSE_LIMIT {
            return Err(Error::SamplerInfeasible { n, min_eigenvalue });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| autocov[i.abs_diff(j)]);
        let chol = cov
            .cholesky()
            .ok_or(Error::SamplerInfeasible { n, min_eigenvalue })?;
        Ok(Self { n, method: Method::Dense { lower: chol.l() } })
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.method {
            Method::Circulant { sqrt_eig, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..self.n].iter().map(|z| z.re).collect()
            }
            Method::Dense { lower } => {
                let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (lower * z).iter().copied().collect()
            }
        }
    }
}

/// Sampler of `n` fBM increments on spacing `dt`, reusable across replicas.
#[derive(Clone)]
pub struct FgnSampler {
    inner: StationarySampler,
}

impl FgnSampler {
    pub fn new(n: usize, dt: f64, h: Hurst) -> Result<Self> {
        if n == 0 || !(dt > 0.0) {
            return Err(Error::InvalidGrid(format!("n = {n}, dt = {dt}")));
        }
        let scale = dt.powf(2.0 * h.value());
        let acov: Vec<f64> = (0..n).map(|k| scale * fgn_autocovariance(k, h)).collect();
        Ok(Self { inner: StationarySampler::new(&acov)? })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.inner.sample(rng)
    }
}

/// `n` increments of fractional Brownian motion on spacing `dt`.
pub fn sample_fgn<R: Rng + ?Sized>(n: usize, dt: f64, h: Hurst, rng: &mut R) -> Result<Vec<f64>> {
    Ok(FgnSampler::new(n, dt, h)?.sample(rng))
}

/// Cumulative sum of increments, starting at 0.
pub fn cumulate(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Fractional Brownian motion on `grid`, with `B_0 = 0`.
pub fn sample_fbm<R: Rng + ?Sized>(grid: TimeGrid, h: Hurst, rng: &mut R) -> Result<SamplePath> {
    let inc = sample_fgn(grid.n_steps, grid.dt(), h, rng)?;
    SamplePath::new(grid, cumulate(&inc))
}
