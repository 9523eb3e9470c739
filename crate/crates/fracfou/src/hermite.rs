//! Hermite processes as discretised multiple Wiener integrals, and the
//! Wiener-kernel form of the fast process built on the same white noise.
//!
//! The noise lives on cells covering `(-reach, T]`: uniform cells of width
//! `delta` on `[-window, T]` and geometrically growing cells further out. A
//! kernel `k(s - xi)` is replaced by its average over each cell, so for every
//! evaluation point `s` the Gaussian variable `Y_s = sum_i kbar_i dW_i` and its
//! variance `v_s` are exact for the averaged kernel. The `m`-fold off-diagonal
//! integral of the rank-one kernel `kbar^{(x)m}` is then `v^{m/2} He_m(Y / sqrt v)`.
//!
//! Noise below `-reach` enters through one standard normal variable shared by
//! all evaluation points, weighted by the kernel's tail norm there.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chaos::{h_star, k_normalizer, kernel_constant, kernel_exponent, ChaosFunction, Regime, ScalingRegime};
use crate::error::{Error, Result};
use crate::fou::stationary_sigma;
use crate::gaussian::{Hurst, SamplePath, TimeGrid};
use crate::numerics::{beta, factorial, hermite, integrate, NeumaierSum};

/// Far cells stop this many horizons below zero by default.
pub const DEFAULT_REACH: f64 = 1e6;
/// Width ratio of consecutive far cells.
pub const FAR_GROWTH: f64 = 1.1;
/// Relative variance bias above which sampling logs a warning.
pub const BIAS_WARN: f64 = 1e-3;

/// Cell structure of the white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLayout {
    horizon: f64,
    step: f64,
    /// Number of uniform cells below zero.
    n_left: usize,
    /// Number of uniform cells on `[0, T]`.
    n_right: usize,
    /// Distances below zero of the far cell edges, increasing.
    far_edges: Vec<f64>,
}

impl NoiseLayout {
    /// `n_cells` uniform cells on `[0, horizon]`, the same spacing on
    /// `[-window, 0]`, and far cells out to `reach`.
    pub fn new(horizon: f64, n_cells: usize, window: f64, reach: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) || n_cells == 0 {
            return Err(Error::InvalidGrid(format!("noise horizon {horizon} with {n_cells} cells")));
        }
        if !(window >= 0.0 && reach >= window) {
            return Err(Error::Domain(format!("noise window {window} and reach {reach}")));
        }
        let step = horizon / n_cells as f64;
        let n_left = (window / step).round() as usize;
        let start = n_left as f64 * step;
        let mut far_edges = vec![start];
        if reach > start {
            let mut width = step.max(start * (FAR_GROWTH - 1.0));
            let mut edge = start;
            while edge < reach {
                edge = (edge + width).min(reach);
                far_edges.push(edge);
                width *= FAR_GROWTH;
            }
        }
        Ok(Self { horizon, step, n_left, n_right: n_cells, far_edges })
    }

    /// Layout with a window of one horizon and the default reach.
    pub fn standard(horizon: f64, n_cells: usize) -> Result<Self> {
        Self::new(horizon, n_cells, horizon, DEFAULT_REACH * horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_near(&self) -> usize {
        self.n_left + self.n_right
    }

    pub fn n_far(&self) -> usize {
        self.far_edges.len() - 1
    }

    pub fn n_cells(&self) -> usize {
        self.n_near() + self.n_far()
    }

    /// Lowest covered point.
    pub fn reach(&self) -> f64 {
        *self.far_edges.last().unwrap()
    }

    /// All cell edges in increasing order, from `-reach` to `T`.
    pub fn xi_edges(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.far_edges.iter().rev().map(|e| -e).collect();
        let lo = -(self.n_left as f64) * self.step;
        out.extend((1..=self.n_near()).map(|i| lo + i as f64 * self.step));
        out
    }

    /// Variances of the noise coordinates: far cell widths (outermost
    /// first), near cell widths, then 1 for the tail variable.
    pub fn weights(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.far_edges.windows(2).rev().map(|w| w[1] - w[0]).collect();
        out.extend(std::iter::repeat_n(self.step, self.n_near()));
        out.push(1.0);
        out
    }
}

/// One realisation of the white noise on a layout.
#[derive(Debug, Clone)]
pub struct SharedNoise {
    layout: Arc<NoiseLayout>,
    near: Vec<f64>,
    far: Vec<f64>,
    tail: f64,
}

impl SharedNoise {
    pub fn sample<R: Rng + ?Sized>(layout: Arc<NoiseLayout>, rng: &mut R) -> Self {
        let sd = layout.step.sqrt();
        let near = (0..layout.n_near()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let far = layout
            .far_edges
            .windows(2)
            .map(|w| (w[1] - w[0]).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let tail = rng.sample(StandardNormal);
        Self { layout, near, far, tail }
    }

    pub fn layout(&self) -> &Arc<NoiseLayout> {
        &self.layout
    }

    /// Noise coordinates in the order of [`NoiseLayout::weights`].
    pub fn white_increments(&self) -> Vec<f64> {
        self.far.iter().rev().chain(&self.near).chain(std::iter::once(&self.tail)).copied().collect()
    }
}

/// A stationary kernel `k(x)`, `x = s - xi`, vanishing for `x <= 0`.
pub trait CellKernel {
    /// Average of `k` over `[lo, hi]`.
    fn average(&self, lo: f64, hi: f64) -> f64;

    /// `(int_reach^inf k(s + u)^2 du)^{1/2}`.
    fn tail(&self, s: f64, reach: f64) -> f64;
}

/// `(int_x^inf u^{2d} du)^{1/2}`.
fn power_tail(x: f64, d: f64) -> f64 {
    (x.powf(2.0 * d + 1.0) / (-2.0 * d - 1.0)).sqrt()
}

/// `hi^p - lo^p` for `0 <= lo < hi`, accurate when `hi / lo` is close to 1.
fn power_diff(lo: f64, hi: f64, p: f64) -> f64 {
    if lo <= 0.0 {
        hi.powf(p)
    } else {
        lo.powf(p) * (p * ((hi - lo) / lo).ln_1p()).exp_m1()
    }
}

/// `x_+^d` with `-1 < d < 0`.
#[derive(Debug, Clone, Copy)]
pub struct PowerKernel {
    pub exponent: f64,
}

impl CellKernel for PowerKernel {
    fn average(&self, lo: f64, hi: f64) -> f64 {
        if hi <= 0.0 {
            return 0.0;
        }
        let p = self.exponent + 1.0;
        power_diff(lo.max(0.0), hi, p) / (p * (hi - lo))
    }

    fn tail(&self, s: f64, reach: f64) -> f64 {
        power_tail(s + reach, self.exponent)
    }
}

/// Product of truncated power kernels `prod_j (s - xi_j)_+^d` of the order-`m`
/// Hermite process with exponent `h`.
pub fn hermite_kernel(s: f64, xi: &[f64], h: f64, m: usize) -> f64 {
    let d = kernel_exponent(h, m);
    xi.iter().map(|x| if *x < s { (s - x).powf(d) } else { 0.0 }).product()
}

const PROFILE_SWITCH: f64 = 40.0;

/// `D(z) = int_0^z e^{-(z-v)} v^a dv` with `a = H - 3/2`.
fn profile(z: f64, a: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= PROFILE_SWITCH {
        return profile_asymptotic(z, a);
    }
    integrate(|v: f64| (-(z - v)).exp() * v.powf(a), 0.0, z, 1e-13)
}

/// Divergent expansion `sum_k (-1)^k a(a-1)...(a-k+1) z^{a-k}`, cut at its smallest term.
fn profile_asymptotic(z: f64, a: f64) -> f64 {
    let mut term = z.powf(a);
    let mut acc = NeumaierSum::default();
    acc.add(term);
    for k in 0..200 {
        let next = term * (k as f64 - a) / z;
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        acc.add(term);
    }
    acc.value()
}

/// `G1(z) = int_0^z D(u) du`, split as `z^{a+1}/(a+1) - D(z)` for large `z`.
fn profile_integral(z: f64, a: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z >= PROFILE_SWITCH {
        return z.powf(a + 1.0) / (a + 1.0) - profile_asymptotic(z, a);
    }
    integrate(|v: f64| v.powf(a) * -(-(z - v)).exp_m1(), 0.0, z, 1e-13)
}

/// Wiener kernel of the fast process: `y^eps_t = int h_eps(t, s) dW_s` with
/// `h_eps(t, s) = eps^{-1/2} (sigma / c_H) D((t - s) / eps)`. Needs `H > 1/2`.
pub fn fou_kernel_h_eps(t: f64, s: f64, eps: f64, h: Hurst) -> Result<f64> {
    let k = FouKernel::new(eps, h)?;
    Ok(k.scale * eps.powf(-1.5) * profile((t - s) / eps, k.a))
}

/// Cell averages of `h_eps(., 0)`.
#[derive(Debug, Clone, Copy)]
pub struct FouKernel {
    eps: f64,
    a: f64,
    /// `eps (sigma / c_H)`: the average over `[lo, hi]` is `scale eps^{-1/2} dG1 / (hi - lo)`.
    scale: f64,
}

impl FouKernel {
    pub fn new(eps: f64, h: Hurst) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidScale(eps));
        }
        if h.value() <= 0.5 {
            return Err(Error::Domain(format!(
                "the Wiener kernel of the fast process needs H > 1/2, got {}",
                h.value()
            )));
        }
        let scale = eps * stationary_sigma(h) / kernel_constant(h)?;
        Ok(Self { eps, a: h.value() - 1.5, scale })
    }
}

impl CellKernel for FouKernel {
    fn average(&self, lo: f64, hi: f64) -> f64 {
        if hi <= 0.0 {
            return 0.0;
        }
        let (zl, zh) = (lo.max(0.0) / self.eps, hi / self.eps);
        let diff = if zl >= PROFILE_SWITCH {
            power_diff(zl, zh, self.a + 1.0) / (self.a + 1.0)
                - (profile_asymptotic(zh, self.a) - profile_asymptotic(zl, self.a))
        } else {
            profile_integral(zh, self.a) - profile_integral(zl, self.a)
        };
        self.scale * self.eps.powf(-0.5) * diff / (hi - lo)
    }

    fn tail(&self, s: f64, reach: f64) -> f64 {
        // Far out, h_eps(x) = (sigma / c_H) eps^{1-H} x^{H-3/2} (1 + O(eps / x)).
        self.scale * self.eps.powf(-1.5 - self.a) * power_tail(s + reach, self.a)
    }
}

/// Evaluation of `Y_k = sum_i kbar(s_k - cell_i) dW_i` at the points
/// `s_k = (k + offset) delta`, `k < n_points`.
pub struct ConvolutionPlan {
    layout: Arc<NoiseLayout>,
    offset: f64,
    n_points: usize,
    /// Near coefficients by lag `j = k + n_left - i`.
    lags: Vec<f64>,
    /// Row-major `n_points x n_far`, far cells in `far_edges` order.
    far: Vec<f64>,
    tail: Vec<f64>,
    variance: Vec<f64>,
    fft_len: usize,
    lag_spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ConvolutionPlan {
    pub fn new<K: CellKernel>(layout: Arc<NoiseLayout>, kernel: &K, offset: f64, n_points: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&offset) || n_points == 0 {
            return Err(Error::InvalidGrid(format!("{n_points} points at offset {offset}")));
        }
        let last = (n_points - 1) as f64 + offset;
        if last > layout.n_right as f64 + 1e-9 {
            return Err(Error::InvalidGrid(format!("evaluation point {last} steps beyond the noise horizon")));
        }
        let delta = layout.step;
        let n_lags = layout.n_left + n_points;
        let lags: Vec<f64> = (0..n_lags)
            .map(|j| kernel.average((j as f64 - 1.0 + offset) * delta, (j as f64 + offset) * delta))
            .collect();
        let n_far = layout.n_far();
        let mut far = Vec::with_capacity(n_points * n_far);
        for k in 0..n_points {
            let s = (k as f64 + offset) * delta;
            for w in layout.far_edges.windows(2) {
                far.push(kernel.average(s + w[0], s + w[1]));
            }
        }
        let reach = layout.reach();
        let tail: Vec<f64> = (0..n_points).map(|k| kernel.tail((k as f64 + offset) * delta, reach)).collect();
        let mut variance = Vec::with_capacity(n_points);
        let mut near_acc = NeumaierSum::default();
        let mut filled = 0;
        for k in 0..n_points {
            while filled <= k + layout.n_left {
                near_acc.add(lags[filled] * lags[filled] * delta);
                filled += 1;
            }
            let mut acc = near_acc;
            acc.add(tail[k] * tail[k]);
            for (c, w) in far[k * n_far..(k + 1) * n_far].iter().zip(layout.far_edges.windows(2)) {
                acc.add(c * c * (w[1] - w[0]));
            }
            variance.push(acc.value());
        }
        let fft_len = (layout.n_near() + n_lags).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut lag_spectrum: Vec<Complex64> = lags.iter().map(|c| Complex64::new(*c, 0.0)).collect();
        lag_spectrum.resize(fft_len, Complex64::new(0.0, 0.0));
        forward.process(&mut lag_spectrum);
        Ok(Self { layout, offset, n_points, lags, far, tail, variance, fft_len, lag_spectrum, forward, inverse })
    }

    pub fn layout(&self) -> &Arc<NoiseLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    /// Evaluation point `s_k`.
    pub fn point(&self, k: usize) -> f64 {
        (k as f64 + self.offset) * self.layout.step
    }

    /// `Var(Y_k)`.
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    /// Coefficients of `Y_k` in the order of [`NoiseLayout::weights`].
    pub fn row(&self, k: usize) -> Vec<f64> {
        let n_far = self.layout.n_far();
        let mut out: Vec<f64> = self.far[k * n_far..(k + 1) * n_far].iter().rev().copied().collect();
        let top = k + self.layout.n_left;
        out.extend((0..self.layout.n_near()).map(|i| if i <= top { self.lags[top - i] } else { 0.0 }));
        out.push(self.tail[k]);
        out
    }

    pub fn apply(&self, noise: &SharedNoise) -> Result<Vec<f64>> {
        if *noise.layout != *self.layout {
            return Err(Error::InvalidGrid("noise was drawn on a different layout".into()));
        }
        let mut buf: Vec<Complex64> = noise.near.iter().map(|w| Complex64::new(*w, 0.0)).collect();
        buf.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, c) in buf.iter_mut().zip(&self.lag_spectrum) {
            *b *= c;
        }
        self.inverse.process(&mut buf);
        let norm = 1.0 / self.fft_len as f64;
        let n_far = self.layout.n_far();
        Ok((0..self.n_points)
            .map(|k| {
                let near = buf[k + self.layout.n_left].re * norm;
                let row = &self.far[k * n_far..(k + 1) * n_far];
                near + row.iter().zip(&noise.far).map(|(c, w)| c * w).sum::<f64>() + self.tail[k] * noise.tail
            })
            .collect())
    }
}

fn default_reach() -> f64 {
    DEFAULT_REACH
}

/// Parameters of `Z^{H,m}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteSpec {
    pub hurst: f64,
    pub order: usize,
    /// Truncation of the noise below zero, in horizons.
    #[serde(default = "default_reach")]
    pub xi_window: f64,
    /// Noise cells on `[0, T]`.
    pub n_xi: usize,
}

impl HermiteSpec {
    pub fn new(hurst: f64, order: usize, n_xi: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::OrderNotSupported(order));
        }
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::Domain(format!("Hermite exponent {hurst} must lie in (1/2, 1)")));
        }
        if n_xi == 0 {
            return Err(Error::InvalidGrid("no noise cells".into()));
        }
        Ok(Self { hurst, order, xi_window: DEFAULT_REACH, n_xi })
    }

    pub fn with_window(mut self, horizons: f64) -> Self {
        self.xi_window = horizons;
        self
    }

    pub fn layout(&self, horizon: f64) -> Result<NoiseLayout> {
        NoiseLayout::new(horizon, self.n_xi, horizon.min(self.xi_window * horizon), self.xi_window * horizon)
    }

    /// Relative error in `Var(Z_T)` from merging the noise below `-reach`
    /// into one shared variable: the tail share of the variance times the
    /// decorrelation of the tail integrals across `[0, T]`.
    pub fn truncation_bias(&self, horizon: f64, reach: f64) -> f64 {
        let d = kernel_exponent(self.hurst, self.order);
        let overlap = beta(d + 1.0, -2.0 * d - 1.0);
        let r = reach / horizon;
        let share = self.order as f64 * r.powf(2.0 * d + 1.0) / (-2.0 * d - 1.0) / overlap;
        share * d * d * (-2.0 * d - 1.0) / (1.0 - 2.0 * d) / (r * r)
    }
}

/// Integrate the Wick powers `v^{m/2} He_m(Y / sqrt v)` over midpoint cells
/// and read the running integral off at the output grid.
fn wick_path(grid: TimeGrid, y: &[f64], variance: &[f64], m: usize, scale: f64, delta: f64) -> SamplePath {
    let sub = y.len() / grid.n_steps;
    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    let mut acc = NeumaierSum::default();
    for (k, (yk, vk)) in y.iter().zip(variance).enumerate() {
        let sd = vk.sqrt();
        acc.add(scale * delta * sd.powi(m as i32) * hermite(m, yk / sd));
        if (k + 1) % sub == 0 {
            values.push(acc.value());
        }
    }
    SamplePath { grid, values }
}

fn check_output_grid(grid: TimeGrid, layout: &NoiseLayout) -> Result<usize> {
    if (grid.horizon - layout.horizon).abs() > 1e-12 * layout.horizon || layout.n_right % grid.n_steps != 0 {
        return Err(Error::InvalidGrid(format!(
            "output grid of {} steps on [0, {}] does not divide {} noise cells on [0, {}]",
            grid.n_steps, grid.horizon, layout.n_right, layout.horizon
        )));
    }
    Ok(layout.n_right / grid.n_steps)
}

/// Reusable sampler of `Z^{H,m}` on a grid.
pub struct HermiteSampler {
    spec: HermiteSpec,
    grid: TimeGrid,
    plan: ConvolutionPlan,
    scale: f64,
}

impl HermiteSampler {
    pub fn new(grid: TimeGrid, spec: HermiteSpec) -> Result<Self> {
        Self::with_layout(grid, spec, Arc::new(spec.layout(grid.horizon)?))
    }

    /// Sampler reading noise drawn on an existing layout.
    pub fn with_layout(grid: TimeGrid, spec: HermiteSpec, layout: Arc<NoiseLayout>) -> Result<Self> {
        check_output_grid(grid, &layout)?;
        let bias = spec.truncation_bias(grid.horizon, layout.reach());
        if bias > BIAS_WARN {
            log::warn!(
                "noise truncated at {} below zero: Var(Z_T) biased low by about {bias:.2e}",
                layout.reach()
            );
        }
        let kernel = PowerKernel { exponent: kernel_exponent(spec.hurst, spec.order) };
        let plan = ConvolutionPlan::new(layout.clone(), &kernel, 0.5, layout.n_right)?;
        let scale = k_normalizer(spec.hurst, spec.order)? / factorial(spec.order);
        Ok(Self { spec, grid, plan, scale })
    }

    pub fn spec(&self) -> HermiteSpec {
        self.spec
    }

    pub fn layout(&self) -> &Arc<NoiseLayout> {
        self.plan.layout()
    }

    pub fn plan(&self) -> &ConvolutionPlan {
        &self.plan
    }

    pub fn sample(&self, noise: &SharedNoise) -> Result<SamplePath> {
        let y = self.plan.apply(noise)?;
        Ok(wick_path(self.grid, &y, self.plan.variance(), self.spec.order, self.scale, self.plan.layout.step))
    }

    /// `Var(Z_t)` of the discretised process at the output index `j`, computed
    /// exactly from the averaged kernels.
    pub fn discrete_variance(&self, j: usize) -> f64 {
        let sub = self.plan.len() / self.grid.n_steps;
        let rows: Vec<Vec<f64>> = (0..j * sub).map(|k| self.plan.row(k)).collect();
        let weights = self.plan.layout.weights();
        let m = self.spec.order;
        let mut acc = NeumaierSum::default();
        for a in &rows {
            for b in &rows {
                acc.add(weighted_dot(a, b, &weights).powi(m as i32));
            }
        }
        let delta = self.plan.layout.step;
        self.scale * self.scale * factorial(m) * delta * delta * acc.value()
    }
}

pub fn sample_hermite(grid: TimeGrid, spec: HermiteSpec, noise: &SharedNoise) -> Result<SamplePath> {
    HermiteSampler::with_layout(grid, spec, noise.layout.clone())?.sample(noise)
}

fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut acc = NeumaierSum::default();
    for ((x, y), z) in a.iter().zip(b).zip(w) {
        acc.add(x * y * z);
    }
    acc.value()
}

/// Fast process at the grid points, built from the shared noise.
pub struct KernelFou {
    grid: TimeGrid,
    plan: ConvolutionPlan,
    sub: usize,
}

impl KernelFou {
    pub fn new(grid: TimeGrid, eps: f64, h: Hurst, layout: Arc<NoiseLayout>) -> Result<Self> {
        let sub = check_output_grid(grid, &layout)?;
        if layout.step > eps / crate::fou::RESOLUTION * (1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "under-resolved fast scale: noise step {} exceeds eps/{}",
                layout.step,
                crate::fou::RESOLUTION
            )));
        }
        let plan = ConvolutionPlan::new(layout.clone(), &FouKernel::new(eps, h)?, 0.0, layout.n_right + 1)?;
        Ok(Self { grid, plan, sub })
    }

    pub fn plan(&self) -> &ConvolutionPlan {
        &self.plan
    }

    pub fn sample(&self, noise: &SharedNoise) -> Result<SamplePath> {
        let y = self.plan.apply(noise)?;
        let values = (0..self.grid.len()).map(|j| y[j * self.sub]).collect();
        Ok(SamplePath { grid: self.grid, values })
    }
}

pub fn sample_fou_from_kernel(grid: TimeGrid, eps: f64, h: Hurst, noise: &SharedNoise) -> Result<SamplePath> {
    KernelFou::new(grid, eps, h, noise.layout.clone())?.sample(noise)
}

/// A functional of the fast process and its Hermite limit on one noise.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    /// `eps^{H*-1} int_0^t G(y^eps_s) ds`.
    pub functional: SamplePath,
    /// `kappa Z^{H*,m}_t`.
    pub limit: SamplePath,
}

/// Builds [`CoupledPair`]s for a long-range functional at one scale.
pub struct CoupledFunctional {
    g: ChaosFunction,
    grid: TimeGrid,
    alpha: f64,
    kappa: f64,
    fast: ConvolutionPlan,
    hermite: HermiteSampler,
}

impl CoupledFunctional {
    pub fn new(g: ChaosFunction, h: Hurst, eps: f64, grid: TimeGrid, layout: Arc<NoiseLayout>) -> Result<Self> {
        let m = g.rank();
        let regime = Regime::new(m, h);
        if regime.kind != ScalingRegime::LongRange {
            return Err(Error::RegimeMismatch(format!(
                "coupling needs a Hermite limit, exponent is {}",
                regime.h_star
            )));
        }
        check_output_grid(grid, &layout)?;
        if layout.step > eps / crate::fou::RESOLUTION * (1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "under-resolved fast scale: noise step {} exceeds eps/{}",
                layout.step,
                crate::fou::RESOLUTION
            )));
        }
        let fast = ConvolutionPlan::new(layout.clone(), &FouKernel::new(eps, h)?, 0.5, layout.n_right)?;
        let spec = HermiteSpec::new(h_star(m, h), m, layout.n_right)?;
        let hermite = HermiteSampler::with_layout(grid, spec, layout)?;
        let kappa = crate::chaos::hermite_limit_factor(&g, h)?;
        Ok(Self { g, grid, alpha: eps.powf(regime.h_star - 1.0), kappa, fast, hermite })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn sample(&self, noise: &SharedNoise) -> Result<CoupledPair> {
        let y = self.fast.apply(noise)?;
        let delta = self.fast.layout.step;
        let sub = y.len() / self.grid.n_steps;
        let mut values = Vec::with_capacity(self.grid.len());
        values.push(0.0);
        let mut acc = NeumaierSum::default();
        for (k, (yk, vk)) in y.iter().zip(self.fast.variance()).enumerate() {
            acc.add(self.alpha * delta * self.g.eval(yk / vk.sqrt()));
            if (k + 1) % sub == 0 {
                values.push(acc.value());
            }
        }
        let functional = SamplePath { grid: self.grid, values };
        let limit = self.hermite.sample(noise)?.scaled(self.kappa);
        Ok(CoupledPair { functional, limit })
    }

    /// Exact `L^2` distance at output index `j` between the discretised
    /// functional of the leading term `c_m He_m` and the discretised limit.
    pub fn leading_term_distance(&self, j: usize) -> f64 {
        let m = self.g.rank();
        let sub = self.fast.len() / self.grid.n_steps;
        let weights = self.fast.layout.weights();
        let fast: Vec<Vec<f64>> = (0..j * sub)
            .map(|k| {
                let sd = self.fast.variance()[k].sqrt();
                self.fast.row(k).into_iter().map(|x| x / sd).collect()
            })
            .collect();
        let lim: Vec<Vec<f64>> = (0..j * sub).map(|k| self.hermite.plan.row(k)).collect();
        let a = self.alpha * self.g.leading();
        let b = self.kappa * self.hermite.scale;
        let mi = m as i32;
        let mut acc = NeumaierSum::default();
        for k in 0..fast.len() {
            for l in 0..fast.len() {
                acc.add(a * a * weighted_dot(&fast[k], &fast[l], &weights).powi(mi));
                acc.add(-2.0 * a * b * weighted_dot(&fast[k], &lim[l], &weights).powi(mi));
                acc.add(b * b * weighted_dot(&lim[k], &lim[l], &weights).powi(mi));
            }
        }
        let delta = self.fast.layout.step;
        (factorial(m) * delta * delta * acc.value()).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use approx::assert_relative_eq;

    fn hu(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(hermite_kernel(1.0, &[0.5, 1.5], 0.8, 2), 0.0);
        let d1 = kernel_exponent(0.7, 1);
        assert_relative_eq!(d1, 0.7 - 1.5, epsilon = 1e-15);
        let a = hermite_kernel(2.0, &[0.1, -0.4, 1.3], 0.7, 3);
        let b = hermite_kernel(2.0, &[1.3, 0.1, -0.4], 0.7, 3);
        assert_relative_eq!(a, b, max_relative = 1e-15);
    }

    #[test]
    fn layout_covers_window_and_reach() {
        let l = NoiseLayout::standard(1.0, 64).unwrap();
        let edges = l.xi_edges();
        assert_eq!(edges.len(), l.n_cells() + 1);
        assert_relative_eq!(edges[0], -DEFAULT_REACH, max_relative = 1e-12);
        assert_relative_eq!(*edges.last().unwrap(), 1.0, epsilon = 1e-12);
        let total: f64 = l.weights().iter().sum();
        assert_relative_eq!(total, 2.0 + DEFAULT_REACH, max_relative = 1e-12);
        assert!(edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn power_average_matches_quadrature() {
        let k = PowerKernel { exponent: -0.65 };
        for (lo, hi) in [(-0.1f64, 0.2f64), (0.0, 0.5), (3.0, 3.01), (1e9, 1.1e9)] {
            let want = integrate(|x: f64| x.powf(-0.65), lo.max(0.0), hi, 1e-13) / (hi - lo);
            assert_relative_eq!(k.average(lo, hi), want, max_relative = 1e-9);
        }
    }

    #[test]
    fn profile_branches_agree() {
        let a = 0.8 - 1.5;
        for z in [35.0, 40.0, 60.0] {
            let direct = integrate(|v: f64| (-(z - v)).exp() * v.powf(a), 0.0, z, 1e-14);
            assert_relative_eq!(profile_asymptotic(z, a), direct, max_relative = 1e-9);
            let g1 = integrate(|v: f64| v.powf(a) * -(-(z - v)).exp_m1(), 0.0, z, 1e-14);
            assert_relative_eq!(z.powf(a + 1.0) / (a + 1.0) - direct, g1, max_relative = 1e-10);
        }
    }

    #[test]
    fn fou_kernel_has_unit_norm() {
        // Wiener isometry: Var(y_t) = int h_eps(t, s)^2 ds = 1.
        for (eps, h) in [(1.0, 0.8), (0.1, 0.7), (0.5, 0.6)] {
            let f = |x: f64| fou_kernel_h_eps(x, 0.0, eps, hu(h)).unwrap().powi(2);
            let mut breaks = vec![0.0, eps, 10.0 * eps, 40.0 * eps];
            while *breaks.last().unwrap() < 1e7 * eps {
                let b = *breaks.last().unwrap();
                breaks.push(4.0 * b);
            }
            let body = crate::numerics::integrate_panels(f, &breaks, 1e-11);
            let end = *breaks.last().unwrap() / eps;
            let tail = (stationary_sigma(hu(h)) / kernel_constant(hu(h)).unwrap()).powi(2)
                * end.powf(2.0 * h - 2.0)
                / (2.0 - 2.0 * h);
            assert_relative_eq!(body + tail, 1.0, max_relative = 1e-5);
            assert_eq!(fou_kernel_h_eps(0.0, 0.3, eps, hu(h)).unwrap(), 0.0);
        }
    }

    #[test]
    fn fou_kernel_power_tail() {
        let h = hu(0.75);
        let eps = 0.1;
        let xs = [100.0, 300.0, 1000.0];
        let lx: Vec<f64> = xs.iter().map(|x: &f64| x.ln()).collect();
        let ly: Vec<f64> = xs.iter().map(|x| fou_kernel_h_eps(*x, 0.0, eps, h).unwrap().ln()).collect();
        let (slope, _) = crate::numerics::linear_fit(&lx, &ly);
        assert!((slope - (0.75 - 1.5)).abs() < 0.05, "{slope}");
    }

    #[test]
    fn discrete_variance_near_one() {
        let var = |h: f64, m: usize, n: usize| {
            let grid = TimeGrid::new(1.0, 4).unwrap();
            HermiteSampler::new(grid, HermiteSpec::new(h, m, n).unwrap()).unwrap().discrete_variance(4)
        };
        for (h, m, n) in [(0.7, 1, 128), (0.9, 1, 64), (0.8, 2, 512)] {
            let v = var(h, m, n);
            assert!((v - 1.0).abs() < 0.01, "H={h} m={m}: {v}");
        }
        // Near the integrability edge the deficit decays like delta^{1 + m(2d+1)}.
        let (a, b) = (var(0.7, 2, 128), var(0.7, 2, 256));
        assert!(a < b && b < 1.0, "{a} {b}");
        let rate = ((1.0 - a) / (1.0 - b)).log2();
        let want = 1.0 + 2.0 * (2.0 * kernel_exponent(0.7, 2) + 1.0);
        assert!((rate - want).abs() < 0.1, "{rate} vs {want}");
    }

    #[test]
    fn sampler_variance_and_orthogonality() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let layout = Arc::new(NoiseLayout::standard(1.0, 128).unwrap());
        let z1 = HermiteSampler::with_layout(grid, HermiteSpec::new(0.7, 1, 128).unwrap(), layout.clone()).unwrap();
        let z2 = HermiteSampler::with_layout(grid, HermiteSpec::new(0.8, 2, 128).unwrap(), layout.clone()).unwrap();
        let streams = Streams::new(11);
        let n = 4000;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let noise = SharedNoise::sample(layout.clone(), &mut streams.rng("hermite-test", i));
            let a = z1.sample(&noise).unwrap().last();
            let b = z2.sample(&noise).unwrap().last();
            s11 += a * a;
            s22 += b * b;
            s12 += a * b;
        }
        let n = n as f64;
        assert!((s11 / n - 1.0).abs() < 0.1, "{}", s11 / n);
        assert!((s22 / n - 1.0).abs() < 0.15, "{}", s22 / n);
        let corr = s12 / (s11 * s22).sqrt();
        assert!(corr.abs() < 3.0 / n.sqrt(), "{corr}");
    }

    #[test]
    fn kernel_fou_is_stationary_unit_variance() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let layout = Arc::new(NoiseLayout::standard(1.0, 200).unwrap());
        let fou = KernelFou::new(grid, 0.1, hu(0.8), layout).unwrap();
        for v in fou.plan().variance() {
            assert!((v - 1.0).abs() < 0.02, "{v}");
        }
    }

    #[test]
    fn coupled_distance_shrinks() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let layout = Arc::new(NoiseLayout::standard(1.0, 80).unwrap());
        let g = ChaosFunction::hermite(1).unwrap();
        let d: Vec<f64> = [0.8, 0.4, 0.125]
            .iter()
            .map(|eps| {
                CoupledFunctional::new(g.clone(), hu(0.8), *eps, grid, layout.clone())
                    .unwrap()
                    .leading_term_distance(4)
            })
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(HermiteSpec::new(0.8, 4, 10), Err(Error::OrderNotSupported(4))));
        assert!(HermiteSpec::new(0.4, 1, 10).is_err());
        let layout = Arc::new(NoiseLayout::standard(1.0, 10).unwrap());
        assert!(KernelFou::new(TimeGrid::new(1.0, 10).unwrap(), 0.5, hu(0.8), layout.clone()).is_err());
        let g = ChaosFunction::hermite(2).unwrap();
        assert!(matches!(
            CoupledFunctional::new(g, hu(0.6), 1.0, TimeGrid::new(1.0, 5).unwrap(), layout),
            Err(Error::RegimeMismatch(_))
        ));
    }
}
