//! Path-wise solvers for the scalar slow/fast system
//! `x' = alpha(eps) f(x) G(y^eps) + h(x) g(y^eps)` and its limits.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chaos::{c_constant, h_star, hermite_limit_factor, ChaosFunction, Regime, ScalingRegime};
use crate::error::{Error, Result};
use crate::fou::{stationary_sigma, FouConfig, FouSampler};
use crate::gaussian::{cumulate, FgnSampler, Hurst, SamplePath, TimeGrid};
use crate::hermite::{HermiteSampler, HermiteSpec, NoiseLayout, SharedNoise};
use crate::mc::{check_scales, log_scales, Ensemble, ScanPoint, ScanResult};
use crate::numerics::{NeumaierSum, NormalRule};
use crate::rng::{StreamRng, Streams};
use crate::stats::{bootstrap_log_slope, ks_two_sample, rms, KsResult, Moments};

/// Scalar coefficient functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    Zero,
    Constant { value: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `amplitude sin(frequency x) + offset`.
    Sine { amplitude: f64, frequency: f64, offset: f64 },
    /// `amplitude cos(frequency x) + offset`.
    Cosine { amplitude: f64, frequency: f64, offset: f64 },
}

impl ScalarField {
    pub fn identity() -> Self {
        ScalarField::Affine { slope: 1.0, intercept: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant { value } => value,
            ScalarField::Affine { slope, intercept } => slope * x + intercept,
            ScalarField::Sine { amplitude, frequency, offset } => amplitude * (frequency * x).sin() + offset,
            ScalarField::Cosine { amplitude, frequency, offset } => amplitude * (frequency * x).cos() + offset,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarField::Zero => true,
            ScalarField::Constant { value } => value == 0.0,
            ScalarField::Affine { slope, intercept } => slope == 0.0 && intercept == 0.0,
            ScalarField::Sine { amplitude, offset, .. } | ScalarField::Cosine { amplitude, offset, .. } => {
                amplitude == 0.0 && offset == 0.0
            }
        }
    }

    /// `E[g(Y)]` for `Y ~ N(0,1)`.
    pub fn gaussian_mean(&self) -> f64 {
        NormalRule::new(80).expect(|y| self.eval(y))
    }
}

/// `zero`, `const:v`, `affine:slope,intercept`, `sine:amplitude,frequency,offset`
/// or `cosine:amplitude,frequency,offset`.
impl FromStr for ScalarField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse scalar field {s:?}"));
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
        };
        Ok(match (kind.trim(), nums.as_slice()) {
            ("zero", []) => ScalarField::Zero,
            ("const", [value]) => ScalarField::Constant { value: *value },
            ("affine", [slope, intercept]) => ScalarField::Affine { slope: *slope, intercept: *intercept },
            ("sine", [amplitude, frequency, offset]) => {
                ScalarField::Sine { amplitude: *amplitude, frequency: *frequency, offset: *offset }
            }
            ("cosine", [amplitude, frequency, offset]) => {
                ScalarField::Cosine { amplitude: *amplitude, frequency: *frequency, offset: *offset }
            }
            _ => return Err(bad()),
        })
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarField::Zero => write!(f, "zero"),
            ScalarField::Constant { value } => write!(f, "const:{value}"),
            ScalarField::Affine { slope, intercept } => write!(f, "affine:{slope},{intercept}"),
            ScalarField::Sine { amplitude, frequency, offset } => write!(f, "sine:{amplitude},{frequency},{offset}"),
            ScalarField::Cosine { amplitude, frequency, offset } => write!(f, "cosine:{amplitude},{frequency},{offset}"),
        }
    }
}

/// Specification of the slow/fast system on `grid`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiscaleConfig {
    pub f: ScalarField,
    pub h: ScalarField,
    /// Centred forcing `G`, scaled by `alpha(eps)`.
    pub chaos: ChaosFunction,
    /// Averaged forcing `g`.
    pub g: ScalarField,
    pub hurst: Hurst,
    pub eps: f64,
    pub x0: f64,
    pub grid: TimeGrid,
    pub seed: u64,
}

impl MultiscaleConfig {
    pub fn alpha(&self) -> f64 {
        Regime::new(self.chaos.rank(), self.hurst).alpha(self.eps)
    }
}

pub const BLOW_UP: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct SlowFastPath {
    pub x: SamplePath,
    pub y: SamplePath,
}

/// Reusable slow/fast solver for one configuration.
pub struct SlowFastSolver {
    cfg: MultiscaleConfig,
    fou: FouSampler,
    alpha: f64,
}

impl SlowFastSolver {
    pub fn new(cfg: MultiscaleConfig) -> Result<Self> {
        let fou = FouSampler::new(cfg.grid, FouConfig::new(cfg.hurst, cfg.eps)?)?;
        let alpha = cfg.alpha();
        Ok(Self { cfg, fou, alpha })
    }

    pub fn config(&self) -> &MultiscaleConfig {
        &self.cfg
    }

    pub fn solve<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SlowFastPath> {
        let y = self.fou.sample(rng);
        let x = self.solve_on(&y)?;
        Ok(SlowFastPath { x, y })
    }

    /// Classical RK4 on `x' = f(x) A(t) + h(x) a(t)` where the drives
    /// `A = alpha G(y)` and `a = g(y)` are linear between grid points.
    pub fn solve_on(&self, y: &SamplePath) -> Result<SamplePath> {
        let c = &self.cfg;
        let dt = y.grid.dt();
        let rhs = |x: f64, big: f64, small: f64| c.f.eval(x) * big + c.h.eval(x) * small;
        let drive = |v: f64| (self.alpha * c.chaos.eval(v), c.g.eval(v));
        let mut x = c.x0;
        let mut values = Vec::with_capacity(y.values.len());
        values.push(x);
        let mut d0 = drive(y.values[0]);
        for (k, v) in y.values[1..].iter().enumerate() {
            let d1 = drive(*v);
            let dm = (0.5 * (d0.0 + d1.0), 0.5 * (d0.1 + d1.1));
            let k1 = rhs(x, d0.0, d0.1);
            let k2 = rhs(x + 0.5 * dt * k1, dm.0, dm.1);
            let k3 = rhs(x + 0.5 * dt * k2, dm.0, dm.1);
            let k4 = rhs(x + dt * k3, d1.0, d1.1);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !(x.abs() <= BLOW_UP) {
                return Err(Error::BlowUp { time: y.grid.time(k + 1), value: x.abs() });
            }
            values.push(x);
            d0 = d1;
        }
        Ok(SamplePath { grid: y.grid, values })
    }
}

pub fn solve_slow_fast<R: Rng + ?Sized>(cfg: &MultiscaleConfig, rng: &mut R) -> Result<SlowFastPath> {
    SlowFastSolver::new(cfg.clone())?.solve(rng)
}

/// Discretisation of `int f(x) dZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YoungScheme {
    /// `x += f(x) dZ`.
    #[default]
    LeftPoint,
    /// Predictor-corrector with the trapezoidal average of `f`.
    Trapezoid,
}

/// Solves `dx = f(x) dZ + drift(x) dt` along the driver.
fn drive_path<F, D>(x0: f64, f: F, drift: D, z: &SamplePath, scheme: YoungScheme) -> SamplePath
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let dt = z.grid.dt();
    let mut x = x0;
    let mut values = Vec::with_capacity(z.values.len());
    values.push(x);
    for w in z.values.windows(2) {
        let dz = w[1] - w[0];
        let (fx, bx) = (f(x), drift(x));
        let step = fx * dz + bx * dt;
        x = match scheme {
            YoungScheme::LeftPoint => x + step,
            YoungScheme::Trapezoid => {
                let pred = x + step;
                x + 0.5 * (fx + f(pred)) * dz + 0.5 * (bx + drift(pred)) * dt
            }
        };
        values.push(x);
    }
    SamplePath { grid: z.grid, values }
}

/// `dx = f(x) dZ` for a driver of Hoelder regularity above 1/2.
pub fn young_integrate<F: Fn(f64) -> f64>(x0: f64, f: F, z: &SamplePath, scheme: YoungScheme) -> SamplePath {
    drive_path(x0, f, |_| 0.0, z, scheme)
}

/// `dx = f(x) dZ + g_bar h(x) dt`, with the limit constant already folded into `z`.
pub fn solve_limit_young<F, H>(x0: f64, f: F, h: H, g_bar: f64, z: &SamplePath, scheme: YoungScheme) -> SamplePath
where
    F: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    drive_path(x0, f, |x| g_bar * h(x), z, scheme)
}

/// Heun scheme for `dx = c f(x) o dW + g_bar h(x) dt`.
pub fn solve_limit_stratonovich<F, H>(x0: f64, f: F, h: H, g_bar: f64, c: f64, w: &SamplePath) -> SamplePath
where
    F: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    drive_path(x0, |x| c * f(x), |x| g_bar * h(x), w, YoungScheme::Trapezoid)
}

/// Brownian motion on `grid`.
pub fn sample_brownian<R: Rng + ?Sized>(grid: TimeGrid, rng: &mut R) -> SamplePath {
    let sd = grid.dt().sqrt();
    let inc: Vec<f64> = (0..grid.n_steps).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    SamplePath { grid, values: cumulate(&inc) }
}

/// A one-dimensional path with its symmetric second-order lift.
#[derive(Debug, Clone)]
pub struct RoughDriver1d {
    pub path: SamplePath,
}

impl RoughDriver1d {
    /// `X_{s,t}` between grid indices.
    pub fn increment(&self, s: usize, t: usize) -> f64 {
        self.path.values[t] - self.path.values[s]
    }

    /// `XX_{s,t} = (X_{s,t})^2 / 2`.
    pub fn lift(&self, s: usize, t: usize) -> f64 {
        0.5 * self.increment(s, t).powi(2)
    }

    /// `XX_{s,t} - XX_{s,u} - XX_{u,t} - X_{s,u} X_{u,t}`.
    pub fn chen_defect(&self, s: usize, u: usize, t: usize) -> f64 {
        self.lift(s, t) - self.lift(s, u) - self.lift(u, t) - self.increment(s, u) * self.increment(u, t)
    }
}

pub fn rough_lift_1d(path: SamplePath) -> RoughDriver1d {
    RoughDriver1d { path }
}

/// Errors of the kinetic functional `eps^{H-1} int_0^t y^eps` against `sigma B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticScan {
    /// `sup_t ||X^eps_t - sigma B_t||_2` per scale.
    pub sup_error: ScanResult,
    /// `|| |X^eps - sigma B|_{C^gamma} ||_2` per scale.
    pub holder: ScanResult,
    pub holder_exponent: f64,
    /// Largest deviation from `X^eps_{s,t} - sigma B_{s,t} = eps^H (y_s - y_t)`.
    pub identity_residual: f64,
}

/// Points at which the sup error is read off.
const SUP_POINTS: usize = 100;

/// Per replica, one fBM drives the fast process at every scale. The grid
/// step is `eps_min / 100`; the Hoelder seminorm uses a sub-grid of step
/// `eps / 10` at each scale.
pub fn kinetic_error_scan(
    h: Hurst,
    eps: &[f64],
    horizon: f64,
    holder_exponent: f64,
    replicas: usize,
    streams: Streams,
) -> Result<KineticScan> {
    check_scales(eps)?;
    let eps_min = *eps.last().unwrap();
    let n_steps = ((horizon / (eps_min / 100.0)).round() as usize).max(SUP_POINTS);
    let n_steps = n_steps.div_ceil(SUP_POINTS) * SUP_POINTS;
    let grid = TimeGrid::new(horizon, n_steps)?;
    let dt = grid.dt();
    let n_burn = (crate::fou::FouConfig::new(h, eps[0])?.burn_in * eps[0] / dt).ceil() as usize;
    let fgn = FgnSampler::new(n_burn + n_steps, dt, h)?;
    let sigma = stationary_sigma(h);
    let hv = h.value();
    let strides: Vec<usize> = eps.iter().map(|e| ((e / 10.0 / dt).round() as usize).max(1)).collect();

    struct Replica {
        sup: Vec<Vec<f64>>,
        holder: Vec<f64>,
        residual: f64,
    }
    let rows = Ensemble::new(streams, "kinetic", replicas).map(|_, rng: &mut StreamRng| {
        let inc = fgn.sample(rng);
        let b = cumulate(&inc[n_burn..]);
        let mut sup = Vec::with_capacity(eps.len());
        let mut holder = Vec::with_capacity(eps.len());
        let mut residual: f64 = 0.0;
        for (e, stride) in eps.iter().zip(&strides) {
            let u = dt / e;
            let a = (1.0 - 0.5 * u) / (1.0 + 0.5 * u);
            let c = sigma * e.powf(-hv) / (1.0 + 0.5 * u);
            let mut y = 0.0;
            for d in &inc[..n_burn] {
                y = a * y + c * d;
            }
            let y0 = y;
            let scale = e.powf(hv - 1.0);
            let mut acc = NeumaierSum::default();
            let mut err = Vec::with_capacity(n_steps + 1);
            err.push(0.0);
            for (k, d) in inc[n_burn..].iter().enumerate() {
                let next = a * y + c * d;
                acc.add(0.5 * dt * (y + next));
                y = next;
                let diff = scale * acc.value() - sigma * b[k + 1];
                residual = residual.max((diff - e.powf(hv) * (y0 - y)).abs());
                err.push(diff);
            }
            sup.push((1..=SUP_POINTS).map(|j| err[j * n_steps / SUP_POINTS]).collect());
            let coarse: Vec<f64> = err.iter().step_by(*stride).copied().collect();
            let step = *stride as f64 * dt;
            let mut semi: f64 = 0.0;
            for i in 0..coarse.len() {
                for j in i + 1..coarse.len() {
                    let r = (coarse[j] - coarse[i]).abs() / ((j - i) as f64 * step).powf(holder_exponent);
                    semi = semi.max(r);
                }
            }
            holder.push(semi);
        }
        Ok(Replica { sup, holder, residual })
    })?;

    let sup_stat = |xs: &[Vec<f64>]| -> f64 {
        (0..SUP_POINTS)
            .map(|j| {
                let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
                rms(&col)
            })
            .fold(0.0, f64::max)
    };
    let sup_samples: Vec<Vec<Vec<f64>>> =
        (0..eps.len()).map(|i| rows.iter().map(|r| r.sup[i].clone()).collect()).collect();
    let holder_samples: Vec<Vec<f64>> = (0..eps.len()).map(|i| rows.iter().map(|r| r.holder[i]).collect()).collect();
    let x = log_scales(eps);
    let mut boot = streams.rng("bootstrap", 0);
    let sup_slope = bootstrap_log_slope(&x, &sup_samples, sup_stat, &mut boot);
    let holder_slope = bootstrap_log_slope(&x, &holder_samples, rms, &mut boot);
    let point = |e: f64, stat: f64, se: f64| ScanPoint { eps: e, statistic: stat, stderr: se, n: rows.len() };
    let sup_error = ScanResult {
        points: eps
            .iter()
            .zip(&sup_samples)
            .map(|(e, s)| point(*e, sup_stat(s), f64::NAN))
            .collect(),
        slope: Some(sup_slope),
    };
    let holder = ScanResult {
        points: eps
            .iter()
            .zip(&holder_samples)
            .map(|(e, s)| {
                let d = rms(s);
                let sq: Vec<f64> = s.iter().map(|v| v * v).collect();
                point(*e, d, Moments::of(&sq).mean_se / (2.0 * d))
            })
            .collect(),
        slope: Some(holder_slope),
    };
    let identity_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(KineticScan { sup_error, holder, holder_exponent, identity_residual })
}

/// A slow/fast system and the discretisation of its limit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogenizationSetup {
    pub f: ScalarField,
    pub h: ScalarField,
    pub chaos: ChaosFunction,
    pub g: ScalarField,
    pub hurst: Hurst,
    pub eps: f64,
    pub x0: f64,
    pub horizon: f64,
    /// Steps of the limit solver.
    pub limit_steps: usize,
    /// Noise cells on `[0, horizon]` for a Hermite-process driver.
    pub n_xi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointComparison {
    pub regime: ScalingRegime,
    /// Factor multiplying the limit driver.
    pub constant: f64,
    pub g_bar: f64,
    pub slow_fast: Vec<f64>,
    pub limit: Vec<f64>,
    pub ks: KsResult,
}

/// Endpoints `x^eps_T` of the full system against those of its limit equation.
pub fn homogenization_endpoints(setup: &HomogenizationSetup, replicas: usize, streams: Streams) -> Result<EndpointComparison> {
    let cfg = MultiscaleConfig {
        f: setup.f,
        h: setup.h,
        chaos: setup.chaos.clone(),
        g: setup.g,
        hurst: setup.hurst,
        eps: setup.eps,
        x0: setup.x0,
        grid: TimeGrid::with_max_step(setup.horizon, setup.eps / crate::fou::RESOLUTION)?,
        seed: streams.master,
    };
    let solver = SlowFastSolver::new(cfg)?;
    let slow_fast = Ensemble::new(streams, "homogenize/slow-fast", replicas)
        .map(|_, rng| Ok(solver.solve(rng)?.x.last()))?;

    let m = setup.chaos.rank();
    let regime = Regime::new(m, setup.hurst);
    let g_bar = setup.g.gaussian_mean();
    let grid = TimeGrid::new(setup.horizon, setup.limit_steps)?;
    let (f, h) = (setup.f, setup.h);
    let (constant, limit) = match regime.kind {
        ScalingRegime::LongRange => {
            let kappa = hermite_limit_factor(&setup.chaos, setup.hurst)?;
            let spec = HermiteSpec::new(h_star(m, setup.hurst), m, setup.n_xi)?;
            let layout = Arc::new(spec.layout(setup.horizon)?);
            let sampler = HermiteSampler::with_layout(grid, spec, layout.clone())?;
            let ends = Ensemble::new(streams, "homogenize/limit", replicas).map(|_, rng| {
                let z = sampler.sample(&SharedNoise::sample(layout.clone(), rng))?.scaled(kappa);
                Ok(solve_limit_young(setup.x0, |x| f.eval(x), |x| h.eval(x), g_bar, &z, YoungScheme::Trapezoid).last())
            })?;
            (kappa, ends)
        }
        _ => {
            let c = c_constant(&setup.chaos, setup.hurst)?;
            let ends = Ensemble::new(streams, "homogenize/limit", replicas).map(|_, rng| {
                let w = sample_brownian(grid, rng);
                Ok(solve_limit_stratonovich(setup.x0, |x| f.eval(x), |x| h.eval(x), g_bar, c, &w).last())
            })?;
            (c, ends)
        }
    };
    let ks = ks_two_sample(&slow_fast, &limit);
    Ok(EndpointComparison { regime: regime.kind, constant, g_bar, slow_fast, limit, ks })
}

/// Noise layout used by [`homogenization_endpoints`] in the long-range case.
pub fn limit_layout(setup: &HomogenizationSetup) -> Result<NoiseLayout> {
    NoiseLayout::standard(setup.horizon, setup.n_xi)
}
