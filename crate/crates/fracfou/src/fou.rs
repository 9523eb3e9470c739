//! The stationary fast fractional Ornstein-Uhlenbeck process.
//!
//! `dy = -(1/eps) y dt + (sigma / eps^H) dB^H`, normalised so that `y_t ~ N(0,1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chaos::{classify, h_star, ScalingRegime};
use crate::error::{Error, Result};
use crate::gaussian::{cumulate, FgnSampler, Hurst, SamplePath, TimeGrid};
use crate::numerics::{factorial, gamma, integrate, integrate_panels, LegendreRule, NeumaierSum};

/// Noise amplitude giving the stationary process unit variance.
pub fn stationary_sigma(h: Hurst) -> f64 {
    let h = h.value();
    (h * gamma(2.0 * h)).recip().sqrt()
}

/// Leading coefficient `C` of the decay `rho(s) ~ C s^{2H-2}`.
pub fn rho_decay_coefficient(h: Hurst) -> f64 {
    let hv = h.value();
    stationary_sigma(h).powi(2) * hv * (2.0 * hv - 1.0)
}

/// Largest grid step accepted relative to the fast time scale.
pub const RESOLUTION: f64 = 10.0;
const BURN_IN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FouConfig {
    pub hurst: Hurst,
    pub eps: f64,
    /// Pre-horizon relaxation time, in units of `eps`.
    pub burn_in: f64,
}

impl FouConfig {
    pub fn new(hurst: Hurst, eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidScale(eps));
        }
        Ok(Self { hurst, eps, burn_in: BURN_IN })
    }

    pub fn with_burn_in(mut self, burn_in: f64) -> Result<Self> {
        if !(burn_in >= 0.0) {
            return Err(Error::Domain(format!("burn-in {burn_in} must be non-negative")));
        }
        self.burn_in = burn_in;
        Ok(self)
    }

    pub fn sigma(&self) -> f64 {
        stationary_sigma(self.hurst)
    }
}

/// A fast process together with the fBM that drives it.
#[derive(Debug, Clone)]
pub struct DrivenFou {
    pub fou: SamplePath,
    /// Driving fBM on the output grid, `B_0 = 0`.
    pub fbm: SamplePath,
}

/// Reusable sampler for one grid and configuration.
///
/// The Langevin equation is stepped with the Crank-Nicolson (trapezoidal)
/// rule, started at zero a burn-in before `t = 0`.
#[derive(Clone)]
pub struct FouSampler {
    grid: TimeGrid,
    cfg: FouConfig,
    burn_steps: usize,
    fgn: FgnSampler,
}

impl FouSampler {
    pub fn new(grid: TimeGrid, cfg: FouConfig) -> Result<Self> {
        let dt = grid.dt();
        if dt > cfg.eps / RESOLUTION * (1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "under-resolved fast scale: dt = {dt} exceeds eps/{RESOLUTION} = {}",
                cfg.eps / RESOLUTION
            )));
        }
        let burn_steps = (cfg.burn_in * cfg.eps / dt).ceil() as usize;
        let fgn = FgnSampler::new(burn_steps + grid.n_steps, dt, cfg.hurst)?;
        Ok(Self { grid, cfg, burn_steps, fgn })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn config(&self) -> FouConfig {
        self.cfg
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SamplePath {
        self.sample_driven(rng).fou
    }

    pub fn sample_driven<R: Rng + ?Sized>(&self, rng: &mut R) -> DrivenFou {
        let inc = self.fgn.sample(rng);
        let u = self.grid.dt() / self.cfg.eps;
        let a = (1.0 - 0.5 * u) / (1.0 + 0.5 * u);
        let b = self.cfg.sigma() * self.cfg.eps.powf(-self.cfg.hurst.value()) / (1.0 + 0.5 * u);
        let mut y = 0.0;
        for d in &inc[..self.burn_steps] {
            y = a * y + b * d;
        }
        let mut values = Vec::with_capacity(self.grid.len());
        values.push(y);
        for d in &inc[self.burn_steps..] {
            y = a * y + b * d;
            values.push(y);
        }
        DrivenFou {
            fou: SamplePath { grid: self.grid, values },
            fbm: SamplePath { grid: self.grid, values: cumulate(&inc[self.burn_steps..]) },
        }
    }
}

pub fn sample_fou<R: Rng + ?Sized>(grid: TimeGrid, cfg: FouConfig, rng: &mut R) -> Result<SamplePath> {
    Ok(FouSampler::new(grid, cfg)?.sample(rng))
}

const ASYMPTOTIC_FROM: f64 = 30.0;

/// Autocorrelation `rho(s) = E[y_s y_0]` of the unit-scale stationary process.
pub fn rho(s: f64, h: Hurst) -> f64 {
    let s = s.abs();
    if s == 0.0 {
        return 1.0;
    }
    if s > ASYMPTOTIC_FROM {
        return rho_asymptotic(s, h);
    }
    let p = 2.0 * h.value();
    let sp = s.powf(p);
    // Second difference of |.|^{2H} against the Laplace weight; the tail beyond s+50 is below e^-50.
    let f = |a: f64| (-a).exp() * ((s + a).powf(p) + (s - a).abs().powf(p) - 2.0 * sp);
    let breaks = [0.0, s, s + 1.0, s + 8.0, s + 50.0];
    0.25 * stationary_sigma(h).powi(2) * integrate_panels(f, &breaks, 1e-15)
}

/// Large-lag expansion `(sigma^2/2) sum_n (2H)(2H-1)...(2H-2n+1) s^{2H-2n}`, cut at its smallest term.
pub fn rho_asymptotic(s: f64, h: Hurst) -> f64 {
    let p = 2.0 * h.value();
    let mut coeff = 1.0;
    let mut acc = NeumaierSum::default();
    let mut last = f64::INFINITY;
    for n in 1..200 {
        let j = (2 * n) as f64;
        coeff *= (p - j + 2.0) * (p - j + 1.0);
        let term = coeff * s.powf(p - j);
        if term.abs() > last || term == 0.0 {
            break;
        }
        acc.add(term);
        last = term.abs();
        if last < 1e-18 * acc.value().abs() {
            break;
        }
    }
    0.5 * stationary_sigma(h).powi(2) * acc.value()
}

/// Autocorrelation from the spectral density `(2 sin(pi H)/pi) x^{1-2H}/(1+x^2)`.
///
/// Slower than [`rho`]; kept as an independent cross-check.
pub fn rho_spectral(s: f64, h: Hurst) -> Result<f64> {
    let s = s.abs();
    let hv = h.value();
    let pref = 2.0 * (std::f64::consts::PI * hv).sin() / std::f64::consts::PI;
    let q = 1.0 - 2.0 * hv;
    let g = move |x: f64| (s * x).cos() * x.powf(q) / (1.0 + x * x);
    if s == 0.0 {
        return Ok(1.0);
    }
    let half = std::f64::consts::PI / s;
    let x0 = 0.5 * half;
    let mut head_breaks = vec![0.0];
    head_breaks.extend([0.5, 2.0, 10.0, 50.0].into_iter().filter(|&b| b < x0));
    head_breaks.push(x0);
    let head = integrate_panels(g, &head_breaks, 1e-14);
    let legendre = LegendreRule::new(24);
    let n_pieces = 64;
    let mut partial = Vec::with_capacity(n_pieces + 1);
    let mut acc = head;
    partial.push(acc);
    for k in 0..n_pieces {
        let a = x0 + k as f64 * half;
        acc += legendre.integrate(a, a + half, g);
        partial.push(acc);
    }
    // Repeated averaging of partial sums of the alternating tail.
    let mut level = partial;
    let mut prev_est = f64::NAN;
    while level.len() > 1 {
        prev_est = level[level.len() - 1];
        level = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let est = level[0];
    let err = (est - prev_est).abs();
    if !est.is_finite() || err > 1e-6 {
        return Err(Error::Quadrature { what: "spectral autocorrelation", estimate: err });
    }
    Ok(pref * est)
}

/// Tabulated autocorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autocorrelation {
    pub hurst: Hurst,
    pub lags: Vec<f64>,
    pub values: Vec<f64>,
}

impl Autocorrelation {
    pub fn tabulate(lags: &[f64], h: Hurst) -> Self {
        Self { hurst: h, lags: lags.to_vec(), values: lags.iter().map(|&s| rho(s, h)).collect() }
    }

    /// Autocorrelation of the process at time scale `eps`: `rho(s/eps)`.
    pub fn tabulate_scaled(lags: &[f64], h: Hurst, eps: f64) -> Self {
        Self { hurst: h, lags: lags.to_vec(), values: lags.iter().map(|&s| rho(s / eps, h)).collect() }
    }
}

pub const DEFAULT_CUTOFF: f64 = 1000.0;

/// `int_0^inf rho(s)^m ds`, finite only in the short-range regime.
pub fn rho_power_integral(m: usize, h: Hurst) -> Result<f64> {
    rho_power_integral_with_cutoff(m, h, DEFAULT_CUTOFF)
}

/// As [`rho_power_integral`], with quadrature on `[0, cutoff]` and the power-law tail beyond.
pub fn rho_power_integral_with_cutoff(m: usize, h: Hurst, cutoff: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::Domain("power must be at least 1".into()));
    }
    let hs = h_star(m, h);
    if classify(hs) != ScalingRegime::ShortRange {
        return Err(Error::RegimeMismatch(format!(
            "divergent integral: exponent {hs} for power {m} is not below 1/2"
        )));
    }
    if !(cutoff > 2.0 * ASYMPTOTIC_FROM) {
        return Err(Error::Domain(format!("cutoff {cutoff} too small")));
    }
    let mi = m as i32;
    let f = |s: f64| rho(s, h).powi(mi);
    let mut acc = NeumaierSum::default();
    acc.add(integrate(f, 0.0, 1.0, 1e-14));
    let legendre = LegendreRule::new(30);
    let mut a: f64 = 1.0;
    while a < cutoff {
        let b = (2.0 * a).min(cutoff);
        acc.add(legendre.integrate(a, b, f));
        a = b;
    }
    // Two-term tail: rho ~ C1 s^q + C2 s^{q-2}, q = 2H-2.
    let hv = h.value();
    let p2 = 2.0 * hv;
    let sig2 = stationary_sigma(h).powi(2);
    let c1 = 0.5 * sig2 * p2 * (p2 - 1.0);
    let c2 = c1 * (p2 - 2.0) * (p2 - 3.0);
    let q = p2 - 2.0;
    let e1 = m as f64 * q + 1.0;
    let mut tail = c1.powi(mi) * (-cutoff.powf(e1) / e1);
    if c1 != 0.0 {
        let e2 = e1 - 2.0;
        tail += c1.powi(mi) * m as f64 * (c2 / c1) * (-cutoff.powf(e2) / e2);
    }
    acc.add(tail);
    Ok(acc.value())
}

/// `Var(int_0^t H_m(y^eps_s) ds) = 2 m! int_0^t (t-u) rho(u/eps)^m du`.
pub fn functional_variance(m: usize, h: Hurst, t: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidScale(eps));
    }
    let f = |u: f64| (t - u) * rho(u / eps, h).powi(m as i32);
    // Panels cluster near 0, where rho varies on the scale eps.
    let breaks: Vec<f64> = (0..=200).map(|k| t * (k as f64 / 200.0).powi(3)).collect();
    Ok(2.0 * factorial(m) * integrate_panels(f, &breaks, 1e-11))
}

/// Predicted order of `(int_0^{t/eps} int_0^{t/eps} |rho|^m)^{1/2}`.
pub fn variance_growth(m: usize, h: Hurst, t: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidScale(eps));
    }
    let hs = h_star(m, h);
    Ok(match classify(hs) {
        ScalingRegime::ShortRange => (t / eps * rho_power_integral(m, h)?).sqrt(),
        ScalingRegime::Boundary => (t / eps * eps.ln().abs()).sqrt(),
        ScalingRegime::LongRange => (t / eps).powf(hs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hu(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn functional_variance_ou_closed_form() {
        for eps in [0.5f64, 0.1, 0.01] {
            let exact = 2.0 * eps * (1.0 - eps * (1.0 - (-1.0 / eps).exp()));
            assert_relative_eq!(functional_variance(1, hu(0.5), 1.0, eps).unwrap(), exact, max_relative = 1e-8);
        }
    }

    /// Independent oracle for H > 1/2:
    /// rho(u) = (sigma^2 H(2H-1)/2) int e^{-|z|} |u+z|^{2H-2} dz.
    fn rho_double_integral(u: f64, h: f64, sigma2: f64) -> f64 {
        // substitute w = u + z so that the singularity sits at w = 0
        let q = 2.0 * h - 2.0;
        let left = integrate(|w: f64| (-(w + u)).exp() * w.powf(q), 0.0, 60.0, 1e-13);
        let mid = integrate(|w: f64| (-(u - w)).exp() * w.powf(q), 0.0, u, 1e-13);
        let right = integrate_panels(|w: f64| (-(w - u)).exp() * w.powf(q), &[u, u + 1.0, u + 60.0], 1e-13);
        let right = if u == 0.0 { left } else { right };
        0.5 * sigma2 * h * (2.0 * h - 1.0) * (left + mid + right)
    }

    #[test]
    fn sigma_closed_form_matches_double_integral() {
        assert_relative_eq!(stationary_sigma(hu(0.5)), 2f64.sqrt(), epsilon = 1e-12);
        for h in [0.55, 0.6, 0.75, 0.9] {
            // Unit variance at zero lag fixes sigma: 1 = sigma^2 * (integral with sigma = 1).
            let raw = rho_double_integral(0.0, h, 1.0);
            let sigma = raw.recip().sqrt();
            assert!((sigma - stationary_sigma(hu(h))).abs() < 1e-6, "H={h}");
        }
    }

    #[test]
    fn rho_agrees_with_both_oracles() {
        for h in [0.6, 0.75, 0.9] {
            let s2 = stationary_sigma(hu(h)).powi(2);
            for s in [0.3, 1.0, 4.0, 12.0, 29.0] {
                let want = rho_double_integral(s, h, s2);
                assert_relative_eq!(rho(s, hu(h)), want, max_relative = 1e-6);
            }
        }
        for h in [0.2, 0.4, 0.5, 0.7, 0.85] {
            for s in [0.5, 2.0, 7.0] {
                let spec = rho_spectral(s, hu(h)).unwrap();
                assert!((rho(s, hu(h)) - spec).abs() < 1e-6, "H={h} s={s}: {} vs {spec}", rho(s, hu(h)));
            }
        }
    }

    #[test]
    fn rho_is_exponential_for_brownian_noise() {
        for s in [0.1, 1.0, 5.0, 20.0] {
            assert_relative_eq!(rho(s, hu(0.5)), (-s).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn asymptotic_switch_is_continuous() {
        for h in [0.3, 0.6, 0.85] {
            let a = rho(ASYMPTOTIC_FROM * (1.0 - 1e-12), hu(h));
            let b = rho_asymptotic(ASYMPTOTIC_FROM, hu(h));
            assert!((a - b).abs() < 1e-10 * b.abs().max(1e-6), "H={h}: {a} {b}");
        }
    }

    #[test]
    fn decay_slope_at_three_quarters() {
        let h = hu(0.75);
        let lags: Vec<f64> = (0..=20).map(|i| 10f64 * 10f64.powf(i as f64 / 20.0)).collect();
        let x: Vec<f64> = lags.iter().map(|s| s.ln()).collect();
        let y: Vec<f64> = lags.iter().map(|&s| rho(s, h).ln()).collect();
        let (slope, _) = crate::numerics::linear_fit(&x, &y);
        assert!((slope + 0.5).abs() < 0.05, "{slope}");
        // coefficient of the power law
        assert_relative_eq!(rho(200.0, h) / 200f64.powf(-0.5), rho_decay_coefficient(h), max_relative = 1e-4);
    }

    #[test]
    fn power_integral_examples() {
        let v = rho_power_integral(1, hu(0.4)).unwrap();
        assert!(v.abs() < 0.01, "{v}");
        let v2 = rho_power_integral(2, hu(0.6)).unwrap();
        // trapezoid oracle on [0, 1000] with power-law tail
        let n = 200_000;
        let ds = 1000.0 / n as f64;
        let mut trap = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            trap += w * rho(i as f64 * ds, hu(0.6)).powi(2);
        }
        trap *= ds;
        let c1 = rho_decay_coefficient(hu(0.6));
        trap += c1 * c1 * 1000f64.powf(-0.6) / 0.6;
        assert!(v2 > 0.0);
        assert_relative_eq!(v2, trap, max_relative = 1e-3);
        assert!(matches!(rho_power_integral(3, hu(0.9)), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn cutoff_stability() {
        let base = rho_power_integral_with_cutoff(2, hu(0.6), 1000.0).unwrap();
        for s in [500.0, 2000.0] {
            let v = rho_power_integral_with_cutoff(2, hu(0.6), s).unwrap();
            assert!((v / base - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn growth_branches() {
        let h = hu(0.6);
        let g = variance_growth(2, h, 1.0, 0.01).unwrap();
        assert_relative_eq!(g, (100.0 * rho_power_integral(2, h).unwrap()).sqrt(), max_relative = 1e-12);
        let g = variance_growth(2, hu(0.75), 1.0, 0.01).unwrap();
        assert_relative_eq!(g, (100.0 * 0.01f64.ln().abs()).sqrt(), max_relative = 1e-12);
        let g = variance_growth(1, hu(0.9), 2.0, 0.01).unwrap();
        assert_relative_eq!(g, 200f64.powf(0.9), max_relative = 1e-12);
    }

    #[test]
    fn rejects_coarse_grid() {
        let cfg = FouConfig::new(hu(0.7), 0.1).unwrap();
        assert!(FouSampler::new(TimeGrid::new(1.0, 50).unwrap(), cfg).is_err());
        assert!(FouSampler::new(TimeGrid::new(1.0, 100).unwrap(), cfg).is_ok());
    }

    #[test]
    fn classical_case_autocorrelation() {
        let cfg = FouConfig::new(hu(0.5), 1.0).unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let sampler = FouSampler::new(grid, cfg).unwrap();
        let streams = Streams::new(9);
        let n = 20_000;
        let mut c = 0.0;
        for i in 0..n {
            let p = sampler.sample(&mut streams.rng("ou", i));
            c += p.values[0] * p.values[20];
        }
        assert!((c / n as f64 - (-1f64).exp()).abs() < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn rho_even_and_bounded(s in 0.0f64..200.0, h in 0.05f64..0.95) {
            let h = hu(h);
            let r = rho(s, h);
            prop_assert_eq!(r, rho(-s, h));
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            // |rho| <= C (1 ^ s^{2H-2}) with C from the power-law coefficient
            let c = rho_decay_coefficient(h).abs().max(1.0) * 3.0;
            prop_assert!(r.abs() <= c * 1f64.min(s.powf(2.0 * h.value() - 2.0)) + 1e-12);
        }
    }
}
