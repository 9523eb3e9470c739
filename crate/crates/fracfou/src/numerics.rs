//! Quadrature wrappers, Hermite polynomials and compensated summation.

use std::num::NonZeroUsize;

use gauss_quad::{hermite::GaussHermite, legendre::GaussLegendre};

use crate::error::{Error, Result};

/// Tanh-sinh quadrature over a finite interval.
///
/// Abscissae are generated from their distance to the nearer endpoint, so
/// integrable algebraic singularities at `a` are resolved down to distances of
/// order 1e-300 when `a = 0`. `tol` is relative to the size of the integral.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    tanh_sinh(&f, a, b, tol).0
}

/// Like [`integrate`] but fails when the achieved accuracy is worse than `tol`.
pub fn try_integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    let (v, err) = tanh_sinh(&f, a, b, tol);
    if !v.is_finite() || err > 100.0 * tol * v.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Quadrature { what, estimate: err });
    }
    Ok(v)
}

const TS_MAX_LEVEL: usize = 10;
const TS_T_MAX: f64 = 6.5;

/// Returns the estimate and the difference between the last two levels.
fn tanh_sinh<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let len = b - a;
    let half_pi = std::f64::consts::FRAC_PI_2;
    // Node at parameter t, paired with -t: weight and both function values.
    let pair = |t: f64| -> f64 {
        let u = half_pi * t.sinh();
        let e = (-2.0 * u).exp();
        let w = half_pi * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let delta = len * e / (1.0 + e);
        if w == 0.0 || delta == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for x in [a + delta, b - delta] {
            let v = f(x);
            if v.is_finite() {
                s += v;
            }
        }
        w * s
    };
    let mid = f(0.5 * (a + b));
    let mut h = 1.0;
    let mut sum = half_pi * if mid.is_finite() { mid } else { 0.0 };
    let mut j = 1;
    while j as f64 * h <= TS_T_MAX {
        sum += pair(j as f64 * h);
        j += 1;
    }
    let mut est = 0.5 * len * h * sum;
    let mut err = f64::INFINITY;
    for _ in 1..=TS_MAX_LEVEL {
        h *= 0.5;
        let mut add = 0.0;
        let mut j = 1;
        while j as f64 * h <= TS_T_MAX {
            add += pair(j as f64 * h);
            j += 2;
        }
        sum += add;
        let next = 0.5 * len * h * sum;
        err = (next - est).abs();
        est = next;
        if err <= tol * est.abs() || err < 1e-300 {
            break;
        }
    }
    (est, err)
}

/// Sums [`integrate`] over consecutive panels `breaks[i]..breaks[i+1]`.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> f64 {
    let mut acc = NeumaierSum::default();
    for w in breaks.windows(2) {
        acc.add(integrate(&f, w[0], w[1], tol));
    }
    acc.value()
}

/// Gauss-Legendre rule reused over many panels.
pub struct LegendreRule(GaussLegendre);

impl LegendreRule {
    pub fn new(nodes: usize) -> Self {
        Self(GaussLegendre::new(NonZeroUsize::new(nodes.max(1)).unwrap()))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.0.integrate(a, b, f)
    }
}

/// Gauss-Hermite rule for expectations under the standard normal law.
#[derive(Debug, Clone)]
pub struct NormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(n: usize) -> Self {
        let rule = GaussHermite::new(NonZeroUsize::new(n.max(1)).unwrap());
        // Physicists' weight e^{-x^2} becomes the N(0,1) density after x -> x / sqrt 2.
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / norm))
            .unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// E[f(Z)] for Z ~ N(0,1).
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Probabilists' Hermite polynomial He_k(x).
pub fn hermite(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for j in 0..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// He_0(x), ..., He_k(x).
pub fn hermite_all(k: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(x);
    }
    for j in 1..k {
        let next = x * out[j] - j as f64 * out[j - 1];
        out.push(next);
    }
    out
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * j as f64)
}

pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

pub fn beta(a: f64, b: f64) -> f64 {
    statrs::function::beta::beta(a, b)
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
