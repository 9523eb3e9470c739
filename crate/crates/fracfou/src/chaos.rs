//! Hermite expansions, scaling regimes and limit constants.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fou::{rho_power_integral, stationary_sigma};
use crate::gaussian::Hurst;
use crate::numerics::{factorial, hermite_all, integrate, try_integrate, NormalRule};

pub use crate::numerics::hermite as hermite_poly;

/// Default truncation order for expansions of evaluable maps.
pub const DEFAULT_ORDER: usize = 30;
/// Tolerance for deciding that an exponent sits exactly on 1/2.
pub const BOUNDARY_TOL: f64 = 1e-12;

pub type Map = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Hermite coefficients `c_k` of `G = sum c_k He_k`, for k = 0..=K.
pub fn chaos_coefficients<F: Fn(f64) -> f64>(g: F, order: usize) -> Result<Vec<f64>> {
    let rule = NormalRule::new((2 * order + 32).max(64));
    let norm2 = rule.expect(|x| g(x).powi(2));
    if !norm2.is_finite() {
        return Err(Error::InvalidChaos("function is not square-integrable".into()));
    }
    let mut coeffs = vec![0.0; order + 1];
    for (x, w) in rule.nodes().iter().zip(rule.weights()) {
        let gx = g(*x);
        for (k, hk) in hermite_all(order, *x).into_iter().enumerate() {
            coeffs[k] += w * gx * hk;
        }
    }
    let norm = norm2.sqrt();
    for (k, c) in coeffs.iter_mut().enumerate() {
        let kf = factorial(k);
        *c /= kf;
        if c.abs() * kf.sqrt() < 1e-12 * norm {
            *c = 0.0;
        }
    }
    Ok(coeffs)
}

/// Smallest k >= 1 with `|c_k| sqrt(k!) > tol`.
pub fn hermite_rank(coeffs: &[f64], tol: f64) -> Result<usize> {
    if coeffs.first().is_some_and(|c| c.abs() > tol) {
        return Err(Error::InvalidChaos(format!("not centred (c_0 = {})", coeffs[0])));
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .find(|(k, c)| c.abs() * factorial(*k).sqrt() > tol)
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidChaos("zero function".into()))
}

/// A centred function in the Gaussian L2 space, through its Hermite coefficients.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "ChaosTerms", into = "ChaosTerms")]
pub struct ChaosFunction {
    coeffs: Vec<f64>,
    rank: usize,
    /// L2 mass beyond the truncation order, when known.
    tail: f64,
    /// Declared L^p integrability exponent.
    lp: Option<f64>,
    map: Option<Map>,
}

impl fmt::Debug for ChaosFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChaosFunction")
            .field("coeffs", &self.coeffs)
            .field("rank", &self.rank)
            .field("tail", &self.tail)
            .field("lp", &self.lp)
            .field("map", &self.map.is_some())
            .finish()
    }
}

/// Flat `(order, coefficient)` list used for configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerms {
    pub terms: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<f64>,
}

impl TryFrom<ChaosTerms> for ChaosFunction {
    type Error = Error;
    fn try_from(t: ChaosTerms) -> Result<Self> {
        let mut f = ChaosFunction::from_terms(&t.terms)?;
        f.lp = t.lp;
        Ok(f)
    }
}

impl From<ChaosFunction> for ChaosTerms {
    fn from(f: ChaosFunction) -> Self {
        ChaosTerms { terms: f.terms(), lp: f.lp }
    }
}

impl ChaosFunction {
    pub fn from_coefficients(coeffs: Vec<f64>) -> Result<Self> {
        let scale = coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * c * factorial(k))
            .sum::<f64>()
            .sqrt();
        let rank = hermite_rank(&coeffs, 1e-12 * scale.max(f64::MIN_POSITIVE))?;
        Ok(Self { coeffs, rank, tail: 0.0, lp: None, map: None })
    }

    pub fn from_terms(terms: &[(usize, f64)]) -> Result<Self> {
        let order = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let mut coeffs = vec![0.0; order + 1];
        for &(k, c) in terms {
            coeffs[k] += c;
        }
        Self::from_coefficients(coeffs)
    }

    /// The single Hermite polynomial `He_m`.
    pub fn hermite(m: usize) -> Result<Self> {
        Self::from_terms(&[(m, 1.0)])
    }

    /// Expands an evaluable map to order `order`; the map itself is kept for evaluation.
    pub fn from_fn<F>(g: F, order: usize) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let coeffs = chaos_coefficients(&g, order)?;
        let norm2 = NormalRule::new((2 * order + 32).max(64)).expect(|x| g(x).powi(2));
        let mut f = Self::from_coefficients(coeffs)?;
        let kept: f64 = f.coeffs.iter().enumerate().map(|(k, c)| c * c * factorial(k)).sum();
        f.tail = (norm2 - kept).max(0.0);
        f.map = Some(Arc::new(g));
        Ok(f)
    }

    pub fn with_lp(mut self, p: f64) -> Self {
        self.lp = Some(p);
        self
    }

    pub fn lp(&self) -> Option<f64> {
        self.lp
    }

    /// Whether evaluation goes through a user map rather than the expansion.
    pub fn has_map(&self) -> bool {
        self.map.is_some()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coefficient(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.rank]
    }

    pub fn truncation_tail(&self) -> f64 {
        self.tail
    }

    pub fn terms(&self) -> Vec<(usize, f64)> {
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, c)| (k, *c)).collect()
    }

    /// `sum_k c_k^2 k!`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().enumerate().map(|(k, c)| c * c * factorial(k)).sum::<f64>() + self.tail
    }

    /// Only the leading term `c_m He_m`.
    pub fn leading_term(&self) -> ChaosFunction {
        Self::from_terms(&[(self.rank, self.leading())]).expect("leading coefficient is non-zero")
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some(map) = &self.map {
            return map(x);
        }
        self.eval_expansion(x)
    }

    pub fn eval_expansion(&self, x: f64) -> f64 {
        // Hermite recurrence accumulated on the fly.
        let (mut prev, mut cur) = (0.0, 1.0);
        let mut acc = self.coeffs[0];
        for (j, c) in self.coeffs.iter().enumerate().skip(1) {
            let next = x * cur - (j - 1) as f64 * prev;
            prev = cur;
            cur = next;
            acc += c * cur;
        }
        acc
    }
}

/// `m(H-1)+1`.
pub fn h_star(m: usize, h: Hurst) -> f64 {
    m as f64 * (h.value() - 1.0) + 1.0
}

/// Inverse of [`h_star`]: the fOU exponent producing Hermite exponent `h_target` at order `m`.
pub fn h_hat(m: usize, h_target: f64) -> f64 {
    (h_target - 1.0) / m as f64 + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalingRegime {
    ShortRange,
    Boundary,
    LongRange,
}

impl fmt::Display for ScalingRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScalingRegime::ShortRange => "ShortRange",
            ScalingRegime::Boundary => "Boundary",
            ScalingRegime::LongRange => "LongRange",
        };
        f.write_str(s)
    }
}

pub fn classify(h_star: f64) -> ScalingRegime {
    if (h_star - 0.5).abs() <= BOUNDARY_TOL {
        ScalingRegime::Boundary
    } else if h_star < 0.5 {
        ScalingRegime::ShortRange
    } else {
        ScalingRegime::LongRange
    }
}

/// Regime of `H_m` functionals together with its normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: ScalingRegime,
    pub h_star: f64,
}

impl Regime {
    pub fn new(m: usize, h: Hurst) -> Self {
        let hs = h_star(m, h);
        Self { kind: classify(hs), h_star: hs }
    }

    pub fn alpha(&self, eps: f64) -> f64 {
        match self.kind {
            ScalingRegime::ShortRange => eps.sqrt().recip(),
            ScalingRegime::Boundary => (eps * eps.ln().abs()).sqrt().recip(),
            ScalingRegime::LongRange => eps.powf(self.h_star - 1.0),
        }
    }

    pub fn alpha_formula(&self) -> String {
        match self.kind {
            ScalingRegime::ShortRange => "eps^(-1/2)".into(),
            ScalingRegime::Boundary => "(eps |ln eps|)^(-1/2)".into(),
            ScalingRegime::LongRange => format!("eps^({})", self.h_star - 1.0),
        }
    }
}

pub fn scaling_alpha(eps: f64, m: usize, h: Hurst) -> Result<(ScalingRegime, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidScale(eps));
    }
    let r = Regime::new(m, h);
    Ok((r.kind, r.alpha(eps)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitKind {
    Wiener,
    Hermite,
}

/// Description of the limit of `alpha(eps) int_0^t G(y^eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    pub kind: LimitKind,
    pub regime: ScalingRegime,
    /// `c^2` of the limit, i.e. the variance at t = 1.
    pub variance_constant: f64,
    pub hermite_order: Option<usize>,
    pub self_similarity: f64,
}

pub fn limit_spec(g: &ChaosFunction, h: Hurst) -> Result<LimitSpec> {
    let r = Regime::new(g.rank(), h);
    let c = c_constant(g, h)?;
    Ok(match r.kind {
        ScalingRegime::LongRange => LimitSpec {
            kind: LimitKind::Hermite,
            regime: r.kind,
            variance_constant: c * c,
            hermite_order: Some(g.rank()),
            self_similarity: r.h_star,
        },
        kind => LimitSpec {
            kind: LimitKind::Wiener,
            regime: kind,
            variance_constant: c * c,
            hermite_order: None,
            self_similarity: 0.5,
        },
    })
}

/// One entry of the limit covariance, with a bound on the truncated series tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEntry {
    pub value: f64,
    pub tail_bound: f64,
}

/// `A^{ij} = sum_q c_{i,q} c_{j,q} q! int_0^inf rho^q`, truncated at `order` (default: both expansions).
pub fn limit_covariance_a(
    gi: &ChaosFunction,
    gj: &ChaosFunction,
    h: Hurst,
    order: Option<usize>,
) -> Result<CovarianceEntry> {
    let q0 = gi.rank().max(gj.rank());
    let lead = Regime::new(q0, h);
    if lead.kind != ScalingRegime::ShortRange {
        return Err(Error::RegimeMismatch(format!(
            "not a CLT component: order {q0} has exponent {} >= 1/2",
            lead.h_star
        )));
    }
    let k = order.unwrap_or(gi.order().max(gj.order()));
    let mut value = 0.0;
    for q in q0..=k {
        let cc = gi.coefficient(q) * gj.coefficient(q);
        if cc != 0.0 {
            value += cc * factorial(q) * rho_power_integral(q, h)?;
        }
    }
    let tail_mass = (gi.truncation_tail() * gj.truncation_tail()).sqrt();
    let tail_bound = if tail_mass > 0.0 {
        let e = if (k + 1) % 2 == 0 { k + 1 } else { k.max(q0 + (q0 % 2)) };
        tail_mass * rho_power_integral(e, h)?.abs()
    } else {
        0.0
    };
    Ok(CovarianceEntry { value, tail_bound })
}

/// Matrix of [`limit_covariance_a`] over a family.
pub fn limit_covariance_matrix(gs: &[ChaosFunction], h: Hurst) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; gs.len()]; gs.len()];
    for i in 0..gs.len() {
        for j in i..gs.len() {
            let v = limit_covariance_a(&gs[i], &gs[j], h, None)?.value;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    for (i, row) in out.iter().enumerate() {
        if row[i].abs() < 1e-10 {
            return Err(Error::Degenerate(format!("component {i} has vanishing limit variance")));
        }
    }
    Ok(out)
}

fn k_cache() -> &'static Mutex<HashMap<(u64, usize), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Exponent `-(1/2 + (1-H)/m)` of the Hermite process kernel.
pub fn kernel_exponent(h_target: f64, m: usize) -> f64 {
    -(0.5 + (1.0 - h_target) / m as f64)
}

/// Normaliser making `Z^{H,m}_1` unit variance.
///
/// With `d` the kernel exponent, `Var(int_0^1 int prod (s-xi_j)_+^d ds dW^m) = m! B^m V`,
/// where `B = int_0^inf x^d (1+x)^d dx` and `V = int int |s-r|^{m(2d+1)} ds dr`;
/// both are evaluated by quadrature.
pub fn k_normalizer(h_target: f64, m: usize) -> Result<f64> {
    if !(1..=3).contains(&m) {
        return Err(Error::OrderNotSupported(m));
    }
    if !(h_target > 0.5 && h_target < 1.0) {
        return Err(Error::Domain(format!("Hermite exponent {h_target} must lie in (1/2, 1)")));
    }
    let key = (h_target.to_bits(), m);
    if let Some(v) = k_cache().lock().unwrap().get(&key) {
        return Ok(*v);
    }
    let d = kernel_exponent(h_target, m);
    let near = try_integrate(|x: f64| x.powf(d) * (1.0 + x).powf(d), 0.0, 1.0, 1e-13, "kernel overlap")?;
    let far = try_integrate(
        |u: f64| u.powf(-2.0 * d - 2.0) * (1.0 + u).powf(d),
        0.0,
        1.0,
        1e-13,
        "kernel overlap",
    )?;
    let overlap = near + far;
    let p = m as f64 * (2.0 * d + 1.0);
    let outer = 2.0 * integrate(|u: f64| (1.0 - u) * u.powf(p), 0.0, 1.0, 1e-14);
    let k = (factorial(m) / (overlap.powi(m as i32) * outer)).sqrt();
    k_cache().lock().unwrap().entry(key).or_insert(k);
    Ok(k)
}

/// Normalisation of the Wiener kernel of the stationary process:
/// `y_t = (sigma / c) int_{-inf}^t (t-s)^{H-3/2} ... dW_s` has unit variance.
pub fn kernel_constant(h: Hurst) -> Result<f64> {
    Ok(k_normalizer(h.value(), 1)?.recip())
}

/// Limit constant `c >= 0`.
///
/// Short range: `c^2 = 2 sum c_k^2 k! int rho^k`. Boundary: `c^2 = 2 m! c_m^2`.
/// Long range: the absolute value of [`hermite_limit_factor`].
pub fn c_constant(g: &ChaosFunction, h: Hurst) -> Result<f64> {
    let r = Regime::new(g.rank(), h);
    match r.kind {
        ScalingRegime::ShortRange => {
            let a = limit_covariance_a(g, g, h, None)?.value;
            Ok((2.0 * a).max(0.0).sqrt())
        }
        ScalingRegime::Boundary => {
            let m = g.rank();
            Ok((2.0 * factorial(m)).sqrt() * g.leading().abs())
        }
        ScalingRegime::LongRange => Ok(hermite_limit_factor(g, h)?.abs()),
    }
}

/// Signed factor `kappa` with `eps^{H*-1} int_0^t G(y^eps) -> kappa Z^{H*,m}_t`.
///
/// `kappa = c_m (m!/K(H*,m)) (sigma/c_H)^m` where `c_H` is [`kernel_constant`];
/// equivalently `kappa^2 = m! c_m^2 (sigma^2 H(2H-1))^m / (H*(2H*-1))`.
pub fn hermite_limit_factor(g: &ChaosFunction, h: Hurst) -> Result<f64> {
    let m = g.rank();
    let r = Regime::new(m, h);
    if r.kind != ScalingRegime::LongRange {
        return Err(Error::RegimeMismatch(format!("exponent {} is not above 1/2", r.h_star)));
    }
    let k = k_normalizer(r.h_star, m)?;
    let ratio = stationary_sigma(h) / kernel_constant(h)?;
    Ok(g.leading() * factorial(m) / k * ratio.powi(m as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::beta;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hu(h: f64) -> Hurst {
        Hurst::new(h).unwrap()
    }

    #[test]
    fn hermite_examples() {
        assert_eq!(hermite_poly(0, 3.3), 1.0);
        assert_eq!(hermite_poly(1, 3.3), 3.3);
        assert_eq!(hermite_poly(2, 0.0), -1.0);
        let rule = NormalRule::new(64);
        for m in 0..=10 {
            assert_relative_eq!(rule.expect(|x| hermite_poly(m, x).powi(2)), factorial(m), max_relative = 1e-10);
        }
    }

    #[test]
    fn coefficient_examples() {
        let c = chaos_coefficients(|x| x.powi(3), 8).unwrap();
        assert_relative_eq!(c[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(c[3], 1.0, epsilon = 1e-12);
        for k in [0, 2, 4, 5, 6, 7, 8] {
            assert_eq!(c[k], 0.0, "k={k}");
        }
        let c = chaos_coefficients(|x| x * x - 1.0, 6).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert_relative_eq!(*v, if k == 2 { 1.0 } else { 0.0 }, epsilon = 1e-12);
        }
        let c = chaos_coefficients(f64::signum, 20).unwrap();
        // Gauss-Hermite converges slowly across the jump.
        assert!((c[1] - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-2, "{}", c[1]);
        for k in (0..=20).step_by(2) {
            assert!(c[k].abs() < 1e-10);
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(hermite_rank(&[0.0, 0.0, 1.0, 0.0], 1e-12).unwrap(), 2);
        assert_eq!(hermite_rank(&[0.0, 3.0, 0.0, 1.0], 1e-12).unwrap(), 1);
        assert!(matches!(hermite_rank(&[0.5, 1.0], 1e-12), Err(Error::InvalidChaos(_))));
        assert!(matches!(hermite_rank(&[0.0, 0.0], 1e-12), Err(Error::InvalidChaos(_))));
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(h_star(1, hu(0.37)), 0.37);
        assert_relative_eq!(h_star(2, hu(0.75)), 0.5);
        assert_relative_eq!(h_star(3, hu(0.9)), 0.7, epsilon = 1e-15);
        assert_eq!(Regime::new(2, hu(0.75)).kind, ScalingRegime::Boundary);
    }

    #[test]
    fn alpha_examples() {
        // exponent 0.2 from m = 2, H = 0.6
        let (k, a) = scaling_alpha(0.01, 2, hu(0.6)).unwrap();
        assert_eq!(k, ScalingRegime::ShortRange);
        assert_relative_eq!(a, 10.0, epsilon = 1e-12);
        let (k, a) = scaling_alpha((-1f64).exp(), 2, hu(0.75)).unwrap();
        assert_eq!(k, ScalingRegime::Boundary);
        assert_relative_eq!(a, 1f64.exp().sqrt(), epsilon = 1e-12);
        let (k, a) = scaling_alpha(0.01, 3, hu(0.9)).unwrap();
        assert_eq!(k, ScalingRegime::LongRange);
        assert_relative_eq!(a, 0.01f64.powf(-0.3), max_relative = 1e-12);
        assert!(scaling_alpha(1.0, 1, hu(0.7)).is_err());
    }

    #[test]
    fn normalizer_matches_beta_closed_form() {
        for (h, m) in [(0.55, 1), (0.7, 1), (0.8, 1), (0.7, 2), (0.85, 2), (0.6, 3), (0.9, 3)] {
            let d = kernel_exponent(h, m);
            let b = beta(d + 1.0, -2.0 * d - 1.0);
            let want = (factorial(m) * h * (2.0 * h - 1.0) / b.powi(m as i32)).sqrt();
            assert_relative_eq!(k_normalizer(h, m).unwrap(), want, max_relative = 1e-8);
        }
        assert!(matches!(k_normalizer(0.7, 4), Err(Error::OrderNotSupported(4))));
        assert!(k_normalizer(0.4, 1).is_err());
    }

    #[test]
    fn limit_factor_matches_variance_closed_form() {
        for (h, m, c) in [(0.8, 1, 1.0), (0.85, 2, 1.0), (0.9, 3, -0.5), (0.7, 1, 2.0)] {
            let g = ChaosFunction::from_terms(&[(m, c)]).unwrap();
            let hs = h_star(m, hu(h));
            let s2 = stationary_sigma(hu(h)).powi(2);
            let want = factorial(m) * c * c * (s2 * h * (2.0 * h - 1.0)).powi(m as i32) / (hs * (2.0 * hs - 1.0));
            let k = hermite_limit_factor(&g, hu(h)).unwrap();
            assert_relative_eq!(k * k, want, max_relative = 1e-8);
            assert_eq!(k.signum(), c.signum());
        }
        // rank one: the limit is sigma B^H
        let g = ChaosFunction::hermite(1).unwrap();
        assert_relative_eq!(c_constant(&g, hu(0.8)).unwrap(), stationary_sigma(hu(0.8)), max_relative = 1e-8);
    }

    #[test]
    fn c_constant_branches() {
        let g = ChaosFunction::hermite(2).unwrap();
        let c = c_constant(&g, hu(0.6)).unwrap();
        assert_relative_eq!(c * c, 4.0 * rho_power_integral(2, hu(0.6)).unwrap(), max_relative = 1e-12);
        let c = c_constant(&g, hu(0.75)).unwrap();
        assert_relative_eq!(c * c, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let h1 = ChaosFunction::hermite(1).unwrap();
        assert!(limit_covariance_a(&h1, &h1, hu(0.4), None).unwrap().value.abs() < 0.01);
        assert!(limit_covariance_matrix(&[h1.clone()], hu(0.4)).is_err());
        let h2 = ChaosFunction::hermite(2).unwrap();
        let h3 = ChaosFunction::hermite(3).unwrap();
        assert_eq!(limit_covariance_a(&h2, &h3, hu(0.6), None).unwrap().value, 0.0);
        let a = limit_covariance_a(&h2, &h2, hu(0.6), None).unwrap().value;
        assert_relative_eq!(a, 2.0 * rho_power_integral(2, hu(0.6)).unwrap(), max_relative = 1e-12);
        assert!(matches!(limit_covariance_a(&h2, &h2, hu(0.8), None), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn terms_roundtrip_through_toml() {
        let g = ChaosFunction::from_terms(&[(2, 1.0), (4, 0.5)]).unwrap().with_lp(4.0);
        let s = toml::to_string(&ChaosTerms::from(g.clone())).unwrap();
        let back: ChaosTerms = toml::from_str(&s).unwrap();
        let g2 = ChaosFunction::try_from(back).unwrap();
        assert_eq!(g2.coefficients(), g.coefficients());
        assert_eq!(g2.lp(), Some(4.0));
    }

    #[test]
    fn map_with_tail() {
        let centre = (-0.5f64).exp();
        let g = ChaosFunction::from_fn(move |x: f64| x.cos() - centre, 6).unwrap();
        assert_eq!(g.rank(), 2);
        assert_relative_eq!(g.leading(), -0.5 * centre, epsilon = 1e-12);
        assert!(g.truncation_tail() > 0.0);
        assert_eq!(g.eval(-1.5), 1.5f64.cos() - centre);
    }

    proptest! {
        #[test]
        fn coefficient_round_trip(c in proptest::collection::vec(-2.0f64..2.0, 1..10)) {
            let mut coeffs = vec![0.0];
            coeffs.extend(c);
            prop_assume!(coeffs.iter().skip(1).any(|v| v.abs() > 1e-3));
            let f = ChaosFunction::from_coefficients(coeffs.clone()).unwrap();
            let back = chaos_coefficients(|x| f.eval(x), coeffs.len() - 1).unwrap();
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
            // Parseval
            let rule = NormalRule::new(64);
            let n2 = rule.expect(|x| f.eval(x).powi(2));
            prop_assert!((n2 - f.norm_sq()).abs() < 1e-9 * n2.max(1.0));
        }

        #[test]
        fn exponent_inverse_round_trips(m in 1usize..6, h in 0.51f64..0.99) {
            let hs = h_star(m, hu(h));
            prop_assert!((h_hat(m, hs) - h).abs() < 1e-12);
            let r = Regime::new(m, hu(h));
            prop_assert_eq!(r.kind, classify(h_star(m, Hurst::new(h_hat(m, hs)).unwrap())));
        }

        #[test]
        fn alpha_consistency(m in 1usize..4, h in 0.05f64..0.95, eps in 0.001f64..0.9) {
            let r = Regime::new(m, hu(h));
            let a = r.alpha(eps);
            match r.kind {
                ScalingRegime::ShortRange => prop_assert!((a * eps.sqrt() - 1.0).abs() < 1e-12),
                ScalingRegime::LongRange => prop_assert!((a * eps.powf(1.0 - r.h_star) - 1.0).abs() < 1e-12),
                ScalingRegime::Boundary => {}
            }
        }
    }
}
