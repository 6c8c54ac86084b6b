//! The nonlinearity `g = ĝ'`, its λ-monotone split `β(r) = g(r) + λ r`, and
//! the Yosida regularization of `β`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomPotential {
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub g_hat: ScalarFn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaParams {
    pub epsilon: f64,
    pub root_tol: f64,
    pub max_iter: usize,
}

impl YosidaParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Range(format!("yosida epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            root_tol: 1e-12,
            max_iter: 100,
        })
    }
}

#[derive(Clone)]
pub enum PotentialKind {
    /// `ĝ(r) = |r|^m / m - r² / 2`.
    DoubleWell { m: f64 },
    Custom(CustomPotential),
    /// `β` replaced by its Yosida approximation `β_ε`.
    Yosida { base: Box<Potential>, params: YosidaParams },
}

#[derive(Clone)]
pub struct Potential {
    kind: PotentialKind,
    lambda: f64,
    declared_class: Option<String>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            PotentialKind::DoubleWell { m } => format!("DoubleWell(m = {m})"),
            PotentialKind::Custom(_) => "Custom".to_string(),
            PotentialKind::Yosida { base, params } => {
                format!("Yosida(eps = {}, base = {base:?})", params.epsilon)
            }
        };
        f.debug_struct("Potential")
            .field("kind", &kind)
            .field("lambda", &self.lambda)
            .finish()
    }
}

/// Outcome of the sampled hypothesis checks on a potential.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub g_at_zero: f64,
    /// `min (g'(r) + λ)` over the sampling grid.
    pub min_monotonicity_margin: f64,
    /// Largest mismatch between a central difference of `ĝ` and `g`.
    pub max_primitive_error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityReport {
    pub holds: bool,
    pub min_margin: f64,
}

impl Potential {
    /// Double well with exponent `m ≥ 2` and the tight split `λ = 1`.
    pub fn double_well(m: f64) -> Result<Self> {
        if !(m >= 2.0 && m.is_finite()) {
            return Err(Error::Range(format!("double-well exponent must be >= 2, got {m}")));
        }
        Ok(Self {
            kind: PotentialKind::DoubleWell { m },
            lambda: 1.0,
            declared_class: None,
        })
    }

    /// A user-supplied `(g, g', ĝ)` with monotonicity constant `lambda`.
    /// Hypothesis violations are logged, not rejected.
    pub fn custom(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g_hat: impl Fn(f64) -> f64 + Send + Sync + 'static,
        lambda: f64,
    ) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Range(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = Self {
            kind: PotentialKind::Custom(CustomPotential {
                g: Arc::new(g),
                g_prime: Arc::new(g_prime),
                g_hat: Arc::new(g_hat),
            }),
            lambda,
            declared_class: None,
        };
        let report = p.check_hypotheses();
        if !report.holds {
            log::warn!("custom potential fails sampled hypotheses: {report:?}");
        }
        Ok(p)
    }

    /// `g ≡ 0`; the energy reduces to its quadratic part.
    pub fn zero() -> Self {
        Self::custom(|_| 0.0, |_| 0.0, |_| 0.0, 0.0).expect("zero potential is valid")
    }

    /// The same potential with `β` replaced by `β_ε`.
    pub fn yosida(&self, params: YosidaParams) -> Self {
        Self {
            kind: PotentialKind::Yosida {
                base: Box::new(self.clone()),
                params,
            },
            lambda: self.lambda,
            declared_class: self.declared_class.clone(),
        }
    }

    /// Overrides `λ`; must keep `g' ≥ -λ` for the theory to apply.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Range(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        let report = self.check_hypotheses();
        if !report.holds {
            log::warn!("potential with lambda = {lambda} fails sampled hypotheses: {report:?}");
        }
        Ok(self)
    }

    /// Records the user's analyticity class; never inferred.
    pub fn with_declared_class(mut self, class: impl Into<String>) -> Self {
        self.declared_class = Some(class.into());
        self
    }

    pub fn declared_class(&self) -> Option<&str> {
        self.declared_class.as_deref()
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn g(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell { m } => signed_pow(r, *m - 1.0) - r,
            PotentialKind::Custom(c) => (c.g)(r),
            PotentialKind::Yosida { .. } => self.beta(r) - self.lambda * r,
        }
    }

    pub fn g_prime(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell { m } => (*m - 1.0) * abs_pow(r, *m - 2.0) - 1.0,
            PotentialKind::Custom(c) => (c.g_prime)(r),
            PotentialKind::Yosida { .. } => self.beta_prime(r) - self.lambda,
        }
    }

    pub fn g_hat(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::DoubleWell { m } => abs_pow(r, *m) / *m - 0.5 * r * r,
            PotentialKind::Custom(c) => (c.g_hat)(r),
            PotentialKind::Yosida { .. } => self.beta_hat(r) - 0.5 * self.lambda * r * r,
        }
    }

    pub fn beta(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Yosida { base, params } => {
                resolvent(base, params, r).map_or(f64::NAN, |j| (r - j) / params.epsilon)
            }
            _ => self.g(r) + self.lambda * r,
        }
    }

    pub fn beta_prime(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Yosida { base, params } => resolvent(base, params, r).map_or(f64::NAN, |j| {
                let d = base.beta_prime(j);
                d / (1.0 + params.epsilon * d)
            }),
            _ => self.g_prime(r) + self.lambda,
        }
    }

    pub fn beta_hat(&self, r: f64) -> f64 {
        match &self.kind {
            // Moreau envelope of β̂.
            PotentialKind::Yosida { base, params } => resolvent(base, params, r).map_or(f64::NAN, |j| {
                base.beta_hat(j) + (r - j).powi(2) / (2.0 * params.epsilon)
            }),
            _ => self.g_hat(r) + 0.5 * self.lambda * r * r,
        }
    }

    /// `j_ε(r)`: the unique `y` with `y + ε β(y) = r`.
    pub fn yosida_resolvent(&self, params: &YosidaParams, r: f64) -> Result<f64> {
        resolvent(self, params, r)
    }

    /// `β_ε(r) = (r - j_ε(r)) / ε`.
    pub fn yosida_apply(&self, params: &YosidaParams, r: f64) -> Result<f64> {
        Ok((r - resolvent(self, params, r)?) / params.epsilon)
    }

    /// Samples `g(r) r + (λ₁ - κ) r²` over `|r| ∈ [R/2, R]`.
    pub fn check_dissipativity(&self, lambda1: f64, kappa: f64, scan_radius: f64) -> DissipativityReport {
        let samples = 2001;
        let mut min_margin = f64::INFINITY;
        for k in 0..samples {
            let mag = scan_radius * (0.5 + 0.5 * k as f64 / (samples - 1) as f64);
            for r in [mag, -mag] {
                let m = self.g(r) * r + (lambda1 - kappa) * r * r;
                min_margin = min_margin.min(if m.is_nan() { f64::NEG_INFINITY } else { m });
            }
        }
        DissipativityReport {
            holds: min_margin > 0.0,
            min_margin,
        }
    }

    /// Sampled checks of `g(0) = 0`, `ĝ' = g` and `g' ≥ -λ` on `[-10, 10]`.
    pub fn check_hypotheses(&self) -> HypothesisReport {
        let g_at_zero = self.g(0.0);
        let mut min_margin = f64::INFINITY;
        let mut max_err = 0.0_f64;
        let delta = 1e-5;
        for k in 0..=20_000 {
            let r = -10.0 + k as f64 * 1e-3;
            min_margin = min_margin.min(self.g_prime(r) + self.lambda);
            let fd = (self.g_hat(r + delta) - self.g_hat(r - delta)) / (2.0 * delta);
            let g = self.g(r);
            max_err = max_err.max((fd - g).abs() / g.abs().max(1.0));
        }
        HypothesisReport {
            g_at_zero,
            min_monotonicity_margin: min_margin,
            max_primitive_error: max_err,
            holds: g_at_zero.abs() < 1e-12 && min_margin >= -1e-12 && max_err < 1e-6,
        }
    }
}

fn abs_pow(r: f64, e: f64) -> f64 {
    if e == 2.0 {
        r * r
    } else if e == 4.0 {
        let r2 = r * r;
        r2 * r2
    } else if e == 0.0 {
        1.0
    } else {
        r.abs().powf(e)
    }
}

/// `|r|^{e-1} r`.
fn signed_pow(r: f64, e: f64) -> f64 {
    if e == 3.0 {
        r * r * r
    } else if e == 1.0 {
        r
    } else {
        r.signum() * r.abs().powf(e)
    }
}

fn resolvent(p: &Potential, params: &YosidaParams, r: f64) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::NonFinite(format!("resolvent argument {r}")));
    }
    let eps = params.epsilon;
    let tol = params.root_tol * r.abs().max(1.0);
    let f = |y: f64| y + eps * p.beta(y) - r;
    let (mut lo, mut hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
    let mut y = 0.5 * (lo + hi);
    for _ in 0..params.max_iter {
        let fy = f(y);
        if fy.abs() < tol {
            return Ok(y);
        }
        if fy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let d = 1.0 + eps * p.beta_prime(y);
        let newton = y - fy / d;
        y = if d.is_finite() && d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * r.abs().max(f64::MIN_POSITIVE) {
            if f(y).abs() < tol {
                return Ok(y);
            }
            break;
        }
    }
    Err(Error::NoConvergence("yosida resolvent", params.max_iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quartic() -> Potential {
        Potential::double_well(4.0).unwrap()
    }

    #[test]
    fn double_well_values() {
        let p = quartic();
        assert_eq!(p.g(1.0), 0.0);
        assert_eq!(p.g(0.0), 0.0);
        assert_eq!(p.g(-1.0), 0.0);
        assert_eq!(p.beta(2.0), 8.0);
        assert_eq!(p.g_hat(1.0), -0.25);
        assert_eq!(p.lambda(), 1.0);
        assert!(Potential::double_well(1.5).is_err());
    }

    #[test]
    fn double_well_general_exponent() {
        let p = Potential::double_well(6.0).unwrap();
        assert_relative_eq!(p.g(2.0), 32.0 - 2.0, epsilon = 1e-12);
        assert_relative_eq!(p.g_hat(-2.0), 64.0 / 6.0 - 2.0, epsilon = 1e-12);
        assert!(p.check_hypotheses().holds);
        let p = Potential::double_well(3.0).unwrap();
        assert_relative_eq!(p.g(-2.0), -4.0 + 2.0, epsilon = 1e-12);
        assert!(p.check_hypotheses().holds);
    }

    #[test]
    fn bundle_consistency() {
        let p = quartic();
        let report = p.check_hypotheses();
        assert!(report.holds, "{report:?}");
        for k in 0..=1000 {
            let r = -5.0 + 0.01 * k as f64;
            assert_relative_eq!(p.beta(r), p.g(r) + r, epsilon = 1e-12);
            assert_relative_eq!(p.g_hat(r), p.beta_hat(r) - 0.5 * r * r, epsilon = 1e-12);
            let d = 1e-5;
            let fd = (p.beta_hat(r + d) - p.beta_hat(r - d)) / (2.0 * d);
            assert!((fd - p.beta(r)).abs() < 1e-6 * p.beta(r).abs().max(1.0));
            let fd = (p.g(r + d) - p.g(r - d)) / (2.0 * d);
            assert!((fd - p.g_prime(r)).abs() < 1e-6 * p.g_prime(r).abs().max(1.0));
        }
    }

    #[test]
    fn sign_condition_beyond_one() {
        let p = quartic();
        for k in 1..2000 {
            let r = 1.0 + 0.005 * k as f64;
            assert!(p.g(r) > 0.0);
            assert!(p.g(-r) < 0.0);
        }
    }

    #[test]
    fn custom_potential_flags_violations() {
        // g' = -2 < -λ.
        let p = Potential::custom(|r| -2.0 * r, |_| -2.0, |r| -r * r, 1.0).unwrap();
        assert!(!p.check_hypotheses().holds);
        // ĝ inconsistent with g.
        let p = Potential::custom(|r| r, |_| 1.0, |r| r * r, 0.0).unwrap();
        let rep = p.check_hypotheses();
        assert!(!rep.holds && rep.max_primitive_error > 0.1);
        assert!(Potential::custom(|r| r, |_| 1.0, |r| 0.5 * r * r, -1.0).is_err());
    }

    #[test]
    fn resolvent_examples() {
        let p = quartic();
        let y = YosidaParams::new(1.0).unwrap();
        assert_relative_eq!(p.yosida_resolvent(&y, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(p.yosida_resolvent(&y, 0.0).unwrap(), 0.0);
        assert_relative_eq!(p.yosida_apply(&y, 2.0).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(p.yosida_apply(&y, 0.0).unwrap(), 0.0);

        let lin = Potential::custom(|_| 0.0, |_| 0.0, |_| 0.0, 1.0).unwrap();
        let y = YosidaParams::new(0.5).unwrap();
        assert_relative_eq!(lin.yosida_resolvent(&y, 3.0).unwrap(), 2.0, epsilon = 1e-12);

        for r in [-1e6, -3.3, 1e-9, 7.0, 1e8] {
            let j = p.yosida_resolvent(&y, r).unwrap();
            assert!((j + 0.5 * p.beta(j) - r).abs() < 1e-12 * r.abs().max(1.0));
        }
        assert!(YosidaParams::new(0.0).is_err());
    }

    #[test]
    fn resolvent_cap_reports_non_monotone_beta() {
        // β(r) = -3 sin(r) is not monotone; y + β(y) = 10 has roots but the
        // bracket [0, r] assumption fails for some r.
        let bad = Potential::custom(|r| -3.0 * r.sin(), |r| -3.0 * r.cos(), |r| 3.0 * r.cos() - 3.0, 0.0).unwrap();
        let mut y = YosidaParams::new(1.0).unwrap();
        y.max_iter = 5;
        let failures = (1..50)
            .map(|k| k as f64 * 0.37)
            .filter(|&r| bad.yosida_resolvent(&y, r).is_err())
            .count();
        assert!(failures > 0);
    }

    #[test]
    fn yosida_potential_bundle() {
        let p = quartic().yosida(YosidaParams::new(0.1).unwrap());
        for k in 0..=200 {
            let r = -4.0 + 0.04 * k as f64;
            let d = 1e-5;
            let fd = (p.beta_hat(r + d) - p.beta_hat(r - d)) / (2.0 * d);
            assert!((fd - p.beta(r)).abs() < 1e-6 * p.beta(r).abs().max(1.0), "r = {r}");
            let fd = (p.beta(r + d) - p.beta(r - d)) / (2.0 * d);
            assert!((fd - p.beta_prime(r)).abs() < 1e-5 * p.beta_prime(r).abs().max(1.0), "r = {r}");
            assert!(p.beta_prime(r) <= 10.0 + 1e-12);
        }
    }

    #[test]
    fn dissipativity() {
        assert!(quartic().check_dissipativity(1.2, 0.1, 100.0).holds);
        let lin = Potential::custom(|r| -2.0 * r, |_| -2.0, |r| -r * r, 2.0).unwrap();
        let rep = lin.check_dissipativity(1.5, 0.1, 100.0);
        assert!(!rep.holds && rep.min_margin < 0.0);
        assert!(Potential::zero().check_dissipativity(1.2, 0.1, 100.0).holds);
    }

    proptest::proptest! {
        #[test]
        fn beta_monotone(r1 in -20.0f64..20.0, r2 in -20.0f64..20.0) {
            let p = quartic();
            proptest::prop_assert!((p.beta(r1) - p.beta(r2)) * (r1 - r2) >= 0.0);
        }

        #[test]
        fn resolvent_nonexpansive(r1 in -50.0f64..50.0, r2 in -50.0f64..50.0, e in 0.001f64..2.0) {
            let p = quartic();
            let y = YosidaParams::new(e).unwrap();
            let j1 = p.yosida_resolvent(&y, r1).unwrap();
            let j2 = p.yosida_resolvent(&y, r2).unwrap();
            proptest::prop_assert!((j1 - j2).abs() <= (r1 - r2).abs() * (1.0 + 1e-10) + 1e-12);
        }
    }
}
