//! The discrete energy `E(v) = ½ vᵀ A_σ v + ∫_Ω ĝ(v_h)` and its derivatives.
//!
//! Nonlinear integrals use element-wise Gauss quadrature of the P1
//! interpolant. Load vectors and Jacobians are the exact derivatives of
//! those quadrature sums, so the discrete gradient of the discrete energy is
//! consistent to rounding.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mesh::{FemVector, FracMesh};
use crate::operator::OperatorSet;
use crate::potential::Potential;
use crate::quadrature::GaussLegendre;

/// Gauss points on the reference element with the two hat values at each.
#[derive(Debug, Clone)]
pub struct ElementRule {
    points: Vec<(f64, f64, f64)>,
}

impl ElementRule {
    pub fn new(order: usize) -> Self {
        let points = GaussLegendre::new(order)
            .unit_interval()
            .map(|(t, w)| (w, 1.0 - t, t))
            .collect();
        Self { points }
    }

    /// `∫_Ω f(v_h)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, mesh: &FracMesh, v: &FemVector, f: F) -> f64 {
        let nodal = mesh.nodal_values(v);
        let h = mesh.h();
        let mut total = 0.0;
        for e in 0..mesh.n_elems() {
            let (l, r) = (nodal[e], nodal[e + 1]);
            let mut acc = 0.0;
            for &(w, pl, pr) in &self.points {
                acc += w * f(pl * l + pr * r);
            }
            total += h * acc;
        }
        total
    }

    /// `(∫_Ω f(v_h) φ_i)_i`.
    pub fn load<F: Fn(f64) -> f64>(&self, mesh: &FracMesh, v: &FemVector, f: F) -> DVector<f64> {
        let nodal = mesh.nodal_values(v);
        let h = mesh.h();
        let mut out = DVector::zeros(mesh.dof_count());
        for e in 0..mesh.n_elems() {
            let (l, r) = (nodal[e], nodal[e + 1]);
            let (mut bl, mut br) = (0.0, 0.0);
            for &(w, pl, pr) in &self.points {
                let fv = w * f(pl * l + pr * r);
                bl += fv * pl;
                br += fv * pr;
            }
            if let Some(i) = mesh.element_dof(e, 0) {
                out[i] += h * bl;
            }
            if let Some(i) = mesh.element_dof(e, 1) {
                out[i] += h * br;
            }
        }
        out
    }

    /// Adds `(∫_Ω f(v_h) φ_i φ_j)_{ij}` to `target`.
    pub fn add_weighted_mass<F: Fn(f64) -> f64>(
        &self,
        mesh: &FracMesh,
        v: &FemVector,
        f: F,
        target: &mut DMatrix<f64>,
    ) {
        let nodal = mesh.nodal_values(v);
        let h = mesh.h();
        for e in 0..mesh.n_elems() {
            let (l, r) = (nodal[e], nodal[e + 1]);
            let mut loc = [[0.0; 2]; 2];
            for &(w, pl, pr) in &self.points {
                let fv = w * f(pl * l + pr * r);
                let phi = [pl, pr];
                for i in 0..2 {
                    for j in 0..2 {
                        loc[i][j] += fv * phi[i] * phi[j];
                    }
                }
            }
            let dofs = [mesh.element_dof(e, 0), mesh.element_dof(e, 1)];
            for i in 0..2 {
                for j in 0..2 {
                    if let (Some(gi), Some(gj)) = (dofs[i], dofs[j]) {
                        target[(gi, gj)] += h * loc[i][j];
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyContext {
    ops: Arc<OperatorSet>,
    pot: Potential,
    quad_order: usize,
    rule: ElementRule,
}

impl EnergyContext {
    pub fn new(ops: Arc<OperatorSet>, pot: Potential) -> Result<Self> {
        Self::with_quad_order(ops, pot, 5)
    }

    pub fn with_quad_order(ops: Arc<OperatorSet>, pot: Potential, quad_order: usize) -> Result<Self> {
        if quad_order < 2 {
            return Err(Error::Config(format!("quad_order must be >= 2, got {quad_order}")));
        }
        Ok(Self {
            ops,
            pot,
            quad_order,
            rule: ElementRule::new(quad_order),
        })
    }

    pub fn ops(&self) -> &OperatorSet {
        &self.ops
    }

    pub fn ops_arc(&self) -> &Arc<OperatorSet> {
        &self.ops
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn rule(&self) -> &ElementRule {
        &self.rule
    }

    pub fn mesh(&self) -> &FracMesh {
        self.ops.mesh()
    }

    /// Same operators and quadrature with a different potential.
    pub fn with_potential(&self, pot: Potential) -> Self {
        Self {
            ops: Arc::clone(&self.ops),
            pot,
            quad_order: self.quad_order,
            rule: self.rule.clone(),
        }
    }

    pub fn quadratic_part(&self, v: &FemVector) -> Result<f64> {
        Ok(0.5 * self.ops.a_sigma().xnorm_sq(v)?)
    }

    pub fn nonlinear_part(&self, v: &FemVector) -> Result<f64> {
        self.mesh().check_dim(v)?;
        finite("∫ ĝ(v)", self.rule.integrate(self.mesh(), v, |r| self.pot.g_hat(r)))
    }

    pub fn energy(&self, v: &FemVector) -> Result<f64> {
        Ok(self.quadratic_part(v)? + self.nonlinear_part(v)?)
    }

    /// `E'(v) = A_σ v + (∫ g(v_h) φ_i)_i`.
    pub fn gradient(&self, v: &FemVector) -> Result<DVector<f64>> {
        self.mesh().check_dim(v)?;
        let b = self.rule.load(self.mesh(), v, |r| self.pot.g(r));
        finite_vec("E'(v)", self.ops.a_sigma().apply(v) + b)
    }

    /// `(∫ β(v_h) φ_i)_i`.
    pub fn beta_load(&self, v: &FemVector) -> Result<DVector<f64>> {
        self.mesh().check_dim(v)?;
        finite_vec("b_β(v)", self.rule.load(self.mesh(), v, |r| self.pot.beta(r)))
    }

    /// Adds `(∫ β'(v_h) φ_i φ_j)` to `target`.
    pub fn add_beta_jacobian(&self, v: &FemVector, target: &mut DMatrix<f64>) {
        self.rule
            .add_weighted_mass(self.mesh(), v, |r| self.pot.beta_prime(r), target);
    }

    /// `A_σ + (∫ g'(v_h) φ_i φ_j)`, the Hessian of the energy.
    pub fn hessian(&self, v: &FemVector) -> Result<DMatrix<f64>> {
        self.mesh().check_dim(v)?;
        let mut h = self.ops.a_sigma().matrix().clone();
        self.rule
            .add_weighted_mass(self.mesh(), v, |r| self.pot.g_prime(r), &mut h);
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::Range("non-finite Hessian entry".into()));
        }
        Ok(h)
    }

    /// Quadrature `L²` norm of `β(v_h)`.
    pub fn beta_l2(&self, v: &FemVector) -> f64 {
        self.rule
            .integrate(self.mesh(), v, |r| self.pot.beta(r).powi(2))
            .sqrt()
    }
}

fn finite(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(format!("{what} overflowed")))
    }
}

fn finite_vec(what: &str, v: DVector<f64>) -> Result<DVector<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::Range(format!("{what} overflowed")))
    }
}

/// Sampled estimate of the constant in `E(v) ≥ κ₀ ‖v‖²_σ - C`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoercivityReport {
    pub lambda1: f64,
    pub kappa: f64,
    pub kappa0: f64,
    pub c: f64,
    pub verified_on: usize,
}

pub fn coercivity_probe(
    ctx: &EnergyContext,
    lambda1: f64,
    kappa: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<CoercivityReport> {
    if !(kappa > 0.0 && kappa < lambda1) {
        return Err(Error::Range(format!(
            "kappa must lie in (0, lambda1 = {lambda1}), got {kappa}"
        )));
    }
    let kappa0 = kappa / (2.0 * lambda1);
    let n = ctx.ops().dof_count();
    let mut c = 0.0_f64;
    let mut verified = 0;
    for _ in 0..samples {
        let scale = 10f64.powf(rng.random_range(-2.0..1.5));
        let v = FemVector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let Ok(e) = ctx.energy(&v) else { continue };
        let norm_sq = ctx.ops().a_sigma().xnorm_sq(&v)?;
        c = c.max(kappa0 * norm_sq - e);
        verified += 1;
    }
    Ok(CoercivityReport {
        lambda1,
        kappa,
        kappa0,
        c,
        verified_on: verified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::interpolate;
    use crate::operator::{rayleigh_lambda1, FracExponents};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(n: usize, pot: Potential) -> EnergyContext {
        let ops = OperatorSet::new(
            FracMesh::uniform(-1.0, 1.0, n).unwrap(),
            FracExponents::new(0.5, 0.5).unwrap(),
        )
        .unwrap();
        EnergyContext::new(Arc::new(ops), pot).unwrap()
    }

    fn quartic() -> Potential {
        Potential::double_well(4.0).unwrap()
    }

    #[test]
    fn zero_state() {
        let c = ctx(8, quartic());
        let z = FemVector::zeros(7);
        assert_eq!(c.energy(&z).unwrap(), 0.0);
        assert_eq!(c.gradient(&z).unwrap(), DVector::zeros(7));
    }

    #[test]
    fn quadratic_part_scales() {
        let c = ctx(8, quartic());
        let v = FemVector::from_element(7, 1.0);
        let a = c.ops().a_sigma().matrix();
        assert_eq!(c.quadratic_part(&v).unwrap(), 0.5 * v.dot(&(a * &v)));
        let q1 = c.quadratic_part(&v).unwrap();
        let q2 = c.quadratic_part(&(&v * 2.0)).unwrap();
        assert_eq!(q2, 4.0 * q1);
    }

    #[test]
    fn nonlinear_part_against_fine_quadrature() {
        let c = ctx(8, quartic());
        let v = FemVector::from_element(7, 1.0);
        let coarse = c.nonlinear_part(&v).unwrap();
        let fine = ElementRule::new(50).integrate(c.mesh(), &v, |r| c.potential().g_hat(r));
        assert!((coarse - fine).abs() < 1e-8 * fine.abs());
        let rand_v = FemVector::from_fn(7, |i, _| (i as f64 * 1.3).sin() * 1.7);
        let coarse = c.nonlinear_part(&rand_v).unwrap();
        let fine = ElementRule::new(50).integrate(c.mesh(), &rand_v, |r| c.potential().g_hat(r));
        assert!((coarse - fine).abs() < 1e-8 * fine.abs());
    }

    #[test]
    fn zero_potential_is_half_norm_squared() {
        let c = ctx(16, Potential::zero());
        let v = FemVector::from_fn(15, |i, _| (i as f64).cos());
        let n = c.ops().a_sigma().xnorm(&v).unwrap();
        assert!((c.energy(&v).unwrap() - 0.5 * n * n).abs() < 1e-14 * n * n);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = ctx(32, quartic());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = FemVector::from_fn(31, |_, _| rng.random_range(-1.5..1.5));
            let g = c.gradient(&v).unwrap();
            let i = rng.random_range(0..31);
            let d = 1e-6 * (1.0 + v[i].abs());
            let mut vp = v.clone();
            vp[i] += d;
            let mut vm = v.clone();
            vm[i] -= d;
            let fd = (c.energy(&vp).unwrap() - c.energy(&vm).unwrap()) / (2.0 * d);
            let scale = g[i].abs().max(c.energy(&v).unwrap().abs() * 1e-3).max(1e-8);
            assert!((fd - g[i]).abs() < 1e-6 * scale.max(1.0), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let c = ctx(16, quartic());
        let v = FemVector::from_fn(15, |i, _| 0.8 * (0.4 * i as f64).sin());
        let h = c.hessian(&v).unwrap();
        assert_eq!(h, h.transpose());
        for i in [0, 5, 14] {
            let d = 1e-6;
            let mut vp = v.clone();
            vp[i] += d;
            let mut vm = v.clone();
            vm[i] -= d;
            let col = (c.gradient(&vp).unwrap() - c.gradient(&vm).unwrap()) / (2.0 * d);
            assert!((col - h.column(i)).amax() < 1e-7);
        }
    }

    #[test]
    fn overflow_is_a_range_error() {
        let c = ctx(8, quartic());
        let v = FemVector::from_element(7, 1e90);
        assert!(matches!(c.energy(&v), Err(Error::Range(_))));
        assert!(c.gradient(&FemVector::zeros(3)).is_err());
    }

    #[test]
    fn coercivity() {
        let c = ctx(64, quartic());
        let l1 = rayleigh_lambda1(c.ops().a_sigma(), c.ops().mass()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rep = coercivity_probe(&c, l1, 0.5 * l1, 200, &mut rng).unwrap();
        assert!(rep.c.is_finite() && rep.c >= 0.0);
        assert_eq!(rep.kappa0, 0.5 * l1 / (2.0 * l1));
        assert!(coercivity_probe(&c, l1, 2.0 * l1, 10, &mut rng).is_err());

        // Along a ray the margin E(tv) - κ₀‖tv‖² eventually grows.
        let v0 = interpolate(c.mesh(), |x| 1.0 - x * x).unwrap();
        let margin = |t: f64| {
            let v = &v0 * t;
            c.energy(&v).unwrap() - rep.kappa0 * c.ops().a_sigma().xnorm_sq(&v).unwrap()
        };
        assert!(margin(0.0) >= -rep.c);
        assert!(margin(50.0) > margin(25.0) && margin(25.0) > margin(10.0));
        assert!(margin(10.0) > 0.0);
    }

    #[test]
    fn quad_order_validated() {
        let c = ctx(4, quartic());
        assert!(EnergyContext::with_quad_order(Arc::clone(c.ops_arc()), quartic(), 1).is_err());
    }
}
