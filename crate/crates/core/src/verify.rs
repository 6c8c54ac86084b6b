//! Property suite run by `fracch verify`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{poincare_report, PoincareReport};
use crate::energy::EnergyContext;
use crate::error::Result;
use crate::evolution::{evolve_with, EvolveOptions, StepConfig, ViolationPolicy};
use crate::mesh::FemVector;
use crate::operator::Stiffness;
use crate::potential::{Potential, YosidaParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub samples: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

/// `‖A v‖_{A⁻¹} = ‖v‖_A` on Gaussian vectors.
pub fn duality_check<R: Rng + ?Sized>(a: &Stiffness, samples: usize, tol: f64, rng: &mut R) -> Result<DualityReport> {
    let mut max_rel_err = 0.0_f64;
    for _ in 0..samples {
        let v = FemVector::from_fn(a.dim(), |_, _| rng.sample(StandardNormal));
        let x = a.xnorm(&v)?;
        let d = a.dual_norm(&a.apply(&v))?;
        max_rel_err = max_rel_err.max((d - x).abs() / x);
    }
    Ok(DualityReport {
        samples,
        max_rel_err,
        tol,
        passed: max_rel_err < tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YosidaReport {
    pub points: usize,
    pub epsilons: Vec<f64>,
    /// `|β_ε| > |β|`.
    pub bound_violations: usize,
    /// `|β_ε(r) - β_ε(q)| > |r - q| / ε`.
    pub lipschitz_violations: usize,
    /// `|j_ε(r) - j_ε(q)| > |r - q|`.
    pub nonexpansive_violations: usize,
    /// `|β_ε(r) - β(r)|` failed to shrink as `ε` decreased, or stayed above
    /// `1e-2 · max(1, |β(r)|)` at the smallest `ε`.
    pub convergence_violations: usize,
    pub passed: bool,
}

pub const YOSIDA_EPSILONS: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

/// Samples `points` pairs `(r, q)` uniformly in `[-radius, radius]`.
pub fn yosida_suite<R: Rng + ?Sized>(pot: &Potential, points: usize, radius: f64, rng: &mut R) -> Result<YosidaReport> {
    let params: Vec<YosidaParams> = YOSIDA_EPSILONS
        .iter()
        .map(|&e| YosidaParams::new(e))
        .collect::<Result<_>>()?;
    let mut rep = YosidaReport {
        points,
        epsilons: YOSIDA_EPSILONS.to_vec(),
        bound_violations: 0,
        lipschitz_violations: 0,
        nonexpansive_violations: 0,
        convergence_violations: 0,
        passed: false,
    };
    for _ in 0..points {
        let r = rng.random_range(-radius..=radius);
        let q = rng.random_range(-radius..=radius);
        let beta_r = pot.beta(r);
        let mut prev_err = f64::INFINITY;
        let mut converging = true;
        let mut last_err = 0.0;
        for p in &params {
            let eps = p.epsilon;
            let slack = p.root_tol * r.abs().max(q.abs()).max(1.0);
            let jr = pot.yosida_resolvent(p, r)?;
            let jq = pot.yosida_resolvent(p, q)?;
            let br = (r - jr) / eps;
            let bq = (q - jq) / eps;
            if br.abs() > beta_r.abs() * (1.0 + 1e-12) + slack / eps {
                rep.bound_violations += 1;
            }
            if (br - bq).abs() > (r - q).abs() / eps + 2.0 * slack / eps {
                rep.lipschitz_violations += 1;
            }
            if (jr - jq).abs() > (r - q).abs() + 2.0 * slack {
                rep.nonexpansive_violations += 1;
            }
            let err = (br - beta_r).abs();
            if err > prev_err + slack / eps {
                converging = false;
            }
            prev_err = err;
            last_err = err;
        }
        if !converging || last_err > 1e-2 * beta_r.abs().max(1.0) {
            rep.convergence_violations += 1;
        }
    }
    rep.passed = rep.bound_violations == 0
        && rep.lipschitz_violations == 0
        && rep.nonexpansive_violations == 0
        && rep.convergence_violations == 0;
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub steps: usize,
    pub tau: f64,
    pub violations: usize,
    /// Largest `defect / tol` over the run; `≤ 1` means every certificate holds.
    pub max_defect_ratio: f64,
    /// Largest relative gap between `‖M (u_n - u_{n-1}) / τ‖_{s,*}` and `‖w_n‖_s`.
    pub flux_max_rel_err: f64,
    pub energy_nonincreasing: bool,
    pub passed: bool,
}

/// Short run with violations recorded rather than fatal.
pub fn energy_stability_run(ctx: &EnergyContext, cfg: StepConfig, u0: &FemVector, steps: usize) -> Result<StabilityReport> {
    let opts = EvolveOptions {
        on_violation: ViolationPolicy::Warn,
        ..EvolveOptions::default()
    };
    let t_end = cfg.tau * steps as f64;
    let traj = evolve_with(ctx, cfg, u0, t_end, steps.max(1), opts, |_, _| Ok(()))?;
    let violations = traj.certificates.iter().filter(|c| !c.satisfied).count();
    let max_defect_ratio = traj
        .certificates
        .iter()
        .map(|c| c.defect / c.tol)
        .fold(f64::NEG_INFINITY, f64::max);
    let flux_max_rel_err = traj
        .monitors
        .iter()
        .skip(1)
        .filter(|m| m.w_xnorm > 0.0)
        .map(|m| (m.dual_norm_ut - m.w_xnorm).abs() / m.w_xnorm)
        .fold(0.0, f64::max);
    let energy_nonincreasing = traj
        .monitors
        .windows(2)
        .all(|w| w[1].energy <= w[0].energy + 1e-9 * w[0].energy.abs().max(1.0));
    Ok(StabilityReport {
        steps: traj.certificates.len(),
        tau: cfg.tau,
        violations,
        max_defect_ratio,
        flux_max_rel_err,
        energy_nonincreasing,
        passed: violations == 0 && energy_nonincreasing && flux_max_rel_err < 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub poincare: PoincareReport,
    pub duality_s: DualityReport,
    pub duality_sigma: DualityReport,
    pub yosida: YosidaReport,
    pub stability: StabilityReport,
    pub all_passed: bool,
}

pub struct VerifySettings {
    pub poincare_trials: usize,
    pub poincare_localized: usize,
    pub duality_samples: usize,
    pub yosida_points: usize,
    pub stability_steps: usize,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            poincare_trials: 1000,
            poincare_localized: 20,
            duality_samples: 100,
            yosida_points: 1000,
            stability_steps: 50,
        }
    }
}

pub fn run_suite<R: Rng + ?Sized>(
    ctx: &EnergyContext,
    cfg: StepConfig,
    u0: &FemVector,
    settings: &VerifySettings,
    rng: &mut R,
) -> Result<VerifyReport> {
    let ops = ctx.ops();
    let poincare = poincare_report(ops, settings.poincare_trials, settings.poincare_localized, rng)?;
    let duality_s = duality_check(ops.a_s(), settings.duality_samples, 1e-10, rng)?;
    let duality_sigma = duality_check(ops.a_sigma(), settings.duality_samples, 1e-10, rng)?;
    let yosida = yosida_suite(ctx.potential(), settings.yosida_points, 5.0, rng)?;
    let stability = energy_stability_run(ctx, cfg, u0, settings.stability_steps)?;
    let all_passed = poincare.holds && duality_s.passed && duality_sigma.passed && yosida.passed && stability.passed;
    Ok(VerifyReport {
        poincare,
        duality_s,
        duality_sigma,
        yosida,
        stability,
        all_passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn yosida_suite_passes_for_double_well() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rep = yosida_suite(&Potential::double_well(4.0).unwrap(), 200, 5.0, &mut rng).unwrap();
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn yosida_suite_detects_non_monotone_beta() {
        // β(r) = -r is not monotone; its resolvent leaves the bracket.
        let bad = Potential::custom(|r| -2.0 * r, |_| -2.0, |r| -r * r, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let res = yosida_suite(&bad, 50, 1.0, &mut rng);
        assert!(!matches!(res, Ok(ref r) if r.passed), "{res:?}");
    }
}
