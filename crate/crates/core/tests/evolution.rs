mod common;

use common::{ctx, gaussian_vector, rng, smooth_mode};
use fracch::diagnostics::line_fit;
use fracch::equilibrium::{solve_stationary, unstable_mode_seed};
use fracch::evolution::{energy_balance_defect, evolve, step, StepConfig, Stepper};
use fracch::mesh::{interpolate, linf_norm};
use fracch::FemVector;

#[test]
fn random_step_satisfies_certificate() {
    let c = ctx(-1.0, 1.0, 64, 0.5, 0.5);
    let mut r = rng(11);
    let cfg = StepConfig::new(1e-3).unwrap();
    for _ in 0..5 {
        let u = gaussian_vector(&mut r, 63, 1.0);
        let out = step(&c, cfg, &u).unwrap();
        assert!(out.cert.defect <= 1e-9, "{:?}", out.cert);
        assert!(out.cert.satisfied);
    }
}

#[test]
fn flux_identity_holds_every_step() {
    let c = ctx(-1.0, 1.0, 64, 0.25, 0.75);
    let mut r = rng(3);
    let u0 = gaussian_vector(&mut r, 63, 0.5);
    let traj = evolve(&c, StepConfig::new(1e-2).unwrap(), &u0, 0.2, 5).unwrap();
    for m in &traj.monitors[1..] {
        assert!((m.dual_norm_ut - m.w_xnorm).abs() <= 1e-8 * m.w_xnorm, "{m:?}");
    }
}

#[test]
fn stationary_state_is_preserved() {
    let c = ctx(-4.0, 4.0, 64, 0.5, 0.5);
    let seed = unstable_mode_seed(&c, 0.9).unwrap();
    let tol = 1e-10;
    let phi = solve_stationary(&c, &seed, tol).unwrap().phi;
    let mut cfg = StepConfig::new(1e-4).unwrap();
    cfg.newton_tol = tol;
    let stepper = Stepper::new(&c, cfg).unwrap();
    let out = stepper.step(&phi).unwrap();
    assert!(c.ops().a_s().xnorm(&out.w).unwrap() < 10.0 * tol);
    let mut u = phi.clone();
    for _ in 0..100 {
        u = stepper.step(&u).unwrap().u;
    }
    let drift = c.ops().l2_sq(&(&u - &phi)).sqrt();
    assert!(drift < 10.0 * tol, "drift {drift:e}");
    let traj = evolve(&c, cfg, &phi, 100.0 * cfg.tau, 10).unwrap();
    assert!(energy_balance_defect(&traj).iter().all(|d| d.abs() < tol));
}

#[test]
fn sine_datum_settles_to_zero() {
    let c = ctx(-1.0, 1.0, 128, 0.5, 0.5);
    let u0 = interpolate(c.mesh(), |x| 0.1 * (std::f64::consts::PI * x).sin()).unwrap();
    let traj = evolve(&c, StepConfig::new(1e-3).unwrap(), &u0, 5.0, 500).unwrap();
    let e = traj.energies();
    assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0)));
    let last = traj.monitors.last().unwrap();
    assert!((last.t - 5.0).abs() < 1e-12);
    assert!(last.dual_norm_ut < 1e-6, "{last:?}");
    let u_end = traj.final_state().unwrap();
    let grad = c.gradient(u_end).unwrap();
    assert!(c.ops().a_sigma().dual_norm(&grad).unwrap() < 1e-6);
    let rep = solve_stationary(&c, u_end, 1e-10).unwrap();
    assert!(rep.linf < 1e-6);
}

#[test]
fn large_data_stays_bounded() {
    let c = ctx(-1.0, 1.0, 64, 0.5, 0.5);
    let mut r = rng(21);
    let mut u0 = gaussian_vector(&mut r, 63, 1.0);
    u0 *= 5.0 / linf_norm(&u0);
    assert!((linf_norm(&u0) - 5.0).abs() < 1e-12);
    let traj = evolve(&c, StepConfig::new(1e-2).unwrap(), &u0, 3.0, 10).unwrap();
    assert!(traj.monitors.iter().all(|m| m.u_linf.is_finite()));
    let late = traj
        .monitors
        .iter()
        .filter(|m| m.t >= 1.0)
        .map(|m| m.u_linf)
        .fold(0.0, f64::max);
    assert!(late <= 5.0 + 1e-12, "late sup {late}");
}

fn max_rate_defect(c: &fracch::energy::EnergyContext, u0: &FemVector, tau: f64) -> f64 {
    let traj = evolve(c, StepConfig::new(tau).unwrap(), u0, 1.0, 1000).unwrap();
    energy_balance_defect(&traj).iter().fold(0.0, |m, d| m.max(d.abs()))
}

#[test]
fn energy_defect_is_first_order_for_sigma_above_s() {
    let c = ctx(-1.0, 1.0, 64, 0.25, 0.75);
    let u0 = smooth_mode(c.ops(), 0, 0.1);
    let taus = [1e-2, 5e-3, 2.5e-3];
    let d: Vec<f64> = taus.iter().map(|&t| max_rate_defect(&c, &u0, t)).collect();
    let x: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = d.iter().map(|v| v.ln()).collect();
    let fit = line_fit(&x, &y);
    assert!((fit.slope - 1.0).abs() < 0.2, "slope {} defects {d:?}", fit.slope);
}

#[test]
fn mass_is_not_conserved() {
    let c = ctx(-1.0, 1.0, 32, 0.5, 0.5);
    let u0 = interpolate(c.mesh(), |x| 0.5 * (1.0 - x * x)).unwrap();
    let traj = evolve(&c, StepConfig::new(1e-2).unwrap(), &u0, 1.0, 10).unwrap();
    let mass = |u: &FemVector| c.ops().mass().apply(u).sum();
    let m0 = mass(&u0);
    let m1 = mass(traj.final_state().unwrap());
    assert!((m1 - m0).abs() > 1e-3 * m0.abs(), "{m0} -> {m1}");
}

#[test]
fn beta_norm_bounded_over_unit_windows() {
    let c = ctx(-4.0, 4.0, 64, 0.5, 0.5);
    let mut r = rng(8);
    let u0 = gaussian_vector(&mut r, 63, 1.0);
    let traj = evolve(&c, StepConfig::new(1e-2).unwrap(), &u0, 6.0, 5).unwrap();
    let mut window_max = [0.0_f64; 6];
    for (t, u) in &traj.states {
        let k = (t.floor() as usize).min(5);
        window_max[k] = window_max[k].max(c.beta_l2(u));
    }
    assert!(window_max.iter().all(|v| v.is_finite()));
    let first = window_max[0];
    assert!(window_max[1..].iter().all(|&v| v <= first), "{window_max:?}");
}

#[test]
fn yosida_run_certifies_regularized_energy() {
    let c = ctx(-1.0, 1.0, 32, 0.5, 0.5);
    let mut r = rng(4);
    let u0 = gaussian_vector(&mut r, 31, 2.0);
    let mut cfg = StepConfig::new(1e-2).unwrap();
    cfg.use_yosida = Some(1e-2);
    let traj = evolve(&c, cfg, &u0, 0.5, 10).unwrap();
    assert!(traj.certificates.iter().all(|c| c.satisfied));
}
