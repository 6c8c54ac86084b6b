//! Orchestration behind the CLI subcommands. Each run writes into an output
//! directory and returns a summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::diagnostics::{decay_fit, FitMode, LojFit};
use crate::equilibrium::{analyze, linearize, lsi_probe, max_principle_check, solve_stationary_with, EquilibriumReport, LsiProbeResult, StationaryOptions};
use crate::error::{Error, Result};
use crate::evolution::{evolve_with, EvolveOptions};
use crate::io::{read_json, read_trajectory_csv, write_json, write_table, CertificateWriter, TrajectoryWriter};
use crate::linalg::SymmetricPencil;
use crate::mesh::FemVector;
use crate::operator::{pencil_spectrum, write_matrix_dump};
use crate::verify::{run_suite, VerifyReport, VerifySettings};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const CERTIFICATES_FILE: &str = "certificates.csv";
pub const SIMULATE_FILE: &str = "simulate.json";
pub const EQUILIBRIUM_FILE: &str = "equilibrium.json";
pub const LSI_FILE: &str = "lsi_probe.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const RATES_FILE: &str = "rates.json";
pub const FIT_CURVE_FILE: &str = "fit_curve.csv";

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Range(_) | Error::Json(_) => 2,
        Error::MissingInput(_) => 3,
        Error::NewtonDivergence { .. }
        | Error::SingularJacobian
        | Error::NoConvergence(..)
        | Error::NotPositiveDefinite(_)
        | Error::NonFinite(_) => 4,
        Error::CertificateViolation { .. } | Error::VerificationFailed(_) => 5,
        _ => 1,
    }
}

fn prepare(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub steps: usize,
    pub t_end: f64,
    pub final_energy: f64,
    pub final_dual_norm_ut: f64,
    pub halvings: Vec<(usize, u32)>,
    pub max_cert_defect: f64,
    #[serde(with = "crate::io::dvec")]
    pub u_final: FemVector,
}

pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<SimulateSummary> {
    let dir = prepare(out)?;
    let ctx = cfg.context()?;
    let step_cfg = cfg.step_config()?;
    let u0 = cfg.initial_state(&ctx)?;
    let mut traj_w = TrajectoryWriter::create(&dir.join(TRAJECTORY_FILE))?;
    let mut cert_w = CertificateWriter::create(&dir.join(CERTIFICATES_FILE))?;
    let traj = evolve_with(
        &ctx,
        step_cfg,
        &u0,
        cfg.time.t_end,
        cfg.time.record_stride,
        EvolveOptions::default(),
        |row, cert| {
            traj_w.write(row)?;
            if let Some(c) = cert {
                cert_w.write(row.step, c)?;
            }
            Ok(())
        },
    )?;
    let last = traj.monitors.last().expect("trajectory has an initial row");
    let summary = SimulateSummary {
        steps: traj.certificates.len(),
        t_end: last.t,
        final_energy: last.energy,
        final_dual_norm_ut: last.dual_norm_ut,
        halvings: traj.halvings.clone(),
        max_cert_defect: traj.certificates.iter().map(|c| c.defect).fold(f64::NEG_INFINITY, f64::max),
        u_final: traj.final_state().cloned().unwrap_or(u0),
    };
    write_json(&dir.join(SIMULATE_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub report: EquilibriumReport,
    pub max_principle_holds: bool,
    pub lsi: Option<LsiProbeResult>,
}

pub fn run_equilibrium(cfg: &RunConfig, out: &Path) -> Result<EquilibriumSummary> {
    let dir = prepare(out)?;
    let ctx = cfg.context()?;
    let init = cfg.initial_state(&ctx)?;
    let opts = StationaryOptions {
        tol: cfg.newton.tol,
        max_iter: cfg.newton.max_iter.max(100),
    };
    let rep = solve_stationary_with(&ctx, &init, opts)?;
    let rep = analyze(&ctx, rep, cfg.analysis.kernel_tol)?;
    let max_principle_holds = max_principle_check(&rep, 1.0, None);
    write_json(&dir.join(EQUILIBRIUM_FILE), &rep)?;
    let lsi = match cfg.analysis.lsi_theta.or(rep.theta_hint) {
        Some(theta) => {
            let mut rng = cfg.rng();
            let res = lsi_probe(&ctx, &rep, theta, cfg.analysis.lsi_delta, cfg.analysis.lsi_samples, &mut rng)?;
            write_json(&dir.join(LSI_FILE), &res)?;
            Some(res)
        }
        None => {
            log::info!("kernel_dim = {}: no default theta, lsi probe skipped", rep.kernel_dim);
            None
        }
    };
    Ok(EquilibriumSummary {
        report: rep,
        max_principle_holds,
        lsi,
    })
}

pub fn run_verify(cfg: &RunConfig, out: &Path) -> Result<VerifyReport> {
    let dir = prepare(out)?;
    let ctx = cfg.context()?;
    let u0 = cfg.initial_state(&ctx)?;
    let settings = VerifySettings {
        poincare_trials: cfg.analysis.poincare_trials,
        poincare_localized: cfg.analysis.poincare_localized,
        ..VerifySettings::default()
    };
    let mut rng = cfg.rng();
    let rep = run_suite(&ctx, cfg.step_config()?, &u0, &settings, &mut rng)?;
    write_json(&dir.join(VERIFY_FILE), &rep)?;
    if rep.all_passed {
        Ok(rep)
    } else {
        Err(Error::VerificationFailed(format!(
            "see {}",
            dir.join(VERIFY_FILE).display()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub lambda1_s: f64,
    pub lambda1_sigma: f64,
    pub lowest_linearized_zero: f64,
}

/// Columns: `k`, pencil eigenvalues of `(A_s, M)`, `(A_σ, M)` and of the
/// linearization at zero.
pub fn run_spectrum(cfg: &RunConfig, out: &Path) -> Result<SpectrumSummary> {
    let dir = prepare(out)?;
    let ctx = cfg.context()?;
    let ops = ctx.ops();
    let es = pencil_spectrum(ops.a_s(), ops.mass())?;
    let esig = pencil_spectrum(ops.a_sigma(), ops.mass())?;
    let l0 = linearize(&ctx, &FemVector::zeros(ops.dof_count()))?;
    let el = SymmetricPencil::new(&l0, ops.mass().matrix())?.solve()?;
    let rows: Vec<Vec<f64>> = (0..ops.dof_count())
        .map(|k| vec![k as f64, es.values[k], esig.values[k], el.values[k]])
        .collect();
    write_table(&dir.join(SPECTRUM_FILE), &["k", "a_s", "a_sigma", "linearized_zero"], &rows)?;
    if cfg.output.dump_matrices {
        let exps = ops.exps();
        write_matrix_dump(&dir.join("a_s.bin"), ops.a_s().matrix(), exps.s(), ops.c_s())?;
        write_matrix_dump(&dir.join("a_sigma.bin"), ops.a_sigma().matrix(), exps.sigma(), ops.c_sigma())?;
    }
    Ok(SpectrumSummary {
        lambda1_s: es.values[0],
        lambda1_sigma: esig.values[0],
        lowest_linearized_zero: el.values[0],
    })
}

/// Fits the decay of `trajectory.csv` toward the energy in
/// `equilibrium.json`, both read from `out`.
pub fn run_rates(cfg: &RunConfig, out: &Path) -> Result<LojFit> {
    let traj_path = out.join(TRAJECTORY_FILE);
    let eq_path = out.join(EQUILIBRIUM_FILE);
    for p in [&traj_path, &eq_path] {
        if !p.exists() {
            return Err(Error::MissingInput(format!(
                "{} (run simulate and equilibrium first)",
                p.display()
            )));
        }
    }
    let rows = read_trajectory_csv(&traj_path)?;
    let rep: EquilibriumReport = read_json(&eq_path)?;
    let theta = cfg.analysis.lsi_theta.or(rep.theta_hint).unwrap_or(0.5);
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let fit = decay_fit(&times, &energies, rep.energy, theta)?;
    write_json(&out.join(RATES_FILE), &fit)?;
    let curve: Vec<Vec<f64>> = times
        .iter()
        .zip(&energies)
        .filter(|(t, _)| **t >= fit.window.0 && **t <= fit.window.1)
        .map(|(&t, &e)| {
            let h = (e - rep.energy).max(0.0).powf(theta);
            let model = match fit.mode {
                FitMode::Exponential => (fit.exponential.intercept + fit.exponential.slope * t).exp(),
                FitMode::Algebraic => (fit.algebraic.intercept + fit.algebraic.slope * (1.0 + t - fit.window.0).ln()).exp(),
            };
            vec![t, h, model]
        })
        .collect();
    write_table(&out.join(FIT_CURVE_FILE), &["t", "h", "h_fit"], &curve)?;
    Ok(fit)
}
