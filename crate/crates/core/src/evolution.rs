//! Semi-implicit convex-splitting time stepping for the coupled system
//!
//! ```text
//! M (u_n - u_{n-1}) / τ + A_s w_n = 0,
//! M w_n = A_σ u_n + b_β(u_n) - λ M u_{n-1},
//! ```
//!
//! with `β` implicit and the concave `-λ r` part lagged. Each step is solved
//! by Newton on the `(u, w)` block system and carries a certificate of the
//! discrete energy inequality
//! `E(u_n) + τ ‖w_n‖²_s + (λ/2) ‖u_n - u_{n-1}‖²_M ≤ E(u_{n-1})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::mesh::{linf_norm, FemVector};
use crate::potential::YosidaParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub tau: f64,
    /// Tolerance on the combined dual-norm residual of the block system.
    pub newton_tol: f64,
    pub newton_max: usize,
    /// Replace `β` by `β_ε` with this `ε`.
    pub use_yosida: Option<f64>,
    /// Certificates pass when `defect ≤ cert_rel_tol · max(1, |E(u_{n-1})|)`.
    pub cert_rel_tol: f64,
}

impl StepConfig {
    pub fn new(tau: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            newton_tol: 1e-10,
            newton_max: 50,
            use_yosida: None,
            cert_rel_tol: 1e-9,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::Config(format!(
                "newton_tol must be > 0, got {}",
                self.newton_tol
            )));
        }
        if self.newton_max == 0 {
            return Err(Error::Config("newton_max must be positive".into()));
        }
        if let Some(eps) = self.use_yosida {
            YosidaParams::new(eps)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub tau: f64,
    pub e_before: f64,
    pub e_after: f64,
    /// `w_nᵀ A_s w_n`.
    pub w_normsq: f64,
    /// `δᵀ M δ` with `δ = u_n - u_{n-1}`.
    pub du_msq: f64,
    pub lambda_half_du: f64,
    pub defect: f64,
    pub tol: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub u: FemVector,
    pub w: FemVector,
    pub cert: StepCertificate,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Reusable per-context data for [`Stepper::step`].
#[derive(Debug, Clone)]
pub struct Stepper {
    ctx: EnergyContext,
    cfg: StepConfig,
    /// `M A_s⁻¹ M`.
    m_as_inv_m: DMatrix<f64>,
}

impl Stepper {
    pub fn new(ctx: &EnergyContext, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        let ctx = match cfg.use_yosida {
            Some(eps) => ctx.with_potential(ctx.potential().yosida(YosidaParams::new(eps)?)),
            None => ctx.clone(),
        };
        let ops = ctx.ops();
        let m = ops.mass().matrix();
        let as_inv_m = ops.a_s().factor()?.solve(m);
        let mut m_as_inv_m = m * as_inv_m;
        m_as_inv_m = (&m_as_inv_m + m_as_inv_m.transpose()) * 0.5;
        Ok(Self {
            ctx,
            cfg,
            m_as_inv_m,
        })
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    /// The context whose energy the certificates refer to (regularized when
    /// Yosida is enabled).
    pub fn context(&self) -> &EnergyContext {
        &self.ctx
    }

    /// Chemical potential `M⁻¹ (A_σ u + b_β(u) - λ M u_lag)`.
    pub fn chemical_potential(&self, u: &FemVector, u_lag: &FemVector) -> Result<FemVector> {
        let ops = self.ctx.ops();
        let lambda = self.ctx.potential().lambda();
        let rhs = ops.a_sigma().apply(u) + self.ctx.beta_load(u)? - ops.mass().apply(u_lag) * lambda;
        ops.mass().solve(&rhs)
    }

    pub fn step(&self, u_prev: &FemVector) -> Result<StepOutput> {
        self.step_with_tau(u_prev, self.cfg.tau)
    }

    pub fn step_with_tau(&self, u_prev: &FemVector, tau: f64) -> Result<StepOutput> {
        let ctx = &self.ctx;
        let ops = ctx.ops();
        ctx.mesh().check_dim(u_prev)?;
        if u_prev.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("previous state".into()));
        }
        let lambda = ctx.potential().lambda();
        let m_u_prev = ops.mass().apply(u_prev);

        let residual = |u: &FemVector, w: &FemVector| -> Result<(DVector<f64>, DVector<f64>, f64)> {
            let r1 = (ops.mass().apply(u) - &m_u_prev) / tau + ops.a_s().apply(w);
            let r2 = ops.mass().apply(w) - ops.a_sigma().apply(u) - ctx.beta_load(u)? + &m_u_prev * lambda;
            let n1 = ops.a_s().dual_norm(&r1)?;
            let n2 = ops.a_sigma().dual_norm(&r2)?;
            Ok((r1, r2, n1.hypot(n2)))
        };

        let mut u = u_prev.clone();
        let mut w = self.chemical_potential(&u, u_prev)?;
        let (mut r1, mut r2, mut res) = residual(&u, &w)?;
        let mut iters = 0;
        while res >= self.cfg.newton_tol {
            if iters == self.cfg.newton_max {
                return Err(Error::NewtonDivergence {
                    residual: res,
                    iters,
                });
            }
            iters += 1;
            // Block Jacobian [[M/τ, A_s], [-(A_σ + B'), M]], reduced onto u.
            let mut jac = &self.m_as_inv_m / tau + ops.a_sigma().matrix();
            ctx.add_beta_jacobian(&u, &mut jac);
            let chol = nalgebra::Cholesky::new(jac).ok_or(Error::SingularJacobian)?;
            let as_inv_r1 = ops.a_s().solve(&r1)?;
            let du = chol.solve(&(&r2 - ops.mass().apply(&as_inv_r1)));
            let dw = -(as_inv_r1 + ops.a_s().solve(&(ops.mass().apply(&du) / tau))?);
            if du.iter().chain(dw.iter()).any(|x| !x.is_finite()) {
                return Err(Error::SingularJacobian);
            }

            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let u_try = &u + &du * alpha;
                let w_try = &w + &dw * alpha;
                if let Ok((t1, t2, t_res)) = residual(&u_try, &w_try) {
                    if t_res <= (1.0 - 1e-4 * alpha) * res {
                        u = u_try;
                        w = w_try;
                        r1 = t1;
                        r2 = t2;
                        res = t_res;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonDivergence {
                    residual: res,
                    iters,
                });
            }
        }

        let e_before = ctx.energy(u_prev)?;
        let e_after = ctx.energy(&u)?;
        let w_normsq = ops.a_s().xnorm_sq(&w)?;
        let du = &u - u_prev;
        let du_msq = du.dot(&ops.mass().apply(&du));
        let lambda_half_du = 0.5 * lambda * du_msq;
        let defect = e_after + tau * w_normsq + lambda_half_du - e_before;
        let tol = self.cfg.cert_rel_tol * e_before.abs().max(1.0);
        Ok(StepOutput {
            u,
            w,
            cert: StepCertificate {
                tau,
                e_before,
                e_after,
                w_normsq,
                du_msq,
                lambda_half_du,
                defect,
                tol,
                satisfied: defect <= tol,
            },
            newton_iters: iters,
            residual: res,
        })
    }
}

/// One-shot convenience wrapper around [`Stepper`].
pub fn step(ctx: &EnergyContext, cfg: StepConfig, u_prev: &FemVector) -> Result<StepOutput> {
    Stepper::new(ctx, cfg)?.step(u_prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViolationPolicy {
    #[default]
    Abort,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub on_violation: ViolationPolicy,
    /// Maximum number of step halvings after a Newton failure.
    pub max_halvings: u32,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            on_violation: ViolationPolicy::Abort,
            max_halvings: 10,
        }
    }
}

/// Per-step monitor values; also the CSV row layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRow {
    pub step: usize,
    pub t: f64,
    pub tau_used: f64,
    pub energy: f64,
    pub w_xnorm: f64,
    pub u_xnorm_sigma: f64,
    pub u_linf: f64,
    pub dual_norm_ut: f64,
    pub cert_defect: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Monitor rows; row 0 is the initial state.
    pub monitors: Vec<MonitorRow>,
    /// One certificate per accepted step (rows 1..).
    pub certificates: Vec<StepCertificate>,
    /// `(t, u)` every `record_stride` steps, plus the initial and final state.
    pub states: Vec<(f64, FemVector)>,
    /// `(t, w)` recorded alongside `states`.
    pub w_states: Vec<(f64, FemVector)>,
    /// Steps at which Newton failed and the step was subdivided.
    pub halvings: Vec<(usize, u32)>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.monitors.iter().map(|m| m.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.monitors.iter().map(|m| m.energy).collect()
    }

    pub fn final_state(&self) -> Option<&FemVector> {
        self.states.last().map(|(_, u)| u)
    }
}

pub fn evolve(
    ctx: &EnergyContext,
    cfg: StepConfig,
    u0: &FemVector,
    t_end: f64,
    record_stride: usize,
) -> Result<Trajectory> {
    evolve_with(ctx, cfg, u0, t_end, record_stride, EvolveOptions::default(), |_, _| Ok(()))
}

/// Runs `round(t_end / τ)` steps. `sink` sees each monitor row (with its
/// certificate, absent for the initial row) as soon as it is computed.
pub fn evolve_with<S>(
    ctx: &EnergyContext,
    cfg: StepConfig,
    u0: &FemVector,
    t_end: f64,
    record_stride: usize,
    opts: EvolveOptions,
    mut sink: S,
) -> Result<Trajectory>
where
    S: FnMut(&MonitorRow, Option<&StepCertificate>) -> Result<()>,
{
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
    }
    if record_stride == 0 {
        return Err(Error::Config("record_stride must be positive".into()));
    }
    ctx.mesh().check_dim(u0)?;
    let stepper = Stepper::new(ctx, cfg)?;
    let sctx = stepper.context();
    let ops = sctx.ops();
    let n_steps = ((t_end / cfg.tau).round() as usize).max(1);

    let mut traj = Trajectory::default();
    let w0 = stepper.chemical_potential(u0, u0)?;
    let row0 = MonitorRow {
        step: 0,
        t: 0.0,
        tau_used: 0.0,
        energy: sctx.energy(u0)?,
        w_xnorm: ops.a_s().xnorm(&w0)?,
        u_xnorm_sigma: ops.a_sigma().xnorm(u0)?,
        u_linf: linf_norm(u0),
        dual_norm_ut: 0.0,
        cert_defect: 0.0,
    };
    sink(&row0, None)?;
    traj.monitors.push(row0);
    traj.states.push((0.0, u0.clone()));
    traj.w_states.push((0.0, w0));

    let mut u = u0.clone();
    let mut t = 0.0;
    for k in 1..=n_steps {
        let t_target = k as f64 * cfg.tau;
        let pieces = match stepper.step(&u) {
            Ok(out) => vec![out],
            Err(Error::NewtonDivergence { .. }) => subdivide(&stepper, &u, cfg.tau, opts.max_halvings, k, &mut traj)?,
            Err(e) => return Err(e),
        };
        let count = pieces.len();
        for (idx, out) in pieces.into_iter().enumerate() {
            let tau_used = out.cert.tau;
            t = if idx + 1 == count { t_target } else { t + tau_used };
            if !out.cert.satisfied {
                match opts.on_violation {
                    ViolationPolicy::Abort => {
                        return Err(Error::CertificateViolation {
                            step: traj.monitors.len(),
                            defect: out.cert.defect,
                            tol: out.cert.tol,
                        })
                    }
                    ViolationPolicy::Warn => log::warn!(
                        "energy certificate violated at t = {t}: defect {:.3e}",
                        out.cert.defect
                    ),
                }
            }
            let ut = (ops.mass().apply(&out.u) - ops.mass().apply(&u)) / tau_used;
            let row = MonitorRow {
                step: traj.monitors.len(),
                t,
                tau_used,
                energy: out.cert.e_after,
                w_xnorm: out.cert.w_normsq.max(0.0).sqrt(),
                u_xnorm_sigma: ops.a_sigma().xnorm(&out.u)?,
                u_linf: linf_norm(&out.u),
                dual_norm_ut: ops.a_s().dual_norm(&ut)?,
                cert_defect: out.cert.defect,
            };
            sink(&row, Some(&out.cert))?;
            traj.monitors.push(row);
            traj.certificates.push(out.cert);
            u = out.u;
            if idx + 1 == count && (k % record_stride == 0 || k == n_steps) {
                traj.states.push((t, u.clone()));
                traj.w_states.push((t, out.w));
            }
        }
    }
    Ok(traj)
}

fn subdivide(
    stepper: &Stepper,
    u_prev: &FemVector,
    tau: f64,
    max_halvings: u32,
    step: usize,
    traj: &mut Trajectory,
) -> Result<Vec<StepOutput>> {
    let mut last_err = None;
    'levels: for level in 1..=max_halvings {
        let parts = 1usize << level;
        let sub = tau / parts as f64;
        let mut u = u_prev.clone();
        let mut outs = Vec::with_capacity(parts);
        for _ in 0..parts {
            match stepper.step_with_tau(&u, sub) {
                Ok(out) => {
                    u = out.u.clone();
                    outs.push(out);
                }
                Err(e @ Error::NewtonDivergence { .. }) => {
                    last_err = Some(e);
                    continue 'levels;
                }
                Err(e) => return Err(e),
            }
        }
        log::info!("step {step}: newton failed at tau = {tau}, used {parts} substeps");
        traj.halvings.push((step, level));
        return Ok(outs);
    }
    Err(last_err.unwrap_or(Error::NewtonDivergence {
        residual: f64::NAN,
        iters: 0,
    }))
}

/// Per-step residual of the energy equality in rate form,
/// `(E_n - E_{n-1}) / τ + ‖w_n‖²_s`. It vanishes as `τ → 0` when the
/// continuous identity holds.
pub fn energy_balance_defect(traj: &Trajectory) -> Vec<f64> {
    traj.certificates
        .iter()
        .map(|c| (c.e_after - c.e_before) / c.tau + c.w_normsq)
        .collect()
}
