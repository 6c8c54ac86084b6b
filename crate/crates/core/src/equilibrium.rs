//! Stationary solutions of `A_σ φ + g(φ) = 0`, their linearization and
//! kernel, and a sampled Łojasiewicz–Simon probe.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::linalg::{symmetric_condition, PencilEigen, SymmetricPencil};
use crate::mesh::{linf_norm, FemVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    #[serde(with = "crate::io::dvec")]
    pub phi: FemVector,
    pub residual_dual: f64,
    pub linf: f64,
    pub energy: f64,
    /// Mesh width, used for the default maximum-principle slack.
    pub h: f64,
    pub newton_iters: usize,
    pub pencil_eigs: Vec<f64>,
    pub kernel_dim: usize,
    #[serde(with = "crate::io::dvec_list")]
    pub kernel_basis: Vec<FemVector>,
    pub iso_condition: f64,
    pub theta_hint: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl StationaryOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_iter: 100 }
    }
}

/// Newton on `F(φ) = A_σ φ + b_g(φ)` with backtracking on `‖F‖_{σ,*}`.
/// Only `phi`, the residual and derived scalars are filled in.
pub fn solve_stationary(ctx: &EnergyContext, u_init: &FemVector, tol: f64) -> Result<EquilibriumReport> {
    solve_stationary_with(ctx, u_init, StationaryOptions::new(tol))
}

pub fn solve_stationary_with(
    ctx: &EnergyContext,
    u_init: &FemVector,
    opts: StationaryOptions,
) -> Result<EquilibriumReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::Config(format!("stationary tol must be > 0, got {}", opts.tol)));
    }
    ctx.mesh().check_dim(u_init)?;
    let a = ctx.ops().a_sigma();
    let mut phi = u_init.clone();
    let mut f = ctx.gradient(&phi)?;
    let mut res = a.dual_norm(&f)?;
    let mut iters = 0;
    while res >= opts.tol {
        if iters == opts.max_iter {
            return Err(Error::NewtonDivergence { residual: res, iters });
        }
        iters += 1;
        let jac = ctx.hessian(&phi)?;
        let step = jac.lu().solve(&(-&f)).ok_or(Error::SingularJacobian)?;
        if step.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularJacobian);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &phi + &step * alpha;
            if let Ok(ft) = ctx.gradient(&trial) {
                let rt = a.dual_norm(&ft)?;
                if rt <= (1.0 - 1e-4 * alpha) * res {
                    phi = trial;
                    f = ft;
                    res = rt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDivergence { residual: res, iters });
        }
    }
    Ok(EquilibriumReport {
        linf: linf_norm(&phi),
        energy: ctx.energy(&phi)?,
        h: ctx.mesh().h(),
        phi,
        residual_dual: res,
        newton_iters: iters,
        pencil_eigs: Vec::new(),
        kernel_dim: 0,
        kernel_basis: Vec::new(),
        iso_condition: f64::NAN,
        theta_hint: None,
    })
}

/// Fills the spectral fields of `rep`.
pub fn analyze(ctx: &EnergyContext, mut rep: EquilibriumReport, kernel_tol: Option<f64>) -> Result<EquilibriumReport> {
    let l = linearize(ctx, &rep.phi)?;
    let m = ctx.ops().mass().matrix();
    let kp = kernel_and_projection(&l, m, kernel_tol)?;
    rep.iso_condition = isomorphism_check(&l, m, &kp.p_mat);
    rep.pencil_eigs = kp.eigen.values.clone();
    rep.kernel_dim = kp.basis.len();
    rep.theta_hint = (rep.kernel_dim == 0).then_some(0.5);
    rep.kernel_basis = kp.basis;
    Ok(rep)
}

/// Linear combination of lowest unstable mode of `L(0)` with amplitude
/// `amplitude` in the max norm; the zero vector when `0` is stable.
pub fn unstable_mode_seed(ctx: &EnergyContext, amplitude: f64) -> Result<FemVector> {
    let n = ctx.ops().dof_count();
    let l = linearize(ctx, &FemVector::zeros(n))?;
    let eig = SymmetricPencil::new(&l, ctx.ops().mass().matrix())?.solve()?;
    if eig.values[0] >= 0.0 {
        return Ok(FemVector::zeros(n));
    }
    let mut v = eig.vector(0);
    // Fix the sign so the seed is positive in the bulk.
    if v.sum() < 0.0 {
        v = -v;
    }
    let scale = amplitude / linf_norm(&v);
    Ok(v * scale)
}

/// `|φ|_∞ ≤ γ + slack`, with slack defaulting to `10 h`.
pub fn max_principle_check(rep: &EquilibriumReport, gamma: f64, slack: Option<f64>) -> bool {
    rep.linf <= gamma + slack.unwrap_or(10.0 * rep.h)
}

/// `L(φ) = A_σ + (∫ g'(φ_h) φ_i φ_j)`.
pub fn linearize(ctx: &EnergyContext, phi: &FemVector) -> Result<DMatrix<f64>> {
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("phi".into()));
    }
    ctx.hessian(phi)
}

#[derive(Debug, Clone)]
pub struct KernelProjection {
    pub eigen: PencilEigen,
    pub tol: f64,
    /// `M`-orthonormal kernel vectors.
    pub basis: Vec<FemVector>,
    /// `V Vᵀ M`.
    pub p_mat: DMatrix<f64>,
}

/// Kernel of the pencil `L v = μ M v` with `|μ| < tol`; `tol` defaults to
/// `1e-8` times the largest `|μ|`.
pub fn kernel_and_projection(l: &DMatrix<f64>, m: &DMatrix<f64>, kernel_tol: Option<f64>) -> Result<KernelProjection> {
    let eigen = SymmetricPencil::new(l, m)?.solve()?;
    let scale = eigen.values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let tol = kernel_tol.unwrap_or(1e-8 * scale);
    let basis: Vec<FemVector> = eigen
        .values
        .iter()
        .enumerate()
        .filter(|(_, mu)| mu.abs() < tol)
        .map(|(k, _)| eigen.vector(k))
        .collect();
    let n = l.nrows();
    let mut p_mat = DMatrix::zeros(n, n);
    for v in &basis {
        let mv = m * v;
        p_mat += v * mv.transpose();
    }
    Ok(KernelProjection {
        eigen,
        tol,
        basis,
        p_mat,
    })
}

/// Condition estimate of `L + M P`; `+∞` when singular.
pub fn isomorphism_check(l: &DMatrix<f64>, m: &DMatrix<f64>, p_mat: &DMatrix<f64>) -> f64 {
    symmetric_condition(&(l + m * p_mat))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecadeStats {
    pub r_lo: f64,
    pub r_hi: f64,
    pub count: usize,
    pub max: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsiProbeResult {
    pub theta: f64,
    pub samples: usize,
    /// Samples whose gradient dual norm was below `1e-14`.
    pub skipped: usize,
    pub delta: f64,
    pub max: f64,
    pub median: f64,
    pub omega_estimate: f64,
    /// Ratio statistics per radius decade, largest radii first.
    pub decades: Vec<DecadeStats>,
    /// Decade medians increase monotonically as `r → 0` (by at least 2x overall).
    pub unbounded: bool,
}

/// Number of radius decades spanned below `delta`.
pub const LSI_DECADES: usize = 4;

/// Samples `v = φ + r d` with `‖d‖_σ = 1` and `r` log-uniform in
/// `(δ·10^{-4}, δ)`, evaluating `|E(v) - E(φ)|^{1-θ} / ‖E'(v)‖_{σ,*}`.
pub fn lsi_probe<R: Rng + ?Sized>(
    ctx: &EnergyContext,
    rep: &EquilibriumReport,
    theta: f64,
    delta: f64,
    samples: usize,
    rng: &mut R,
) -> Result<LsiProbeResult> {
    if !(theta > 0.0 && theta <= 0.5) && !(theta > 0.5 && theta < 1.0) {
        return Err(Error::Range(format!("theta must lie in (0, 1), got {theta}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Range(format!("delta must be > 0, got {delta}")));
    }
    if samples == 0 {
        return Err(Error::Config("lsi probe needs at least one sample".into()));
    }
    let a = ctx.ops().a_sigma();
    let n = ctx.ops().dof_count();
    let e_phi = ctx.energy(&rep.phi)?;
    let mut per_decade: Vec<Vec<f64>> = vec![Vec::new(); LSI_DECADES];
    let mut all = Vec::with_capacity(samples);
    let mut skipped = 0;
    for _ in 0..samples {
        let d = FemVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let dn = a.xnorm(&d)?;
        if dn == 0.0 {
            skipped += 1;
            continue;
        }
        let u: f64 = rng.random();
        let decade = ((u * LSI_DECADES as f64) as usize).min(LSI_DECADES - 1);
        let r = delta * 10f64.powf(-(u * LSI_DECADES as f64));
        let v = &rep.phi + d * (r / dn);
        if let Some(ratio) = lsi_ratio(ctx, &v, e_phi, theta)? {
            per_decade[decade].push(ratio);
            all.push(ratio);
        } else {
            skipped += 1;
        }
    }
    if all.is_empty() {
        return Err(Error::Fit("every lsi sample was degenerate".into()));
    }
    let (max, median) = max_median(&mut all);
    let decades: Vec<DecadeStats> = per_decade
        .iter_mut()
        .enumerate()
        .map(|(k, vals)| {
            let (max, median) = if vals.is_empty() { (f64::NAN, f64::NAN) } else { max_median(vals) };
            DecadeStats {
                r_lo: delta * 10f64.powi(-(k as i32) - 1),
                r_hi: delta * 10f64.powi(-(k as i32)),
                count: vals.len(),
                max,
                median,
            }
        })
        .collect();
    let medians: Vec<f64> = decades.iter().filter(|d| d.count > 0).map(|d| d.median).collect();
    let unbounded = medians.len() >= 2
        && medians.windows(2).all(|w| w[1] > w[0])
        && medians[medians.len() - 1] > 2.0 * medians[0];
    Ok(LsiProbeResult {
        theta,
        samples,
        skipped,
        delta,
        max,
        median,
        omega_estimate: max,
        decades,
        unbounded,
    })
}

/// The probe ratio at `v`, or `None` when both sides vanish.
pub fn lsi_ratio(ctx: &EnergyContext, v: &FemVector, e_phi: f64, theta: f64) -> Result<Option<f64>> {
    let grad = ctx.ops().a_sigma().dual_norm(&ctx.gradient(v)?)?;
    if grad < 1e-14 {
        return Ok(None);
    }
    let gap = (ctx.energy(v)? - e_phi).abs();
    Ok(Some(gap.powf(1.0 - theta) / grad))
}

fn max_median(vals: &mut [f64]) -> (f64, f64) {
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    let median = if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    };
    (vals[n - 1], median)
}

/// Solves `A_σ u + b_β(u) = M f` by Newton; the Jacobian is SPD since `β`
/// is monotone.
pub fn solve_beta_elliptic(ctx: &EnergyContext, f: &FemVector, tol: f64) -> Result<FemVector> {
    ctx.mesh().check_dim(f)?;
    let ops = ctx.ops();
    let rhs = ops.mass().apply(f);
    let residual = |u: &FemVector| -> Result<FemVector> { Ok(ops.a_sigma().apply(u) + ctx.beta_load(u)? - &rhs) };
    let mut u = ops.a_sigma().solve(&rhs)?;
    let mut r = residual(&u)?;
    let mut res = ops.a_sigma().dual_norm(&r)?;
    for _ in 0..100 {
        if res < tol {
            return Ok(u);
        }
        let mut jac = ops.a_sigma().matrix().clone();
        ctx.add_beta_jacobian(&u, &mut jac);
        let chol = nalgebra::Cholesky::new(jac).ok_or(Error::SingularJacobian)?;
        let du = chol.solve(&(-&r));
        let mut alpha = 1.0;
        loop {
            let trial = &u + &du * alpha;
            if let Ok(rt) = residual(&trial) {
                let nt = ops.a_sigma().dual_norm(&rt)?;
                if nt <= (1.0 - 1e-4 * alpha) * res {
                    u = trial;
                    r = rt;
                    res = nt;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::NewtonDivergence { residual: res, iters: 0 });
            }
        }
    }
    Err(Error::NewtonDivergence { residual: res, iters: 100 })
}
