//! Long-time diagnostics over recorded trajectories.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::mesh::FemVector;
use crate::operator::OperatorSet;

/// `(t, ‖u(t) - φ‖_σ)` over the recorded states.
pub fn omega_limit_distances(traj: &Trajectory, phi: &FemVector, ops: &OperatorSet) -> Result<Vec<(f64, f64)>> {
    ops.mesh().check_dim(phi)?;
    traj.states
        .iter()
        .map(|(t, u)| {
            ops.mesh().check_dim(u)?;
            Ok((*t, ops.a_sigma().xnorm(&(u - phi))?))
        })
        .collect()
}

/// True when the series is nonincreasing (up to `slack`) after its last
/// strict local maximum.
pub fn monotone_tail(dist: &[(f64, f64)], slack: f64) -> bool {
    let vals: Vec<f64> = dist.iter().map(|d| d.1).collect();
    let start = (1..vals.len().saturating_sub(1))
        .rev()
        .find(|&i| vals[i] > vals[i - 1] + slack && vals[i] > vals[i + 1] + slack)
        .unwrap_or(0);
    vals[start..].windows(2).all(|w| w[1] <= w[0] + slack)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    Exponential,
    Algebraic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LojFit {
    pub mode: FitMode,
    pub theta: f64,
    /// Decay constant `C` of `H ~ e^{-C t}`, or the exponent `p` of
    /// `H ~ (1 + t - t_start)^p`.
    pub rate: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub e_limit: f64,
    pub samples: usize,
    /// Decades spanned by `H` on the window.
    pub decades: f64,
    /// Set when `H` vanished identically; no fit was attempted.
    pub degenerate: bool,
    pub exponential: LineFit,
    pub algebraic: LineFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ intercept + slope x`.
pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    LineFit {
        slope,
        intercept,
        r_squared,
    }
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Fits `H(t) = (E(t) - e_limit)^θ` on the longest run ending at the last
/// sample above the round-off floor `100 ε max|E|`. The window must span at
/// least two decades of `H`.
pub fn decay_fit(times: &[f64], energies: &[f64], e_limit: f64, theta: f64) -> Result<LojFit> {
    if times.len() != energies.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            got: energies.len(),
        });
    }
    if !(theta > 0.0 && theta <= 0.5) {
        return Err(Error::Range(format!("theta must lie in (0, 1/2], got {theta}")));
    }
    if times.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            times.len()
        )));
    }
    let mut clipped = 0;
    let gaps: Vec<f64> = energies
        .iter()
        .map(|e| {
            let g = e - e_limit;
            if g < 0.0 {
                clipped += 1;
                0.0
            } else {
                g
            }
        })
        .collect();
    if clipped > 0 {
        log::warn!("{clipped} energies fell below the limit energy; clipped to zero");
    }
    let scale = energies.iter().fold(e_limit.abs(), |m, e| m.max(e.abs()));
    let floor = 100.0 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);
    let blank = LineFit {
        slope: 0.0,
        intercept: 0.0,
        r_squared: 0.0,
    };
    let Some(end) = gaps.iter().rposition(|&g| g > floor) else {
        return Ok(LojFit {
            mode: FitMode::Exponential,
            theta,
            rate: 0.0,
            r_squared: 0.0,
            window: (times[0], times[times.len() - 1]),
            e_limit,
            samples: 0,
            decades: 0.0,
            degenerate: true,
            exponential: blank,
            algebraic: blank,
        });
    };
    let start = gaps[..=end]
        .iter()
        .rposition(|&g| g <= floor)
        .map_or(0, |i| i + 1);
    let t = &times[start..=end];
    if t.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "fit window has {} samples, need at least {MIN_FIT_SAMPLES}",
            t.len()
        )));
    }
    let log_h: Vec<f64> = gaps[start..=end].iter().map(|g| theta * g.ln()).collect();
    let (lo, hi) = log_h
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < 2.0 {
        return Err(Error::Fit(format!("H spans only {decades:.2} decades on the fit window")));
    }
    let t0 = t[0];
    let exponential = line_fit(t, &log_h);
    let log_t: Vec<f64> = t.iter().map(|x| (1.0 + x - t0).ln()).collect();
    let algebraic = line_fit(&log_t, &log_h);
    let (mode, rate, r_squared) = if exponential.r_squared >= algebraic.r_squared {
        (FitMode::Exponential, -exponential.slope, exponential.r_squared)
    } else {
        (FitMode::Algebraic, algebraic.slope, algebraic.r_squared)
    };
    Ok(LojFit {
        mode,
        theta,
        rate,
        r_squared,
        window: (t0, t[t.len() - 1]),
        e_limit,
        samples: t.len(),
        decades,
        degenerate: false,
        exponential,
        algebraic,
    })
}

pub fn decay_fit_trajectory(traj: &Trajectory, e_limit: f64, theta: f64) -> Result<LojFit> {
    decay_fit(&traj.times(), &traj.energies(), e_limit, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub min_ratio: f64,
    pub bound: f64,
    pub holds: bool,
    pub violations: usize,
    pub tested: usize,
    pub skipped: usize,
}

/// Lower bound `2 / (2R + 1)^{1 + 2s}` on `[v]²_s / ‖v‖²` for `Ω ⊆ (-R, R)`.
pub fn poincare_bound(ops: &OperatorSet) -> f64 {
    let r = ops.mesh().enclosing_radius();
    2.0 / (2.0 * r + 1.0).powf(1.0 + 2.0 * ops.exps().s())
}

/// Raw seminorm `(2 / C_s) vᵀ A_s v` over `vᵀ M v`, or `None` for `v = 0`.
pub fn poincare_ratio(ops: &OperatorSet, v: &FemVector) -> Result<Option<f64>> {
    let l2 = ops.l2_sq(v);
    if l2 == 0.0 {
        return Ok(None);
    }
    Ok(Some(2.0 / ops.c_s() * ops.a_s().xnorm_sq(v)? / l2))
}

/// Checks the bound on `trials` Gaussian vectors followed by `localized`
/// single hats, alternating between the two ends of the interval.
pub fn poincare_report<R: Rng + ?Sized>(
    ops: &OperatorSet,
    trials: usize,
    localized: usize,
    rng: &mut R,
) -> Result<PoincareReport> {
    let n = ops.dof_count();
    let bound = poincare_bound(ops);
    let mut min_ratio = f64::INFINITY;
    let mut violations = 0;
    let mut tested = 0;
    let mut skipped = 0;
    let mut check = |v: FemVector| -> Result<()> {
        match poincare_ratio(ops, &v)? {
            Some(r) => {
                tested += 1;
                min_ratio = min_ratio.min(r);
                if r < bound {
                    violations += 1;
                }
            }
            None => skipped += 1,
        }
        Ok(())
    };
    for _ in 0..trials {
        check(FemVector::from_fn(n, |_, _| rng.sample(StandardNormal)))?;
    }
    for k in 0..localized {
        let offset = (k / 2) % n;
        let idx = if k % 2 == 0 { offset } else { n - 1 - offset };
        let mut v = FemVector::zeros(n);
        v[idx] = 1.0;
        check(v)?;
    }
    Ok(PoincareReport {
        min_ratio,
        bound,
        holds: violations == 0,
        violations,
        tested,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    /// `(t₀, t₀ · max_{t ≥ t₀} ‖w(t)‖²_s)`.
    pub sup_products: Vec<(f64, f64)>,
    /// Largest over smallest product; `NaN` if any product is zero.
    pub spread: f64,
}

pub const SMOOTHING_T0: [f64; 4] = [0.1, 0.2, 0.5, 1.0];

pub fn smoothing_report(traj: &Trajectory, t0_grid: &[f64]) -> Result<SmoothingReport> {
    let end = traj.monitors.last().map_or(0.0, |m| m.t);
    let mut sup_products = Vec::with_capacity(t0_grid.len());
    for &t0 in t0_grid {
        if !(t0 > 0.0) || t0 > end {
            return Err(Error::Range(format!("t0 = {t0} outside (0, {end}]")));
        }
        let sup = traj
            .monitors
            .iter()
            .filter(|m| m.t >= t0 * (1.0 - 1e-12))
            .map(|m| m.w_xnorm * m.w_xnorm)
            .fold(0.0, f64::max);
        sup_products.push((t0, t0 * sup));
    }
    let max = sup_products.iter().map(|p| p.1).fold(0.0, f64::max);
    let min = sup_products.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::NAN };
    Ok(SmoothingReport { sup_products, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-13);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn decay_fit_rejects_short_or_flat_series() {
        let t: Vec<f64> = (0..5).map(f64::from).collect();
        assert!(matches!(decay_fit(&t, &t, 0.0, 0.5), Err(Error::Fit(_))));
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let flat: Vec<f64> = t.iter().map(|x| 1.0 + 0.01 * x).collect();
        assert!(matches!(decay_fit(&t, &flat, 0.0, 0.5), Err(Error::Fit(_))));
        assert!(decay_fit(&t, &flat, 0.0, 0.7).is_err());
        assert!(decay_fit(&t, &flat[..3], 0.0, 0.5).is_err());
    }

    #[test]
    fn converged_series_is_degenerate() {
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let e = vec![-0.5; 20];
        let fit = decay_fit(&t, &e, -0.5, 0.5).unwrap();
        assert!(fit.degenerate);
    }

    #[test]
    fn negative_gaps_are_clipped() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let mut e: Vec<f64> = t.iter().map(|x| (-2.0 * x).exp()).collect();
        e[199] = -1e-3;
        let fit = decay_fit(&t, &e, 0.0, 0.5).unwrap();
        assert_eq!(fit.samples, 199);
        assert!((fit.rate - 1.0).abs() < 1e-10);
    }

    #[test]
    fn monotone_tail_detection() {
        let d = vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5), (3.0, 1.0), (4.0, 0.5)];
        assert!(monotone_tail(&d, 0.0));
        let bumpy = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.7), (3.0, 0.6), (4.0, 0.65)];
        assert!(!monotone_tail(&bumpy, 1e-8));
    }
}
