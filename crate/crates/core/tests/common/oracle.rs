//! Brute-force reference for the Gagliardo stiffness matrix.
//!
//! Every ordered element pair is integrated by nested adaptive tanh-sinh
//! quadrature in physical coordinates, splitting the inner integral at the
//! diagonal; the exterior kernel is integrated numerically over the two
//! half-lines. Nothing here shares code with the library assembly.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;

/// Integrates `f(lo_dist, hi_dist)` over an interval of length `len`, where the
/// arguments are the distances of the node to the two interval ends.
pub fn tanh_sinh<F: FnMut(f64, f64) -> f64>(len: f64, tol: f64, mut f: F) -> f64 {
    let t_max = 4.5;
    let mut eval = |t: f64| -> f64 {
        let z = FRAC_PI_2 * t.sinh();
        let lo = len / (1.0 + (-2.0 * z).exp());
        let hi = len / (1.0 + (2.0 * z).exp());
        if lo <= 0.0 || hi <= 0.0 {
            return 0.0;
        }
        let w = 0.5 * len * FRAC_PI_2 * t.cosh() / z.cosh().powi(2);
        if w == 0.0 || !w.is_finite() {
            return 0.0;
        }
        w * f(lo, hi)
    };
    let mut step = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * step <= t_max {
        let t = k as f64 * step;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * step;
    for _ in 0..10 {
        step *= 0.5;
        let mut k = 1;
        while k as f64 * step <= t_max {
            let t = k as f64 * step;
            sum += eval(t) + eval(-t);
            k += 2;
        }
        let next = sum * step;
        if (next - estimate).abs() <= tol * next.abs().max(1e-300) {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Reference stiffness on a uniform mesh of `(a, b)` with `n` elements.
pub fn gagliardo_oracle(a: f64, b: f64, n: usize, s: f64, c_s: f64, tol: f64) -> DMatrix<f64> {
    let h = (b - a) / n as f64;
    let p = 1.0 + 2.0 * s;
    let dofs = n - 1;
    let mut out = DMatrix::zeros(dofs, dofs);
    // Global dof of local node (0 = left, 1 = right) of element e.
    let dof = |e: usize, local: usize| -> Option<usize> {
        let node = e + local;
        (node >= 1 && node < n).then(|| node - 1)
    };

    for ek in 0..n {
        for el in 0..n {
            // Local differences φ(x) - φ(y) for the (up to four) nodes of K and L.
            let mut local = [[0.0_f64; 4]; 4];
            let nodes = [dof(ek, 0), dof(ek, 1), dof(el, 0), dof(el, 1)];
            let outer = |i: usize, j: usize| -> f64 {
                tanh_sinh(h, tol, |ax, bx| {
                    // x = x_K + ax; bx = h - ax.
                    let vx = [bx / h, ax / h];
                    let inner = |ay: f64, by: f64, r: f64| -> f64 {
                        let vy = [by / h, ay / h];
                        let mut d = [0.0; 4];
                        if ek == el {
                            // Same linear piece: differences are slope · (x - y).
                            let sgn = if ax > ay { 1.0 } else { -1.0 };
                            d[0] = -sgn * r / h;
                            d[1] = sgn * r / h;
                            d[2] = 0.0;
                            d[3] = 0.0;
                        } else {
                            d[0] = vx[0];
                            d[1] = vx[1];
                            d[2] = -vy[0];
                            d[3] = -vy[1];
                            if el == ek + 1 {
                                // Shared node: K's right, L's left. x = x_k - bx, y = x_k + ay.
                                d[1] = (ay - bx) / h;
                                d[2] = 0.0;
                            } else if ek == el + 1 {
                                // Shared node: K's left, L's right. x = x_k + ax, y = x_k - by.
                                d[0] = (by - ax) / h;
                                d[3] = 0.0;
                            }
                        }
                        d[i] * d[j] * r.powf(-p)
                    };
                    if ek == el {
                        // y in (0, ax) and (ax, h).
                        let left = tanh_sinh(ax, tol, |lo, hi| inner(lo, h - lo, hi));
                        let right = tanh_sinh(bx, tol, |lo, hi| inner(ax + lo, hi, lo));
                        left + right
                    } else if el == ek + 1 {
                        tanh_sinh(h, tol, |ay, by| inner(ay, by, bx + ay))
                    } else if ek == el + 1 {
                        tanh_sinh(h, tol, |ay, by| inner(ay, by, ax + by))
                    } else {
                        let gap = (el as f64 - ek as f64) * h;
                        tanh_sinh(h, tol, |ay, by| inner(ay, by, (gap + ay - ax).abs()))
                    }
                })
            };
            let count = if ek == el { 2 } else { 4 };
            for i in 0..count {
                for j in 0..count {
                    if nodes[i].is_some() && nodes[j].is_some() {
                        local[i][j] = outer(i, j);
                    }
                }
            }
            for i in 0..count {
                for j in 0..count {
                    if let (Some(gi), Some(gj)) = (nodes[i], nodes[j]) {
                        out[(gi, gj)] += local[i][j];
                    }
                }
            }
        }
    }

    // Exterior: 2 ∫_Ω φ_i φ_j ∫_{Ω^c} |x-y|^{-p} dy dx, half-lines mapped to (0, 1).
    let half_line = |d: f64| -> f64 {
        tanh_sinh(1.0, tol, |u, v| v.powf(p - 2.0) * (d * v + u).powf(-p))
    };
    for e in 0..n {
        let nodes = [dof(e, 0), dof(e, 1)];
        for i in 0..2 {
            for j in 0..2 {
                let (Some(gi), Some(gj)) = (nodes[i], nodes[j]) else { continue };
                let v = tanh_sinh(h, tol, |ax, bx| {
                    let phi = [bx / h, ax / h];
                    let da = e as f64 * h + ax;
                    let db = (n - 1 - e) as f64 * h + bx;
                    2.0 * phi[i] * phi[j] * (half_line(da) + half_line(db))
                });
                out[(gi, gj)] += v;
            }
        }
    }
    out * (0.5 * c_s)
}
