//! Uniform P1 discretization of an interval with zero extension outside it.
//!
//! Degrees of freedom are the interior nodes `x_1, ..., x_{n-1}`; the hat
//! function attached to node `x_k` is supported on `[x_{k-1}, x_{k+1}]` and
//! vanishes identically outside the interval, so every coefficient vector
//! represents a function that is zero on the whole complement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Coefficients of a continuous piecewise-linear function on the interior nodes.
pub type FemVector = DVector<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct FracMesh {
    a: f64,
    b: f64,
    n_elems: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl FracMesh {
    pub fn uniform(a: f64, b: f64, n_elems: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::Config(format!("need a < b, got a = {a}, b = {b}")));
        }
        if n_elems < 2 {
            return Err(Error::Config(format!("need n_elems >= 2, got {n_elems}")));
        }
        let h = (b - a) / n_elems as f64;
        let mut nodes: Vec<f64> = (0..=n_elems).map(|k| a + k as f64 * h).collect();
        nodes[n_elems] = b;
        Ok(Self { a, b, n_elems, h, nodes })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_elems(&self) -> usize {
        self.n_elems
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dof_count(&self) -> usize {
        self.n_elems - 1
    }

    /// Coordinate of the interior node carrying dof `i`.
    pub fn dof_coord(&self, i: usize) -> f64 {
        self.nodes[i + 1]
    }

    /// Radius of the smallest origin-centred ball containing the domain.
    pub fn enclosing_radius(&self) -> f64 {
        self.a.abs().max(self.b.abs())
    }

    /// Global dof index of local node `local` (0 or 1) of element `e`, or
    /// `None` for the two boundary nodes.
    pub fn element_dof(&self, e: usize, local: usize) -> Option<usize> {
        let node = e + local;
        (node >= 1 && node < self.n_elems).then(|| node - 1)
    }

    /// Nodal values including the two zero boundary values.
    pub fn nodal_values(&self, v: &FemVector) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_elems + 1);
        out.push(0.0);
        out.extend(v.iter().copied());
        out.push(0.0);
        out
    }

    pub fn check_dim(&self, v: &FemVector) -> Result<()> {
        if v.len() != self.dof_count() {
            return Err(Error::Dimension {
                expected: self.dof_count(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the piecewise-linear function with coefficients `v` at `x`.
    pub fn eval(&self, v: &FemVector, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let t = (x - self.a) / self.h;
        let e = (t.floor() as usize).min(self.n_elems - 1);
        let lam = t - e as f64;
        let left = if e == 0 { 0.0 } else { v[e - 1] };
        let right = if e + 1 == self.n_elems { 0.0 } else { v[e] };
        (1.0 - lam) * left + lam * right
    }
}

/// Consistent P1 mass matrix on the interior dofs: `2h/3` on the diagonal,
/// `h/6` off it.
pub fn mass_matrix(mesh: &FracMesh) -> DMatrix<f64> {
    let n = mesh.dof_count();
    let h = mesh.h();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 2.0 * h / 3.0;
        if i + 1 < n {
            m[(i, i + 1)] = h / 6.0;
            m[(i + 1, i)] = h / 6.0;
        }
    }
    m
}

/// Nodal interpolation at the interior nodes.
pub fn interpolate<F: Fn(f64) -> f64>(mesh: &FracMesh, f: F) -> Result<FemVector> {
    let mut v = FemVector::zeros(mesh.dof_count());
    for i in 0..mesh.dof_count() {
        let x = mesh.dof_coord(i);
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite(format!("interpolant sample f({x}) = {fx}")));
        }
        v[i] = fx;
    }
    Ok(v)
}

/// Discrete sup-norm: the largest absolute nodal value.
pub fn linf_norm(v: &FemVector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Applies the mass matrix without forming it.
pub fn mass_apply(mesh: &FracMesh, v: &FemVector) -> FemVector {
    let h = mesh.h();
    let n = v.len();
    FemVector::from_fn(n, |i, _| {
        let mut acc = 2.0 * h / 3.0 * v[i];
        if i > 0 {
            acc += h / 6.0 * v[i - 1];
        }
        if i + 1 < n {
            acc += h / 6.0 * v[i + 1];
        }
        acc
    })
}
