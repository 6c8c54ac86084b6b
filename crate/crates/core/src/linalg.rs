//! Symmetric-definite generalized eigenproblems `K v = μ M v`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs sorted ascending; `vectors` has `M`-orthonormal columns.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl PencilEigen {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

pub struct SymmetricPencil<'a> {
    k: &'a DMatrix<f64>,
    m: &'a DMatrix<f64>,
}

impl<'a> SymmetricPencil<'a> {
    pub fn new(k: &'a DMatrix<f64>, m: &'a DMatrix<f64>) -> Result<Self> {
        if k.shape() != m.shape() || !k.is_square() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: k.nrows(),
            });
        }
        Ok(Self { k, m })
    }

    /// Reduces to a standard problem through `M = L Lᵀ`.
    pub fn solve(&self) -> Result<PencilEigen> {
        let chol = Cholesky::new(self.m.clone()).ok_or(Error::NotPositiveDefinite("pencil mass"))?;
        let l = chol.l();
        let li = l
            .clone()
            .solve_lower_triangular(&DMatrix::identity(l.nrows(), l.ncols()))
            .ok_or(Error::NotPositiveDefinite("pencil mass"))?;
        let mut c = &li * self.k * li.transpose();
        c = (&c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0)
            .ok_or(Error::NoConvergence("symmetric eigensolver", 0))?;
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let n = order.len();
        let lt_inv = li.transpose();
        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (col, &k) in order.iter().enumerate() {
            values.push(eig.eigenvalues[k]);
            let v = &lt_inv * eig.eigenvectors.column(k);
            vectors.set_column(col, &v);
        }
        Ok(PencilEigen { values, vectors })
    }

    /// Smallest eigenpair by shifted inverse iteration with Rayleigh quotients.
    pub fn lowest_by_inverse_iteration(&self, tol: f64, max_iter: usize) -> Result<(f64, DVector<f64>)> {
        let n = self.k.nrows();
        let chol = Cholesky::new(self.k.clone()).ok_or(Error::NotPositiveDefinite("inverse iteration"))?;
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64).sin());
        let mut mu = f64::INFINITY;
        for it in 0..max_iter {
            let mv = self.m * &v;
            let w = chol.solve(&mv);
            let norm = w.dot(&(self.m * &w)).sqrt();
            v = w / norm;
            let next = v.dot(&(self.k * &v));
            if (next - mu).abs() <= tol * next.abs() {
                return Ok((next, v));
            }
            mu = next;
            if it + 1 == max_iter {
                break;
            }
        }
        Err(Error::NoConvergence("inverse iteration", max_iter))
    }
}

/// Spectral condition number of a symmetric matrix; `+∞` when singular to
/// working precision.
pub fn symmetric_condition(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    let ev = sym.symmetric_eigenvalues();
    let max = ev.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if max == 0.0 || min <= max * 1e3 * f64::EPSILON * a.nrows() as f64 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let h = 1.0 / (n + 1) as f64;
        let k = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 / h,
            1 => -1.0 / h,
            _ => 0.0,
        });
        let m = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 4.0 * h / 6.0,
            1 => h / 6.0,
            _ => 0.0,
        });
        (k, m)
    }

    #[test]
    fn pencil_eigenvectors_are_m_orthonormal() {
        let (k, m) = laplace_1d(20);
        let eig = SymmetricPencil::new(&k, &m).unwrap().solve().unwrap();
        let g = eig.vectors.transpose() * &m * &eig.vectors;
        assert!((g - DMatrix::identity(20, 20)).amax() < 1e-10);
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for (idx, &mu) in eig.values.iter().enumerate() {
            let v = eig.vector(idx);
            let r = &k * &v - &m * &v * mu;
            assert!(r.amax() < 1e-8 * mu.abs().max(1.0));
        }
        // P1 Laplacian: lowest eigenvalue approaches π².
        assert!((eig.values[0] - std::f64::consts::PI.powi(2)).abs() < 0.05);
    }

    #[test]
    fn inverse_iteration_matches_full_solve() {
        let (k, m) = laplace_1d(30);
        let p = SymmetricPencil::new(&k, &m).unwrap();
        let full = p.solve().unwrap().values[0];
        let (mu, _) = p.lowest_by_inverse_iteration(1e-14, 500).unwrap();
        assert!((mu - full).abs() < 1e-10 * full);
    }

    #[test]
    fn condition_numbers() {
        assert_eq!(symmetric_condition(&DMatrix::identity(3, 3)), 1.0);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(symmetric_condition(&sing).is_infinite());
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -4.0]));
        assert_eq!(symmetric_condition(&d), 4.0);
    }
}
