//! Gagliardo stiffness matrices of the fractional Dirichlet Laplacian.
//!
//! For hat functions extended by zero the bilinear form splits into an
//! `Ω×Ω` part and an exterior part,
//!
//! ```text
//! a(φ_i, φ_j) = C/2 [ ∬_{Ω×Ω} (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) |x-y|^{-1-2s}
//!                     + 2 ∫_Ω φ_i φ_j κ(x) dx ],
//! κ(x) = ((x-a)^{-2s} + (b-x)^{-2s}) / (2s).
//! ```
//!
//! The `Ω×Ω` part is accumulated element pair by element pair:
//! identical elements integrate in closed form (the difference quotient of a
//! linear function is constant), touching elements go through a Duffy split
//! that factors out the radial singularity exactly, and separated elements use
//! tensor Gauss rules.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::linalg::{PencilEigen, SymmetricPencil};
use crate::mesh::{mass_matrix, FemVector, FracMesh};
use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracExponents {
    s: f64,
    sigma: f64,
}

impl FracExponents {
    pub fn new(s: f64, sigma: f64) -> Result<Self> {
        check_exponent("s", s)?;
        check_exponent("sigma", sigma)?;
        Ok(Self { s, sigma })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Range(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `C(N, s) = s 4^s Γ(s + N/2) / (π^{N/2} Γ(1 - s))`.
pub fn normalization_constant(dim: u32, s: f64) -> Result<f64> {
    check_exponent("s", s)?;
    if dim == 0 {
        return Err(Error::Range("dimension must be at least 1".into()));
    }
    let half_n = dim as f64 / 2.0;
    Ok(s * 4f64.powf(s) * gamma(s + half_n)
        / (std::f64::consts::PI.powf(half_n) * gamma(1.0 - s)))
}

/// Quadrature orders used by [`assemble_gagliardo`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyConfig {
    /// Points per direction for separated element pairs.
    pub regular_order: usize,
    /// Points in the angular variable after the Duffy split.
    pub singular_order: usize,
    /// Points per element for the exterior kernel term.
    pub exterior_order: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            regular_order: 5,
            singular_order: 8,
            exterior_order: 8,
        }
    }
}

/// Assembles the dense stiffness matrix of `v ↦ (C/2) ∬ |v(x)-v(y)|² |x-y|^{-1-2s}`.
pub fn assemble_gagliardo(
    mesh: &FracMesh,
    s: f64,
    c_s: f64,
    cfg: &AssemblyConfig,
) -> Result<DMatrix<f64>> {
    check_exponent("s", s)?;
    let n = mesh.dof_count();
    let ne = mesh.n_elems();
    let h = mesh.h();
    let p = 1.0 + 2.0 * s;
    let mut a = DMatrix::<f64>::zeros(n, n);

    let regular = GaussLegendre::new(cfg.regular_order);
    let singular = GaussLegendre::new(cfg.singular_order);
    let exterior = GaussLegendre::new(cfg.exterior_order);

    // Identical elements: ∬_{K×K} |x-y|^{1-2s} times the product of slopes.
    let self_factor = 2.0 * h.powf(3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s)) / (h * h);
    // Touching elements, Duffy split.  Local nodes: left of K, shared, right of L;
    // with x = x_k - ξ and y = x_k + η the differences are ξ/h, (η-ξ)/h, -η/h.
    let touching = {
        let mut loc = [[0.0; 3]; 3];
        for (t, w) in singular.unit_interval() {
            let k = w * (1.0 + t).powf(-p);
            let d1 = [1.0, t - 1.0, -t];
            let d2 = [t, 1.0 - t, -1.0];
            for i in 0..3 {
                for j in 0..3 {
                    loc[i][j] += k * (d1[i] * d1[j] + d2[i] * d2[j]);
                }
            }
        }
        let radial = h.powf(1.0 - 2.0 * s) / (3.0 - 2.0 * s);
        loc.map(|row| row.map(|v| v * radial))
    };

    let ref_pts: Vec<(f64, f64)> = regular.unit_interval().collect();

    for ek in 0..ne {
        for el in ek..ne {
            let mut local = [[0.0_f64; 4]; 4];
            let mut dofs = [None; 4];
            let gap = el - ek;
            let count;
            if gap == 0 {
                dofs[0] = mesh.element_dof(ek, 0);
                dofs[1] = mesh.element_dof(ek, 1);
                let slopes = [-1.0, 1.0];
                for i in 0..2 {
                    for j in 0..2 {
                        local[i][j] = slopes[i] * slopes[j] * self_factor;
                    }
                }
                count = 2;
            } else if gap == 1 {
                dofs[0] = mesh.element_dof(ek, 0);
                dofs[1] = mesh.element_dof(ek, 1);
                dofs[2] = mesh.element_dof(el, 1);
                for i in 0..3 {
                    for j in 0..3 {
                        local[i][j] = 2.0 * touching[i][j];
                    }
                }
                count = 3;
            } else {
                dofs[0] = mesh.element_dof(ek, 0);
                dofs[1] = mesh.element_dof(ek, 1);
                dofs[2] = mesh.element_dof(el, 0);
                dofs[3] = mesh.element_dof(el, 1);
                let xk = mesh.nodes()[ek];
                let xl = mesh.nodes()[el];
                for &(tx, wx) in &ref_pts {
                    let x = xk + h * tx;
                    for &(ty, wy) in &ref_pts {
                        let y = xl + h * ty;
                        let k = 2.0 * wx * wy * h * h * (y - x).powf(-p);
                        let d = [1.0 - tx, tx, -(1.0 - ty), -ty];
                        for i in 0..4 {
                            for j in 0..4 {
                                local[i][j] += k * d[i] * d[j];
                            }
                        }
                    }
                }
                count = 4;
            }
            scatter(&mut a, &dofs[..count], &local, ek, el)?;
        }
    }

    // Exterior term 2 ∫ φ_i φ_j κ.
    let len = mesh.b() - mesh.a();
    let inv2s = 1.0 / (2.0 * s);
    for e in 0..ne {
        let mut local = [[0.0_f64; 4]; 4];
        let dofs = [mesh.element_dof(e, 0), mesh.element_dof(e, 1)];
        let boundary_left = e == 0;
        let boundary_right = e + 1 == ne;
        for (t, w) in exterior.unit_interval() {
            let dl = (t + e as f64) * h;
            let dr = len - dl;
            let mut kappa = 0.0;
            if !boundary_left {
                kappa += dl.powf(-2.0 * s);
            }
            if !boundary_right {
                kappa += dr.powf(-2.0 * s);
            }
            kappa *= inv2s * w * h;
            let phi = [1.0 - t, t];
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] += 2.0 * kappa * phi[i] * phi[j];
                }
            }
        }
        // ∫_0^h (t/h)^2 t^{-2s} dt / (2s), exactly.
        let edge = 2.0 * h.powf(1.0 - 2.0 * s) / (3.0 - 2.0 * s) * inv2s;
        if boundary_left {
            local[1][1] += edge;
        }
        if boundary_right {
            local[0][0] += edge;
        }
        scatter(&mut a, &dofs, &local, e, e)?;
    }

    a *= 0.5 * c_s;
    // Symmetrize bit-exactly; both triangles hold identical sums already,
    // this only guards against rounding asymmetry in future edits.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a[(i, j)];
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

fn scatter(
    a: &mut DMatrix<f64>,
    dofs: &[Option<usize>],
    local: &[[f64; 4]; 4],
    ek: usize,
    el: usize,
) -> Result<()> {
    for (i, di) in dofs.iter().enumerate() {
        let Some(gi) = di else { continue };
        for (j, dj) in dofs.iter().enumerate() {
            let Some(gj) = dj else { continue };
            let v = local[i][j];
            if !v.is_finite() {
                return Err(Error::Assembly(ek, el));
            }
            if gi <= gj {
                a[(*gi, *gj)] += v;
            }
        }
    }
    Ok(())
}

/// A symmetric positive-definite matrix with a lazily cached Cholesky factor.
#[derive(Debug)]
pub struct Stiffness {
    matrix: DMatrix<f64>,
    chol: OnceLock<Option<Cholesky<f64, Dyn>>>,
}

impl Clone for Stiffness {
    fn clone(&self) -> Self {
        Self::new(self.matrix.clone())
    }
}

impl Stiffness {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self {
            matrix,
            chol: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn factor(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.chol
            .get_or_init(|| Cholesky::new(self.matrix.clone()))
            .as_ref()
            .ok_or(Error::NotPositiveDefinite("stiffness factorization"))
    }

    /// `sqrt(vᵀ A v)`.
    pub fn xnorm(&self, v: &FemVector) -> Result<f64> {
        Ok(self.xnorm_sq(v)?.max(0.0).sqrt())
    }

    pub fn xnorm_sq(&self, v: &FemVector) -> Result<f64> {
        self.check(v)?;
        Ok(v.dot(&(&self.matrix * v)))
    }

    /// `sqrt(fᵀ A⁻¹ f)`, the norm of `f` as a functional.
    pub fn dual_norm(&self, f: &DVector<f64>) -> Result<f64> {
        self.check(f)?;
        let x = self.factor()?.solve(f);
        Ok(f.dot(&x).max(0.0).sqrt())
    }

    pub fn solve(&self, f: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(f)?;
        Ok(self.factor()?.solve(f))
    }

    pub fn apply(&self, v: &FemVector) -> DVector<f64> {
        &self.matrix * v
    }
}

/// Stiffness matrices for the flux exponent `s` and the energy exponent
/// `sigma`, together with the mass matrix, on one mesh.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    mesh: FracMesh,
    exps: FracExponents,
    c_s: f64,
    c_sigma: f64,
    a_s: Stiffness,
    a_sigma: Stiffness,
    mass: Stiffness,
}

impl OperatorSet {
    pub fn new(mesh: FracMesh, exps: FracExponents) -> Result<Self> {
        Self::with_config(mesh, exps, &AssemblyConfig::default())
    }

    pub fn with_config(mesh: FracMesh, exps: FracExponents, cfg: &AssemblyConfig) -> Result<Self> {
        let c_s = normalization_constant(1, exps.s())?;
        let c_sigma = normalization_constant(1, exps.sigma())?;
        let a_s = assemble_gagliardo(&mesh, exps.s(), c_s, cfg)?;
        let a_sigma = if exps.sigma() == exps.s() {
            a_s.clone()
        } else {
            assemble_gagliardo(&mesh, exps.sigma(), c_sigma, cfg)?
        };
        let mass = mass_matrix(&mesh);
        Ok(Self {
            mesh,
            exps,
            c_s,
            c_sigma,
            a_s: Stiffness::new(a_s),
            a_sigma: Stiffness::new(a_sigma),
            mass: Stiffness::new(mass),
        })
    }

    pub fn mesh(&self) -> &FracMesh {
        &self.mesh
    }

    pub fn exps(&self) -> FracExponents {
        self.exps
    }

    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    pub fn c_sigma(&self) -> f64 {
        self.c_sigma
    }

    pub fn a_s(&self) -> &Stiffness {
        &self.a_s
    }

    pub fn a_sigma(&self) -> &Stiffness {
        &self.a_sigma
    }

    pub fn mass(&self) -> &Stiffness {
        &self.mass
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    /// `‖v‖²_{L²}` of the piecewise-linear function.
    pub fn l2_sq(&self, v: &FemVector) -> f64 {
        v.dot(&(self.mass.matrix() * v))
    }
}

/// Smallest generalized eigenvalue of `A v = λ M v`.
pub fn rayleigh_lambda1(a: &Stiffness, m: &Stiffness) -> Result<f64> {
    let eig = SymmetricPencil::new(a.matrix(), m.matrix())?.solve()?;
    Ok(eig.values[0])
}

/// Full spectrum of the pencil `(A, M)`.
pub fn pencil_spectrum(a: &Stiffness, m: &Stiffness) -> Result<PencilEigen> {
    SymmetricPencil::new(a.matrix(), m.matrix())?.solve()
}

const DUMP_MAGIC: &[u8; 8] = b"FRACGAG1";

/// Writes a stiffness matrix: 32-byte header (magic `FRACGAG1`, dof count as
/// little-endian `u64`, `s` and `C_s` as little-endian `f64`) followed by the
/// row-major entries as little-endian `f64`.
pub fn write_matrix_dump(path: &Path, a: &DMatrix<f64>, s: f64, c_s: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(a.nrows() as u64).to_le_bytes())?;
    w.write_all(&s.to_le_bytes())?;
    w.write_all(&c_s.to_le_bytes())?;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            w.write_all(&a[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a dump written by [`write_matrix_dump`]; returns `(matrix, s, C_s)`.
pub fn read_matrix_dump(path: &Path) -> Result<(DMatrix<f64>, f64, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 32];
    r.read_exact(&mut header)?;
    if &header[..8] != DUMP_MAGIC {
        return Err(Error::Config(format!("{}: bad magic", path.display())));
    }
    let word = |k: usize| -> [u8; 8] { header[8 * k..8 * k + 8].try_into().unwrap() };
    let n = u64::from_le_bytes(word(1)) as usize;
    let s = f64::from_le_bytes(word(2));
    let c_s = f64::from_le_bytes(word(3));
    let mut a = DMatrix::zeros(n, n);
    let mut buf = [0u8; 8];
    for i in 0..n {
        for j in 0..n {
            r.read_exact(&mut buf)?;
            a[(i, j)] = f64::from_le_bytes(buf);
        }
    }
    Ok((a, s, c_s))
}
