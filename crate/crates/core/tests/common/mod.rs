#![allow(dead_code)]

pub mod oracle;

use fracch::{FemVector, FracExponents, FracMesh, OperatorSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ops(a: f64, b: f64, n: usize, s: f64, sigma: f64) -> OperatorSet {
    OperatorSet::new(
        FracMesh::uniform(a, b, n).unwrap(),
        FracExponents::new(s, sigma).unwrap(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut impl Rng, n: usize, amp: f64) -> FemVector {
    FemVector::from_fn(n, |_, _| amp * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn ctx(a: f64, b: f64, n: usize, s: f64, sigma: f64) -> fracch::energy::EnergyContext {
    fracch::energy::EnergyContext::new(
        std::sync::Arc::new(ops(a, b, n, s, sigma)),
        fracch::Potential::double_well(4.0).unwrap(),
    )
    .unwrap()
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize, amp: f64) -> FemVector {
    use rand_distr::{Distribution, StandardNormal};
    FemVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        amp * z
    })
}

/// Nodal values of a Brownian bridge on the mesh, pinned to zero at both
/// ends, with variance `amp² t (1 - t / L)` at distance `t` from `a`.
pub fn brownian_bridge(rng: &mut impl Rng, mesh: &FracMesh, amp: f64) -> FemVector {
    use rand_distr::{Distribution, StandardNormal};
    let n = mesh.n_elems();
    let step = amp * mesh.h().sqrt();
    let mut walk = vec![0.0_f64; n + 1];
    for k in 1..=n {
        let z: f64 = StandardNormal.sample(rng);
        walk[k] = walk[k - 1] + step * z;
    }
    let end = walk[n];
    FemVector::from_fn(n - 1, |i, _| walk[i + 1] - end * (i + 1) as f64 / n as f64)
}

/// `amp` times the lowest `(A_σ, M)` eigenvector, normalized in the max norm
/// and oriented to have positive sum.
pub fn smooth_mode(o: &OperatorSet, k: usize, amp: f64) -> FemVector {
    let e = fracch::operator::pencil_spectrum(o.a_sigma(), o.mass()).unwrap();
    let mut v = e.vector(k);
    if v.sum() < 0.0 {
        v = -v;
    }
    let scale = amp / fracch::mesh::linf_norm(&v);
    v * scale
}

/// `g(r) = r³ - μ r` with `λ = μ`: the linearization at zero is
/// `A_σ - μ M`, singular when `μ` is a pencil eigenvalue.
pub fn degenerate_potential(mu: f64) -> fracch::Potential {
    fracch::Potential::custom(
        move |r| r * r * r - mu * r,
        move |r| 3.0 * r * r - mu,
        move |r| 0.25 * r.powi(4) - 0.5 * mu * r * r,
        mu,
    )
    .unwrap()
}
