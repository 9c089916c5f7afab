#![allow(dead_code)]

pub mod props;

use nalgebra::{DMatrix, DVector};
use qsearch::hilbert::C64;
use qsearch::metrology::DensityMatrix;
use rand::Rng;

/// `n^2 + 2n` with `n = 2 sinh^2 r`: QFI of a squeezed-vacuum pair.
pub fn sv_pair_qfi(r: f64) -> f64 {
    let n = 2.0 * r.sinh().powi(2);
    n * n + 2.0 * n
}

/// Random density matrix of rank at most `rank` on a `da x db` basis.
pub fn random_density(rng: &mut impl Rng, da: usize, db: usize, rank: usize) -> DensityMatrix {
    let n = da * db;
    let mut m = DMatrix::<C64>::zeros(n, n);
    let weights: Vec<f64> = (0..rank).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights {
        let v = DVector::<C64>::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let v = &v / C64::new(v.norm(), 0.0);
        m += (&v * v.adjoint()) * C64::new(w / total, 0.0);
    }
    DensityMatrix::from_matrix(da, db, m).unwrap()
}

/// QFI from a symmetric finite difference of `rho(phi) = e^{-i phi G} rho e^{i phi G}`
/// in the eigenbasis of `rho`, `G = (n_a - n_b) / 2`.
pub fn finite_difference_qfi(rho: &DensityMatrix, h: f64) -> f64 {
    let (da, db) = (rho.dim_a(), rho.dim_b());
    let n = da * db;
    let g: Vec<f64> = (0..n).map(|i| 0.5 * ((i / db) as f64 - (i % db) as f64)).collect();
    let evolve = |phi: f64| {
        DMatrix::<C64>::from_fn(n, n, |i, j| {
            rho.matrix()[(i, j)] * C64::from_polar(1.0, -phi * (g[i] - g[j]))
        })
    };
    let d = (evolve(h) - evolve(-h)) / C64::new(2.0 * h, 0.0);
    let eig = rho.matrix().clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let dm = v.adjoint() * d * v;
    let mut f = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s = eig.eigenvalues[i] + eig.eigenvalues[j];
            if s > 1e-12 {
                f += 2.0 / s * dm[(i, j)].norm_sqr();
            }
        }
    }
    f
}
