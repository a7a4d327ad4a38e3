#![allow(dead_code)]

use ctrlscore::linsys::{check_stability, NodeGramianFamily};
use ctrlscore::spectral::SpectralModel;
use ctrlscore::GramianModel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian matrix shifted left so its spectral abscissa is `-margin`.
pub fn random_stable(rng: &mut ChaCha8Rng, dim: usize, margin: f64) -> DMatrix<f64> {
    let m = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let abscissa = m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    m - DMatrix::identity(dim, dim) * (abscissa + margin)
}

pub fn random_family(rng: &mut ChaCha8Rng, dim: usize) -> NodeGramianFamily {
    let a = random_stable(rng, dim, 0.5);
    NodeGramianFamily::all_nodes(check_stability(&a).unwrap()).unwrap()
}

/// Diagonal table (one mode per node) with entries in `[0.1, 1.1)`.
pub fn random_diagonal_spectral(rng: &mut ChaCha8Rng, m: usize) -> SpectralModel {
    let d: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
    SpectralModel::new((1..=m).collect(), DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)), m).unwrap()
}

/// Normalized exponential draw, i.e. uniform on the open simplex.
pub fn random_simplex_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn dense_model(a: &[f64], dim: usize) -> GramianModel {
    let a = DMatrix::from_row_slice(dim, dim, a);
    GramianModel::Dense(NodeGramianFamily::all_nodes(check_stability(&a).unwrap()).unwrap())
}
