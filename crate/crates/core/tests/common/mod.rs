#![allow(dead_code)]

use flip::hilbert::{operator_norm, CoordOperator};
use flip::process::{LinearProcessModel, NoiseSpec};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn scalar(v: f64) -> CoordOperator {
    DMatrix::from_element(1, 1, v)
}

pub fn scalar_ma1(gamma: f64) -> LinearProcessModel {
    LinearProcessModel::fma(NoiseSpec::new(vec![1.0]).unwrap(), vec![scalar(gamma)]).unwrap()
}

/// Geometrically decaying noise eigenvalues starting at 1.
pub fn random_noise(rng: &mut ChaCha8Rng, d: usize) -> NoiseSpec {
    let mut eig = Vec::with_capacity(d);
    let mut current = 1.0;
    for _ in 0..d {
        eig.push(current);
        current *= rng.random_range(0.5..0.9);
    }
    NoiseSpec::new(eig).unwrap()
}

/// Dense matrix with uniform entries rescaled to the given operator norm.
pub fn random_operator(rng: &mut ChaCha8Rng, d: usize, norm: f64) -> CoordOperator {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let current = operator_norm(&m);
    if current == 0.0 {
        DMatrix::zeros(d, d)
    } else {
        m * (norm / current)
    }
}

pub fn random_fma(rng: &mut ChaCha8Rng, d: usize, q: usize) -> LinearProcessModel {
    let noise = random_noise(rng, d);
    let gammas = (0..q)
        .map(|_| {
            let norm = rng.random_range(0.2..0.8);
            random_operator(rng, d, norm)
        })
        .collect();
    LinearProcessModel::fma(noise, gammas).unwrap()
}

pub fn random_far1(rng: &mut ChaCha8Rng, d: usize) -> LinearProcessModel {
    let noise = random_noise(rng, d);
    let norm = rng.random_range(0.2..0.8);
    LinearProcessModel::far1(noise, random_operator(rng, d, norm)).unwrap()
}

/// FMA(1) with a diagonal operator, so each coordinate is a scalar MA(1).
pub fn diagonal_ma1(noise: &[f64], gammas: &[f64]) -> LinearProcessModel {
    let gamma = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(gammas));
    LinearProcessModel::fma(NoiseSpec::new(noise.to_vec()).unwrap(), vec![gamma]).unwrap()
}
