//! Fixtures shared by the criterion benchmarks.

use cslab_core::ensemble::hadamard_ensemble;
use cslab_core::rng::stream_rng;
use cslab_core::{DMatrix, DVector, SamplingMatrix};
use rand::seq::index::sample;
use rand::Rng;

/// A subsampled Hadamard system with a planted `s`-sparse signal.
pub struct Planted {
    pub sampling: SamplingMatrix<f64>,
    pub x: DVector<f64>,
    pub b: DVector<f64>,
    pub support: Vec<usize>,
}

pub fn planted_hadamard(n: usize, s: usize, m: usize, seed: u64) -> Planted {
    let spec = hadamard_ensemble::<f64>(n).expect("n is a power of two");
    let mut rng = stream_rng(seed, 0);
    let sampling = spec.sampling_matrix(m, &mut rng).expect("m >= 1");
    let mut support = sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut x = DVector::zeros(n);
    for &i in &support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[i] = sign * rng.random_range(1.0..2.0);
    }
    let b = &sampling.a_matrix * &x;
    Planted {
        sampling,
        x,
        b,
        support,
    }
}

/// A symmetric positive-definite test matrix `I + 0.3 R R^T / n`.
pub fn spd_matrix(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 1);
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    DMatrix::identity(n, n) + (&r * r.transpose()) * (0.3 / n as f64)
}
