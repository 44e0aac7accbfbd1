//! Independent oracles and fixtures for the integration tests.
#![allow(dead_code)]

use cslab_core::linalg::Combinations;
use cslab_core::rng::stream_rng;
use cslab_core::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

/// Minimum l1 norm over `{Ax = b}` by enumerating basic solutions: every
/// support of size `rank(A)` whose columns are independent. Real `A` only.
pub fn brute_force_l1(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let rank = a.rank(1e-10);
    let mut best = f64::INFINITY;
    let mut combos = Combinations::new(n, rank);
    while let Some(t) = combos.next_subset() {
        let a_t = a.select_columns(t);
        if a_t.rank(1e-10) < rank {
            continue;
        }
        let qr = a_t.clone().qr();
        let Some(x_t) = qr.r().solve_upper_triangular(&(qr.q().transpose() * b)) else {
            continue;
        };
        if (&a_t * &x_t - b).norm() > 1e-8 * b.norm().max(1.0) {
            continue;
        }
        best = best.min(x_t.iter().map(|v| v.abs()).sum());
    }
    best
}

/// Random s-sparse signal: uniform support, random signs, magnitudes in [1, 2].
pub fn planted_signal<R: Rng>(n: usize, s: usize, rng: &mut R) -> (DVector<f64>, Vec<usize>) {
    let mut support = sample(rng, n, s).into_vec();
    support.sort_unstable();
    let mut x = DVector::zeros(n);
    for &i in &support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x[i] = sign * rng.random_range(1.0..2.0);
    }
    (x, support)
}

/// Entries uniform on [-1, 1].
pub fn uniform_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = stream_rng(seed, 77);
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}
