//! Dense linear-algebra helpers shared by the numerical modules.
//!
//! Everything here works for both real and complex Hermitian matrices. The
//! only hand-written kernel is a cyclic Jacobi eigenvalue routine for the
//! tiny principal submatrices visited during s-sparse enumeration, where
//! allocation per call would dominate.

use nalgebra::{DMatrix, DVector};

use crate::field::{Field, Scalar};

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen<T: Scalar>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>) {
    let eig = hermitianize(m).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_apply<T: Scalar>(m: &DMatrix<T>, f: impl Fn(f64) -> f64) -> DMatrix<T> {
    let (values, vectors) = hermitian_eigen(m);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (c, &lambda) in values.iter().enumerate() {
        let fl = f(lambda);
        for r in 0..n {
            scaled[(r, c)] = scaled[(r, c)].scale(fl);
        }
    }
    hermitianize(&(scaled * vectors.adjoint()))
}

/// `(M + M*) / 2`.
pub fn hermitianize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.adjoint()).unscale(2.0)
}

/// Largest and smallest singular value.
pub fn extreme_singular_values<T: Scalar>(m: &DMatrix<T>) -> (f64, f64) {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    (max, min)
}

/// Operator (spectral) norm.
pub fn op_norm<T: Scalar>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    extreme_singular_values(m).0
}

pub fn norm_l1<T: Scalar>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.modulus()).sum()
}

pub fn norm_inf<T: Scalar>(v: &DVector<T>) -> f64 {
    v.iter().map(|x| x.modulus()).fold(0.0, f64::max)
}

/// `Re <u, v>` with the inner product conjugate-linear in the first slot.
pub fn re_dot<T: Scalar>(u: &DVector<T>, v: &DVector<T>) -> f64 {
    u.dotc(v).real()
}

/// Sylvester-ordered Hadamard matrix with entries `±1`. `n` must be a power of two.
pub fn hadamard(n: usize) -> Option<DMatrix<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return None;
    }
    Some(DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }))
}

/// `n choose k`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic enumeration of the `k`-subsets of `0..n` without per-step
/// allocation.
#[derive(Debug, Clone)]
pub struct Combinations {
    idx: Vec<usize>,
    n: usize,
    started: bool,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            idx: (0..k).collect(),
            n,
            started: false,
            done: k > n,
        }
    }

    /// Advances to the next subset, returning it, or `None` when exhausted.
    pub fn next_subset(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        let k = self.idx.len();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if self.idx[i] != i + self.n - k {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(&self.idx);
            }
        }
        self.done = true;
        None
    }
}

/// Eigenvalues of a real symmetric `n x n` row-major matrix by cyclic Jacobi
/// rotations. The buffer is overwritten; the diagonal holds the eigenvalues
/// on return. Returns `(min, max)`.
pub fn jacobi_extreme_eigenvalues(a: &mut [f64], n: usize) -> (f64, f64) {
    debug_assert_eq!(a.len(), n * n);
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = f64::EPSILON * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in 0..n {
        min = min.min(a[i * n + i]);
        max = max.max(a[i * n + i]);
    }
    (min, max)
}

/// Extreme eigenvalues of the principal submatrix `gram[support, support]` of
/// a Hermitian matrix. Complex blocks are embedded as the real symmetric
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is the original one doubled.
pub fn principal_extreme_eigenvalues<T: Scalar>(
    gram: &DMatrix<T>,
    support: &[usize],
    work: &mut Vec<f64>,
) -> (f64, f64) {
    let s = support.len();
    match T::FIELD {
        Field::Real => {
            if s == 1 {
                let v = gram[(support[0], support[0])].real();
                return (v, v);
            }
            if s == 2 {
                let a = gram[(support[0], support[0])].real();
                let d = gram[(support[1], support[1])].real();
                let b = gram[(support[0], support[1])].modulus();
                let mid = 0.5 * (a + d);
                let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
                return (mid - rad, mid + rad);
            }
            work.clear();
            for &i in support {
                for &j in support {
                    work.push(gram[(i, j)].real());
                }
            }
            jacobi_extreme_eigenvalues(work, s)
        }
        Field::Complex => {
            let d = 2 * s;
            work.clear();
            work.resize(d * d, 0.0);
            for (r, &i) in support.iter().enumerate() {
                for (c, &j) in support.iter().enumerate() {
                    let (re, im) = gram[(i, j)].parts();
                    work[r * d + c] = re;
                    work[(r + s) * d + (c + s)] = re;
                    work[(r + s) * d + c] = im;
                    work[r * d + (c + s)] = -im;
                }
            }
            jacobi_extreme_eigenvalues(work, d)
        }
    }
}

/// Gershgorin enclosure `(lower, upper)` of the spectrum of `gram[support, support]`.
pub fn gershgorin_bounds<T: Scalar>(gram: &DMatrix<T>, support: &[usize]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &i in support {
        let center = gram[(i, i)].real();
        let radius: f64 = support
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| gram[(i, j)].modulus())
            .sum();
        lo = lo.min(center - radius);
        hi = hi.max(center + radius);
    }
    (lo, hi)
}
