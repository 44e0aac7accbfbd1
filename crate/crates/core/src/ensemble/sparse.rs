//! Brute-force s-sparse extreme singular values.
//!
//! `λ_max(s, X) = max_{|T|=s} σ_max(X[:, T])` and likewise for the minimum.
//! The enumeration works on the Gram matrix `G = X*X`, whose principal
//! blocks `G_TT` have eigenvalues `σ²`. Supports whose Gershgorin enclosure
//! cannot beat the running extremes are skipped, and the two winning supports
//! are re-evaluated by a direct SVD of the column submatrix. When `G` is
//! block diagonal up to a permutation, only supports inside one block are
//! enumerated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg::{
    binomial, extreme_singular_values, gershgorin_bounds, hermitian_apply, hermitianize,
    principal_extreme_eigenvalues, Combinations,
};

/// Extreme s-sparse singular values and the supports attaining them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseEigs {
    pub max: f64,
    pub min: f64,
    pub argmax: Vec<usize>,
    pub argmin: Vec<usize>,
    pub supports: u128,
}

impl SparseEigs {
    /// `cond(s, X) = λ_max(s, X) / λ_min(s, X)`.
    pub fn cond(&self) -> f64 {
        self.max / self.min
    }
}

/// `(λ_max(s, X), λ_min(s, X))` by exhaustive enumeration of size-`s` supports.
pub fn sparse_eigs<T: Scalar>(x: &DMatrix<T>, s: usize, budget: u64) -> Result<SparseEigs> {
    let gram = hermitianize(&(x.adjoint() * x));
    sparse_eigs_with_gram(x, &gram, s, budget)
}

/// Same as [`sparse_eigs`] with a precomputed `gram = X*X`.
pub fn sparse_eigs_with_gram<T: Scalar>(
    x: &DMatrix<T>,
    gram: &DMatrix<T>,
    s: usize,
    budget: u64,
) -> Result<SparseEigs> {
    let n = x.ncols();
    if s == 0 || s > n {
        return Err(Error::InvalidArgs(format!("sparsity {s} outside 1..={n}")));
    }
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::InvalidArgs("gram matrix has wrong shape".into()));
    }
    // Principal blocks split over the connected components of the Gram
    // matrix, and by interlacing the extremes within a component are reached
    // on the largest admissible subsets, so only those are enumerated.
    let comps = components(gram);
    let plan: Vec<(&[usize], usize)> = comps
        .iter()
        .map(|c| (c.as_slice(), s.min(c.len())))
        .collect();
    let supports: u128 = plan.iter().map(|&(c, k)| binomial(c.len(), k)).sum();
    if supports > budget as u128 {
        return Err(Error::BudgetExceeded { supports, budget });
    }

    let mut best_max = f64::NEG_INFINITY;
    let mut best_min = f64::INFINITY;
    let mut argmax = Vec::new();
    let mut argmin = Vec::new();
    let mut work = Vec::with_capacity(4 * s * s);
    let mut t = Vec::with_capacity(s);
    for (comp, k) in plan {
        let mut combos = Combinations::new(comp.len(), k);
        while let Some(local) = combos.next_subset() {
            t.clear();
            t.extend(local.iter().map(|&i| comp[i]));
            let (lo, hi) = gershgorin_bounds(gram, &t);
            if hi <= best_max && lo >= best_min {
                continue;
            }
            let (emin, emax) = principal_extreme_eigenvalues(gram, &t, &mut work);
            if emax > best_max {
                best_max = emax;
                argmax.clone_from(&t);
            }
            if emin < best_min {
                best_min = emin;
                argmin.clone_from(&t);
            }
        }
    }
    pad_support(&mut argmax, n, s);
    pad_support(&mut argmin, n, s);

    let max = extreme_singular_values(&x.select_columns(&argmax)).0;
    let min = extreme_singular_values(&x.select_columns(&argmin)).1;
    Ok(SparseEigs {
        max,
        min,
        argmax,
        argmin,
        supports,
    })
}

/// Off-diagonal Gram entries below this fraction of the largest entry are
/// treated as zero when splitting into components.
const COUPLING_TOL: f64 = 1e-13;

/// Connected components of the graph with an edge wherever `|gram_ij|` is
/// non-negligible, each sorted, ordered by smallest member.
fn components<T: Scalar>(gram: &DMatrix<T>) -> Vec<Vec<usize>> {
    let n = gram.nrows();
    let scale = gram.iter().map(|v| v.modulus()).fold(0.0, f64::max);
    let cut = COUPLING_TOL * scale;
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..j {
            if gram[(i, j)].modulus() > cut {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = root(&mut parent, i);
        groups[r].push(i);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

/// Extends `t` to `s` indices with the smallest indices not yet present.
fn pad_support(t: &mut Vec<usize>, n: usize, s: usize) {
    let mut i = 0;
    while t.len() < s && i < n {
        if !t.contains(&i) {
            t.push(i);
        }
        i += 1;
    }
    t.sort_unstable();
}

/// `κ_s = max{cond(s, Σ), cond(s, Σ⁻¹)}` for a Hermitian positive-definite `Σ`.
pub fn kappa_s<T: Scalar>(sigma: &DMatrix<T>, s: usize, budget: u64) -> Result<f64> {
    let gamma = hermitianize(&(sigma * sigma));
    let x = hermitian_apply(sigma, |l| 1.0 / (l * l));
    kappa_s_from_parts(sigma, &gamma, &x, s, budget)
}

/// [`kappa_s`] when `Γ = Σ²` and `X = Σ⁻²` are already known; they serve
/// as the Gram matrices of `Σ` and `Σ⁻¹`.
pub(crate) fn kappa_s_from_parts<T: Scalar>(
    sigma: &DMatrix<T>,
    gamma: &DMatrix<T>,
    x: &DMatrix<T>,
    s: usize,
    budget: u64,
) -> Result<f64> {
    let sigma_inv = hermitian_apply(sigma, |l| 1.0 / l);
    let direct = sparse_eigs_with_gram(sigma, gamma, s, budget)?;
    let inverse = sparse_eigs_with_gram(&sigma_inv, x, s, budget)?;
    Ok(direct.cond().max(inverse.cond()))
}
