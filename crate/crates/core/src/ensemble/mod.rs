//! Measurement ensembles and the quantities that control recovery.
//!
//! An [`EnsembleSpec`] is a sampleable distribution of measurement vectors
//! `a` in `F^n`. From it we derive the covariance `Γ = E[aa*]`, its inverse
//! `X`, the incoherence `μ`, the condition numbers `κ` and `κ_s`, and the
//! commutator constant `K`. All operations are pure given an explicit RNG.

mod builtin;
mod json;
mod sparse;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Scalar};
use crate::linalg::{hermitian_apply, hermitian_eigen, hermitianize};
use crate::rng::stream_rng;

pub use builtin::{
    hadamard_ensemble, kappa_family, signed_identity, walsh_pair, walsh_pair_member,
    walsh_pair_weighted_member, weighted_basis, weighted_standard_basis, Anisotropy,
    BuiltinEnsemble,
};
pub use json::{AnyEnsemble, AtomDoc, EnsembleDoc, Entry, KindTag};
pub use sparse::{kappa_s, sparse_eigs, sparse_eigs_with_gram, SparseEigs};

/// `Γ` is declared invertible when `λ_min(Γ) > COMPLETENESS_TOL · λ_max(Γ)`.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Default cap on the number of supports enumerated by [`sparse_eigs`].
pub const DEFAULT_SPARSE_BUDGET: u64 = 2_000_000;

/// Default number of sign patterns used to estimate `K` for signed transforms.
pub const DEFAULT_COMMUTATOR_SAMPLES: usize = 10_000;

/// Tolerance on `Σ p_j = 1`.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// A support point of a finite distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T: Scalar> {
    pub vector: DVector<T>,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub enum EnsembleKind<T: Scalar> {
    /// Draw atom `j` with probability `p_j`.
    FiniteSupport(Vec<Atom<T>>),
    /// `a = M g` with `g` a vector of independent uniform signs (phases when complex).
    SignedTransform(DMatrix<T>),
}

/// A distribution of measurement vectors with a global scale `ν`.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<T: Scalar> {
    kind: EnsembleKind<T>,
    dim: usize,
    scale: f64,
    sampler: Option<WeightedIndex<f64>>,
}

/// Covariance `Γ = E[aa*]` together with `X = Γ⁻¹` and the spectrum of `Γ`.
#[derive(Debug, Clone)]
pub struct Covariance<T: Scalar> {
    pub gamma: DMatrix<T>,
    pub x_matrix: DMatrix<T>,
    /// Eigenvalues of `Γ`, ascending.
    pub eigenvalues: Vec<f64>,
}

impl<T: Scalar> Covariance<T> {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("nonempty spectrum")
    }

    /// `Σ = Γ^{1/2}`.
    pub fn sigma(&self) -> DMatrix<T> {
        hermitian_apply(&self.gamma, f64::sqrt)
    }

    /// Condition number of `Σ`.
    pub fn kappa(&self) -> f64 {
        (self.lambda_max() / self.lambda_min()).sqrt()
    }
}

/// How a profile quantity was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Analytic,
    MonteCarloEstimate { trials: usize, seed: u64 },
}

/// Commutator constant `K = 2 sup ‖[aa*, X]‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommutatorK {
    pub value: f64,
    pub exactness: Exactness,
}

/// A sample attaining the incoherence bound.
#[derive(Debug, Clone)]
pub struct IncoherenceWitness<T: Scalar> {
    pub mu: f64,
    /// The measurement vector (already scaled by `ν`).
    pub vector: DVector<T>,
    pub coordinate: usize,
    /// `1` for `|<a, e_i>|²`, `2` for `|<a, X e_i>|²`.
    pub condition: u8,
}

/// Derived quantities of an ensemble at a designated sparsity.
#[derive(Debug, Clone)]
pub struct EnsembleProfile<T: Scalar> {
    pub gamma: DMatrix<T>,
    pub x_matrix: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub gamma_eigen_range: (f64, f64),
    pub mu: f64,
    pub kappa: f64,
    pub kappa_s: f64,
    pub s: usize,
    pub commutator_k: f64,
    /// Exactness of `commutator_k`; every other field is analytic.
    pub exactness: Exactness,
    /// Factor that [`EnsembleSpec::normalize`] would apply at this `s`.
    pub nu: f64,
}

/// Options for [`EnsembleSpec::profile`].
#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub sparse_budget: u64,
    pub commutator_samples: usize,
    pub commutator_seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            sparse_budget: DEFAULT_SPARSE_BUDGET,
            commutator_samples: DEFAULT_COMMUTATOR_SAMPLES,
            commutator_seed: 0,
        }
    }
}

impl<T: Scalar> EnsembleSpec<T> {
    /// Finite distribution over `atoms`. Probabilities must be positive and sum to one.
    pub fn finite_support(dim: usize, atoms: Vec<Atom<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidSpec(
                "finite support needs at least one atom".into(),
            ));
        }
        for (j, atom) in atoms.iter().enumerate() {
            if atom.vector.len() != dim {
                return Err(Error::InvalidSpec(format!(
                    "atom {j} has length {} but n = {dim}",
                    atom.vector.len()
                )));
            }
            if !(atom.prob > 0.0 && atom.prob.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "atom {j} has non-positive probability {}",
                    atom.prob
                )));
            }
            if atom.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "atom {j} has non-finite entries"
                )));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(Error::InvalidSpec(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let sampler = WeightedIndex::new(atoms.iter().map(|a| a.prob))
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(Self {
            kind: EnsembleKind::FiniteSupport(atoms),
            dim,
            scale: 1.0,
            sampler: Some(sampler),
        })
    }

    /// `a = M g` with a square `M`.
    pub fn signed_transform(matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidSpec(format!(
                "transform must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpec(
                "transform has non-finite entries".into(),
            ));
        }
        Ok(Self {
            dim: matrix.nrows(),
            kind: EnsembleKind::SignedTransform(matrix),
            scale: 1.0,
            sampler: None,
        })
    }

    /// Replaces the global scale `ν`.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn field(&self) -> Field {
        T::FIELD
    }

    pub fn kind(&self) -> &EnsembleKind<T> {
        &self.kind
    }

    /// One draw, multiplied by `ν`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        match &self.kind {
            EnsembleKind::FiniteSupport(atoms) => {
                let j = self
                    .sampler
                    .as_ref()
                    .expect("finite support always carries a sampler")
                    .sample(rng);
                atoms[j].vector.map(|x| x.scale(self.scale))
            }
            EnsembleKind::SignedTransform(m) => {
                let g = DVector::from_fn(self.dim, |_, _| T::random_sign(rng));
                (m * g).map(|x| x.scale(self.scale))
            }
        }
    }

    /// Draws `m` samples and stacks them into `A = (1/√m) Σ e_i a_i*`.
    pub fn sampling_matrix<R: Rng + ?Sized>(
        &self,
        m: usize,
        rng: &mut R,
    ) -> Result<SamplingMatrix<T>> {
        if m == 0 {
            return Err(Error::InvalidArgs("m must be at least 1".into()));
        }
        let rows = (0..m).map(|_| self.sample(rng)).collect();
        SamplingMatrix::from_rows(rows)
    }

    /// `Γ = E[aa*]` in closed form and `X = Γ⁻¹`.
    pub fn covariance(&self) -> Result<Covariance<T>> {
        let n = self.dim;
        let nu2 = self.scale * self.scale;
        let gamma = match &self.kind {
            EnsembleKind::FiniteSupport(atoms) => {
                let mut g = DMatrix::<T>::zeros(n, n);
                for atom in atoms {
                    g.ger(
                        T::from_real(atom.prob * nu2),
                        &atom.vector,
                        &atom.vector.conjugate(),
                        T::one(),
                    );
                }
                g
            }
            EnsembleKind::SignedTransform(m) => (m * m.adjoint()).scale(nu2),
        };
        let gamma = hermitianize(&gamma);
        let (eigenvalues, _) = hermitian_eigen(&gamma);
        let lambda_max = *eigenvalues.last().unwrap();
        let lambda_min = eigenvalues[0];
        let threshold = COMPLETENESS_TOL * lambda_max.max(0.0);
        if !(lambda_max > 0.0) || lambda_min <= threshold {
            return Err(Error::NotComplete {
                lambda_min,
                threshold,
            });
        }
        let x_matrix = match gamma.clone().cholesky() {
            Some(chol) => hermitianize(&chol.inverse()),
            None => hermitian_apply(&gamma, |l| 1.0 / l),
        };
        Ok(Covariance {
            gamma,
            x_matrix,
            eigenvalues,
        })
    }

    /// Smallest `μ` with `max_i |<a, e_i>|² ≤ μ` and `max_i |<a, X e_i>|² ≤ μ` almost surely.
    pub fn incoherence_mu(&self, x_matrix: &DMatrix<T>) -> f64 {
        self.incoherence_witness(x_matrix).mu
    }

    /// Like [`incoherence_mu`](Self::incoherence_mu), also returning a sample that attains it.
    ///
    /// For signed transforms the attaining pattern is `g_j = conj(phase(R_ij))`
    /// for the maximising row `R_i` of `νM` or `νXM`, which turns the row's
    /// l1 norm into `|a_i|` or `|(Xa)_i|`.
    pub fn incoherence_witness(&self, x_matrix: &DMatrix<T>) -> IncoherenceWitness<T> {
        let nu = self.scale;
        match &self.kind {
            EnsembleKind::FiniteSupport(atoms) => {
                let mut best = IncoherenceWitness {
                    mu: f64::NEG_INFINITY,
                    vector: DVector::zeros(self.dim),
                    coordinate: 0,
                    condition: 1,
                };
                for atom in atoms {
                    let a = atom.vector.map(|x| x.scale(nu));
                    let xa = x_matrix * &a;
                    for i in 0..self.dim {
                        for (cond, val) in [
                            (1u8, a[i].modulus_squared()),
                            (2u8, xa[i].modulus_squared()),
                        ] {
                            if val > best.mu {
                                best = IncoherenceWitness {
                                    mu: val,
                                    vector: a.clone(),
                                    coordinate: i,
                                    condition: cond,
                                };
                            }
                        }
                    }
                }
                best
            }
            EnsembleKind::SignedTransform(m) => {
                let xm = x_matrix * m;
                let mut best = (f64::NEG_INFINITY, 0usize, 1u8);
                for (cond, mat) in [(1u8, m), (2u8, &xm)] {
                    for i in 0..self.dim {
                        let l1: f64 = mat.row(i).iter().map(|x| x.modulus()).sum();
                        let val = nu * nu * l1 * l1;
                        if val > best.0 {
                            best = (val, i, cond);
                        }
                    }
                }
                let (mu, i, cond) = best;
                let row = if cond == 1 {
                    m.row(i).into_owned()
                } else {
                    xm.row(i).into_owned()
                };
                let g = DVector::from_fn(self.dim, |j, _| {
                    let p = row[j].phase();
                    if p == T::zero() {
                        T::one()
                    } else {
                        p.conjugate()
                    }
                });
                IncoherenceWitness {
                    mu,
                    vector: (m * g).map(|x| x.scale(nu)),
                    coordinate: i,
                    condition: cond,
                }
            }
        }
    }

    /// `K = 2 sup ‖aa*X − Xaa*‖`. Exact for finite support; for signed
    /// transforms the maximum over `samples` random sign patterns drawn from
    /// stream 0 of `seed`.
    pub fn commutator_k(&self, x_matrix: &DMatrix<T>, samples: usize, seed: u64) -> CommutatorK {
        let nu = self.scale;
        match &self.kind {
            EnsembleKind::FiniteSupport(atoms) => {
                let value = atoms
                    .iter()
                    .map(|atom| 2.0 * commutator_norm(&atom.vector.map(|x| x.scale(nu)), x_matrix))
                    .fold(0.0, f64::max);
                CommutatorK {
                    value,
                    exactness: Exactness::Analytic,
                }
            }
            EnsembleKind::SignedTransform(_) => {
                let mut rng = stream_rng(seed, 0);
                let value = (0..samples)
                    .map(|_| 2.0 * commutator_norm(&self.sample(&mut rng), x_matrix))
                    .fold(0.0, f64::max);
                CommutatorK {
                    value,
                    exactness: Exactness::MonteCarloEstimate {
                        trials: samples,
                        seed,
                    },
                }
            }
        }
    }

    /// Rescales so that `λ_max(s, Γ') · λ_min(s, Γ') = 1`. Returns the new
    /// spec and the applied factor.
    pub fn normalize(&self, s: usize, budget: u64) -> Result<(Self, f64)> {
        let cov = self.covariance()?;
        let nu = normalization_factor(&cov.gamma, s, budget)?;
        let spec = self.clone().with_scale(self.scale * nu)?;
        Ok((spec, nu))
    }

    /// All derived quantities at sparsity `s`.
    pub fn profile(&self, s: usize, opts: ProfileOptions) -> Result<EnsembleProfile<T>> {
        let cov = self.covariance()?;
        let sigma = cov.sigma();
        let kappa_s =
            sparse::kappa_s_from_parts(&sigma, &cov.gamma, &cov.x_matrix, s, opts.sparse_budget)?;
        let nu = normalization_factor(&cov.gamma, s, opts.sparse_budget)?;
        let mu = self.incoherence_mu(&cov.x_matrix);
        let k = self.commutator_k(&cov.x_matrix, opts.commutator_samples, opts.commutator_seed);
        Ok(EnsembleProfile {
            gamma_eigen_range: (cov.lambda_min(), cov.lambda_max()),
            kappa: cov.kappa(),
            gamma: cov.gamma,
            x_matrix: cov.x_matrix,
            sigma,
            mu,
            kappa_s,
            s,
            commutator_k: k.value,
            exactness: k.exactness,
            nu,
        })
    }
}

/// `ν = (λ_max(s, Γ) λ_min(s, Γ))^{-1/4}`.
fn normalization_factor<T: Scalar>(gamma: &DMatrix<T>, s: usize, budget: u64) -> Result<f64> {
    let gram = hermitianize(&(gamma.adjoint() * gamma));
    let eigs = sparse_eigs_with_gram(gamma, &gram, s, budget)?;
    Ok((eigs.max * eigs.min).powf(-0.25))
}

/// `‖a u* − u a*‖` with `u = X a`: a rank-two skew-Hermitian matrix whose
/// norm is `‖a‖ · ‖u − (a*u / ‖a‖²) a‖`. Exactly zero when every entry of
/// `a u* − u a*` vanishes in floating point, e.g. for basis atoms of a
/// diagonal `X`; the norm formula would leave rounding noise there.
fn commutator_norm<T: Scalar>(a: &DVector<T>, x_matrix: &DMatrix<T>) -> f64 {
    let na2 = a.norm_squared();
    if na2 == 0.0 {
        return 0.0;
    }
    let u = x_matrix * a;
    let zero = T::zero();
    let support: Vec<usize> = (0..a.len())
        .filter(|&i| a[i] != zero || u[i] != zero)
        .collect();
    let vanishes = support.iter().all(|&i| {
        support
            .iter()
            .all(|&k| a[i] * u[k].conjugate() == u[i] * a[k].conjugate())
    });
    if vanishes {
        return 0.0;
    }
    let coef = a.dotc(&u).unscale(na2);
    let residual = &u - a * coef;
    na2.sqrt() * residual.norm()
}

/// The sampled measurement vectors and `A = (1/√m) Σ e_i a_i*`.
#[derive(Debug, Clone)]
pub struct SamplingMatrix<T: Scalar> {
    pub rows: Vec<DVector<T>>,
    pub a_matrix: DMatrix<T>,
}

impl<T: Scalar> SamplingMatrix<T> {
    pub fn from_rows(rows: Vec<DVector<T>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::InvalidArgs(
                "sampling matrix needs at least one row".into(),
            ));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgs("rows have different lengths".into()));
        }
        let inv = 1.0 / (m as f64).sqrt();
        let a_matrix = DMatrix::from_fn(m, n, |i, j| rows[i][j].conjugate().scale(inv));
        Ok(Self { rows, a_matrix })
    }

    /// Recovers the raw vectors `a_i = √m · conj(row_i)` from an explicit matrix.
    pub fn from_matrix(a_matrix: DMatrix<T>) -> Result<Self> {
        let m = a_matrix.nrows();
        if m == 0 || a_matrix.ncols() == 0 {
            return Err(Error::InvalidArgs(
                "sampling matrix must be nonempty".into(),
            ));
        }
        let sq = (m as f64).sqrt();
        let rows = (0..m)
            .map(|i| a_matrix.row(i).adjoint().map(|x| x.scale(sq)))
            .collect();
        Ok(Self { rows, a_matrix })
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.a_matrix.ncols()
    }

    /// `A*A = (1/m) Σ a_i a_i*`.
    pub fn gram(&self) -> DMatrix<T> {
        hermitianize(&(self.a_matrix.adjoint() * &self.a_matrix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hadamard, op_norm};
    use crate::rng::stream_rng;
    use nalgebra::ComplexField;
    use num_complex::Complex64;

    fn e(n: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v
    }

    fn two_atom() -> EnsembleSpec<f64> {
        EnsembleSpec::finite_support(
            2,
            vec![
                Atom {
                    vector: e(2, 0) * 2.0,
                    prob: 0.5,
                },
                Atom {
                    vector: e(2, 1),
                    prob: 0.5,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_atom_sample_is_the_atom() {
        let spec = EnsembleSpec::finite_support(
            3,
            vec![Atom {
                vector: e(3, 0),
                prob: 1.0,
            }],
        )
        .unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..5 {
            assert_eq!(spec.sample(&mut rng), e(3, 0));
        }
    }

    #[test]
    fn identity_transform_returns_the_sign_vector() {
        let spec = EnsembleSpec::signed_transform(DMatrix::<f64>::identity(2, 2)).unwrap();
        // Find a stream whose first draw is (+1, -1).
        let mut found = false;
        for stream in 0..64 {
            let mut probe = stream_rng(3, stream);
            let g = DVector::from_fn(2, |_, _| f64::random_sign(&mut probe));
            if g == DVector::from_vec(vec![1.0, -1.0]) {
                let mut rng = stream_rng(3, stream);
                assert_eq!(spec.sample(&mut rng), DVector::from_vec(vec![1.0, -1.0]));
                found = true;
                break;
            }
        }
        assert!(found);
    }

    #[test]
    fn hadamard_samples_are_sign_vectors() {
        let spec = hadamard_ensemble::<f64>(4).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            assert!(spec.sample(&mut rng).iter().all(|x| x.abs() == 1.0));
        }
    }

    #[test]
    fn hadamard_covariance_is_identity() {
        let cov = hadamard_ensemble::<f64>(4).unwrap().covariance().unwrap();
        assert!((&cov.gamma - DMatrix::identity(4, 4)).norm() < 1e-14);
        assert!((&cov.x_matrix - DMatrix::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn two_atom_covariance() {
        let cov = two_atom().covariance().unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!((&cov.gamma - expected).norm() < 1e-15);
        assert!((&cov.gamma * &cov.x_matrix - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn rank_deficient_ensemble_is_not_complete() {
        let spec = EnsembleSpec::finite_support(
            2,
            vec![Atom {
                vector: e(2, 0),
                prob: 1.0,
            }],
        )
        .unwrap();
        assert!(matches!(spec.covariance(), Err(Error::NotComplete { .. })));
    }

    #[test]
    fn construction_rejects_bad_atoms() {
        let bad_sum = EnsembleSpec::finite_support(
            2,
            vec![Atom {
                vector: e(2, 0),
                prob: 0.7,
            }],
        );
        assert!(matches!(bad_sum, Err(Error::InvalidSpec(_))));
        let bad_len = EnsembleSpec::finite_support(
            3,
            vec![Atom {
                vector: e(2, 0),
                prob: 1.0,
            }],
        );
        assert!(matches!(bad_len, Err(Error::InvalidSpec(_))));
        let zero_prob = EnsembleSpec::finite_support(
            2,
            vec![
                Atom {
                    vector: e(2, 0),
                    prob: 1.0,
                },
                Atom {
                    vector: e(2, 1),
                    prob: 0.0,
                },
            ],
        );
        assert!(matches!(zero_prob, Err(Error::InvalidSpec(_))));
        let rect = EnsembleSpec::signed_transform(DMatrix::<f64>::zeros(2, 3));
        assert!(matches!(rect, Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn incoherence_examples() {
        let had = hadamard_ensemble::<f64>(4).unwrap();
        let x = had.covariance().unwrap().x_matrix;
        assert!((had.incoherence_mu(&x) - 1.0).abs() < 1e-14);

        let spec = two_atom();
        let x = spec.covariance().unwrap().x_matrix;
        assert!((spec.incoherence_mu(&x) - 4.0).abs() < 1e-12);

        let st = signed_identity::<f64>(5).unwrap();
        let x = st.covariance().unwrap().x_matrix;
        assert!((st.incoherence_mu(&x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn signed_transform_witness_attains_mu() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.5, 0.0, 1.0, 1.0, 0.3, 0.0, -1.0]);
        let spec = EnsembleSpec::signed_transform(m)
            .unwrap()
            .with_scale(0.7)
            .unwrap();
        let x = spec.covariance().unwrap().x_matrix;
        let w = spec.incoherence_witness(&x);
        let attained = if w.condition == 1 {
            w.vector[w.coordinate].modulus_squared()
        } else {
            (&x * &w.vector)[w.coordinate].modulus_squared()
        };
        assert!((attained - w.mu).abs() < 1e-12 * w.mu);
        // No random draw exceeds it.
        let mut rng = stream_rng(9, 0);
        for _ in 0..2000 {
            let a = spec.sample(&mut rng);
            let xa = &x * &a;
            for i in 0..3 {
                assert!(a[i].modulus_squared() <= w.mu * (1.0 + 1e-12));
                assert!(xa[i].modulus_squared() <= w.mu * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn complex_signed_transform_witness_attains_mu() {
        let i = Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[one, i * 2.0, one * 0.5 - i, one]);
        let spec = EnsembleSpec::signed_transform(m).unwrap();
        let x = spec.covariance().unwrap().x_matrix;
        let w = spec.incoherence_witness(&x);
        let attained = if w.condition == 1 {
            w.vector[w.coordinate].modulus_squared()
        } else {
            (&x * &w.vector)[w.coordinate].modulus_squared()
        };
        assert!((attained - w.mu).abs() < 1e-12 * w.mu);
    }

    #[test]
    fn commutator_vanishes_for_isotropic_and_weighted_basis() {
        let had = hadamard_ensemble::<f64>(8).unwrap();
        let x = had.covariance().unwrap().x_matrix;
        assert!(had.commutator_k(&x, 0, 0).value < 1e-12);

        let wb = weighted_standard_basis::<f64>(&[1.0, 3.0, 0.5], &[0.2, 0.3, 0.5]).unwrap();
        let x = wb.covariance().unwrap().x_matrix;
        let k = wb.commutator_k(&x, 0, 0);
        assert_eq!(k.value, 0.0);
        assert_eq!(k.exactness, Exactness::Analytic);
    }

    fn dense_k(atoms: &[(DVector<f64>, f64)]) -> (f64, f64) {
        let spec = EnsembleSpec::finite_support(
            atoms[0].0.len(),
            atoms
                .iter()
                .map(|(v, p)| Atom {
                    vector: v.clone(),
                    prob: *p,
                })
                .collect(),
        )
        .unwrap();
        let x = spec.covariance().unwrap().x_matrix;
        let k = spec.commutator_k(&x, 0, 0).value;
        let mut dense = 0.0f64;
        for (a, _) in atoms {
            let aa = a * a.transpose();
            dense = dense.max(2.0 * op_norm(&(&aa * &x - &x * &aa)));
        }
        (k, dense)
    }

    #[test]
    fn orthogonal_pair_commutes_for_any_weight() {
        // (1,1) and (1,-1) are orthogonal, hence eigenvectors of Γ.
        let t = 1.7;
        let (k, dense) = dense_k(&[
            (DVector::from_vec(vec![1.0, 1.0]), 0.5),
            (DVector::from_vec(vec![t, -t]), 0.5),
        ]);
        assert!(k < 1e-12 && dense < 1e-12);
    }

    #[test]
    fn commutator_matches_dense_norm() {
        let (k, dense) = dense_k(&[
            (DVector::from_vec(vec![1.0, 0.0]), 0.5),
            (DVector::from_vec(vec![1.0, 1.0]), 0.5),
        ]);
        assert!(k > 0.1);
        assert!((k - dense).abs() < 1e-12);
        // Γ = [[1, 1/2], [1/2, 1/2]], X = [[2, -2], [-2, 4]]; for a = e_1 the
        // commutator is [[0, -2], [2, 0]] with norm 2.
        assert!((k - 4.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_standard_basis_commutator_is_exactly_zero() {
        let spec =
            weighted_standard_basis::<f64>(&[0.3, 1.7, 2.9, 0.11], &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let p = spec.profile(2, ProfileOptions::default()).unwrap();
        assert_eq!(p.commutator_k, 0.0);
        assert_eq!(p.exactness, Exactness::Analytic);
    }

    #[test]
    fn normalize_hits_fixed_point() {
        let spec = weighted_standard_basis::<f64>(&[2.0, 1.0], &[0.5, 0.5]).unwrap();
        // Γ = diag(2, 1/2) already satisfies λ_max λ_min = 1.
        let (_, nu) = spec.normalize(2, DEFAULT_SPARSE_BUDGET).unwrap();
        assert!((nu - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normalize_diag_four_one() {
        let spec =
            weighted_standard_basis::<f64>(&[8f64.sqrt(), 2f64.sqrt()], &[0.5, 0.5]).unwrap();
        let cov = spec.covariance().unwrap();
        assert!((cov.lambda_max() - 4.0).abs() < 1e-12 && (cov.lambda_min() - 1.0).abs() < 1e-12);
        let (scaled, nu) = spec.normalize(2, DEFAULT_SPARSE_BUDGET).unwrap();
        assert!((nu - 0.5f64.sqrt()).abs() < 1e-14);
        let cov = scaled.covariance().unwrap();
        assert!((cov.lambda_max() - 2.0).abs() < 1e-12);
        assert!((cov.lambda_min() - 0.5).abs() < 1e-12);
        let (_, again) = scaled.normalize(2, DEFAULT_SPARSE_BUDGET).unwrap();
        assert!((again - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_matrix_rows_are_scaled_adjoints() {
        let spec = EnsembleSpec::finite_support(
            3,
            vec![Atom {
                vector: e(3, 0),
                prob: 1.0,
            }],
        )
        .unwrap();
        let mut rng = stream_rng(0, 0);
        let sm = spec.sampling_matrix(4, &mut rng).unwrap();
        for i in 0..4 {
            assert_eq!(sm.a_matrix.row(i).transpose(), e(3, 0) * 0.5);
        }
        let one = spec.sampling_matrix(1, &mut rng).unwrap();
        assert_eq!(one.a_matrix.row(0).transpose(), e(3, 0));
        assert!(spec.sampling_matrix(0, &mut rng).is_err());
    }

    #[test]
    fn from_matrix_recovers_rows() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 0.5, 0.0]);
        let sm = SamplingMatrix::from_matrix(a.clone()).unwrap();
        let back = SamplingMatrix::from_rows(sm.rows.clone()).unwrap();
        assert!((back.a_matrix - a).norm() < 1e-15);
    }

    #[test]
    fn empirical_second_moment_tracks_covariance() {
        let spec = walsh_pair_member::<f64>(8, 2.0, 1).unwrap();
        let cov = spec.covariance().unwrap();
        let mut rng = stream_rng(4, 0);
        let trials = 200;
        let mut avg = DMatrix::<f64>::zeros(8, 8);
        for _ in 0..trials {
            let sm = spec.sampling_matrix(64, &mut rng).unwrap();
            avg += sm.gram();
        }
        avg /= trials as f64;
        // 12800 draws; entries of aa* are bounded by ~2 so 0.1 is many standard errors.
        assert!(op_norm(&(avg - &cov.gamma)) < 0.1);
        let h = hadamard(8).unwrap();
        assert_eq!(h.nrows(), 8);
    }
}
