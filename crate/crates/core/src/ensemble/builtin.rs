//! Built-in ensembles used by the tests, the harness and the CLI.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AnyEnsemble, Atom, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg::hadamard;

/// Uniform distribution over the `±1` rows of the Sylvester Hadamard matrix.
/// Isotropic with `Γ = I` and `μ = 1`.
pub fn hadamard_ensemble<T: Scalar>(n: usize) -> Result<EnsembleSpec<T>> {
    let h = hadamard(n)
        .ok_or_else(|| Error::InvalidSpec(format!("Hadamard size {n} is not a power of two")))?;
    weighted_basis(
        &h.map(T::from_real),
        &vec![1.0; n],
        &vec![1.0 / n as f64; n],
    )
}

/// Draws row `j` of `basis`, multiplied by `weights[j]`, with probability `probs[j]`.
pub fn weighted_basis<T: Scalar>(
    basis: &DMatrix<T>,
    weights: &[f64],
    probs: &[f64],
) -> Result<EnsembleSpec<T>> {
    let k = basis.nrows();
    if weights.len() != k || probs.len() != k {
        return Err(Error::InvalidSpec(format!(
            "{k} basis rows but {} weights and {} probabilities",
            weights.len(),
            probs.len()
        )));
    }
    let atoms = (0..k)
        .map(|j| Atom {
            vector: basis.row(j).transpose().map(|x| x.scale(weights[j])),
            prob: probs[j],
        })
        .collect();
    EnsembleSpec::finite_support(basis.ncols(), atoms)
}

/// Draws `weights[j] e_j` with probability `probs[j]`.
pub fn weighted_standard_basis<T: Scalar>(
    weights: &[f64],
    probs: &[f64],
) -> Result<EnsembleSpec<T>> {
    let n = weights.len();
    weighted_basis(&DMatrix::<T>::identity(n, n), weights, probs)
}

/// `a = g` with independent uniform signs; `Γ = I`, `μ = 1`.
pub fn signed_identity<T: Scalar>(n: usize) -> Result<EnsembleSpec<T>> {
    EnsembleSpec::signed_transform(DMatrix::<T>::identity(n, n))
}

/// Hadamard rows `h_j` drawn with probability `(1 + β h_j(c)) / n`, where
/// `β = (κ² − 1) / (κ² + 1)` and `c` is a nonzero column index.
///
/// The covariance is `I + β P` with `P` the involution swapping coordinates
/// `a` and `a XOR c`, so `Γ` has eigenvalues `1 ± β` and `cond(Σ) = κ`.
/// Every pair `{a, a XOR c}` is itself a principal block with that spectrum,
/// hence `κ_s = κ` for all `s ≥ 2`. Atoms are elements of an orthogonal basis
/// so the commutator constant vanishes.
pub fn walsh_pair_member<T: Scalar>(
    n: usize,
    kappa: f64,
    character: usize,
) -> Result<EnsembleSpec<T>> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "kappa must be at least 1, got {kappa}"
        )));
    }
    if character == 0 || character >= n {
        return Err(Error::InvalidSpec(format!(
            "character index {character} outside 1..{n}"
        )));
    }
    let h = hadamard(n)
        .ok_or_else(|| Error::InvalidSpec(format!("Hadamard size {n} is not a power of two")))?;
    let beta = (kappa * kappa - 1.0) / (kappa * kappa + 1.0);
    let probs: Vec<f64> = (0..n)
        .map(|j| (1.0 + beta * h[(j, character)]) / n as f64)
        .collect();
    weighted_basis(&h.map(T::from_real), &vec![1.0; n], &probs)
}

/// Uniformly drawn Hadamard rows scaled by `sqrt(1 + β h_j(c))`.
///
/// Same `Γ` (hence `κ` and `κ_s`) as [`walsh_pair_member`], but the
/// anisotropy sits in the row weights instead of the sampling frequencies.
/// After normalization `μ = κ`. Basis pursuit sees only the row directions,
/// so for recovery this ensemble behaves exactly like the Hadamard ensemble.
pub fn walsh_pair_weighted_member<T: Scalar>(
    n: usize,
    kappa: f64,
    character: usize,
) -> Result<EnsembleSpec<T>> {
    let probability_member = walsh_pair_member::<T>(n, kappa, character)?;
    let h = hadamard(n).expect("checked by walsh_pair_member");
    let EnsembleKind::FiniteSupport(atoms) = probability_member.kind() else {
        unreachable!("walsh pair members are finite-support")
    };
    let weights: Vec<f64> = atoms.iter().map(|a| (a.prob * n as f64).sqrt()).collect();
    weighted_basis(&h.map(T::from_real), &weights, &vec![1.0 / n as f64; n])
}

/// Where a Walsh-pair member puts its anisotropy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anisotropy {
    /// Non-uniform sampling frequencies, unit weights ([`walsh_pair_member`]).
    #[default]
    Probabilities,
    /// Uniform sampling, non-uniform weights ([`walsh_pair_weighted_member`]).
    Weights,
}

pub fn walsh_pair<T: Scalar>(
    n: usize,
    kappa: f64,
    character: usize,
    anisotropy: Anisotropy,
) -> Result<EnsembleSpec<T>> {
    match anisotropy {
        Anisotropy::Probabilities => walsh_pair_member(n, kappa, character),
        Anisotropy::Weights => walsh_pair_weighted_member(n, kappa, character),
    }
}

/// One Walsh-pair member per requested `κ`, each normalized at sparsity `s`.
pub fn kappa_family<T: Scalar>(
    n: usize,
    s: usize,
    kappas: &[f64],
    character: usize,
    anisotropy: Anisotropy,
    budget: u64,
) -> Result<Vec<EnsembleSpec<T>>> {
    kappas
        .iter()
        .map(|&k| {
            Ok(walsh_pair::<T>(n, k, character, anisotropy)?
                .normalize(s, budget)?
                .0)
        })
        .collect()
}

/// Named real ensembles usable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case")]
pub enum BuiltinEnsemble {
    Hadamard {
        n: usize,
    },
    SignedIdentity {
        n: usize,
    },
    WeightedStandardBasis {
        weights: Vec<f64>,
        probs: Vec<f64>,
    },
    WalshPair {
        n: usize,
        kappa: f64,
        #[serde(default = "default_character")]
        character: usize,
        #[serde(default)]
        anisotropy: Anisotropy,
    },
}

fn default_character() -> usize {
    1
}

impl BuiltinEnsemble {
    pub fn build(&self) -> Result<AnyEnsemble> {
        let spec = match self {
            BuiltinEnsemble::Hadamard { n } => hadamard_ensemble::<f64>(*n)?,
            BuiltinEnsemble::SignedIdentity { n } => signed_identity::<f64>(*n)?,
            BuiltinEnsemble::WeightedStandardBasis { weights, probs } => {
                weighted_standard_basis::<f64>(weights, probs)?
            }
            BuiltinEnsemble::WalshPair {
                n,
                kappa,
                character,
                anisotropy,
            } => walsh_pair::<f64>(*n, *kappa, *character, *anisotropy)?,
        };
        Ok(AnyEnsemble::Real(spec))
    }

    /// Short label for output tables.
    pub fn tag(&self) -> String {
        match self {
            BuiltinEnsemble::Hadamard { n } => format!("hadamard{n}"),
            BuiltinEnsemble::SignedIdentity { n } => format!("signed_identity{n}"),
            BuiltinEnsemble::WeightedStandardBasis { weights, .. } => {
                format!("weighted_basis{}", weights.len())
            }
            BuiltinEnsemble::WalshPair {
                n,
                kappa,
                character,
                anisotropy,
            } => {
                let w = if *anisotropy == Anisotropy::Weights {
                    "_w"
                } else {
                    ""
                };
                format!("walsh_pair{n}_k{kappa}_c{character}{w}")
            }
        }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            BuiltinEnsemble::Hadamard { n }
            | BuiltinEnsemble::SignedIdentity { n }
            | BuiltinEnsemble::WalshPair { n, .. } => *n,
            BuiltinEnsemble::WeightedStandardBasis { weights, .. } => weights.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{ProfileOptions, DEFAULT_SPARSE_BUDGET};

    #[test]
    fn walsh_pair_has_prescribed_condition_numbers() {
        for kappa in [1.0, 2.0, 4.0] {
            let spec = walsh_pair_member::<f64>(16, kappa, 1).unwrap();
            let p = spec.profile(3, ProfileOptions::default()).unwrap();
            assert!(
                (p.kappa - kappa).abs() < 1e-10,
                "kappa {} vs {}",
                p.kappa,
                kappa
            );
            assert!((p.kappa_s - kappa).abs() < 1e-10);
            assert!(p.commutator_k < 1e-12);
        }
    }

    #[test]
    fn kappa_family_is_normalized() {
        let fam = kappa_family::<f64>(
            16,
            2,
            &[1.0, 2.0, 4.0],
            1,
            Anisotropy::Probabilities,
            DEFAULT_SPARSE_BUDGET,
        )
        .unwrap();
        for spec in &fam {
            let (_, nu) = spec.normalize(2, DEFAULT_SPARSE_BUDGET).unwrap();
            assert!((nu - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn builtin_roundtrips_through_json() {
        let b = BuiltinEnsemble::WalshPair {
            n: 8,
            kappa: 2.0,
            character: 1,
            anisotropy: Anisotropy::Weights,
        };
        let text = serde_json::to_string(&b).unwrap();
        let back: BuiltinEnsemble = serde_json::from_str(&text).unwrap();
        assert_eq!(b, back);
        let parsed: BuiltinEnsemble =
            serde_json::from_str(r#"{"builtin":"hadamard","n":4}"#).unwrap();
        assert_eq!(parsed.build().unwrap().dim(), 4);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(hadamard_ensemble::<f64>(6).is_err());
        assert!(walsh_pair_member::<f64>(8, 0.5, 1).is_err());
        assert!(walsh_pair_member::<f64>(8, 2.0, 0).is_err());
        assert!(weighted_standard_basis::<f64>(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn weighted_walsh_pair_shares_covariance_with_smaller_mu() {
        for kappa in [1.0, 2.0, 4.0] {
            let by_prob = walsh_pair_member::<f64>(16, kappa, 3)
                .unwrap()
                .normalize(2, DEFAULT_SPARSE_BUDGET)
                .unwrap()
                .0;
            let by_weight = walsh_pair_weighted_member::<f64>(16, kappa, 3)
                .unwrap()
                .normalize(2, DEFAULT_SPARSE_BUDGET)
                .unwrap()
                .0;
            let (a, b) = (
                by_prob.covariance().unwrap(),
                by_weight.covariance().unwrap(),
            );
            assert!((&a.gamma - &b.gamma).norm() < 1e-12);
            let pa = by_prob.profile(2, ProfileOptions::default()).unwrap();
            let pb = by_weight.profile(2, ProfileOptions::default()).unwrap();
            assert!((pb.kappa_s - kappa).abs() < 1e-10 && (pa.kappa_s - kappa).abs() < 1e-10);
            assert!((pb.mu - kappa).abs() < 1e-10, "mu {}", pb.mu);
            // Frequencies (1 ± β)/n give |(Xa)_i|² = 1/(1 − β)² = ((κ² + 1)/2)², divided by ν² = (κ² + 1)/(2κ).
            let expected = (kappa * kappa + 1.0) * kappa / 2.0;
            assert!(
                (pa.mu - expected).abs() < 1e-9,
                "mu {} vs {expected}",
                pa.mu
            );
        }
    }
}
