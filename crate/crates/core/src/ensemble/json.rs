//! JSON documents for ensembles.
//!
//! ```json
//! {"kind": "finite_support", "field": "real", "n": 2, "scale": 1.0,
//!  "atoms": [{"vector": [1, 0], "prob": 0.5}, {"vector": [0, 1], "prob": 0.5}]}
//! ```
//!
//! Signed transforms carry `"matrix": [[...], ...]` (row-major) instead of
//! atoms. Complex entries are written as `[re, im]` pairs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Atom, EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::field::{Field, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    FiniteSupport,
    SignedTransform,
}

/// A scalar entry: a bare number or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDoc {
    pub vector: Vec<Entry>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDoc {
    pub kind: KindTag,
    pub field: Field,
    pub n: usize,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<Entry>>>,
}

fn default_scale() -> f64 {
    1.0
}

fn to_entry<T: Scalar>(x: T) -> Entry {
    let (re, im) = x.parts();
    match T::FIELD {
        Field::Real => Entry::Real(re),
        Field::Complex => Entry::Complex([re, im]),
    }
}

fn from_entry<T: Scalar>(e: Entry) -> Result<T> {
    let (re, im) = match e {
        Entry::Real(x) => (x, 0.0),
        Entry::Complex([re, im]) => (re, im),
    };
    T::from_parts(re, im)
        .ok_or_else(|| Error::InvalidSpec(format!("entry [{re}, {im}] is not real")))
}

impl<T: Scalar> EnsembleSpec<T> {
    pub fn to_doc(&self) -> EnsembleDoc {
        let (kind, atoms, matrix) = match &self.kind {
            EnsembleKind::FiniteSupport(atoms) => (
                KindTag::FiniteSupport,
                Some(
                    atoms
                        .iter()
                        .map(|a| AtomDoc {
                            vector: a.vector.iter().map(|&x| to_entry(x)).collect(),
                            prob: a.prob,
                        })
                        .collect(),
                ),
                None,
            ),
            EnsembleKind::SignedTransform(m) => (
                KindTag::SignedTransform,
                None,
                Some(
                    (0..m.nrows())
                        .map(|i| m.row(i).iter().map(|&x| to_entry(x)).collect())
                        .collect(),
                ),
            ),
        };
        EnsembleDoc {
            kind,
            field: T::FIELD,
            n: self.dim,
            scale: self.scale,
            atoms,
            matrix,
        }
    }

    pub fn from_doc(doc: &EnsembleDoc) -> Result<Self> {
        if doc.field != T::FIELD {
            return Err(Error::InvalidSpec(format!(
                "document field {} does not match {}",
                doc.field,
                T::FIELD
            )));
        }
        let spec = match doc.kind {
            KindTag::FiniteSupport => {
                let atoms = doc
                    .atoms
                    .as_ref()
                    .ok_or_else(|| Error::InvalidSpec("finite_support needs \"atoms\"".into()))?;
                let atoms = atoms
                    .iter()
                    .map(|a| {
                        let v: Result<Vec<T>> = a.vector.iter().map(|&e| from_entry(e)).collect();
                        Ok(Atom {
                            vector: DVector::from_vec(v?),
                            prob: a.prob,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                EnsembleSpec::finite_support(doc.n, atoms)?
            }
            KindTag::SignedTransform => {
                let rows = doc.matrix.as_ref().ok_or_else(|| {
                    Error::InvalidSpec("signed_transform needs \"matrix\"".into())
                })?;
                if rows.len() != doc.n || rows.iter().any(|r| r.len() != doc.n) {
                    return Err(Error::InvalidSpec(format!("matrix must be {0}x{0}", doc.n)));
                }
                let mut m = DMatrix::<T>::zeros(doc.n, doc.n);
                for (i, row) in rows.iter().enumerate() {
                    for (j, &e) in row.iter().enumerate() {
                        m[(i, j)] = from_entry(e)?;
                    }
                }
                EnsembleSpec::signed_transform(m)?
            }
        };
        spec.with_scale(doc.scale)
    }
}

/// An ensemble over either scalar field, as read from JSON.
#[derive(Debug, Clone)]
pub enum AnyEnsemble {
    Real(EnsembleSpec<f64>),
    Complex(EnsembleSpec<Complex64>),
}

impl AnyEnsemble {
    pub fn from_doc(doc: &EnsembleDoc) -> Result<Self> {
        Ok(match doc.field {
            Field::Real => AnyEnsemble::Real(EnsembleSpec::from_doc(doc)?),
            Field::Complex => AnyEnsemble::Complex(EnsembleSpec::from_doc(doc)?),
        })
    }

    pub fn to_doc(&self) -> EnsembleDoc {
        match self {
            AnyEnsemble::Real(s) => s.to_doc(),
            AnyEnsemble::Complex(s) => s.to_doc(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_doc(&serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("ensemble documents always serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn field(&self) -> Field {
        match self {
            AnyEnsemble::Real(_) => Field::Real,
            AnyEnsemble::Complex(_) => Field::Complex,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnyEnsemble::Real(s) => s.dim(),
            AnyEnsemble::Complex(s) => s.dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::hadamard_ensemble;

    #[test]
    fn real_finite_support_roundtrip() {
        let spec = hadamard_ensemble::<f64>(4)
            .unwrap()
            .with_scale(0.5)
            .unwrap();
        let text = AnyEnsemble::Real(spec.clone()).to_json();
        let back = AnyEnsemble::from_json(&text).unwrap();
        assert_eq!(back.to_doc(), spec.to_doc());
        let AnyEnsemble::Real(back) = back else {
            panic!("field changed")
        };
        assert!((back.covariance().unwrap().gamma - DMatrix::identity(4, 4) * 0.25).norm() < 1e-15);
    }

    #[test]
    fn complex_signed_transform_roundtrip() {
        let text = r#"{"kind":"signed_transform","field":"complex","n":2,
                      "matrix":[[[1,0],[0,1]],[0.5,[0,-2]]]}"#;
        let e = AnyEnsemble::from_json(text).unwrap();
        assert_eq!(e.field(), Field::Complex);
        let again = AnyEnsemble::from_json(&e.to_json()).unwrap();
        assert_eq!(again.to_doc(), e.to_doc());
        let AnyEnsemble::Complex(spec) = e else {
            unreachable!()
        };
        let EnsembleKind::SignedTransform(m) = spec.kind() else {
            unreachable!()
        };
        assert_eq!(m[(1, 1)], Complex64::new(0.0, -2.0));
    }

    #[test]
    fn rejects_inconsistent_documents() {
        let complex_in_real = r#"{"kind":"finite_support","field":"real","n":1,
                                 "atoms":[{"vector":[[1,1]],"prob":1}]}"#;
        assert!(matches!(
            AnyEnsemble::from_json(complex_in_real),
            Err(Error::InvalidSpec(_))
        ));
        let missing = r#"{"kind":"signed_transform","field":"real","n":2}"#;
        assert!(matches!(
            AnyEnsemble::from_json(missing),
            Err(Error::InvalidSpec(_))
        ));
        let garbage = r#"{"kind":"nope"}"#;
        assert!(matches!(
            AnyEnsemble::from_json(garbage),
            Err(Error::Json(_))
        ));
    }
}
