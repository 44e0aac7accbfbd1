use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_support, off_support_norm, FailureReason};
use crate::ensemble::SamplingMatrix;
use crate::error::{Error, Result};
use crate::field::Scalar;

/// Largest accepted `‖v − Σ_k c_k a_k‖₂`.
pub const ROW_RESIDUAL_TOL: f64 = 1e-8;

/// Relative `σ_min` cutoff below which `P_T X A*A P_T` counts as singular on `T`.
const SINGULAR_TOL: f64 = 1e-12;

/// Measured quantities for the four sufficient conditions and the row-space check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `‖(P_T X A*A P_T)⁻¹‖`, infinite when singular on `T`. Must be at most 2.
    pub inverse_norm: f64,
    /// `max_{i∉T} ‖P_T X A*A e_i‖₂`. Must be at most 1.
    pub off_support_coupling: f64,
    /// `‖v_T − sgn(x)‖₂`. Must be at most ¼.
    pub on_support_error: f64,
    /// `‖v_{T^c}‖∞`. Must be at most ¼.
    pub off_support_max: f64,
    /// `‖v − Σ_k c_k a_k‖₂`.
    pub row_residual: f64,
    pub singular_on_support: bool,
    pub ass1: bool,
    pub ass2: bool,
    pub dual1: bool,
    pub dual2: bool,
    pub row_space: bool,
    pub pass: bool,
}

impl DualityReport {
    /// First failed condition, in the order they are listed.
    pub fn failure_reason(&self) -> FailureReason {
        if !self.ass1 {
            FailureReason::Ass1Failed
        } else if !self.ass2 {
            FailureReason::Ass2Failed
        } else if !self.dual1 {
            FailureReason::Dual1Failed
        } else if !self.dual2 {
            FailureReason::Dual2Failed
        } else if !self.row_space {
            FailureReason::RowSpaceFailed
        } else {
            FailureReason::None
        }
    }
}

/// Evaluates the inexact-duality conditions for `v` against the sampling
/// matrix `A` (with `A*A = (1/m) Σ a_k a_k*`) and support `T`.
///
/// Row-space membership is checked from `row_coeffs`, which must satisfy
/// `v = Σ_k row_coeffs[k] · a.rows[k]`.
pub fn verify_inexact_duality<T: Scalar>(
    a: &SamplingMatrix<T>,
    x_matrix: &DMatrix<T>,
    support: &[usize],
    sgn_x: &DVector<T>,
    v: &DVector<T>,
    row_coeffs: &[T],
) -> Result<DualityReport> {
    let n = a.n();
    if x_matrix.shape() != (n, n) || v.len() != n {
        return Err(Error::InvalidArgs(
            "X and v must match the sampling matrix dimension".into(),
        ));
    }
    if row_coeffs.len() != a.m() {
        return Err(Error::InvalidArgs(format!(
            "{} row coefficients for {} rows",
            row_coeffs.len(),
            a.m()
        )));
    }
    check_support(n, support, sgn_x)?;
    let mut on_t = vec![false; n];
    for &i in support {
        on_t[i] = true;
    }
    let off: Vec<usize> = (0..n).filter(|&i| !on_t[i]).collect();

    // Rows T of X A*A.
    let gram = a.gram();
    let x_t = x_matrix.select_rows(support);
    let xg_t = &x_t * &gram;

    let block = xg_t.select_columns(support);
    let sv = block.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let singular_on_support = !(smin > SINGULAR_TOL * smax.max(1.0));
    let inverse_norm = if singular_on_support {
        f64::INFINITY
    } else {
        1.0 / smin
    };

    let off_support_coupling = off
        .iter()
        .map(|&j| xg_t.column(j).norm())
        .fold(0.0, f64::max);

    let on_support_error = support
        .iter()
        .map(|&i| (v[i] - sgn_x[i]).modulus_squared())
        .sum::<f64>()
        .sqrt();
    let off_support_max = off_support_norm(v, support);

    let mut rebuilt = DVector::<T>::zeros(n);
    for (c, row) in row_coeffs.iter().zip(&a.rows) {
        rebuilt.axpy(*c, row, T::one());
    }
    let row_residual = (rebuilt - v).norm();

    let ass1 = inverse_norm <= 2.0;
    let ass2 = off_support_coupling <= 1.0;
    let dual1 = on_support_error <= 0.25;
    let dual2 = off_support_max <= 0.25;
    let row_space = row_residual <= ROW_RESIDUAL_TOL;
    Ok(DualityReport {
        inverse_norm,
        off_support_coupling,
        on_support_error,
        off_support_max,
        row_residual,
        singular_on_support,
        ass1,
        ass2,
        dual1,
        dual2,
        row_space,
        pass: ass1 && ass2 && dual1 && dual2 && row_space,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn identity_sampling<T: Scalar>(n: usize) -> SamplingMatrix<T> {
        SamplingMatrix::from_matrix(DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn identity_system_with_exact_sign_passes() {
        let n = 6;
        let a = identity_sampling::<f64>(n);
        let support = [0, 4];
        let mut sgn = DVector::zeros(n);
        sgn[0] = 1.0;
        sgn[4] = -1.0;
        // a_k = √n e_k
        let coeffs: Vec<f64> = (0..n).map(|k| sgn[k] / (n as f64).sqrt()).collect();
        let r = verify_inexact_duality(&a, &DMatrix::identity(n, n), &support, &sgn, &sgn, &coeffs)
            .unwrap();
        assert!((r.inverse_norm - 1.0).abs() < 1e-12);
        assert!(r.off_support_coupling < 1e-12);
        assert!(r.on_support_error < 1e-12);
        assert_eq!(r.off_support_max, 0.0);
        assert!(r.pass);
        assert_eq!(r.failure_reason(), FailureReason::None);
    }

    #[test]
    fn zero_certificate_fails_on_support_condition() {
        let n = 5;
        let a = identity_sampling::<Complex64>(n);
        let support = [1, 2, 3];
        let mut sgn = DVector::zeros(n);
        sgn[1] = Complex64::new(0.0, 1.0);
        sgn[2] = Complex64::new(-1.0, 0.0);
        sgn[3] = Complex64::from_polar(1.0, 0.3);
        let v = DVector::zeros(n);
        let r = verify_inexact_duality(
            &a,
            &DMatrix::identity(n, n),
            &support,
            &sgn,
            &v,
            &vec![Complex64::new(0.0, 0.0); n],
        )
        .unwrap();
        assert!((r.on_support_error - 3f64.sqrt()).abs() < 1e-12);
        assert!(!r.dual1 && !r.pass);
        assert_eq!(r.failure_reason(), FailureReason::Dual1Failed);
    }

    #[test]
    fn singular_block_is_reported_as_failure() {
        // Only e_0 is ever measured, so the block on {0, 1} is singular.
        let a = SamplingMatrix::from_rows(vec![DVector::from_vec(vec![1.0, 0.0, 0.0])]).unwrap();
        let sgn = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let r = verify_inexact_duality(&a, &DMatrix::identity(3, 3), &[0, 1], &sgn, &v, &[1.0])
            .unwrap();
        assert!(r.singular_on_support && r.inverse_norm.is_infinite());
        assert_eq!(r.failure_reason(), FailureReason::Ass1Failed);
    }

    #[test]
    fn vector_outside_row_space_is_rejected() {
        let a = SamplingMatrix::from_rows(vec![DVector::from_vec(vec![1.0, 1.0])]).unwrap();
        let sgn = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let r =
            verify_inexact_duality(&a, &DMatrix::identity(2, 2), &[0], &sgn, &v, &[0.5]).unwrap();
        assert!((r.row_residual - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(!r.row_space && !r.pass);
        assert!(verify_inexact_duality(&a, &DMatrix::identity(2, 2), &[0], &sgn, &v, &[]).is_err());
    }
}
