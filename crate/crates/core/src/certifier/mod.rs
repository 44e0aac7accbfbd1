//! Golfing-scheme construction of inexact dual certificates.
//!
//! Each stage draws a batch of `m_i` vectors and forms the empirical second
//! moment `E_i = (1/m_i) Σ a_k a_k*`. The batch is accepted when
//!
//! * `‖P_T (Id − E_i X) q_{i−1}‖₂ ≤ c_i ‖q_{i−1}‖₂` and
//! * `‖P_{T^c} E_i X q_{i−1}‖∞ ≤ t_i ‖q_{i−1}‖₂`,
//!
//! after which `v_i = v_{i−1} + E_i X q_{i−1}` and `q_i = sgn(x) − P_T v_i`.
//! Because `E_i X q` is a combination of the batch vectors, the final `v` comes
//! with explicit row-space coefficients, and [`verify_inexact_duality`]
//! checks the four sufficient conditions on the union of accepted batches.

mod verify;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, SamplingMatrix};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg::norm_inf;

pub use verify::{verify_inexact_duality, DualityReport, ROW_RESIDUAL_TOL};

/// Multiplier on the batch-size formulas.
pub const BATCH_CONSTANT: f64 = 694.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GolfingParams {
    pub l: usize,
    pub c: Vec<f64>,
    pub t: Vec<f64>,
    pub m_batch: Vec<usize>,
    pub l_prime: usize,
    pub omega: f64,
    pub constant_scale: f64,
    /// Abort if either of the first two stages rejects a batch.
    pub strict_first_two: bool,
}

impl GolfingParams {
    fn validate(&self) -> Result<()> {
        let l = self.l;
        if l == 0 || self.c.len() != l || self.t.len() != l || self.m_batch.len() != l {
            return Err(Error::InvalidArgs(
                "stage lists must all have length l >= 1".into(),
            ));
        }
        if self.c.iter().chain(&self.t).any(|&x| !(x > 0.0)) || self.m_batch.contains(&0) {
            return Err(Error::InvalidArgs(
                "thresholds and batch sizes must be positive".into(),
            ));
        }
        if self.l_prime < l {
            return Err(Error::InvalidArgs(format!(
                "l' = {} is below l = {l}",
                self.l_prime
            )));
        }
        Ok(())
    }

    /// `√s Π c_i`, the guaranteed bound on `‖q_l‖₂`.
    pub fn residual_bound(&self, s: usize) -> f64 {
        (s as f64).sqrt() * self.c.iter().product::<f64>()
    }

    /// `√s (t_1 + Σ_{i≥2} t_i Π_{j<i} c_j)`, the guaranteed bound on `‖v_{T^c}‖∞`.
    pub fn off_support_bound(&self, s: usize) -> f64 {
        let mut acc = 0.0;
        let mut prod = 1.0;
        for i in 0..self.l {
            acc += self.t[i] * prod;
            prod *= self.c[i];
        }
        (s as f64).sqrt() * acc
    }
}

/// Smallest `k` with `4^k ≥ s`, which is `⌈½ log₂ s⌉` without rounding issues.
fn half_log2_ceil(s: usize) -> usize {
    let mut k = 0;
    while 4u128.pow(k as u32) < s as u128 {
        k += 1;
    }
    k
}

/// The standard schedule with natural logarithms (base 2 only in `l`):
///
/// * `l = ⌈½ log₂ s⌉ + 2`
/// * `c_1 = c_2 = 1/(2√ln n)`, `t_1 = t_2 = 1/(8√s)`; `c_i = ½`, `t_i = ln n/(8√s)` for `i ≥ 3`
/// * `l' = ⌈4(ω + ln 12 + 2l/3)⌉`
/// * `m_1 = m_2 = ⌈694 · scale · κ_s μ ω s ln n⌉`, `m_i = ⌈694 · scale · κ_s μ ω s⌉`
pub fn default_params(
    n: usize,
    s: usize,
    omega: f64,
    mu: f64,
    kappa_s: f64,
    constant_scale: f64,
) -> Result<GolfingParams> {
    if n < 2 || s == 0 || s > n {
        return Err(Error::InvalidArgs(format!(
            "need n >= 2 and 1 <= s <= n, got n = {n}, s = {s}"
        )));
    }
    if !(omega >= 1.0) || !(mu > 0.0) || !(kappa_s > 0.0) || !(constant_scale > 0.0) {
        return Err(Error::InvalidArgs(
            "omega >= 1 and positive mu, kappa_s, constant_scale required".into(),
        ));
    }
    let ln_n = (n as f64).ln();
    let sqrt_s = (s as f64).sqrt();
    let l = half_log2_ceil(s) + 2;
    let base = BATCH_CONSTANT * constant_scale * kappa_s * mu * omega * s as f64;
    let mut c = Vec::with_capacity(l);
    let mut t = Vec::with_capacity(l);
    let mut m_batch = Vec::with_capacity(l);
    for i in 0..l {
        if i < 2 {
            c.push(1.0 / (2.0 * ln_n.sqrt()));
            t.push(1.0 / (8.0 * sqrt_s));
            m_batch.push((base * ln_n).ceil().max(1.0) as usize);
        } else {
            c.push(0.5);
            t.push(ln_n / (8.0 * sqrt_s));
            m_batch.push(base.ceil().max(1.0) as usize);
        }
    }
    let l_prime = (4.0 * (omega + 12f64.ln() + 2.0 * l as f64 / 3.0)).ceil() as usize;
    Ok(GolfingParams {
        l,
        c,
        t,
        m_batch,
        l_prime,
        omega,
        constant_scale,
        strict_first_two: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    None,
    BatchCapExceeded,
    Ass1Failed,
    Ass2Failed,
    Dual1Failed,
    Dual2Failed,
    RowSpaceFailed,
}

/// One accepted stage.
#[derive(Debug, Clone)]
pub struct Stage<T: Scalar> {
    /// Index range of this stage's vectors within [`CertificateResult::rows`].
    pub rows: std::ops::Range<usize>,
    /// `q_i` as computed by the iteration.
    pub q: DVector<T>,
    /// `v_i` as computed by the iteration.
    pub v: DVector<T>,
}

#[derive(Debug, Clone)]
pub struct CertificateResult<T: Scalar> {
    pub v: DVector<T>,
    /// `v = Σ_k row_coeffs[k] · rows[k]`.
    pub row_coeffs: Vec<T>,
    /// Vectors of all accepted batches, stage after stage.
    pub rows: Vec<DVector<T>>,
    pub stages: Vec<Stage<T>>,
    /// `‖q_i‖₂` for `i = 0..=` number of completed stages.
    pub q_norms: Vec<f64>,
    /// Number of batches drawn per stage (accepted one included).
    pub r: Vec<usize>,
    /// `Σ m_i r_i`.
    pub total_samples: usize,
    pub success: bool,
    pub failure_reason: FailureReason,
    pub report: Option<DualityReport>,
}

impl<T: Scalar> CertificateResult<T> {
    /// Sampling matrix built from the union of accepted batches.
    pub fn sampling_matrix(&self) -> Result<SamplingMatrix<T>> {
        SamplingMatrix::from_rows(self.rows.clone())
    }

    pub fn summary(&self, include_vectors: bool) -> CertificateSummary {
        CertificateSummary {
            success: self.success,
            failure_reason: self.failure_reason,
            q_norms: self.q_norms.clone(),
            r: self.r.clone(),
            total_samples: self.total_samples,
            accepted_rows: self.rows.len(),
            report: self.report.clone(),
            v: include_vectors.then(|| {
                self.v
                    .iter()
                    .map(|x| {
                        let (re, im) = x.parts();
                        [re, im]
                    })
                    .collect()
            }),
        }
    }
}

/// JSON-friendly view of a [`CertificateResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub success: bool,
    pub failure_reason: FailureReason,
    pub q_norms: Vec<f64>,
    pub r: Vec<usize>,
    pub total_samples: usize,
    pub accepted_rows: usize,
    pub report: Option<DualityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<[f64; 2]>>,
}

fn check_support<T: Scalar>(n: usize, support: &[usize], sgn: &DVector<T>) -> Result<()> {
    if support.is_empty() || support.len() > n {
        return Err(Error::InvalidArgs(format!(
            "support size {} outside 1..={n}",
            support.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in support {
        if i >= n || seen[i] {
            return Err(Error::InvalidArgs(format!(
                "support index {i} is out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    if sgn.len() != n {
        return Err(Error::InvalidArgs("sign vector must have length n".into()));
    }
    for i in 0..n {
        let r = sgn[i].modulus();
        let ok = if seen[i] {
            (r - 1.0).abs() <= 1e-12
        } else {
            r == 0.0
        };
        if !ok {
            return Err(Error::InvalidArgs(format!(
                "sign vector must be unit modulus on the support and zero elsewhere (entry {i})"
            )));
        }
    }
    Ok(())
}

/// Sign pattern `x_i / |x_i|`, zero off the support.
pub fn sign_vector<T: Scalar>(x: &DVector<T>) -> DVector<T> {
    x.map(|v| v.phase())
}

/// Runs the golfing scheme and, if all stages complete, verifies the
/// resulting certificate against the union of accepted batches.
pub fn golf<T: Scalar, R: Rng + ?Sized>(
    spec: &EnsembleSpec<T>,
    x_matrix: &DMatrix<T>,
    support: &[usize],
    sgn_x: &DVector<T>,
    params: &GolfingParams,
    rng: &mut R,
) -> Result<CertificateResult<T>> {
    let n = spec.dim();
    if x_matrix.shape() != (n, n) {
        return Err(Error::InvalidArgs("X has the wrong shape".into()));
    }
    check_support(n, support, sgn_x)?;
    params.validate()?;
    let mut on_t = vec![false; n];
    for &i in support {
        on_t[i] = true;
    }

    let mut q = sgn_x.clone();
    let mut v = DVector::<T>::zeros(n);
    let mut rows: Vec<DVector<T>> = Vec::new();
    let mut row_coeffs: Vec<T> = Vec::new();
    let mut stages = Vec::with_capacity(params.l);
    let mut q_norms = vec![q.norm()];
    let mut r = Vec::with_capacity(params.l);
    let mut total_samples = 0;
    let mut total_batches = 0;
    let mut failure = FailureReason::None;

    let mut batch: Vec<DVector<T>> = Vec::new();
    'stages: for i in 0..params.l {
        let m_i = params.m_batch[i];
        let y = x_matrix * &q;
        let q_norm = q.norm();
        r.push(0);
        loop {
            if total_batches >= params.l_prime {
                failure = FailureReason::BatchCapExceeded;
                break 'stages;
            }
            total_batches += 1;
            r[i] += 1;
            total_samples += m_i;

            batch.clear();
            let mut coeffs = Vec::with_capacity(m_i);
            let mut d = DVector::<T>::zeros(n);
            for _ in 0..m_i {
                let a = spec.sample(rng);
                let ck = a.dotc(&y).unscale(m_i as f64);
                d.axpy(ck, &a, T::one());
                coeffs.push(ck);
                batch.push(a);
            }

            let mut on_sq = 0.0;
            let mut off_max = 0.0f64;
            for j in 0..n {
                if on_t[j] {
                    on_sq += (q[j] - d[j]).modulus_squared();
                } else {
                    off_max = off_max.max(d[j].modulus());
                }
            }
            let accept = on_sq.sqrt() <= params.c[i] * q_norm && off_max <= params.t[i] * q_norm;
            if accept {
                v += &d;
                for j in 0..n {
                    if on_t[j] {
                        q[j] -= d[j];
                    }
                }
                let start = rows.len();
                rows.append(&mut batch);
                row_coeffs.extend(coeffs);
                stages.push(Stage {
                    rows: start..rows.len(),
                    q: q.clone(),
                    v: v.clone(),
                });
                q_norms.push(q.norm());
                break;
            }
            if params.strict_first_two && i < 2 {
                failure = FailureReason::BatchCapExceeded;
                break 'stages;
            }
        }
    }

    let mut result = CertificateResult {
        v,
        row_coeffs,
        rows,
        stages,
        q_norms,
        r,
        total_samples,
        success: false,
        failure_reason: failure,
        report: None,
    };
    if failure != FailureReason::None {
        return Ok(result);
    }

    let sampling = result.sampling_matrix()?;
    let report = verify_inexact_duality(
        &sampling,
        x_matrix,
        support,
        sgn_x,
        &result.v,
        &result.row_coeffs,
    )?;
    result.failure_reason = report.failure_reason();
    result.success = report.pass;
    result.report = Some(report);
    Ok(result)
}

/// Recomputes `v` as `Σ_i E_i X P_T q_{i−1}` and every `q_i` as the product
/// `Π_j P_T (Id − E_j X) P_T sgn(x)` with dense operators, returning the
/// largest l2 deviation from the values produced by the iteration.
pub fn golfing_identity_check<T: Scalar>(
    result: &CertificateResult<T>,
    x_matrix: &DMatrix<T>,
    support: &[usize],
    sgn_x: &DVector<T>,
) -> f64 {
    let n = sgn_x.len();
    let mut p_t = DMatrix::<T>::zeros(n, n);
    for &i in support {
        p_t[(i, i)] = T::one();
    }
    let identity = DMatrix::<T>::identity(n, n);

    let mut product = p_t.clone();
    let mut q_prev = &p_t * sgn_x;
    let mut v_closed = DVector::<T>::zeros(n);
    let mut deviation = 0.0f64;
    for stage in &result.stages {
        let m = stage.rows.len() as f64;
        let mut e = DMatrix::<T>::zeros(n, n);
        for a in &result.rows[stage.rows.clone()] {
            e.ger(T::one(), a, &a.conjugate(), T::one());
        }
        e.unscale_mut(m);
        let ex = &e * x_matrix;
        v_closed += &ex * (&p_t * &q_prev);
        product = &p_t * (&identity - &ex) * &p_t * product;
        let q_closed = &product * sgn_x;
        deviation = deviation.max((&q_closed - &stage.q).norm());
        q_prev = q_closed;
    }
    if let Some(last) = result.stages.last() {
        deviation = deviation.max((&v_closed - &last.v).norm());
    }
    deviation
}

/// `‖v_{T^c}‖∞` for a certificate.
pub fn off_support_norm<T: Scalar>(v: &DVector<T>, support: &[usize]) -> f64 {
    let mut masked = v.clone();
    for &i in support {
        masked[i] = T::zero();
    }
    norm_inf(&masked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{hadamard_ensemble, weighted_standard_basis, Atom};
    use crate::rng::stream_rng;

    #[test]
    fn schedule_examples() {
        let p = default_params(1024, 16, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.l, 4);
        assert!((p.c[0] - 0.18987).abs() < 1e-4);
        assert!((p.c[0] - 0.5 / 1024f64.ln().sqrt()).abs() < 1e-15);
        assert_eq!(p.c[0], p.c[1]);
        assert_eq!(p.c[2], 0.5);
        assert_eq!(p.l_prime, 25);
        let ln = 1024f64.ln();
        assert_eq!(p.m_batch[0], (694.0 * 16.0 * ln).ceil() as usize);
        assert_eq!(p.m_batch[3], 694 * 16);
        assert_eq!(default_params(64, 1, 1.0, 1.0, 1.0, 1.0).unwrap().l, 2);
        assert_eq!(default_params(64, 5, 1.0, 1.0, 1.0, 1.0).unwrap().l, 4);
        assert!(default_params(1, 1, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(default_params(8, 9, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(default_params(8, 2, 0.5, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_second_moment_terminates_in_one_stage() {
        let spec = EnsembleSpec::finite_support(
            1,
            vec![Atom {
                vector: DVector::from_element(1, 1.0),
                prob: 1.0,
            }],
        )
        .unwrap();
        let params = GolfingParams {
            l: 3,
            c: vec![0.5; 3],
            t: vec![0.5; 3],
            m_batch: vec![4; 3],
            l_prime: 3,
            omega: 1.0,
            constant_scale: 1.0,
            strict_first_two: true,
        };
        let sgn = DVector::from_element(1, -1.0);
        let x = DMatrix::identity(1, 1);
        let res = golf(&spec, &x, &[0], &sgn, &params, &mut stream_rng(0, 0)).unwrap();
        assert!(res.success, "{:?}", res.failure_reason);
        assert_eq!(res.q_norms[1], 0.0);
        assert_eq!(res.v, sgn);
        assert!(golfing_identity_check(&res, &x, &[0], &sgn) < 1e-14);
    }

    #[test]
    fn identity_ensemble_shrinks_residual() {
        let n = 16;
        let spec =
            weighted_standard_basis::<f64>(&vec![(n as f64).sqrt(); n], &vec![1.0 / n as f64; n])
                .unwrap();
        let x = spec.covariance().unwrap().x_matrix;
        let support = [1, 5, 9];
        let mut sgn = DVector::zeros(n);
        sgn[1] = 1.0;
        sgn[5] = -1.0;
        sgn[9] = 1.0;
        let mut params = default_params(n, 3, 1.0, n as f64, 1.0, 0.5).unwrap();
        params.strict_first_two = false;
        let mut done = 0;
        for seed in 0..20 {
            let res = golf(&spec, &x, &support, &sgn, &params, &mut stream_rng(seed, 0)).unwrap();
            if res.stages.len() == params.l {
                done += 1;
                assert!(res.q_norms[params.l] <= params.residual_bound(3) + 1e-12);
                for i in 0..params.l {
                    assert!(res.q_norms[i + 1] <= params.c[i] * res.q_norms[i] + 1e-12);
                }
                assert!(off_support_norm(&res.v, &support) <= params.off_support_bound(3) + 1e-12);
            }
        }
        assert!(done > 0);
    }

    #[test]
    fn hadamard_runs_satisfy_identities_and_row_space() {
        let spec = hadamard_ensemble::<f64>(32).unwrap();
        let x = spec.covariance().unwrap().x_matrix;
        let support = [3, 17];
        let mut sgn = DVector::zeros(32);
        sgn[3] = 1.0;
        sgn[17] = -1.0;
        let params = default_params(32, 2, 1.0, 1.0, 1.0, 0.5).unwrap();
        for seed in 0..5 {
            let res = golf(&spec, &x, &support, &sgn, &params, &mut stream_rng(seed, 1)).unwrap();
            assert!(golfing_identity_check(&res, &x, &support, &sgn) < 1e-10);
            let mut rebuilt = DVector::zeros(32);
            for (c, a) in res.row_coeffs.iter().zip(&res.rows) {
                rebuilt.axpy(*c, a, 1.0);
            }
            assert!((rebuilt - &res.v).norm() < 1e-10);
            let json = serde_json::to_string(&res.summary(false)).unwrap();
            assert!(json.contains("q_norms") && !json.contains("\"v\""));
        }
    }

    #[test]
    fn rejects_bad_sign_vectors() {
        let spec = hadamard_ensemble::<f64>(4).unwrap();
        let x = DMatrix::identity(4, 4);
        let params = default_params(4, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
        let mut rng = stream_rng(0, 0);
        let bad = DVector::from_vec(vec![0.5, 0.0, 0.0, 0.0]);
        assert!(golf(&spec, &x, &[0], &bad, &params, &mut rng).is_err());
        let off = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        assert!(golf(&spec, &x, &[0], &off, &params, &mut rng).is_err());
        assert!(golf(&spec, &x, &[0, 0], &off, &params, &mut rng).is_err());
    }
}
