//! Tail bounds for the four deviation statistics behind the recovery
//! guarantee, and Monte Carlo estimates of the matching tail probabilities.
//!
//! Every bound is clamped to `[0, 1]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::ensemble::{EnsembleSpec, ProfileOptions};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::rng::stream_rng;

/// Confidence level of [`TailEstimate`] intervals.
pub const CONFIDENCE: f64 = 0.99;

/// Pilot sampling matrices used to rank candidate `z` in [`ZMode::WorstOf`].
pub const PILOT_DRAWS: usize = 20;

fn clamp01(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// `min(1, 2d exp(−(t²/2) / (σ² + Bt/3)))`.
pub fn matrix_bernstein_bound(d: usize, b: f64, sigma2: f64, t: f64) -> Result<f64> {
    if d == 0 || !(b > 0.0) || !(sigma2 > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidArgs(
            "need d >= 1, B > 0, sigma^2 > 0, t >= 0".into(),
        ));
    }
    Ok(clamp01(
        2.0 * d as f64 * (-(t * t / 2.0) / (sigma2 + b * t / 3.0)).exp(),
    ))
}

/// `min(1, exp(−t²/(8σ²) + ¼))`, valid for `0 ≤ t ≤ σ²/B`.
pub fn vector_bernstein_bound(b: f64, sigma2: f64, t: f64) -> Result<f64> {
    if !(b > 0.0) || !(sigma2 > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidArgs("need B > 0, sigma^2 > 0, t >= 0".into()));
    }
    if t > sigma2 / b {
        return Err(Error::OutOfRange(format!(
            "t = {t} exceeds sigma^2/B = {}",
            sigma2 / b
        )));
    }
    Ok(clamp01((-t * t / (8.0 * sigma2) + 0.25).exp()))
}

/// `min(1, 2 exp(−τ²/(3np)))` for `|Bin(n, p) − np| > τ`.
pub fn binomial_tail_bound(n_trials: usize, p: f64, tau: f64) -> Result<f64> {
    if n_trials == 0 || !(p > 0.0 && p <= 1.0) || !(tau >= 0.0) {
        return Err(Error::InvalidArgs(
            "need n >= 1, p in (0, 1], tau >= 0".into(),
        ));
    }
    Ok(clamp01(
        2.0 * (-tau * tau / (3.0 * n_trials as f64 * p)).exp(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `‖P_T (X A*A − Id) P_T‖`, for `0 ≤ τ ≤ ½`.
    LocalIsometry,
    /// `‖P_T (Id − A*A X) z‖₂ / ‖z‖₂`, for `0 ≤ τ ≤ 1`.
    LowDistortion,
    /// `‖P_{T^c} A*A X z‖∞ / ‖z‖₂`, for `τ ≥ 0`.
    OffSupport,
    /// `max_{i∉T} ‖P_T X A*A e_i‖₂`, for `0 ≤ τ ≤ 1`.
    UniformOffSupport,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::LocalIsometry,
        Statistic::LowDistortion,
        Statistic::OffSupport,
        Statistic::UniformOffSupport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::LocalIsometry => "local_isometry",
            Statistic::LowDistortion => "low_distortion",
            Statistic::OffSupport => "off_support",
            Statistic::UniformOffSupport => "uniform_off_support",
        }
    }

    /// Largest admissible `τ`.
    pub fn tau_max(self) -> f64 {
        match self {
            Statistic::LocalIsometry => 0.5,
            Statistic::LowDistortion | Statistic::UniformOffSupport => 1.0,
            Statistic::OffSupport => f64::INFINITY,
        }
    }

    /// Whether the statistic is measured relative to `‖z‖₂`.
    pub fn uses_z(self) -> bool {
        matches!(self, Statistic::LowDistortion | Statistic::OffSupport)
    }
}

impl std::fmt::Display for Statistic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgs(format!("unknown statistic {s:?}")))
    }
}

/// Closed-form tail bound for `statistic ≥ τ`.
pub fn lemma_bound(
    statistic: Statistic,
    n: usize,
    s: usize,
    mu: f64,
    kappa_s: f64,
    m: usize,
    tau: f64,
) -> Result<f64> {
    if n == 0 || s == 0 || m == 0 || !(mu > 0.0) || !(kappa_s > 0.0) {
        return Err(Error::InvalidArgs(
            "n, s, m, mu and kappa_s must be positive".into(),
        ));
    }
    if !(tau >= 0.0 && tau <= statistic.tau_max()) {
        return Err(Error::OutOfRange(format!(
            "tau = {tau} outside [0, {}] for {statistic}",
            statistic.tau_max()
        )));
    }
    let (n, s, m) = (n as f64, s as f64, m as f64);
    let mk = mu * kappa_s;
    let p = match statistic {
        Statistic::LocalIsometry => {
            2.0 * s * (-(m / (s * mk)) * tau * tau / (2.0 * (1.0 + 2.0 * tau / 3.0))).exp()
        }
        Statistic::LowDistortion => (-m * tau * tau / (16.0 * s * mk) + 0.25).exp(),
        Statistic::OffSupport => {
            2.0 * n * (-3.0 * m * tau * tau / (2.0 * mk * (3.0 + s.sqrt() * tau))).exp()
        }
        Statistic::UniformOffSupport => n * (-m * tau * tau / (8.0 * s * mk) + 0.25).exp(),
    };
    Ok(clamp01(p))
}

/// Two-sided Clopper-Pearson interval for `k` successes out of `n`.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    let alpha = 1.0 - confidence;
    let (kf, nf) = (k as f64, n as f64);
    let low = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0)
            .expect("positive shape")
            .inverse_cdf(alpha / 2.0)
    };
    let high = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf)
            .expect("positive shape")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (low, high)
}

/// How `z` is chosen for the statistics that need one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    /// A random unit vector with random signs on `T`.
    Random,
    /// The candidate with the largest mean statistic over a pilot set of
    /// [`PILOT_DRAWS`] sampling matrices, among this many random candidates.
    /// The pilot uses its own streams, so the chosen `z` is fixed before the
    /// main trials run.
    WorstOf(usize),
}

#[derive(Debug, Clone)]
pub struct TailExperiment<T: Scalar> {
    pub statistic: Statistic,
    pub ensemble: EnsembleSpec<T>,
    pub support: Vec<usize>,
    /// Explicit `z`; overrides `z_mode`.
    pub z: Option<DVector<T>>,
    pub z_mode: ZMode,
    pub m: usize,
    pub tau: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub statistic: Statistic,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub tau: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub empirical_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub mu: f64,
    pub kappa_s: f64,
    pub seed: u64,
    /// Largest observed value of the statistic (relative to `‖z‖₂` where applicable).
    pub max_statistic: f64,
}

impl TailEstimate {
    /// The lower confidence edge does not exceed the bound.
    pub fn dominated(&self) -> bool {
        self.ci_low <= self.bound
    }
}

/// Evaluates a statistic on one sampling matrix `A` (rows `a_k* / √m`).
/// `z` must be supported on `support` for the statistics that use it; the
/// returned value is already divided by `‖z‖₂`.
pub fn statistic_value<T: Scalar>(
    statistic: Statistic,
    a_matrix: &DMatrix<T>,
    x_matrix: &DMatrix<T>,
    support: &[usize],
    z: Option<&DVector<T>>,
) -> f64 {
    let n = a_matrix.ncols();
    let mut on_t = vec![false; n];
    for &i in support {
        on_t[i] = true;
    }
    match statistic {
        Statistic::LocalIsometry | Statistic::UniformOffSupport => {
            // Rows T of X A*A, as (A X[T,:]*)* A.
            let c = a_matrix * x_matrix.select_rows(support).adjoint();
            if statistic == Statistic::LocalIsometry {
                let mut block = c.adjoint() * a_matrix.select_columns(support);
                for k in 0..support.len() {
                    block[(k, k)] -= T::one();
                }
                block.singular_values().iter().copied().fold(0.0, f64::max)
            } else {
                let rows_t = c.adjoint() * a_matrix;
                (0..n)
                    .filter(|&j| !on_t[j])
                    .map(|j| rows_t.column(j).norm())
                    .fold(0.0, f64::max)
            }
        }
        Statistic::LowDistortion | Statistic::OffSupport => {
            let z = z.expect("statistic needs z");
            let u = a_matrix.adjoint() * (a_matrix * (x_matrix * z));
            let value = if statistic == Statistic::LowDistortion {
                support
                    .iter()
                    .map(|&i| (z[i] - u[i]).modulus_squared())
                    .sum::<f64>()
                    .sqrt()
            } else {
                (0..n)
                    .filter(|&j| !on_t[j])
                    .map(|j| u[j].modulus())
                    .fold(0.0, f64::max)
            };
            value / z.norm()
        }
    }
}

/// A unit vector on `support` with random magnitudes and random signs.
pub fn random_z<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    support: &[usize],
    rng: &mut R,
) -> DVector<T> {
    let mut z = DVector::<T>::zeros(n);
    loop {
        for &i in support {
            z[i] = T::random_sign(rng).scale(rng.random::<f64>());
        }
        let norm = z.norm();
        if norm > 0.0 {
            return z.unscale(norm);
        }
    }
}

fn validate<T: Scalar>(exp: &TailExperiment<T>) -> Result<()> {
    let n = exp.ensemble.dim();
    let s = exp.support.len();
    if exp.trials == 0 || exp.m == 0 {
        return Err(Error::InvalidArgs("trials and m must be at least 1".into()));
    }
    if s == 0 || s > n {
        return Err(Error::InvalidArgs(format!(
            "support size {s} outside 1..={n}"
        )));
    }
    let mut seen = vec![false; n];
    for &i in &exp.support {
        if i >= n || seen[i] {
            return Err(Error::InvalidArgs(format!(
                "support index {i} is out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    if !(exp.tau >= 0.0 && exp.tau <= exp.statistic.tau_max()) {
        return Err(Error::OutOfRange(format!(
            "tau = {} outside [0, {}] for {}",
            exp.tau,
            exp.statistic.tau_max(),
            exp.statistic
        )));
    }
    if exp.statistic == Statistic::LocalIsometry && exp.m < s {
        return Err(Error::OutOfRange(format!(
            "local isometry needs m >= s, got m = {} < {s}",
            exp.m
        )));
    }
    if let Some(z) = &exp.z {
        if z.len() != n || z.norm() == 0.0 || (0..n).any(|i| !seen[i] && z[i] != T::zero()) {
            return Err(Error::InvalidArgs(
                "z must be a nonzero vector supported on T".into(),
            ));
        }
    }
    if let ZMode::WorstOf(0) = exp.z_mode {
        return Err(Error::InvalidArgs(
            "worst-of search needs at least one candidate".into(),
        ));
    }
    Ok(())
}

/// Stream offset for pilot and `z` draws, far from the trial streams.
const AUX_STREAM: u64 = 1 << 62;

fn choose_z<T: Scalar>(
    exp: &TailExperiment<T>,
    x_matrix: &DMatrix<T>,
) -> Result<Option<DVector<T>>> {
    if !exp.statistic.uses_z() {
        return Ok(None);
    }
    if let Some(z) = &exp.z {
        return Ok(Some(z.clone()));
    }
    let n = exp.ensemble.dim();
    let mut rng = stream_rng(exp.seed, AUX_STREAM);
    match exp.z_mode {
        ZMode::Random => Ok(Some(random_z(n, &exp.support, &mut rng))),
        ZMode::WorstOf(k) => {
            let candidates: Vec<DVector<T>> = (0..k)
                .map(|_| random_z(n, &exp.support, &mut rng))
                .collect();
            let pilots = (0..PILOT_DRAWS)
                .map(|p| {
                    let mut r = stream_rng(exp.seed, AUX_STREAM + 1 + p as u64);
                    Ok(exp.ensemble.sampling_matrix(exp.m, &mut r)?.a_matrix)
                })
                .collect::<Result<Vec<_>>>()?;
            let score = |z: &DVector<T>| -> f64 {
                pilots
                    .iter()
                    .map(|a| statistic_value(exp.statistic, a, x_matrix, &exp.support, Some(z)))
                    .sum()
            };
            let best = candidates
                .into_iter()
                .map(|z| (score(&z), z))
                .max_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, z)| z);
            Ok(best)
        }
    }
}

/// Per-trial statistic values of a tail experiment, with the bound inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TailSamples {
    pub values: Vec<f64>,
    pub mu: f64,
    pub kappa_s: f64,
    pub bound: f64,
}

/// Draws `trials` independent sampling matrices and evaluates the statistic
/// on each. Trial `j` uses stream `j` of `seed`, so results do not depend on
/// the number of worker threads.
pub fn sample_statistics<T: Scalar>(exp: &TailExperiment<T>) -> Result<TailSamples> {
    validate(exp)?;
    let n = exp.ensemble.dim();
    let s = exp.support.len();
    let profile = exp.ensemble.profile(s, ProfileOptions::default())?;
    let x_matrix = &profile.x_matrix;
    let z = choose_z(exp, x_matrix)?;
    let values = (0..exp.trials)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(exp.seed, j as u64);
            let a = exp.ensemble.sampling_matrix(exp.m, &mut rng)?;
            Ok(statistic_value(
                exp.statistic,
                &a.a_matrix,
                x_matrix,
                &exp.support,
                z.as_ref(),
            ))
        })
        .collect::<Result<Vec<f64>>>()?;
    let bound = lemma_bound(
        exp.statistic,
        n,
        s,
        profile.mu,
        profile.kappa_s,
        exp.m,
        exp.tau,
    )?;
    Ok(TailSamples {
        values,
        mu: profile.mu,
        kappa_s: profile.kappa_s,
        bound,
    })
}

impl TailEstimate {
    /// Summarizes per-trial values against `τ`.
    pub fn from_samples<T: Scalar>(exp: &TailExperiment<T>, samples: &TailSamples) -> Self {
        let exceedances = samples.values.iter().filter(|&&v| v >= exp.tau).count();
        let (ci_low, ci_high) = clopper_pearson(exceedances, exp.trials, CONFIDENCE);
        TailEstimate {
            statistic: exp.statistic,
            n: exp.ensemble.dim(),
            s: exp.support.len(),
            m: exp.m,
            tau: exp.tau,
            trials: exp.trials,
            exceedances,
            empirical_rate: exceedances as f64 / exp.trials as f64,
            ci_low,
            ci_high,
            bound: samples.bound,
            mu: samples.mu,
            kappa_s: samples.kappa_s,
            seed: exp.seed,
            max_statistic: samples.values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Runs `trials` independent draws of `A` and reports how often the
/// statistic reaches `τ`, with a 99% Clopper-Pearson interval and the
/// closed-form bound evaluated at the ensemble's `μ` and `κ_s` for `s = |T|`.
pub fn estimate_tail<T: Scalar>(exp: &TailExperiment<T>) -> Result<TailEstimate> {
    let samples = sample_statistics(exp)?;
    Ok(TailEstimate::from_samples(exp, &samples))
}

/// Relative rounding slack allowed in [`fundamental_estimates`].
pub const FUNDAMENTAL_SLACK: f64 = 1e-12;

/// Worst observed ratios `value / (sμ)` of the four sample-wise estimates,
/// in the order `|<a,z>|²/‖z‖²`, `|<a,Xz>|²/‖z‖²`, `‖P_T a‖²`, `‖P_T X a‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalCheck {
    pub draws: usize,
    pub s: usize,
    pub mu: f64,
    pub max_ratio: [f64; 4],
    pub violations: [usize; 4],
}

impl FundamentalCheck {
    pub fn holds(&self) -> bool {
        self.violations.iter().all(|&v| v == 0)
    }
}

/// Draws `draws` samples `a`, each with a fresh uniform support `T` of size
/// `s` and a fresh random `z` on `T`, and counts violations of the four
/// bounds against `sμ`.
pub fn fundamental_estimates<T: Scalar>(
    spec: &EnsembleSpec<T>,
    s: usize,
    draws: usize,
    seed: u64,
) -> Result<FundamentalCheck> {
    let n = spec.dim();
    if s == 0 || s > n {
        return Err(Error::InvalidArgs(format!(
            "need 1 <= s <= n = {n}, got s = {s}"
        )));
    }
    let x = spec.covariance()?.x_matrix;
    let mu = spec.incoherence_mu(&x);
    let limit = s as f64 * mu;
    let mut rng = stream_rng(seed, 0);
    let mut out = FundamentalCheck {
        draws,
        s,
        mu,
        max_ratio: [0.0; 4],
        violations: [0; 4],
    };
    for _ in 0..draws {
        let a = spec.sample(&mut rng);
        let support = rand::seq::index::sample(&mut rng, n, s).into_vec();
        let z = random_z::<T, _>(n, &support, &mut rng);
        let xa = &x * &a;
        let values = [
            a.dotc(&z).modulus_squared(),
            xa.dotc(&z).modulus_squared(),
            support.iter().map(|&i| a[i].modulus_squared()).sum::<f64>(),
            support
                .iter()
                .map(|&i| xa[i].modulus_squared())
                .sum::<f64>(),
        ];
        for (k, v) in values.into_iter().enumerate() {
            let ratio = v / limit;
            out.max_ratio[k] = out.max_ratio[k].max(ratio);
            if ratio > 1.0 + FUNDAMENTAL_SLACK {
                out.violations[k] += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{hadamard_ensemble, Atom};
    use approx::assert_relative_eq;

    #[test]
    fn matrix_bernstein_examples() {
        assert_eq!(matrix_bernstein_bound(3, 1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            matrix_bernstein_bound(1, 1.0, 1.0, 3.0).unwrap(),
            2.0 * (-2.25f64).exp(),
            max_relative = 1e-14
        );
        assert!((matrix_bernstein_bound(1, 1.0, 1.0, 3.0).unwrap() - 0.2107).abs() < 1e-4);
        let mut prev = 1.0;
        for k in 0..200 {
            let p = matrix_bernstein_bound(4, 0.7, 2.0, k as f64 * 0.1).unwrap();
            assert!(p <= prev && (0.0..=1.0).contains(&p));
            prev = p;
        }
        assert!(matrix_bernstein_bound(1, 0.0, 1.0, 1.0).is_err());
        assert!(matrix_bernstein_bound(1, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn vector_bernstein_examples() {
        assert_eq!(vector_bernstein_bound(1.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(vector_bernstein_bound(1.0, 1.0, 1.0).unwrap(), 1.0);
        let p = vector_bernstein_bound(1.0, 100.0, 50.0).unwrap();
        assert_relative_eq!(p, (-2.875f64).exp(), max_relative = 1e-14);
        assert!((p - 0.0564).abs() < 1e-4);
        assert!(matches!(
            vector_bernstein_bound(1.0, 1.0, 1.5),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn binomial_examples() {
        assert_eq!(binomial_tail_bound(10, 0.5, 0.0).unwrap(), 1.0);
        let p = binomial_tail_bound(25, 11.0 / 12.0, 10.0).unwrap();
        assert_relative_eq!(p, 2.0 * (-100.0 / 68.75f64).exp(), max_relative = 1e-14);
        assert!((p - 0.467).abs() < 1e-3);
        assert!(binomial_tail_bound(0, 0.5, 1.0).is_err());
        assert!(binomial_tail_bound(5, 0.0, 1.0).is_err());
    }

    #[test]
    fn lemma_bound_examples_and_monotonicity() {
        assert_eq!(
            lemma_bound(Statistic::LocalIsometry, 16, 3, 1.0, 1.0, 10, 0.0).unwrap(),
            1.0
        );
        let p = lemma_bound(Statistic::LowDistortion, 64, 4, 1.0, 1.0, 6400, 0.5).unwrap();
        assert_relative_eq!(p, (-24.75f64).exp(), max_relative = 1e-12);
        let li = lemma_bound(Statistic::LocalIsometry, 16, 2, 1.0, 1.0, 400, 0.5).unwrap();
        assert_relative_eq!(li, 4.0 * (-18.75f64).exp(), max_relative = 1e-12);
        for st in Statistic::ALL {
            let tmax = st.tau_max().min(2.0);
            let mut prev_tau = 1.0;
            for k in 0..=40 {
                let tau = tmax * k as f64 / 40.0;
                let p = lemma_bound(st, 64, 3, 1.5, 2.0, 500, tau).unwrap();
                assert!(
                    p <= prev_tau + 1e-15 && (0.0..=1.0).contains(&p),
                    "{st} tau {tau}"
                );
                prev_tau = p;
                let mut prev_m = 1.0;
                for m in (10..3000).step_by(97) {
                    let q = lemma_bound(st, 64, 3, 1.5, 2.0, m, tau).unwrap();
                    assert!(q <= prev_m + 1e-15);
                    prev_m = q;
                }
            }
        }
        assert!(matches!(
            lemma_bound(Statistic::LocalIsometry, 16, 2, 1.0, 1.0, 10, 0.6),
            Err(Error::OutOfRange(_))
        ));
        assert!(lemma_bound(Statistic::OffSupport, 16, 2, 1.0, 1.0, 10, 5.0).is_ok());
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.005f64.powf(0.01))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(100, 100, 0.99);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.005f64.powf(0.01)).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(30, 100, 0.99);
        assert!(lo < 0.3 && 0.3 < hi);
    }

    #[test]
    fn incomplete_ensemble_is_rejected() {
        let mut e1 = DVector::zeros(2);
        e1[0] = 1.0;
        let spec = EnsembleSpec::finite_support(
            2,
            vec![Atom {
                vector: e1,
                prob: 1.0,
            }],
        )
        .unwrap();
        let exp = TailExperiment {
            statistic: Statistic::LocalIsometry,
            ensemble: spec,
            support: vec![0],
            z: None,
            z_mode: ZMode::Random,
            m: 4,
            tau: 0.3,
            trials: 5,
            seed: 0,
        };
        assert!(matches!(
            estimate_tail(&exp),
            Err(Error::NotComplete { .. })
        ));
    }

    #[test]
    fn statistics_vanish_for_exact_second_moment() {
        // All 8 Hadamard rows once each: A*A = I exactly.
        let spec = hadamard_ensemble::<f64>(8).unwrap();
        let rows = match spec.kind() {
            crate::ensemble::EnsembleKind::FiniteSupport(atoms) => {
                atoms.iter().map(|a| a.vector.clone()).collect()
            }
            _ => unreachable!(),
        };
        let a = crate::ensemble::SamplingMatrix::from_rows(rows).unwrap();
        let x = DMatrix::identity(8, 8);
        let support = [1, 6];
        let mut z = DVector::zeros(8);
        z[1] = 0.6;
        z[6] = -0.8;
        for st in Statistic::ALL {
            let v = statistic_value(st, &a.a_matrix, &x, &support, Some(&z));
            assert!(v < 1e-12, "{st}: {v}");
        }
    }

    #[test]
    fn hadamard_local_isometry_example() {
        let exp = TailExperiment {
            statistic: Statistic::LocalIsometry,
            ensemble: hadamard_ensemble::<f64>(16).unwrap(),
            support: vec![0, 1],
            z: None,
            z_mode: ZMode::Random,
            m: 400,
            tau: 0.5,
            trials: 2000,
            seed: 9,
        };
        let est = estimate_tail(&exp).unwrap();
        assert_eq!(est.exceedances, 0);
        assert_relative_eq!(est.bound, 4.0 * (-18.75f64).exp(), max_relative = 1e-9);
        assert!(est.dominated());

        let loose = TailExperiment {
            m: 8,
            trials: 200,
            ..exp
        };
        let est = estimate_tail(&loose).unwrap();
        assert_eq!(est.bound, 1.0);
        assert!(est.empirical_rate > 0.0 && est.dominated());
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let exp = TailExperiment {
            statistic: Statistic::OffSupport,
            ensemble: hadamard_ensemble::<f64>(16).unwrap(),
            support: vec![2, 3, 11],
            z: None,
            z_mode: ZMode::WorstOf(10),
            m: 30,
            tau: 0.4,
            trials: 300,
            seed: 4,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate_tail(&exp).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| estimate_tail(&exp).unwrap());
        assert_eq!(one, many);
    }
}
