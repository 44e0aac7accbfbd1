//! Basis pursuit: `min ‖x‖₁ subject to Ax = b`.
//!
//! ADMM splitting between the affine set `{Ax = b}` and the l1 norm. The
//! projection uses a truncated SVD of `A`, so rank-deficient systems (for
//! example duplicate rows) need no special handling. Every few iterations a
//! dual bound is formed from the scaled multiplier and the iteration stops
//! once the relative duality gap is below `obj_tol`. Candidate points are
//! polished by least squares on the current support, which typically makes
//! sparse solutions exact to rounding.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg::{hermitian_eigen, norm_inf, norm_l1, re_dot};

/// Default relative tolerance of [`exact_recovery_check`].
pub const DEFAULT_RECOVERY_TOL: f64 = 1e-5;

const CHECK_EVERY: usize = 10;
/// Residual balancing is switched off after this many penalty updates so the
/// iteration cannot cycle between penalties.
const MAX_RHO_CHANGES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpOptions {
    pub feas_tol: f64,
    pub obj_tol: f64,
    pub max_iter: usize,
    /// Initial ADMM penalty.
    pub rho: f64,
    pub polish: bool,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-9,
            obj_tol: 1e-8,
            max_iter: 50_000,
            rho: 1.0,
            polish: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BpSolution<T: Scalar> {
    pub x_star: DVector<T>,
    /// `‖A x* − b‖₂`.
    pub primal_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖x*‖₁`.
    pub objective: f64,
    /// Certified lower bound on the optimal value.
    pub lower_bound: f64,
}

/// Orthogonal projection onto `{x : Ax = b}` as `x0 + (I − QQ*) z`, with `Q`
/// an orthonormal basis of the row space.
///
/// Built from a Hermitian eigendecomposition of `AA*` (or `A*A` when `m > n`);
/// eigenvalues below `RANK_TOL · λ_max` are treated as zero, which makes the
/// solve a pseudo-inverse. The SVD is avoided on purpose: its singular vectors
/// are unreliable on matrices with many repeated or zero singular values,
/// which is exactly what subsampled orthobases produce.
struct AffineProjector<T: Scalar> {
    q: DMatrix<T>,
    x0: DVector<T>,
}

const RANK_TOL: f64 = 1e-12;

impl<T: Scalar> AffineProjector<T> {
    fn new(a: &DMatrix<T>, b: &DVector<T>) -> Self {
        let (m, n) = a.shape();
        let a_adj = a.adjoint();
        if m <= n {
            // A = U Σ V*: with AA* = U Σ² U*, the row space is spanned by A*U_r Σ_r⁻¹.
            let (lambda, u) = hermitian_eigen(&(a * &a_adj));
            let lmax = lambda.last().copied().unwrap_or(0.0);
            let keep: Vec<usize> = (0..m).filter(|&i| lambda[i] > RANK_TOL * lmax).collect();
            let u_r = u.select_columns(&keep);
            let coeffs = DVector::from_fn(keep.len(), |c, _| {
                u_r.column(c).dotc(b).unscale(lambda[keep[c]])
            });
            let x0 = &a_adj * (&u_r * coeffs);
            let q = (a_adj * u_r).qr().q();
            Self { q, x0 }
        } else {
            let (lambda, v) = hermitian_eigen(&(&a_adj * a));
            let lmax = lambda.last().copied().unwrap_or(0.0);
            let keep: Vec<usize> = (0..n).filter(|&i| lambda[i] > RANK_TOL * lmax).collect();
            let q = v.select_columns(&keep);
            let atb = &a_adj * b;
            let coeffs = DVector::from_fn(keep.len(), |c, _| {
                q.column(c).dotc(&atb).unscale(lambda[keep[c]])
            });
            let x0 = &q * coeffs;
            Self { q, x0 }
        }
    }

    fn rank(&self) -> usize {
        self.q.ncols()
    }

    fn row_part(&self, z: &DVector<T>) -> DVector<T> {
        &self.q * (self.q.adjoint() * z)
    }

    fn project(&self, z: &DVector<T>) -> DVector<T> {
        &self.x0 + z - self.row_part(z)
    }
}

/// `x · max(0, 1 − λ/|x|)` entrywise; the real soft-threshold on real input.
pub fn soft_threshold<T: Scalar>(v: &DVector<T>, lambda: f64) -> DVector<T> {
    v.map(|x| {
        let r = x.modulus();
        if r <= lambda {
            T::zero()
        } else {
            x.scale(1.0 - lambda / r)
        }
    })
}

/// Least-squares refit on the nonzero pattern `S` of `z`, if `A_S` has full
/// column rank. Also returns the lower bound `Re<y, b> / ‖A*y‖∞` from the
/// min-norm solution of `A_S* y = sgn(x_S)`, which certifies the refit as
/// optimal when `‖A*y‖∞ = 1`.
fn polish<T: Scalar>(a: &DMatrix<T>, b: &DVector<T>, z: &DVector<T>) -> Option<(DVector<T>, f64)> {
    let support: Vec<usize> = (0..z.len()).filter(|&i| z[i] != T::zero()).collect();
    if support.is_empty() || support.len() > a.nrows() {
        return None;
    }
    let qr = a.select_columns(&support).qr();
    let (q, r) = (qr.q(), qr.r());
    let rmax = r.diagonal().iter().map(|d| d.modulus()).fold(0.0, f64::max);
    if r.diagonal().iter().any(|d| d.modulus() <= rmax * 1e-10) {
        return None;
    }
    let x_s = r.solve_upper_triangular(&(q.adjoint() * b))?;
    let mut x = DVector::zeros(z.len());
    for (k, &i) in support.iter().enumerate() {
        x[i] = x_s[k];
    }
    let sgn = x_s.map(|v| v.phase());
    let t = r.adjoint().solve_lower_triangular(&sgn)?;
    let y = q * t;
    let w_inf = norm_inf(&(a.adjoint() * &y));
    let bound = if w_inf > 0.0 {
        re_dot(&y, b) / w_inf
    } else {
        f64::NEG_INFINITY
    };
    Some((x, bound))
}

/// Solves `min ‖x‖₁ s.t. Ax = b`.
///
/// Returns [`Error::Infeasible`] when `b` is not in the range of `A`. When the
/// iteration budget runs out, the best feasible iterate is returned with
/// `converged = false`.
pub fn basis_pursuit<T: Scalar>(
    a: &DMatrix<T>,
    b: &DVector<T>,
    opts: &BpOptions,
) -> Result<BpSolution<T>> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::InvalidArgs(format!(
            "A is {m}x{n} but b has length {}",
            b.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgs("empty system".into()));
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgs("non-finite entries".into()));
    }
    let b_scale = b.norm().max(1.0);
    let feas_limit = opts.feas_tol * b_scale;
    let residual = |x: &DVector<T>| (a * x - b).norm();

    let proj = AffineProjector::new(a, b);
    let r0 = residual(&proj.x0);
    if r0 > opts.feas_tol.sqrt() * b_scale {
        return Err(Error::Infeasible { residual: r0 });
    }
    if proj.rank() == n || norm_l1(&proj.x0) == 0.0 {
        // The feasible set is a single point, or the origin is feasible.
        let objective = norm_l1(&proj.x0);
        return Ok(BpSolution {
            converged: r0 <= feas_limit,
            x_star: proj.x0,
            primal_residual: r0,
            iterations: 0,
            objective,
            lower_bound: objective,
        });
    }

    let mut best: Option<(DVector<T>, f64, f64)> = None;
    let consider = |x: DVector<T>, best: &mut Option<(DVector<T>, f64, f64)>| {
        let res = residual(&x);
        if res > feas_limit {
            return;
        }
        let obj = norm_l1(&x);
        if best.as_ref().is_none_or(|(_, o, _)| obj < *o) {
            *best = Some((x, obj, res));
        }
    };

    let mut rho = opts.rho;
    let mut z = proj.x0.clone();
    let mut u = DVector::<T>::zeros(n);
    let mut lower = f64::NEG_INFINITY;
    let mut last_support: Vec<bool> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut rho_changes = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let x = proj.project(&(&z - &u));
        let z_prev = std::mem::replace(&mut z, soft_threshold(&(&x + &u), 1.0 / rho));
        u += &x - &z;

        if iterations % CHECK_EVERY != 0 && iterations != opts.max_iter {
            continue;
        }

        // Any w gives Re<x0, Rw> / ‖Rw‖∞ ≤ ‖x̄‖₁ for every feasible x̄.
        let w_r = proj.row_part(&u.scale(rho));
        let w_inf = norm_inf(&w_r);
        if w_inf > 0.0 {
            lower = lower.max(re_dot(&proj.x0, &w_r) / w_inf);
        }

        consider(proj.project(&z), &mut best);
        if opts.polish {
            let support: Vec<bool> = z.iter().map(|x| *x != T::zero()).collect();
            if support != last_support {
                if let Some((p, bound)) = polish(a, b, &z) {
                    consider(p, &mut best);
                    lower = lower.max(bound);
                }
                last_support = support;
            }
        }

        if let Some((_, obj, _)) = &best {
            if obj - lower <= opts.obj_tol * obj.max(1.0) {
                converged = true;
                break;
            }
        }

        let r_norm = (&x - &z).norm();
        let s_norm = rho * (&z - &z_prev).norm();
        if rho_changes >= MAX_RHO_CHANGES {
            continue;
        }
        rho_changes += 1;
        if r_norm > 10.0 * s_norm {
            rho *= 2.0;
            u.unscale_mut(2.0);
        } else if s_norm > 10.0 * r_norm {
            rho /= 2.0;
            u.scale_mut(2.0);
        } else {
            rho_changes -= 1;
        }
    }

    let (x_star, objective, primal_residual) = match best {
        Some(b) => b,
        None => {
            let x = proj.project(&z);
            let res = residual(&x);
            let obj = norm_l1(&x);
            (x, obj, res)
        }
    };
    Ok(BpSolution {
        converged: converged && primal_residual <= feas_limit,
        x_star,
        primal_residual,
        iterations,
        objective,
        lower_bound: lower,
    })
}

/// `‖x* − x‖₂ ≤ rel_tol · ‖x‖₂`, with an absolute comparison when `x = 0`.
pub fn exact_recovery_check<T: Scalar>(
    x_star: &DVector<T>,
    x_true: &DVector<T>,
    rel_tol: f64,
) -> bool {
    assert_eq!(x_star.len(), x_true.len(), "vectors must have equal length");
    let scale = x_true.norm();
    let err = (x_star - x_true).norm();
    if scale == 0.0 {
        err <= rel_tol
    } else {
        err <= rel_tol * scale
    }
}
