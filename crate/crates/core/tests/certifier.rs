mod common;

use cslab_core::certifier::{
    default_params, golf, golfing_identity_check, verify_inexact_duality, FailureReason,
};
use cslab_core::ensemble::hadamard_ensemble;
use cslab_core::rng::stream_rng;
use cslab_core::{basis_pursuit, exact_recovery_check, BpOptions, DMatrix, DVector};
use rand::Rng;

fn signs(n: usize, support: &[usize], rng: &mut impl Rng) -> DVector<f64> {
    let mut sgn = DVector::zeros(n);
    for &i in support {
        sgn[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    sgn
}

#[test]
fn schedule_meets_quarter_bounds_for_all_sizes() {
    for k in 4..=14 {
        let n = 1usize << k;
        for s in 1..=n {
            let p = default_params(n, s, 1.0, 1.0, 1.0, 1.0).unwrap();
            assert!(p.residual_bound(s) <= 0.25, "n={n} s={s}");
            assert!(p.off_support_bound(s) <= 0.25, "n={n} s={s}");
        }
    }
}

#[test]
fn single_stage_matches_unrolled_formula() {
    let n = 16;
    let spec = hadamard_ensemble::<f64>(n).unwrap();
    let x = DMatrix::identity(n, n);
    let mut rng = stream_rng(3, 0);
    let support = [2, 7];
    let sgn = signs(n, &support, &mut rng);
    let mut p = default_params(n, 2, 1.0, 1.0, 1.0, 0.5).unwrap();
    p.l = 1;
    p.c.truncate(1);
    p.t.truncate(1);
    p.m_batch.truncate(1);
    let res = golf(&spec, &x, &support, &sgn, &p, &mut rng).unwrap();
    assert_eq!(res.stages.len(), 1);
    let m = res.rows.len() as f64;
    let mut expected = DVector::zeros(n);
    for a in &res.rows {
        expected += a * (a.dot(&sgn) / m);
    }
    assert!((expected - &res.v).norm() < 1e-12);
    assert!(golfing_identity_check(&res, &x, &support, &sgn) < 1e-12);
}

#[test]
fn hadamard_desk_scale_certificates() {
    let n = 64;
    let s = 3;
    let spec = hadamard_ensemble::<f64>(n).unwrap();
    let x = spec.covariance().unwrap().x_matrix;
    let params = default_params(n, s, 1.0, 1.0, 1.0, 0.5).unwrap();
    let mut successes = 0;
    for seed in 0..100 {
        let mut rng = stream_rng(seed, 11);
        let support = rand::seq::index::sample(&mut rng, n, s).into_vec();
        let sgn = signs(n, &support, &mut rng);
        let res = golf(&spec, &x, &support, &sgn, &params, &mut rng).unwrap();
        if res.stages.len() == params.l {
            assert!(golfing_identity_check(&res, &x, &support, &sgn) < 1e-10);
            for i in 0..params.l {
                assert!(res.q_norms[i + 1] <= params.c[i] * res.q_norms[i] + 1e-12);
            }
        }
        if !res.success {
            continue;
        }
        successes += 1;
        assert_eq!(res.failure_reason, FailureReason::None);
        let a = res.sampling_matrix().unwrap();
        let report =
            verify_inexact_duality(&a, &x, &support, &sgn, &res.v, &res.row_coeffs).unwrap();
        assert!(report.pass);
        let b = &a.a_matrix * &sgn;
        let sol = basis_pursuit(&a.a_matrix, &b, &BpOptions::default()).unwrap();
        assert!(exact_recovery_check(&sol.x_star, &sgn, 1e-5), "seed {seed}");
    }
    assert!(successes >= 90, "{successes}/100");
}
