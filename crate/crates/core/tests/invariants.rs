use std::sync::Arc;

use nalgebra::DMatrix;
use opweight::fixed_point::{
    check_averaged_contraction, fb_operator, km_step, owkm_step, FixedPointOperator, OwkmOperator,
};
use opweight::operators::{
    adjoint_check, DenseMap, DiagonalWeight, LinearMap, MatrixFreeMap, ScalarWeight,
    ScaledIdentity, SpdMetric, Vector, WeightOperator,
};
use opweight::prox::{
    prox_box, prox_conjugate, prox_l1, BoxIndicator, L1Norm, ProxOracle, QuadraticDataFit,
    SmoothOracle,
};
use opweight::ssn::{b_diff_prox_l1, build_ssn_weight, partition_from_forward};
use proptest::collection::vec;
use proptest::prelude::*;

fn vector(n: usize, range: f64) -> impl Strategy<Value = Vector> {
    vec(-range..range, n).prop_map(Vector::from_vec)
}

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    vec(-1.0..1.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(move |a| a.tr_mul(&a) + DMatrix::identity(n, n) * 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shipped_maps_pass_the_adjoint_check(a in matrix(7, 4), s in -3.0..3.0f64, seed in 0u64..1000) {
        prop_assert!(adjoint_check(&DenseMap(a.clone()), 100, seed).unwrap().max_discrepancy <= 1e-10);
        let scaled = ScaledIdentity { dim: 5, scale: s };
        prop_assert!(adjoint_check(&scaled, 100, seed).unwrap().passed);
        let (f, g) = (a.clone(), a.transpose());
        let free = MatrixFreeMap::new(7, 4, move |x: &Vector| &f * x, move |y: &Vector| &g * y);
        prop_assert!(adjoint_check(&free, 100, seed).unwrap().passed);
    }

    #[test]
    fn metric_norm_matches_its_square_root(m in spd(5), d in vec(0.1..4.0f64, 5), s in 0.1..4.0f64, x in vector(5, 10.0)) {
        for metric in [
            SpdMetric::dense(m.clone()).unwrap(),
            SpdMetric::diagonal(Vector::from_vec(d.clone())).unwrap(),
            SpdMetric::scalar(5, s).unwrap(),
        ] {
            let direct = metric.apply(&x).dot(&x);
            let via_root = metric.sqrt_apply(&x).norm_squared();
            prop_assert!((direct - via_root).abs() <= 1e-10 * direct.abs().max(1.0));
            prop_assert!((metric.norm_sq(&x) - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn scalar_weights_commute_with_every_metric(m in spd(4), lam in 0.05..0.95f64, x in vector(4, 5.0)) {
        let w = ScalarWeight::new(4, lam).unwrap();
        for metric in [SpdMetric::dense(m.clone()).unwrap(), SpdMetric::diagonal(Vector::from_element(4, 2.0)).unwrap()] {
            let a = metric.apply(&w.apply(&x));
            let b = w.apply(&metric.apply(&x));
            prop_assert!((a - &b).amax() <= 1e-12 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn moreau_identity_at_unit_step(y in vector(6, 10.0), mu in 0.01..3.0f64, lo in -3.0..0.0f64, w in 0.0..4.0f64) {
        let l1 = L1Norm::new(mu).unwrap();
        let bx = BoxIndicator::new(lo, lo + w).unwrap();
        let a = l1.prox_scaled(&y, 1.0).unwrap() + prox_conjugate(&l1, &y, 1.0).unwrap();
        let b = bx.prox_scaled(&y, 1.0).unwrap() + prox_conjugate(&bx, &y, 1.0).unwrap();
        prop_assert!((a - &y).amax() <= 1e-12 * (1.0 + y.amax()));
        prop_assert!((b - &y).amax() <= 1e-12 * (1.0 + y.amax()));
    }

    #[test]
    fn scaled_metric_prox_is_the_scaled_prox(x in vector(5, 10.0), tau in 0.01..10.0f64, mu in 0.0..2.0f64) {
        let l1 = L1Norm::new(mu).unwrap();
        let metric = SpdMetric::scalar(5, 1.0 / tau).unwrap();
        let scaled = L1Norm::new(tau * mu).unwrap().prox(&x, &SpdMetric::identity(5).unwrap()).unwrap();
        // μ/(1/τ) and τμ may differ in the last bit
        prop_assert!((l1.prox(&x, &metric).unwrap() - scaled).amax() <= 4.0 * f64::EPSILON * (1.0 + x.amax()));
        let bx = BoxIndicator::new(-1.0, 2.0).unwrap();
        prop_assert_eq!(bx.prox(&x, &metric).unwrap(), prox_box(&x, -1.0, 2.0).unwrap());
    }

    #[test]
    fn weighted_steps_keep_fixed_points(lo in vector(4, 3.0), width in vec(0.0..3.0f64, 4), t in vec(0.0..1.0f64, 4), lam in vec(0.05..0.95f64, 4)) {
        let hi = &lo + Vector::from_vec(width);
        let (l, h) = (lo.clone(), hi.clone());
        let proj = move |x: &Vector| x.zip_zip_map(&l, &h, |v, a, b| v.clamp(a, b));
        let inside = Vector::from_fn(4, |i, _| lo[i] + t[i] * (hi[i] - lo[i]));
        let w = DiagonalWeight::new(Vector::from_vec(lam)).unwrap();
        prop_assert_eq!(owkm_step(&proj, &inside, &w).unwrap(), inside);
    }

    #[test]
    fn scalar_weight_step_is_the_relaxed_step_bit_for_bit(x in vector(6, 10.0), lam in 0.01..0.99f64, t in 0.0..2.0f64) {
        let r = move |v: &Vector| prox_l1(v, t);
        let w = ScalarWeight::new(6, lam).unwrap();
        prop_assert_eq!(owkm_step(&r, &x, &w).unwrap(), km_step(&r, &x, lam).unwrap());
    }

    #[test]
    fn weighted_compositions_are_averaged(
        a in matrix(6, 4),
        b in vector(6, 3.0),
        mu in 0.01..2.0f64,
        frac in 0.05..1.95f64,
        lam in vec(0.05..0.95f64, 4),
        seed in 0u64..10_000,
    ) {
        prop_assume!(a.norm() > 1e-3);
        let f = QuadraticDataFit::new(Arc::new(DenseMap(a)), b).unwrap();
        let g = L1Norm::new(mu).unwrap();
        let fb = fb_operator(&f, &g, frac * f.lipschitz_inv()).unwrap();
        let composed = move |x: &Vector| prox_box(&fb.apply(x).unwrap(), -1.0, 1.5).unwrap();
        let lam = Vector::from_vec(lam);
        let m = lam.max();
        let metric = SpdMetric::diagonal(lam.map(|v| 1.0 / v)).unwrap();
        let weight: Arc<dyn WeightOperator> = Arc::new(DiagonalWeight::new(lam).unwrap());
        let t = OwkmOperator { r: composed, weight };
        let rep = check_averaged_contraction(&t, &metric, m, 20, seed, 4.0).unwrap();
        prop_assert!(rep.holds(1e-10), "violation {}", rep.max_violation);
    }

    #[test]
    fn partition_matches_the_prox_derivative(w in vector(12, 3.0), thr in 0.0..2.0f64) {
        let part = partition_from_forward(&w, thr);
        let ones: Vec<usize> = (0..12).filter(|&i| w[i].abs() > thr).collect();
        prop_assert_eq!(part.inactive(), ones.as_slice());
        let diag = b_diff_prox_l1(&w, thr);
        for i in 0..12 {
            prop_assert_eq!(diag[i], if ones.contains(&i) { 1.0 } else { 0.0 });
        }
        let mask = part.is_inactive_mask();
        for i in 0..12 {
            prop_assert_eq!(mask[i], w[i].abs() > thr);
        }
        prop_assert_eq!(part.inactive().len() + part.active().len(), 12);
    }

    #[test]
    fn block_weight_inverts_the_block_matrix(a in matrix(8, 8), w in vector(8, 3.0), kappa in 0.1..5.0f64, z in vector(8, 5.0)) {
        let mut a = a;
        for mut c in a.column_iter_mut() {
            let n = c.norm().max(1e-3);
            c /= n;
        }
        let h: Arc<dyn LinearMap> = Arc::new(DenseMap(a));
        let part = partition_from_forward(&w, 1.0);
        let lam = build_ssn_weight(&part, kappa, h).unwrap();
        prop_assume!(lam.ridge() == 0.0);
        let back = lam.forward_apply(&lam.apply(&z));
        prop_assert!((back - &z).norm() <= 1e-8 * (1.0 + z.norm()));
    }
}
