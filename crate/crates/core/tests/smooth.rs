mod common;

use nalgebra::{DMatrix, DVector};
use pinchtwist::cocycle::{lyapunov_spectrum_qr, Cocycle};
use pinchtwist::linalg::{max_principal_angle, qr_positive};
use pinchtwist::smooth::{
    canonical_frame, check_support_clearance, estimate_stable_bundle, estimate_unstable_bundle,
    fold, homoclinic_linear, linear_anosov, newton_refine_periodic, periodic_points_linear,
    perturb_local_rotation, product_map, sample_torus, standard_map, torus_distance,
    verify_partial_hyperbolicity, wrap, BundleSide, ConeParams, MapSpec, RestrictedCocycle,
    TorusMap, DEFAULT_BUNDLE_STEPS,
};
use pinchtwist::Error;
use proptest::prelude::*;

fn cat() -> TorusMap {
    linear_anosov(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn t4() -> TorusMap {
    linear_anosov(vec![
        vec![5, 3, 0, 0],
        vec![3, 2, 0, 0],
        vec![0, 0, 2, 1],
        vec![0, 0, 1, 1],
    ])
    .unwrap()
}

/// `cat` with a local rotation in the `(x0, x1)` plane near `(0.3, 0.6)`.
fn bumped_cat() -> TorusMap {
    let plane = DMatrix::identity(2, 2);
    perturb_local_rotation(&cat(), &DVector::from_vec(vec![0.3, 0.6]), &plane, 0.4, 0.2).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(0.0..1.0f64, d).prop_map(DVector::from_vec)
}

fn central_difference(f: &TorusMap, x: &DVector<f64>) -> DMatrix<f64> {
    let d = f.dim();
    let h = 1e-6;
    let mut j = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut e = DVector::zeros(d);
        e[k] = h;
        let col = wrap(&(f.apply(&(x + &e)) - f.apply(&(x - &e)))) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

#[test]
fn construction_errors() {
    assert!(linear_anosov(vec![vec![1, 1], vec![0, 1]]).is_err());
    assert!(linear_anosov(vec![vec![2, 0], vec![0, 1]]).is_err());
    assert!(linear_anosov(vec![vec![1, 2, 3]]).is_err());
    let plane = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
    assert!(perturb_local_rotation(&cat(), &DVector::zeros(2), &plane, 0.1, 0.1).is_err());
    assert!(perturb_local_rotation(
        &cat(),
        &DVector::zeros(2),
        &DMatrix::identity(2, 2),
        0.1,
        0.6
    )
    .is_err());
}

#[test]
fn periodic_point_counts_match_integer_determinants() {
    for (map, dims) in [(cat(), 2usize), (t4(), 4)] {
        let a = map.integer_matrix().unwrap().to_vec();
        let mut power = a.clone();
        for n in 1..=3 {
            let shifted: Vec<Vec<i64>> = (0..dims)
                .map(|i| (0..dims).map(|j| power[i][j] - i64::from(i == j)).collect())
                .collect();
            let expected = common::integer_det(&shifted).unsigned_abs() as usize;
            let pts = periodic_points_linear(&map, n).unwrap();
            assert_eq!(pts.len(), expected, "n = {n}");
            for p in &pts {
                let mut y = p.point.clone();
                for _ in 0..n {
                    y = map.apply(&y);
                }
                assert!(torus_distance(&y, &p.point) < 1e-9);
            }
            power = (0..dims)
                .map(|i| {
                    (0..dims)
                        .map(|j| (0..dims).map(|k| power[i][k] * a[k][j]).sum())
                        .collect()
                })
                .collect();
        }
    }
}

#[test]
fn newton_finds_standard_map_fixed_point() {
    let g = standard_map(0.3);
    let p = newton_refine_periodic(&g, &DVector::from_vec(vec![0.02, 0.99]), 1, 1e-13, 50).unwrap();
    assert!(torus_distance(&p.point, &DVector::zeros(2)) < 1e-12);
    assert!(p.hyperbolicity_margin > 0.0);
    assert!(newton_refine_periodic(&g, &DVector::zeros(2), 0, 1e-12, 5).is_err());
}

#[test]
fn homoclinic_orbit_converges_both_ways() {
    let f = cat();
    let z = homoclinic_linear(&f, &[1, 0]).unwrap();
    let origin = DVector::zeros(2);
    let (mut fwd, mut bwd) = (z.point.clone(), z.point.clone());
    for _ in 0..15 {
        fwd = fold(&f.apply(&fwd));
        bwd = fold(&f.apply_inverse(&bwd));
    }
    assert!(torus_distance(&fwd, &origin) < 1e-5);
    assert!(torus_distance(&bwd, &origin) < 1e-5);
    assert!(torus_distance(&z.point, &origin) > 0.1);
    assert!(matches!(
        homoclinic_linear(&f, &[0, 0]),
        Err(Error::InvalidLattice(_))
    ));
}

#[test]
fn clearance_reports_the_offending_step() {
    let f = cat();
    let p = DVector::from_vec(vec![0.2, 0.3]);
    let next = fold(&f.apply(&p));
    let err = check_support_clearance(&f, &p, &next, 0.01, 5, false).unwrap_err();
    assert!(matches!(err, Error::SupportViolation { step: 1 }));
    let origin = DVector::zeros(2);
    assert!(check_support_clearance(
        &f,
        &origin,
        &DVector::from_vec(vec![0.5, 0.5]),
        0.1,
        50,
        false
    )
    .is_ok());
}

#[test]
fn cone_verification_on_known_maps() {
    let cat_ok = verify_partial_hyperbolicity(&cat(), &ConeParams::default(), 64, 1).unwrap();
    assert!(cat_ok.ok);
    let mixed = product_map(cat(), standard_map(0.1));
    let params = ConeParams {
        unstable_dim: 1,
        stable_dim: 1,
        aperture: 0.1,
        steps: 1,
    };
    assert!(
        verify_partial_hyperbolicity(&mixed, &params, 64, 2)
            .unwrap()
            .ok
    );
    assert!(
        !verify_partial_hyperbolicity(&standard_map(5.0), &ConeParams::default(), 64, 3)
            .unwrap()
            .ok
    );
}

#[test]
fn map_spec_round_trip() {
    let g = product_map(bumped_cat(), standard_map(0.25));
    let spec = g.to_spec();
    let text = serde_json::to_string(&spec).unwrap();
    let rebuilt = serde_json::from_str::<MapSpec>(&text)
        .unwrap()
        .build()
        .unwrap();
    let x = sample_torus(4, 8);
    assert_eq!(rebuilt.apply(&x), g.apply(&x));
    assert!(
        serde_json::from_str::<MapSpec>(r#"{"kind": "standard", "lambda": 1, "extra": 2}"#)
            .is_err()
    );
}

#[test]
fn restricted_unstable_cocycle_has_block_spectrum() {
    let coc = RestrictedCocycle::new(&t4(), BundleSide::Uu, 2, DEFAULT_BUNDLE_STEPS).unwrap();
    let x = coc.sample(3);
    let est = lyapunov_spectrum_qr(&coc, &x, 20_000, 1, 5).unwrap();
    assert!((est.exponents[0] - common::unimodular_exponent(7.0)).abs() < 1e-3);
    assert!((est.exponents[1] - common::unimodular_exponent(3.0)).abs() < 1e-3);
}

#[test]
fn stable_bundle_of_the_cat_map() {
    let x = sample_torus(2, 4);
    let s = estimate_stable_bundle(&cat(), &x, 1, 60).unwrap();
    let v = DMatrix::from_column_slice(2, 1, &[1.0, -(1.0 + 5f64.sqrt()) / 2.0]).normalize();
    assert!(max_principal_angle(&s.frame, &v) < 1e-10);
}

proptest! {
    #[test]
    fn lift_is_compatible_with_the_torus_map(x in point(2), n in 1i64..6) {
        let f = bumped_cat();
        let mut y = x.clone();
        for _ in 0..n {
            y = f.apply(&y);
        }
        prop_assert!(torus_distance(&f.iterate_lift(&x, n), &y) < 1e-9);
        prop_assert!(torus_distance(&f.apply_inverse(&f.apply(&x)), &x) < 1e-12);
    }

    #[test]
    fn derivative_matches_finite_differences(x in point(2), lambda in 0.0..2.0f64) {
        for f in [standard_map(lambda), bumped_cat()] {
            let diff = (f.derivative(&x) - central_difference(&f, &x)).amax();
            prop_assert!(diff < 1e-5, "{}", diff);
        }
    }

    #[test]
    fn volume_is_preserved(x in point(2), lambda in 0.0..3.0f64) {
        prop_assert!((standard_map(lambda).derivative(&x).determinant() - 1.0).abs() < 1e-12);
        prop_assert!((bumped_cat().derivative(&x).determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unstable_bundle_is_equivariant(x in point(4)) {
        let f = t4();
        let e = estimate_unstable_bundle(&f, &x, 2, DEFAULT_BUNDLE_STEPS).unwrap();
        let image = f.derivative(&e.point) * &e.frame;
        let next = estimate_unstable_bundle(&f, &fold(&f.apply(&e.point)), 2, DEFAULT_BUNDLE_STEPS).unwrap();
        let (q, _) = qr_positive(&image).unwrap();
        prop_assert!(max_principal_angle(&q, &next.frame) < 1e-8);
    }

    #[test]
    fn canonical_frame_depends_only_on_the_span(
        basis in prop::collection::vec(-1.0..1.0f64, 8),
        mix in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let b = DMatrix::from_column_slice(4, 2, &basis);
        let m = DMatrix::from_column_slice(2, 2, &mix);
        prop_assume!(pinchtwist::linalg::min_singular(&b) > 0.05);
        prop_assume!(pinchtwist::linalg::min_singular(&m) > 0.05);
        let reference = DMatrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.25 });
        prop_assume!(pinchtwist::linalg::min_singular(&(b.transpose() * &reference)) > 0.05);
        let (q1, _) = qr_positive(&b).unwrap();
        let (q2, _) = qr_positive(&(&b * &m)).unwrap();
        let f1 = canonical_frame(&q1, &reference).unwrap();
        let f2 = canonical_frame(&q2, &reference).unwrap();
        prop_assert!((f1 - f2).amax() < 1e-8);
    }
}
