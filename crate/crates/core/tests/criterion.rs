mod common;

use nalgebra::{DMatrix, DVector};
use pinchtwist::cocycle::{Cocycle, SpectrumEstimate};
use pinchtwist::criterion::{
    criterion_verdict, cross_validate, matrix_gap, max_off_diagonal, rotate_at_homoclinic,
    smooth_holonomy, support_radius, transition_map_rotated, transition_map_smooth, Consistency,
    CriterionConfig,
};
use pinchtwist::holonomy::{truncated_holonomy, Side};
use pinchtwist::linalg::{from_rows, to_rows};
use pinchtwist::report::{Band, Tolerances, Verdict};
use pinchtwist::smooth::{
    fold, homoclinic_linear, linear_anosov, periodic_points_linear, BundleSide, HomoclinicDatum,
    PeriodicPointDatum, RestrictedCocycle, TorusCocycle, TorusMap, DEFAULT_BUNDLE_STEPS,
    DEFAULT_CLEARANCE_STEPS,
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

fn t4_loop(f: &TorusMap) -> (PeriodicPointDatum, HomoclinicDatum) {
    let p = periodic_points_linear(f, 1).unwrap().remove(0);
    assert_eq!(p.point.amax(), 0.0);
    (p, homoclinic_linear(f, &[1, 0, 1, 0]).unwrap())
}

fn stable_direction() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -(1.0 + 5f64.sqrt()) / 2.0]).normalize()
}

fn estimate(exponents: Vec<f64>, std_errors: Vec<f64>) -> SpectrumEstimate {
    SpectrumEstimate {
        exponents,
        std_errors,
        steps: 1000,
        renorm_period: 1,
        seed: 0,
        transient: 0,
        batches: 20,
    }
}

#[test]
fn unperturbed_block_model_fails_twisting() {
    let f = t4();
    let (p, z) = t4_loop(&f);
    let coc = RestrictedCocycle::new(&f, BundleSide::Uu, 2, DEFAULT_BUNDLE_STEPS).unwrap();
    let report = criterion_verdict(&coc, &p, &z, &CriterionConfig::new(0.48, 1));
    assert_eq!(report.verdict, Verdict::FailsTwisting);
    let psi = from_rows(&report.transition_matrix).unwrap();
    assert!(max_off_diagonal(&psi) < 1e-8);
    // Both unstable eigenvalues of the return map, distinct moduli.
    let top = common::unimodular_exponent(7.0).exp();
    let next = common::unimodular_exponent(3.0).exp();
    assert!((report.pinching.moduli[0] - top).abs() < 1e-9);
    assert!((report.pinching.moduli[1] - next).abs() < 1e-9);
    assert_eq!(report.pinching.band, Band::Pass);
}

#[test]
fn local_rotation_twists_the_transition_map() {
    let f = t4();
    let (p, z) = t4_loop(&f);
    let theta = 0.3;
    let rm = rotate_at_homoclinic(
        &f,
        &p,
        &z,
        theta,
        DEFAULT_CLEARANCE_STEPS,
        DEFAULT_BUNDLE_STEPS,
    )
    .unwrap();
    assert!(rm.radius > 0.0 && rm.radius < 0.5);
    assert!(rm.clearance >= rm.radius);
    assert!(rm.radius <= support_radius(&f, &p, &z, DEFAULT_CLEARANCE_STEPS));

    let base = RestrictedCocycle::new(&f, BundleSide::Uu, 2, DEFAULT_BUNDLE_STEPS).unwrap();
    let g = RestrictedCocycle::with_reference(
        &rm.map,
        BundleSide::Uu,
        2,
        DEFAULT_BUNDLE_STEPS,
        base.reference().clone(),
    )
    .unwrap();
    let tol = Tolerances::default();
    let (direct, ok_direct) = transition_map_smooth(&g, &p, &z, &tol).unwrap();
    let (rotated, ok_rotated) = transition_map_rotated(&base, &p, &z, &rm.rotation, &tol).unwrap();
    assert!(ok_direct && ok_rotated);
    let tails: f64 = direct.tails.iter().chain(&rotated.tails).sum();
    let gap = matrix_gap(&to_rows(&direct.matrix), &to_rows(&rotated.matrix));
    assert!(gap <= 10.0 * tails + 1e-12, "{gap}");

    let report = criterion_verdict(&g, &p, &z, &CriterionConfig::new(0.48, 1));
    assert_eq!(report.pinching.band, Band::Pass);
    assert_eq!(report.twisting.band, Band::Pass);
    // In the eigenframe ψ is a diagonal matrix times a rotation by θ, whose
    // row-normalized 1×1 minors are |cos θ| and |sin θ|.
    let minor = report.twisting.min_normalized_minor.unwrap();
    assert!((minor - theta.sin()).abs() < 1e-6, "{minor}");
}

#[test]
fn zero_rotation_reproduces_the_unperturbed_map() {
    let f = t4();
    let (p, z) = t4_loop(&f);
    let rm = rotate_at_homoclinic(
        &f,
        &p,
        &z,
        0.0,
        DEFAULT_CLEARANCE_STEPS,
        DEFAULT_BUNDLE_STEPS,
    )
    .unwrap();
    let x = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
    assert_eq!(fold(&rm.map.apply(&z.point)), fold(&f.apply(&z.point)));
    assert_eq!(rm.map.apply(&x), f.apply(&x));
    assert_eq!(rm.rotation, DMatrix::identity(4, 4));
}

#[test]
fn holonomy_needs_asymptotic_points() {
    let sys = TorusCocycle::near_identity(&cat(), 0.01).unwrap();
    let y = DVector::from_vec(vec![0.1, 0.2]);
    let z = DVector::from_vec(vec![0.4, 0.7]);
    assert!(matches!(
        smooth_holonomy(&sys, &y, &z, Side::Stable, &Tolerances::default()),
        Err(Error::NotAsymptotic { .. })
    ));
    let (h, converged) =
        smooth_holonomy(&sys, &y, &y, Side::Stable, &Tolerances::default()).unwrap();
    assert!(converged);
    assert_eq!(h.matrix, DMatrix::identity(2, 2));
}

#[test]
fn cross_validation_is_one_sided() {
    let f = t4();
    let (p, z) = t4_loop(&f);
    let coc = RestrictedCocycle::new(&f, BundleSide::Uu, 2, DEFAULT_BUNDLE_STEPS).unwrap();
    let mut report = criterion_verdict(&coc, &p, &z, &CriterionConfig::new(0.48, 1));
    let simple = estimate(vec![1.0, 0.0], vec![0.01, 0.01]);
    let merged = estimate(vec![0.0, 0.0], vec![1e-6, 1e-6]);
    let unclear = estimate(vec![0.01, 0.0], vec![0.01, 0.01]);
    assert_eq!(
        cross_validate(&report, &merged, 1e-3),
        Consistency::Inconclusive
    );
    report.verdict = Verdict::SimplePredicted;
    assert_eq!(
        cross_validate(&report, &simple, 1e-3),
        Consistency::Consistent
    );
    assert_eq!(
        cross_validate(&report, &merged, 1e-3),
        Consistency::Inconsistent
    );
    assert_eq!(
        cross_validate(&report, &unclear, 1e-3),
        Consistency::Inconclusive
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stable_holonomy_truncations_are_cauchy(x in prop::collection::vec(0.0..1.0f64, 2), t in -0.05..0.05f64) {
        let sys = TorusCocycle::near_identity(&cat(), 0.01).unwrap();
        let y = DVector::from_vec(x);
        let z = fold(&(&y + stable_direction() * t));
        for n in [20, 40, 80] {
            let short = truncated_holonomy(&sys, &y, &z, Side::Stable, n).unwrap();
            let long = truncated_holonomy(&sys, &y, &z, Side::Stable, 2 * n).unwrap();
            prop_assert!((&long.matrix - &short.matrix).amax() <= short.tail_bound + 1e-15);
        }
    }

    #[test]
    fn stable_holonomy_is_equivariant(x in prop::collection::vec(0.0..1.0f64, 2), t in -0.05..0.05f64) {
        let sys = TorusCocycle::near_identity(&cat(), 0.01).unwrap();
        let y = DVector::from_vec(x);
        let z = fold(&(&y + stable_direction() * t));
        let h = truncated_holonomy(&sys, &y, &z, Side::Stable, 200).unwrap();
        let h1 = truncated_holonomy(&sys, &sys.step(&y), &sys.step(&z), Side::Stable, 200).unwrap();
        let conj = sys.generator(&z) * &h.matrix * sys.generator(&y).try_inverse().unwrap();
        prop_assert!((h1.matrix - conj).amax() <= 10.0 * (h.tail_bound + h1.tail_bound) + 1e-13);
    }
}
