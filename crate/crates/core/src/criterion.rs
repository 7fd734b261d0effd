//! Pinching and twisting checks for cocycles over torus maps, and their
//! comparison with Monte-Carlo spectrum estimates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cocycle::{
    check_fiber_bunched, iterate, orbit_point, spectrum_gap_report, Cocycle, Simplicity,
    SpectrumEstimate,
};
use crate::error::{Error, Result};
use crate::holonomy::{
    holonomy_to_tolerance, HolonomyOperator, Side, MERGE_DISTANCE, SHADOWING_CONTRACTION,
};
use crate::linalg::{eigen_by_modulus, to_rows, EigenData, DEFAULT_RESIDUAL_TOL};
use crate::report::{
    decide, eigenbasis_form, pinching_from_eigen, twisting_check, Band, BunchingReport,
    CriterionReport, HomoclinicReport, HyperbolicityReport, PinchingReport, Provenance, Tolerances,
    TwistingReport, Verdict, REPORT_SCHEMA_VERSION,
};
use crate::shift::TransitionMap;
use crate::smooth::{
    check_support_clearance, estimate_unstable_bundle, fold, perturb_local_rotation,
    torus_distance, BundlePoint, HomoclinicDatum, PeriodicPointDatum, RestrictedCocycle, TorusMap,
};

/// Steps over which two points must approach each other to count as one leaf.
pub const LEAF_CHECK_STEPS: usize = 40;
/// Homoclinic points closer to tangency than this are rejected.
pub const MIN_TRANSVERSALITY: f64 = 1e-8;

/// Holonomy between two points after checking that their orbits converge in
/// the direction matching `side`.
pub fn smooth_holonomy<C: Cocycle>(
    sys: &C,
    y: &C::Point,
    z: &C::Point,
    side: Side,
    tol: &Tolerances,
) -> Result<(HolonomyOperator, bool)> {
    let d0 = sys.distance(y, z);
    if d0 > 0.0 {
        let dir = match side {
            Side::Stable => 1,
            Side::Unstable => -1,
        };
        let (mut a, mut b) = (y.clone(), z.clone());
        let mut closest = d0;
        for _ in 0..LEAF_CHECK_STEPS {
            a = orbit_point(sys, &a, dir);
            b = orbit_point(sys, &b, dir);
            closest = closest.min(sys.distance(&a, &b));
        }
        if !(closest < SHADOWING_CONTRACTION * d0 || closest < 1e3 * MERGE_DISTANCE) {
            return Err(Error::NotAsymptotic { side: side.name() });
        }
    }
    holonomy_to_tolerance(sys, y, z, side, tol)
}

/// Endpoints of a homoclinic loop: `periodic` has period `period`, the orbit
/// of `homoclinic` leaves it along the unstable leaf and returns after `l`
/// steps to the stable leaf of `f^l(periodic) = returned`.
#[derive(Debug, Clone)]
pub struct HomoclinicLoop<P> {
    pub periodic: P,
    pub period: usize,
    pub homoclinic: P,
    pub l: usize,
    pub returned: P,
}

/// `ψ = H^s_{f^l z, p} · F^l(z) · H^u_{p, z}`; the flag reports whether both
/// holonomies reached the tail target.
pub fn transition_map<C: Cocycle>(
    sys: &C,
    lp: &HomoclinicLoop<C::Point>,
    tol: &Tolerances,
) -> Result<(TransitionMap, bool)> {
    let (hu, ok_u) = smooth_holonomy(sys, &lp.periodic, &lp.homoclinic, Side::Unstable, tol)?;
    let middle = iterate(sys, &lp.homoclinic, lp.l as i64)?;
    let zl = orbit_point(sys, &lp.homoclinic, lp.l as i64);
    let (hs, ok_s) = smooth_holonomy(sys, &zl, &lp.returned, Side::Stable, tol)?;
    Ok((
        TransitionMap {
            matrix: hs.matrix * middle * hu.matrix,
            tails: vec![hu.tail_bound, hs.tail_bound],
            l: lp.l,
        },
        ok_u && ok_s,
    ))
}

/// Pinching of the return map `F^period` at a periodic point.
pub fn pinching_check<C: Cocycle>(
    sys: &C,
    periodic: &C::Point,
    period: usize,
    rel_gap: f64,
) -> Result<(PinchingReport, EigenData)> {
    let m = iterate(sys, periodic, period as i64)?;
    let eigen = eigen_by_modulus(&m, DEFAULT_RESIDUAL_TOL)?;
    Ok((pinching_from_eigen(&eigen, rel_gap), eigen))
}

/// Extra inputs to [`assess_loop`] beyond pinching and twisting.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub bunching: Option<BunchingReport>,
    pub hyperbolicity: Option<HyperbolicityReport>,
    pub transversality_angle: Option<f64>,
    pub assumptions: Vec<String>,
    pub blockers: Vec<String>,
    pub seeds: Vec<u64>,
}

fn failed_pinching() -> PinchingReport {
    PinchingReport {
        ok: false,
        band: Band::Borderline,
        moduli: Vec::new(),
        min_relative_gap: None,
    }
}

/// Pinching, transition map and twisting along a homoclinic loop, with
/// numerical failures turned into not-decided reasons.
pub fn assess_loop<C: Cocycle>(
    sys: &C,
    lp: &HomoclinicLoop<C::Point>,
    tol: &Tolerances,
    ctx: Context,
) -> CriterionReport {
    let mut blockers = ctx.blockers;
    let (pinching, eigen) = match pinching_check(sys, &lp.periodic, lp.period, tol.rel_gap) {
        Ok((p, e)) => (p, Some(e)),
        Err(e) => {
            blockers.push(format!("return map eigen-decomposition failed: {e}"));
            (failed_pinching(), None)
        }
    };
    let mut twisting = TwistingReport::not_applicable();
    let mut tails = Vec::new();
    let mut transition_matrix = Vec::new();
    match transition_map(sys, lp, tol) {
        Ok((psi, converged)) => {
            tails = psi.tails.clone();
            if !converged {
                if let Some(t) = tails.iter().find(|t| !(**t < tol.tail_target)) {
                    blockers.push(format!("holonomy tail {t:.3e} above target"));
                }
            }
            transition_matrix = to_rows(&psi.matrix);
            if let Some(e) = &eigen {
                match twisting_check(&psi.matrix, e, tol.minor_tol) {
                    Ok(t) => {
                        if let Some(v) = e
                            .real_vectors(DEFAULT_RESIDUAL_TOL)
                            .filter(|_| t.applicable)
                        {
                            if let Ok(c) = eigenbasis_form(&psi.matrix, &v) {
                                transition_matrix = to_rows(&c);
                            }
                        }
                        twisting = t;
                    }
                    Err(err) => blockers.push(format!("twisting check failed: {err}")),
                }
            }
        }
        Err(err) => blockers.push(format!("transition map failed: {err}")),
    }
    if let Some(h) = &ctx.hyperbolicity {
        if !h.ok {
            blockers.push(format!(
                "periodic point is not hyperbolic at rate {} (smallest rate {:.4})",
                h.chi, h.min_rate
            ));
        }
    }
    if let Some(a) = ctx.transversality_angle {
        if !(a > MIN_TRANSVERSALITY) {
            blockers.push(format!(
                "homoclinic intersection angle {a:.3e} is not transverse"
            ));
        }
    }
    let (verdict, reasons) = decide(&pinching, &twisting, ctx.bunching.as_ref(), &blockers);
    CriterionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        verdict,
        pinching,
        twisting,
        bunching: ctx.bunching,
        hyperbolicity: ctx.hyperbolicity,
        holonomy_tails: tails,
        homoclinic: HomoclinicReport {
            l: lp.l as u64,
            transversality_angle: ctx.transversality_angle,
        },
        transition_matrix,
        tolerances: *tol,
        assumptions: ctx.assumptions,
        reasons,
        provenance: Provenance {
            config_hash: None,
            seeds: ctx.seeds,
        },
    }
}

fn default_bunching_steps() -> usize {
    20
}

fn default_bunching_samples() -> usize {
    32
}

/// Parameters of [`criterion_verdict`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriterionConfig {
    /// Hyperbolicity rate of the periodic point; bunching is tested at half of it.
    pub chi: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_bunching_steps")]
    pub bunching_steps: usize,
    #[serde(default = "default_bunching_samples")]
    pub bunching_samples: usize,
    pub seed: u64,
}

impl CriterionConfig {
    pub fn new(chi: f64, seed: u64) -> Self {
        CriterionConfig {
            chi,
            tolerances: Tolerances::default(),
            bunching_steps: default_bunching_steps(),
            bunching_samples: default_bunching_samples(),
            seed,
        }
    }
}

/// Smallest `|log|λ||` per step over the eigenvalues of `Df^n` at the point.
pub fn hyperbolicity_rate(p: &PeriodicPointDatum) -> Result<f64> {
    let eigen = eigen_by_modulus(&p.derivative, DEFAULT_RESIDUAL_TOL)?;
    Ok(eigen
        .moduli()
        .into_iter()
        .map(|m| m.ln().abs() / p.period as f64)
        .fold(f64::INFINITY, f64::min))
}

/// Loop endpoints for a restricted cocycle. `l` is rounded up to a multiple
/// of the period so that `f^l(p) = p`.
pub fn smooth_loop(
    coc: &RestrictedCocycle,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
) -> Result<HomoclinicLoop<BundlePoint>> {
    let periodic = coc.point(&p.point)?;
    let homoclinic = coc.point(&z.point)?;
    let l = z.l.div_ceil(p.period) * p.period;
    Ok(HomoclinicLoop {
        returned: periodic.clone(),
        periodic,
        period: p.period,
        homoclinic,
        l,
    })
}

/// Transition map of `coc` at `p` through `z`.
pub fn transition_map_smooth(
    coc: &RestrictedCocycle,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
    tol: &Tolerances,
) -> Result<(TransitionMap, bool)> {
    transition_map(coc, &smooth_loop(coc, p, z)?, tol)
}

/// The transition map of `f ∘ h` computed from `f` alone, where `h` is a
/// local diffeomorphism at `z` with `Dh(z) = rotation` preserving `E(z)`:
/// `H^s · F^{l-1}(f z) · (E(fz)ᵀ Df_z · rotation · E(z)) · H^u`.
pub fn transition_map_rotated(
    coc: &RestrictedCocycle,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
    rotation: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<(TransitionMap, bool)> {
    let lp = smooth_loop(coc, p, z)?;
    let (hu, ok_u) = smooth_holonomy(coc, &lp.periodic, &lp.homoclinic, Side::Unstable, tol)?;
    let z1 = coc.step(&lp.homoclinic);
    let first = z1.frame.transpose()
        * coc.map().derivative(&lp.homoclinic.x)
        * rotation
        * &lp.homoclinic.frame;
    let rest = iterate(coc, &z1, lp.l as i64 - 1)?;
    let zl = orbit_point(coc, &z1, lp.l as i64 - 1);
    let (hs, ok_s) = smooth_holonomy(coc, &zl, &lp.returned, Side::Stable, tol)?;
    Ok((
        TransitionMap {
            matrix: hs.matrix * rest * first * hu.matrix,
            tails: vec![hu.tail_bound, hs.tail_bound],
            l: lp.l,
        },
        ok_u && ok_s,
    ))
}

/// The full check for a cocycle restricted to a strong bundle: bunching at
/// `chi / 2`, hyperbolicity of `p` at `chi`, pinching and twisting.
pub fn criterion_verdict(
    coc: &RestrictedCocycle,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
    config: &CriterionConfig,
) -> CriterionReport {
    let tol = &config.tolerances;
    let mut ctx = Context {
        assumptions: vec![
            "periodic point is homoclinically related to the reference measure (analytic for linear models and their local perturbations; not checked numerically)".into(),
        ],
        transversality_angle: Some(z.transversality_angle),
        seeds: vec![config.seed],
        ..Context::default()
    };
    let half = config.chi / 2.0;
    match check_fiber_bunched(
        coc,
        half,
        config.bunching_steps,
        config.bunching_samples,
        config.seed,
    ) {
        Ok(b) => {
            ctx.bunching = Some(BunchingReport {
                ok: b.ok,
                chi: half,
                fitted_c: b.fitted_c,
                fitted_lambda: b.fitted_lambda,
            })
        }
        Err(e) => ctx
            .blockers
            .push(format!("fiber bunching check failed: {e}")),
    }
    match hyperbolicity_rate(p) {
        Ok(rate) => {
            ctx.hyperbolicity = Some(HyperbolicityReport {
                ok: rate > config.chi,
                chi: config.chi,
                min_rate: rate,
            })
        }
        Err(e) => ctx
            .blockers
            .push(format!("periodic point spectrum failed: {e}")),
    }
    match smooth_loop(coc, p, z) {
        Ok(lp) => assess_loop(coc, &lp, tol, ctx),
        Err(e) => {
            ctx.blockers
                .push(format!("bundle frames at the loop endpoints failed: {e}"));
            let (verdict, reasons) = decide(
                &failed_pinching(),
                &TwistingReport::not_applicable(),
                ctx.bunching.as_ref(),
                &ctx.blockers,
            );
            CriterionReport {
                schema_version: REPORT_SCHEMA_VERSION,
                verdict,
                pinching: failed_pinching(),
                twisting: TwistingReport::not_applicable(),
                bunching: ctx.bunching,
                hyperbolicity: ctx.hyperbolicity,
                holonomy_tails: Vec::new(),
                homoclinic: HomoclinicReport {
                    l: z.l as u64,
                    transversality_angle: ctx.transversality_angle,
                },
                transition_matrix: Vec::new(),
                tolerances: *tol,
                assumptions: ctx.assumptions,
                reasons,
                provenance: Provenance {
                    config_hash: None,
                    seeds: ctx.seeds,
                },
            }
        }
    }
}

/// A map perturbed by a local rotation at a homoclinic point.
#[derive(Debug, Clone)]
pub struct RotatedMap {
    pub map: TorusMap,
    /// `Dh` at the homoclinic point.
    pub rotation: DMatrix<f64>,
    pub radius: f64,
    /// Closest approach of the checked orbits to the center.
    pub clearance: f64,
}

/// Half the distance from `z` to the rest of its orbit and to the orbit of `p`
/// over `steps` iterates each way, capped below `1/2`.
pub fn support_radius(
    f: &TorusMap,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
    steps: usize,
) -> f64 {
    let mut closest = f64::INFINITY;
    let mut y = p.point.clone();
    for _ in 0..p.period {
        closest = closest.min(torus_distance(&y, &z.point));
        y = fold(&f.apply(&y));
    }
    let (mut fwd, mut bwd) = (z.point.clone(), z.point.clone());
    for _ in 0..steps {
        fwd = fold(&f.apply(&fwd));
        bwd = fold(&f.apply_inverse(&bwd));
        closest = closest
            .min(torus_distance(&fwd, &z.point))
            .min(torus_distance(&bwd, &z.point));
    }
    (0.5 * closest).min(0.49)
}

/// `f ∘ h` with `h` rotating the `k = 2` strong unstable plane at `z` by `theta`.
///
/// The support radius comes from [`support_radius`] and is then verified
/// against the orbits of `p` and `z` for `steps` iterates.
pub fn rotate_at_homoclinic(
    f: &TorusMap,
    p: &PeriodicPointDatum,
    z: &HomoclinicDatum,
    theta: f64,
    steps: usize,
    bundle_steps: usize,
) -> Result<RotatedMap> {
    let plane = estimate_unstable_bundle(f, &z.point, 2, bundle_steps)?.frame;
    let radius = support_radius(f, p, z, steps);
    if !(radius > 0.0) {
        return Err(Error::SupportViolation { step: 0 });
    }
    let g = perturb_local_rotation(f, &z.point, &plane, theta, radius)?;
    let cp = check_support_clearance(f, &p.point, &z.point, radius, steps.max(p.period), false)?;
    let cz = check_support_clearance(f, &z.point, &z.point, radius, steps, true)?;
    let rotation = g.bumps().last().expect("just added").jacobian(&z.point);
    Ok(RotatedMap {
        map: g,
        rotation,
        radius,
        clearance: cp.min(cz),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Consistency {
    Consistent,
    Inconsistent,
    Inconclusive,
}

/// A simple-predicted verdict is contradicted only by a confidently
/// non-simple spectrum; every other verdict is compatible with anything.
pub fn cross_validate(
    report: &CriterionReport,
    est: &SpectrumEstimate,
    gap_tol: f64,
) -> Consistency {
    if report.verdict != Verdict::SimplePredicted {
        return Consistency::Inconclusive;
    }
    match spectrum_gap_report(est, gap_tol).simple {
        Simplicity::Simple => Consistency::Consistent,
        Simplicity::NotSimple => Consistency::Inconsistent,
        Simplicity::NotDecided => Consistency::Inconclusive,
    }
}

/// Largest entrywise difference of two row-major matrices; infinite on shape mismatch.
pub fn matrix_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// Entries off the diagonal, largest in absolute value.
pub fn max_off_diagonal(m: &DMatrix<f64>) -> f64 {
    let mut out: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                out = out.max(m[(i, j)].abs());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::ConstantCocycle;
    use crate::linalg::rotation2;

    fn estimate(exponents: Vec<f64>, err: f64) -> SpectrumEstimate {
        SpectrumEstimate {
            std_errors: vec![err; exponents.len()],
            exponents,
            steps: 1000,
            renorm_period: 1,
            seed: 0,
            transient: 100,
            batches: 20,
        }
    }

    fn constant_report(m: DMatrix<f64>) -> CriterionReport {
        let sys = ConstantCocycle::new(m).unwrap();
        let lp = HomoclinicLoop {
            periodic: 0,
            period: 1,
            homoclinic: 1,
            l: 1,
            returned: 0,
        };
        assess_loop(&sys, &lp, &Tolerances::default(), Context::default())
    }

    #[test]
    fn equal_endpoints_give_identity() {
        let sys = ConstantCocycle::new(rotation2(0.4)).unwrap();
        let (h, ok) = smooth_holonomy(&sys, &2, &2, Side::Stable, &Tolerances::default()).unwrap();
        assert!(ok);
        assert_eq!(h.matrix, DMatrix::identity(2, 2));
        assert_eq!(h.tail_bound, 0.0);
    }

    #[test]
    fn unrelated_points_block_the_verdict() {
        // Distinct points of a constant cocycle never approach each other.
        let r = constant_report(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        assert_eq!(r.verdict, Verdict::NotDecided);
        assert!(
            r.reasons.iter().any(|m| m.contains("asymptotic")),
            "{:?}",
            r.reasons
        );
        let r = constant_report(rotation2(0.4));
        assert_eq!(r.verdict, Verdict::FailsPinching);
    }

    #[test]
    fn cross_validation_is_one_sided() {
        let mut r = constant_report(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]));
        let simple = estimate(vec![0.5, -0.5], 1e-3);
        let merged = estimate(vec![0.0, 0.0], 1e-4);
        assert_eq!(cross_validate(&r, &simple, 1e-2), Consistency::Inconclusive);
        r.verdict = Verdict::SimplePredicted;
        assert_eq!(cross_validate(&r, &simple, 1e-2), Consistency::Consistent);
        assert_eq!(cross_validate(&r, &merged, 1e-2), Consistency::Inconsistent);
        assert_eq!(
            cross_validate(&r, &estimate(vec![0.01, 0.0], 0.1), 1e-2),
            Consistency::Inconclusive
        );
    }

    #[test]
    fn off_diagonal_and_gap_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 2.0, 5.0]);
        assert_eq!(max_off_diagonal(&m), 3.0);
        assert_eq!(matrix_gap(&[vec![1.0, 2.0]], &[vec![1.5, 2.0]]), 0.5);
        assert!(matrix_gap(&[vec![1.0]], &[vec![1.0, 2.0]]).is_infinite());
    }
}
