//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pinchtwist::cocycle::{
    bunching_constant, check_fiber_bunched, lyapunov_spectrum_qr, Cocycle, ConstantCocycle,
    SpectrumEstimate,
};
use pinchtwist::criterion::{
    criterion_verdict, matrix_gap, max_off_diagonal, rotate_at_homoclinic, transition_map_rotated,
    transition_map_smooth, CriterionConfig,
};
use pinchtwist::holonomy::{truncated_holonomy, Side};
use pinchtwist::linalg::{all_minors_nonzero, from_rows, to_rows};
use pinchtwist::report::{Tolerances, Verdict};
use pinchtwist::shift::{
    locally_constant_cocycle, make_homoclinic, simplicity_check_shift, MarkovShift, PeriodicWord,
    METRIC_WINDOW,
};
use pinchtwist::smooth::{
    derivative_cocycle, fold, homoclinic_linear, linear_anosov, periodic_points_linear,
    sample_torus, standard_map, BundleSide, RestrictedCocycle, TorusCocycle, TorusMap,
    DEFAULT_BUNDLE_STEPS,
};

/// Sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failed: bool,
}

impl Checks {
    fn check(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        if ok {
            self.notes.push(note);
        } else {
            self.failed = true;
            self.notes.push(format!("NOT {note}"));
        }
    }
}

fn cat() -> TorusMap {
    linear_anosov(vec![vec![2, 1], vec![1, 1]]).unwrap()
}

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

fn separated(est: &SpectrumEstimate, i: usize) -> (f64, f64) {
    let gap = est.exponents[i] - est.exponents[i + 1];
    let sigma = (est.std_errors[i].powi(2) + est.std_errors[i + 1].powi(2)).sqrt();
    (gap, sigma)
}

fn cat_spectrum(c: &mut Checks) {
    let exact = common::unimodular_exponent(3.0);
    c.check(
        (exact - 0.9624237).abs() < 1e-7,
        format!("oracle log((3+√5)/2) = {exact:.7}"),
    );
    let sys = derivative_cocycle(&cat());
    let start = Instant::now();
    let est = lyapunov_spectrum_qr(&sys, &sample_torus(2, 1), 100_000, 1, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = (est.exponents[0] - exact)
        .abs()
        .max((est.exponents[1] + exact).abs());
    c.check(err < 1e-4, format!("|λ ∓ {exact:.7}| = {err:.2e} < 1e-4"));
    c.check(secs < 5.0, format!("N=1e5 in {secs:.2}s < 5s"));
}

fn volume_sum_rule(c: &mut Checks) {
    for lambda in [0.1, 0.5, 1.0] {
        let sys = derivative_cocycle(&standard_map(lambda));
        let est = lyapunov_spectrum_qr(&sys, &sample_torus(2, 7), 1_000_000, 1, 7).unwrap();
        let (sum, se) = (est.sum(), est.sum_std_error());
        c.check(
            sum.abs() <= 3.0 * se,
            format!("λ={lambda}: |Σ|={:.1e} ≤ 3σ={:.1e}", sum.abs(), 3.0 * se),
        );
    }
}

fn shift_example(c: &mut Checks) {
    let shift = MarkovShift::full(2, 1.0).unwrap();
    let r = common::rotation(FRAC_PI_4);
    let sys = locally_constant_cocycle(&shift, vec![diag(2.0, 0.5), r], 1.0).unwrap();
    let p = PeriodicWord::new(&shift, vec![0]).unwrap();
    let u = make_homoclinic(&shift, &p, &[1]).unwrap();
    let tol = Tolerances::default();
    let report = simplicity_check_shift(&sys, &p, &u, &tol);
    c.check(
        report.verdict == Verdict::SimplePredicted,
        format!("verdict {:?}", report.verdict),
    );
    c.check(
        report.pinching.min_relative_gap == Some(3.0),
        "pinching gap 3.0",
    );

    // ψ = R_{π/4}·diag(2, 1/2); its rows are (√2, -1/(2√2)) and (√2, 1/(2√2)).
    let (big, small) = (2f64.sqrt(), 1.0 / (2.0 * 2f64.sqrt()));
    let row_norm = (big * big + small * small).sqrt();
    let oracle = small / row_norm;
    let minor = report.twisting.min_normalized_minor.unwrap_or(f64::NAN);
    c.check(
        (minor - oracle).abs() < 1e-12 && (oracle - 1.0 / 17f64.sqrt()).abs() < 1e-15,
        format!("min normalized minor {minor:.12} = 1/√17"),
    );

    let n = 1_000_000;
    let mc = sys.with_sample_length(n + 1000 + 2 * METRIC_WINDOW as usize + 16);
    let est = lyapunov_spectrum_qr(&mc, &mc.sample(5), n, 1, 5).unwrap();
    let (gap, sigma) = separated(&est, 0);
    c.check(
        gap > 3.0 * sigma,
        format!("λ₁-λ₂ = {gap:.4} > 3σ = {:.1e}", 3.0 * sigma),
    );
    c.check(
        est.sum().abs() <= 3.0 * est.sum_std_error(),
        format!("|λ₁+λ₂| = {:.1e} ≤ 3σ", est.sum().abs()),
    );

    let rotations = locally_constant_cocycle(
        &shift,
        vec![common::rotation(FRAC_PI_4), common::rotation(1.0)],
        1.0,
    )
    .unwrap();
    let v = simplicity_check_shift(&rotations, &p, &u, &tol).verdict;
    c.check(v == Verdict::FailsPinching, format!("rotations {v:?}"));
    let diagonals =
        locally_constant_cocycle(&shift, vec![diag(2.0, 0.5), diag(3.0, 1.0 / 3.0)], 1.0).unwrap();
    let v = simplicity_check_shift(&diagonals, &p, &u, &tol).verdict;
    c.check(v == Verdict::FailsTwisting, format!("diagonals {v:?}"));
}

fn holonomy_contract(c: &mut Checks) {
    let sys = TorusCocycle::near_identity(&cat(), 0.01).unwrap();
    let vs = DVector::from_vec(vec![1.0, -(1.0 + 5f64.sqrt()) / 2.0]).normalize();
    let n = 200;
    let (mut worst_rate, mut worst_cauchy, mut worst_equiv) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..32u64 {
        let y = sample_torus(2, 100 + i);
        let t = 0.01 + 0.04 * (i as f64 / 31.0);
        let z = fold(&(&y + &vs * if i % 2 == 0 { t } else { -t }));
        let h = truncated_holonomy(&sys, &y, &z, Side::Stable, n).unwrap();
        let h2 = truncated_holonomy(&sys, &y, &z, Side::Stable, 2 * n).unwrap();
        let h1 = truncated_holonomy(&sys, &sys.step(&y), &sys.step(&z), Side::Stable, n).unwrap();
        let conj = sys.generator(&z) * &h.matrix * sys.generator(&y).try_inverse().unwrap();
        worst_rate = worst_rate.max(h.rate);
        worst_cauchy = worst_cauchy.max((&h2.matrix - &h.matrix).amax() / h.tail_bound);
        worst_equiv = worst_equiv.max((&h1.matrix - conj).amax() / h.tail_bound.max(h1.tail_bound));
    }
    c.check(worst_rate < 1.0, format!("fitted ρ ≤ {worst_rate:.3} < 1"));
    c.check(
        worst_cauchy <= 1.0,
        format!("‖H_2N-H_N‖/tail ≤ {worst_cauchy:.1e} ≤ 1"),
    );
    c.check(
        worst_equiv <= 10.0,
        format!("equivariance/tail ≤ {worst_equiv:.1e} ≤ 10"),
    );
}

fn twisting_equivalence(c: &mut Checks) {
    let tol = 1e-6;
    for d in [3, 4] {
        let (mut agree, mut compared, mut failing) = (0, 0, 0);
        for seed in 0..1000u64 {
            let m = common::twisting_sample(d, seed);
            let test = all_minors_nonzero(&m, tol).unwrap();
            if test.min_margin >= tol / 10.0 && test.min_margin <= tol {
                continue;
            }
            compared += 1;
            failing += usize::from(!test.ok);
            agree += usize::from(test.ok == common::twisting_by_rank(&m, 1e-10));
        }
        c.check(
            agree == compared && compared >= 990,
            format!("d={d}: {agree}/{compared} agree ({failing} non-twisting)"),
        );
    }
}

fn t4_construction(c: &mut Checks) {
    let start = Instant::now();
    let f = linear_anosov(vec![
        vec![5, 3, 0, 0],
        vec![3, 2, 0, 0],
        vec![0, 0, 2, 1],
        vec![0, 0, 1, 1],
    ])
    .unwrap();
    let top = common::unimodular_exponent(7.0);
    let next = common::unimodular_exponent(3.0);
    c.check(
        (top.exp() - 6.854102).abs() < 1e-6 && (next.exp() - 2.618034).abs() < 1e-6,
        "oracle eigenvalues 6.854102, 2.618034",
    );
    let p = periodic_points_linear(&f, 1).unwrap().remove(0);
    let z = homoclinic_linear(&f, &[1, 0, 1, 0]).unwrap();
    let base = RestrictedCocycle::new(&f, BundleSide::Uu, 2, DEFAULT_BUNDLE_STEPS).unwrap();
    let config = CriterionConfig::new(0.48, 1);
    let report = criterion_verdict(&base, &p, &z, &config);
    let off = max_off_diagonal(&from_rows(&report.transition_matrix).unwrap());
    c.check(
        report.verdict == Verdict::FailsTwisting && off < 1e-8,
        format!("unperturbed {:?}, off-diagonal {off:.1e}", report.verdict),
    );

    let rm = rotate_at_homoclinic(&f, &p, &z, 0.3, 200, DEFAULT_BUNDLE_STEPS).unwrap();
    let g = RestrictedCocycle::with_reference(
        &rm.map,
        BundleSide::Uu,
        2,
        DEFAULT_BUNDLE_STEPS,
        base.reference().clone(),
    )
    .unwrap();
    let report = criterion_verdict(&g, &p, &z, &config);
    c.check(
        report.verdict == Verdict::SimplePredicted,
        format!("perturbed {:?} {:?}", report.verdict, report.reasons),
    );
    let tol = Tolerances::default();
    let (direct, _) = transition_map_smooth(&g, &p, &z, &tol).unwrap();
    let (rotated, _) = transition_map_rotated(&base, &p, &z, &rm.rotation, &tol).unwrap();
    let gap = matrix_gap(&to_rows(&direct.matrix), &to_rows(&rotated.matrix));
    let tails: f64 = direct.tails.iter().chain(&rotated.tails).sum();
    c.check(
        gap <= 10.0 * tails,
        format!(
            "two paths differ by {gap:.1e} ≤ 10·tails = {:.1e}",
            10.0 * tails
        ),
    );

    let est = lyapunov_spectrum_qr(&g, &g.sample(3), 1_000_000, 1, 3).unwrap();
    let (e1, e2) = (est.exponents[0], est.exponents[1]);
    let (gap, sigma) = separated(&est, 0);
    c.check(
        (e1 - top).abs() < 0.05 && (e2 - next).abs() < 0.05 && gap > 3.0 * sigma,
        format!(
            "E^uu exponents {e1:.4}, {e2:.4} (gap {gap:.3} > 3σ = {:.1e})",
            3.0 * sigma
        ),
    );
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 120.0, format!("{secs:.1}s < 120s"));
}

fn bunching_closed_forms(c: &mut Checks) {
    let field: pinchtwist::smooth::Field = std::sync::Arc::new(|x: &DVector<f64>| {
        DMatrix::from_element(1, 1, (3.0 * x[0]).sin().exp())
    });
    let scalar = TorusCocycle::new(&cat(), 1, field, 1.0).unwrap();
    let c0 = bunching_constant(&scalar, 20, 100, 2).unwrap().c_hat;
    c.check(c0.abs() < 1e-8, format!("1-dim c_hat = {c0:.1e}"));
    for (a, b) in [(2.0, 0.5), (5.0, 1.0), (1.5, 1.2)] {
        let sys = ConstantCocycle::new(diag(a, b)).unwrap();
        let est = bunching_constant(&sys, 20, 100, 2).unwrap().c_hat;
        let ratio = (a / b).ln();
        c.check(
            (est - ratio).abs() < 1e-6,
            format!("diag({a},{b}) c_hat err {:.1e}", (est - ratio).abs()),
        );
        let mut agree = true;
        for chi in [0.5 * ratio, 0.99 * ratio, 1.01 * ratio, 2.0 * ratio] {
            let fb = check_fiber_bunched(&sys, chi, 20, 1, 2).unwrap();
            let expect = ratio < chi;
            agree &= fb.ok == expect
                && (fb.forward.log_lambda_upper < 0.0) == expect
                && (fb.backward.log_lambda_upper < 0.0) == expect;
        }
        c.check(agree, format!("diag({a},{b}) checker ok ⇔ log ratio < χ"));
    }
}

fn determinism(c: &mut Checks) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/configs");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    let payload = |path: &Path, threads: &str| -> String {
        let out = Command::new(env!("CARGO_BIN_EXE_pinchtwist"))
            .arg("--config")
            .arg(path)
            .args(["--threads", threads])
            .output()
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap_or_default();
        v["payload"].to_string()
    };
    for path in paths
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
    {
        let a = payload(path, "1");
        let b = payload(path, "1");
        let four = payload(path, "4");
        let name = path.file_name().unwrap().to_string_lossy();
        c.check(a != "null" && a == b && a == four, format!("{name}"));
    }
}

type Criterion = (&'static str, fn(&mut Checks));

fn main() {
    let criteria: [Criterion; 8] = [
        ("cat-map spectrum", cat_spectrum),
        ("volume sum rule", volume_sum_rule),
        ("shift criterion and counterexamples", shift_example),
        ("holonomy contract", holonomy_contract),
        ("twisting test equivalence", twisting_equivalence),
        ("T4 rotation construction", t4_construction),
        ("bunching estimator closed forms", bunching_closed_forms),
        ("determinism across runs and threads", determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut checks = Checks::default();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&mut checks)));
        if outcome.is_err() {
            checks.failed = true;
            checks.notes.push("panicked".into());
        }
        failures += usize::from(checks.failed);
        println!(
            "criterion {} {}: {} [{}] ({:.1}s)",
            i + 1,
            name,
            if checks.failed { "FAIL" } else { "PASS" },
            checks.notes.join("; "),
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
