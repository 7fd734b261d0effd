//! Periodic and homoclinic points of torus maps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::map::{exact_det, fold, torus_distance, TorusMap};
use crate::error::{Error, Result};
use crate::linalg::{eigen_by_modulus, qr_positive, DEFAULT_RESIDUAL_TOL};

/// Largest `|det(A^n - I)|` accepted by [`periodic_points_linear`].
pub const MAX_PERIODIC_COUNT: i128 = 100_000;
/// Default Newton residual tolerance.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
/// Default Newton iteration budget.
pub const DEFAULT_NEWTON_ITERATIONS: usize = 50;
/// Iterates checked on each side of a homoclinic point.
pub const HOMOCLINIC_CHECK_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPointDatum {
    pub point: DVector<f64>,
    pub period: usize,
    /// `Df^n` along the orbit of the point.
    pub derivative: DMatrix<f64>,
    /// Smallest `||λ| - 1|` over the eigenvalues of `derivative`.
    pub hyperbolicity_margin: f64,
}

fn datum(map: &TorusMap, point: DVector<f64>, period: usize) -> Result<PeriodicPointDatum> {
    let d = map.dim();
    let mut derivative = DMatrix::identity(d, d);
    let mut y = point.clone();
    for _ in 0..period {
        derivative = map.derivative(&y) * derivative;
        y = map.apply(&y);
    }
    let eigen = eigen_by_modulus(&derivative, DEFAULT_RESIDUAL_TOL)?;
    let hyperbolicity_margin = eigen
        .moduli()
        .into_iter()
        .map(|m| (m - 1.0).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(PeriodicPointDatum {
        point,
        period,
        derivative,
        hyperbolicity_margin,
    })
}

fn int_pow_minus_identity(a: &[Vec<i64>], n: usize) -> Result<Vec<Vec<i64>>> {
    let d = a.len();
    let mut p: Vec<Vec<i64>> = (0..d)
        .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
        .collect();
    for _ in 0..n {
        let mut next = vec![vec![0i64; d]; d];
        for i in 0..d {
            for j in 0..d {
                let mut s: i64 = 0;
                for k in 0..d {
                    s = p[i][k]
                        .checked_mul(a[k][j])
                        .and_then(|v| s.checked_add(v))
                        .ok_or_else(|| Error::Overflow(format!("A^{n} has entries beyond i64")))?;
                }
                next[i][j] = s;
            }
        }
        p = next;
    }
    for (i, row) in p.iter_mut().enumerate() {
        row[i] -= 1;
    }
    Ok(p)
}

/// All points with `A^n x ≡ x mod Z^d`, that is `x = (A^n - I)⁻¹m mod Z^d`.
///
/// The list has exactly `|det(A^n - I)|` entries, sorted lexicographically.
pub fn periodic_points_linear(map: &TorusMap, n: usize) -> Result<Vec<PeriodicPointDatum>> {
    let a = map.integer_matrix().ok_or_else(|| {
        Error::InvalidInput("periodic point enumeration needs a linear model".into())
    })?;
    if !map.bumps().is_empty() || map.is_inverted() {
        return Err(Error::InvalidInput(
            "periodic point enumeration needs an unperturbed linear model".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let d = a.len();
    let b = int_pow_minus_identity(a, n)?;
    let det = exact_det(&b);
    if det == 0 {
        return Err(Error::DegeneratePeriod { n });
    }
    if det.abs() > MAX_PERIODIC_COUNT {
        return Err(Error::InvalidInput(format!(
            "{} periodic points exceed the limit {MAX_PERIODIC_COUNT}",
            det.abs()
        )));
    }
    let bf = DMatrix::from_fn(d, d, |i, j| b[i][j] as f64);
    let lu = bf.clone().lu();
    // B maps [0,1)^d onto a parallelepiped; scan the integer points of its bounding box.
    let lo: Vec<i64> = b
        .iter()
        .map(|r| r.iter().filter(|v| **v < 0).sum())
        .collect();
    let hi: Vec<i64> = b
        .iter()
        .map(|r| r.iter().filter(|v| **v > 0).sum())
        .collect();
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut m: Vec<i64> = lo.clone();
    loop {
        let mv = DVector::from_fn(d, |i, _| m[i] as f64);
        let x = lu
            .solve(&mv)
            .ok_or_else(|| Error::SingularMatrix("A^n - I".into()))?;
        if x.iter().all(|v| *v > -1e-9 && *v < 1.0 - 1e-9) {
            let x = fold(&x.map(|v| if v.abs() < 1e-9 { 0.0 } else { v }));
            if !found.iter().any(|y| torus_distance(y, &x) < 1e-9) {
                found.push(x);
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                found.sort_by(|p, q| {
                    p.iter()
                        .zip(q.iter())
                        .map(|(a, b)| a.total_cmp(b))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                if found.len() as i128 != det.abs() {
                    return Err(Error::NoConvergence(format!(
                        "found {} periodic points, expected {}",
                        found.len(),
                        det.abs()
                    )));
                }
                return found
                    .into_iter()
                    .map(|x| {
                        let y = map.iterate_lift(&x, n as i64);
                        if torus_distance(&y, &x) > 1e-10 {
                            return Err(Error::NoConvergence("periodic point check".into()));
                        }
                        datum(map, x, n)
                    })
                    .collect();
            }
            m[i] += 1;
            if m[i] <= hi[i] {
                break;
            }
            m[i] = lo[i];
            i += 1;
        }
    }
}

/// Newton's method for `g^n(x) = x` on the cover.
pub fn newton_refine_periodic(
    map: &TorusMap,
    x0: &DVector<f64>,
    n: usize,
    tol: f64,
    max_iterations: usize,
) -> Result<PeriodicPointDatum> {
    if n == 0 {
        return Err(Error::InvalidInput("period must be positive".into()));
    }
    let d = map.dim();
    let mut x = x0.clone();
    for _ in 0..=max_iterations {
        let mut y = x.clone();
        let mut jac = DMatrix::identity(d, d);
        for _ in 0..n {
            jac = map.derivative(&y) * jac;
            y = map.apply(&y);
        }
        let shift = (&y - &x).map(f64::round);
        let residual = &y - &x - shift;
        if residual.amax() < tol {
            return datum(map, fold(&x), n);
        }
        let step = (jac - DMatrix::identity(d, d))
            .lu()
            .solve(&residual)
            .ok_or(Error::SingularJacobian)?;
        x -= step;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularJacobian);
        }
    }
    Err(Error::NoConvergence(format!(
        "Newton did not reach {tol:e} in {max_iterations} iterations"
    )))
}

/// A transverse homoclinic point of the fixed point at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicDatum {
    pub point: DVector<f64>,
    /// Forward steps after which the orbit is within 0.1 of the fixed point.
    pub l: usize,
    /// Smallest principal angle between the unstable and stable directions.
    pub transversality_angle: f64,
    /// Fitted forward and backward contraction ratios of the distance to the fixed point.
    pub forward_ratio: f64,
    pub backward_ratio: f64,
}

/// Spectral projectors of `a` onto its expanding and contracting parts.
pub fn spectral_projectors(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = a.nrows();
    let eigen = eigen_by_modulus(a, DEFAULT_RESIDUAL_TOL)?;
    let v = DMatrix::from_fn(d, d, |i, j| eigen.vectors[j][i]);
    let vinv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("eigenvector matrix".into()))?;
    let mask = |expanding: bool| {
        let diag = DMatrix::from_fn(d, d, |i, j| {
            let m = eigen.values[i].norm();
            if i == j && (m > 1.0) == expanding {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        (&v * diag * &vinv).map(|c| c.re)
    };
    Ok((mask(true), mask(false)))
}

fn ratio_fit(dists: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dists
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 1e-300)
        .map(|(i, v)| (i as f64, v.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx).exp()
}

/// `z = P_u m mod Z^d`: it lies on the unstable line through the origin and
/// differs from `-P_s m` by the lattice vector `m`, so it is also on the
/// stable manifold of the origin.
pub fn homoclinic_linear(map: &TorusMap, m: &[i64]) -> Result<HomoclinicDatum> {
    let a = map.integer_matrix().ok_or_else(|| {
        Error::InvalidInput("homoclinic construction needs a linear model".into())
    })?;
    let d = a.len();
    if m.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "lattice vector of length {}",
            m.len()
        )));
    }
    if m.iter().all(|v| *v == 0) {
        return Err(Error::InvalidLattice(
            "m = 0 gives the fixed point itself".into(),
        ));
    }
    let af = map.unperturbed().linear_part();
    let (pu, ps) = spectral_projectors(&af)?;
    let mv = DVector::from_fn(d, |i, _| m[i] as f64);
    let unstable = &pu * &mv;
    let stable = -(&ps * &mv);
    if unstable.norm() < 1e-12 || stable.norm() < 1e-12 {
        return Err(Error::InvalidLattice(
            "m lies in an invariant subspace; the point is not homoclinic".into(),
        ));
    }
    let point = fold(&unstable);

    let ainv = af.clone().try_inverse().expect("unimodular");
    let mut fwd = Vec::with_capacity(HOMOCLINIC_CHECK_STEPS + 1);
    let mut bwd = Vec::with_capacity(HOMOCLINIC_CHECK_STEPS + 1);
    let (mut s, mut u) = (stable.clone(), unstable.clone());
    for _ in 0..=HOMOCLINIC_CHECK_STEPS {
        fwd.push(s.norm());
        bwd.push(u.norm());
        // Re-projecting keeps roundoff from leaking into the expanding directions.
        s = &ps * (&af * s);
        u = &pu * (&ainv * u);
    }
    let forward_ratio = ratio_fit(&fwd);
    let backward_ratio = ratio_fit(&bwd);
    if !(forward_ratio < 1.0 && backward_ratio < 1.0) {
        return Err(Error::NotAsymptotic { side: "stable" });
    }
    let l = fwd.iter().position(|v| *v < 0.1).unwrap_or(0).max(1);

    let e_u = range_basis(&pu);
    let e_s = range_basis(&ps);
    let transversality_angle = smallest_angle(&e_u, &e_s);
    Ok(HomoclinicDatum {
        point,
        l,
        transversality_angle,
        forward_ratio,
        backward_ratio,
    })
}

/// Orthonormal basis of the range of a projector (nonzero singular values are at least 1).
fn range_basis(p: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = p.clone().svd(true, false);
    let u = svd.u.expect("requested");
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|i| svd.singular_values[*i] > 0.5)
        .map(|i| u.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

fn smallest_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let uu = qr_positive(u).map(|x| x.0).unwrap_or_else(|_| u.clone());
    let vv = qr_positive(v).map(|x| x.0).unwrap_or_else(|_| v.clone());
    let s = (uu.transpose() * vv).singular_values();
    s.iter()
        .copied()
        .fold(0.0f64, f64::max)
        .clamp(0.0, 1.0)
        .acos()
}

/// Default orbit horizon for [`check_support_clearance`].
pub const DEFAULT_CLEARANCE_STEPS: usize = 200;

/// Closest approach of the orbit of `start` under `f` to `center`, over steps
/// `-steps..=steps` (step 0 skipped when `skip_start`).
///
/// Fails with the first offending step if the orbit enters the ball.
pub fn check_support_clearance(
    f: &TorusMap,
    start: &DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
    steps: usize,
    skip_start: bool,
) -> Result<f64> {
    let mut closest = f64::INFINITY;
    let mut visit = |x: &DVector<f64>, step: i64| -> Result<()> {
        if step == 0 && skip_start {
            return Ok(());
        }
        let dist = torus_distance(x, center);
        if dist < radius {
            return Err(Error::SupportViolation { step });
        }
        closest = closest.min(dist);
        Ok(())
    };
    visit(start, 0)?;
    let (mut fwd, mut bwd) = (start.clone(), start.clone());
    for n in 1..=steps as i64 {
        fwd = fold(&f.apply(&fwd));
        bwd = fold(&f.apply_inverse(&bwd));
        visit(&fwd, n)?;
        visit(&bwd, -n)?;
    }
    Ok(closest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::map::{affine_anosov, linear_anosov};

    fn cat() -> TorusMap {
        linear_anosov(vec![vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn cat_fixed_and_period_two() {
        let one = periodic_points_linear(&cat(), 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].point.amax() < 1e-12);
        let two = periodic_points_linear(&cat(), 2).unwrap();
        assert_eq!(two.len(), 5);
    }

    #[test]
    fn newton_recovers_shifted_fixed_point() {
        let c = DVector::from_vec(vec![0.25, 0.25]);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let b = &c - &a * &c;
        let g = affine_anosov(vec![vec![2, 1], vec![1, 1]], Some(b)).unwrap();
        let p =
            newton_refine_periodic(&g, &DVector::from_vec(vec![0.2, 0.3]), 1, 1e-12, 50).unwrap();
        assert!(torus_distance(&p.point, &c) < 1e-12);
    }

    #[test]
    fn clearance_detects_return() {
        let f = cat();
        let origin = DVector::zeros(2);
        assert!(matches!(
            check_support_clearance(&f, &origin, &origin, 0.1, 10, false),
            Err(Error::SupportViolation { step: 0 })
        ));
        let h = homoclinic_linear(&f, &[1, 0]).unwrap();
        let c = check_support_clearance(&f, &origin, &h.point, 0.01, 10, false).unwrap();
        assert!(c >= 0.01);
    }

    #[test]
    fn homoclinic_rejects_zero() {
        assert!(matches!(
            homoclinic_linear(&cat(), &[0, 0]),
            Err(Error::InvalidLattice(_))
        ));
    }

    #[test]
    fn cat_homoclinic_ratios() {
        let h = homoclinic_linear(&cat(), &[1, 0]).unwrap();
        let lambda = (3.0 + 5f64.sqrt()) / 2.0;
        assert!((h.forward_ratio - 1.0 / lambda).abs() < 0.1 / lambda);
        assert!((h.backward_ratio - 1.0 / lambda).abs() < 0.1 / lambda);
        assert!((h.transversality_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
