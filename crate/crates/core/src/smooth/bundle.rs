//! Invariant bundle estimation and cocycles restricted to those bundles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cocycles::sample_torus;
use super::map::{fold, torus_distance, TorusMap};
use crate::cocycle::{random_frame, Cocycle};
use crate::error::{Error, Result};
use crate::linalg::{max_principal_angle, min_singular, qr_positive};

/// Default number of push-forward steps for a bundle estimate.
pub const DEFAULT_BUNDLE_STEPS: usize = 200;
/// Estimates whose last-step change exceeds this angle are rejected.
pub const MAX_BUNDLE_RESIDUAL: f64 = 1e-6;

const GENERIC_FRAME_SEED: u64 = 0x6e65_7269_6373;

/// Orthonormal frame of an estimated invariant bundle at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleFrame {
    pub point: DVector<f64>,
    pub frame: DMatrix<f64>,
    /// Principal angle between the estimates from `N` and `N - 1` steps.
    pub residual: f64,
}

fn push_along(
    map: &TorusMap,
    orbit: &[DVector<f64>],
    start: usize,
    k: usize,
) -> Result<DMatrix<f64>> {
    let d = map.dim();
    let mut frame = random_frame(d, k, GENERIC_FRAME_SEED);
    for j in (1..=start).rev() {
        frame = qr_positive(&(map.derivative(&orbit[j]) * frame))?.0;
    }
    Ok(frame)
}

fn bundle_unchecked(
    map: &TorusMap,
    x: &DVector<f64>,
    k: usize,
    steps: usize,
) -> Result<BundleFrame> {
    let d = map.dim();
    let point = fold(x);
    if k > d {
        return Err(Error::DimensionMismatch(format!(
            "bundle of dim {k} in R^{d}"
        )));
    }
    if k == d || k == 0 {
        return Ok(BundleFrame {
            point,
            frame: DMatrix::identity(d, d).columns(0, k).into_owned(),
            residual: 0.0,
        });
    }
    let steps = steps.max(2);
    let mut orbit = Vec::with_capacity(steps + 1);
    orbit.push(point.clone());
    for j in 0..steps {
        let prev = fold(&map.apply_inverse(&orbit[j]));
        orbit.push(prev);
    }
    let frame = push_along(map, &orbit, steps, k)?;
    let shorter = push_along(map, &orbit, steps - 1, k)?;
    Ok(BundleFrame {
        point,
        residual: max_principal_angle(&frame, &shorter),
        frame,
    })
}

/// Pushes a fixed generic `k`-frame forward `steps` times along the
/// backward orbit of `x`; for a dominated splitting this converges to the
/// `k` most expanded directions at `x`.
pub fn estimate_unstable_bundle(
    map: &TorusMap,
    x: &DVector<f64>,
    k: usize,
    steps: usize,
) -> Result<BundleFrame> {
    let b = bundle_unchecked(map, x, k, steps)?;
    if !(b.residual <= MAX_BUNDLE_RESIDUAL) {
        return Err(Error::NoConvergence(format!(
            "bundle estimate changed by {:.3e} rad over the last step",
            b.residual
        )));
    }
    Ok(b)
}

/// The `k` most contracted directions, estimated through the inverse map.
pub fn estimate_stable_bundle(
    map: &TorusMap,
    x: &DVector<f64>,
    k: usize,
    steps: usize,
) -> Result<BundleFrame> {
    estimate_unstable_bundle(&map.inverse(), x, k, steps)
}

/// Gauge-fixed frame of `span(basis)`: the positive QR factor of the
/// orthogonal projection of `reference` onto the span.
///
/// It depends only on the subspace, so equal subspaces get equal frames.
pub fn canonical_frame(basis: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let overlap = basis.transpose() * reference;
    if min_singular(&overlap) < 1e-8 {
        return Err(Error::SingularMatrix(
            "reference frame is nearly orthogonal to the bundle".into(),
        ));
    }
    Ok(qr_positive(&(basis * overlap))?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BundleSide {
    /// Strong unstable bundle.
    Uu,
    /// Strong stable bundle.
    Ss,
}

/// A point of the torus with a frame of the bundle over it.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePoint {
    pub x: DVector<f64>,
    pub frame: DMatrix<f64>,
}

/// `Df` restricted to `E^uu` or `E^ss`, written in gauge-fixed frames.
///
/// Frames are carried by `Df` in the direction in which the bundle
/// attracts (forward for `E^uu`, backward for `E^ss`) and re-estimated
/// from the past in the other direction.
#[derive(Debug, Clone)]
pub struct RestrictedCocycle {
    map: TorusMap,
    side: BundleSide,
    k: usize,
    bundle_steps: usize,
    reference: DMatrix<f64>,
}

impl RestrictedCocycle {
    /// Uses the bundle at the origin as gauge reference.
    pub fn new(map: &TorusMap, side: BundleSide, k: usize, bundle_steps: usize) -> Result<Self> {
        let origin = DVector::zeros(map.dim());
        let b = match side {
            BundleSide::Uu => estimate_unstable_bundle(map, &origin, k, bundle_steps)?,
            BundleSide::Ss => estimate_stable_bundle(map, &origin, k, bundle_steps)?,
        };
        RestrictedCocycle::with_reference(map, side, k, bundle_steps, b.frame)
    }

    /// Share `reference` between cocycles whose frames must agree, such as
    /// a map and its perturbation.
    pub fn with_reference(
        map: &TorusMap,
        side: BundleSide,
        k: usize,
        bundle_steps: usize,
        reference: DMatrix<f64>,
    ) -> Result<Self> {
        let d = map.dim();
        if k == 0 || k > d || reference.nrows() != d || reference.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "reference frame must be {d}x{k} with 0 < k <= {d}"
            )));
        }
        Ok(RestrictedCocycle {
            map: map.clone(),
            side,
            k,
            bundle_steps,
            reference,
        })
    }

    pub fn map(&self) -> &TorusMap {
        &self.map
    }

    pub fn side(&self) -> BundleSide {
        self.side
    }

    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    /// Map along which frames are carried.
    fn carrier(&self) -> TorusMap {
        match self.side {
            BundleSide::Uu => self.map.clone(),
            BundleSide::Ss => self.map.inverse(),
        }
    }

    fn estimate(&self, x: &DVector<f64>) -> Result<BundleFrame> {
        bundle_unchecked(&self.carrier(), x, self.k, self.bundle_steps)
    }

    /// Estimates the bundle at `x` and fixes its gauge.
    pub fn point(&self, x: &DVector<f64>) -> Result<BundlePoint> {
        let b = self.estimate(x)?;
        if !(b.residual <= MAX_BUNDLE_RESIDUAL) {
            return Err(Error::NoConvergence(format!(
                "bundle estimate at {:?} changed by {:.3e} rad",
                x.as_slice(),
                b.residual
            )));
        }
        Ok(BundlePoint {
            x: b.point,
            frame: canonical_frame(&b.frame, &self.reference)?,
        })
    }

    fn fresh(&self, x: DVector<f64>) -> BundlePoint {
        let frame = self
            .estimate(&x)
            .and_then(|b| canonical_frame(&b.frame, &self.reference))
            .expect("bundle frame along the orbit");
        BundlePoint { x, frame }
    }

    fn carried(&self, map: &TorusMap, p: &BundlePoint) -> BundlePoint {
        let pushed = map.derivative(&p.x) * &p.frame;
        let span = qr_positive(&pushed).expect("derivative is invertible").0;
        BundlePoint {
            x: fold(&map.apply(&p.x)),
            frame: canonical_frame(&span, &self.reference).expect("bundle frame along the orbit"),
        }
    }
}

impl Cocycle for RestrictedCocycle {
    type Point = BundlePoint;

    fn fiber_dim(&self) -> usize {
        self.k
    }

    fn step(&self, p: &BundlePoint) -> BundlePoint {
        match self.side {
            BundleSide::Uu => self.carried(&self.map, p),
            BundleSide::Ss => self.fresh(fold(&self.map.apply(&p.x))),
        }
    }

    fn inverse_step(&self, p: &BundlePoint) -> BundlePoint {
        match self.side {
            BundleSide::Uu => self.fresh(fold(&self.map.apply_inverse(&p.x))),
            BundleSide::Ss => self.carried(&self.map.inverse(), p),
        }
    }

    fn generator(&self, p: &BundlePoint) -> DMatrix<f64> {
        let next = self.step(p);
        next.frame.transpose() * self.map.derivative(&p.x) * &p.frame
    }

    fn sample(&self, seed: u64) -> BundlePoint {
        self.fresh(sample_torus(self.map.dim(), seed))
    }

    fn is_valid(&self, p: &BundlePoint) -> bool {
        p.x.iter().all(|v| v.is_finite()) && p.frame.iter().all(|v| v.is_finite())
    }

    fn distance(&self, p: &BundlePoint, q: &BundlePoint) -> f64 {
        torus_distance(&p.x, &q.x)
    }

    fn transport(&self, from: &BundlePoint, to: &BundlePoint) -> DMatrix<f64> {
        if from.frame == to.frame {
            DMatrix::identity(self.k, self.k)
        } else {
            to.frame.transpose() * &from.frame
        }
    }
}
