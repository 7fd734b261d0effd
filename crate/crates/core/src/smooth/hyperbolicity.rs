//! Cone-field verification of a dominated splitting `E^uu ⊕ E^c ⊕ E^ss`.
//!
//! Cones live in a fixed basis `[U | C | S]` taken from the linear part of the
//! map: `U` and `S` are its dominant expanding and contracting invariant
//! subspaces and `C` the complementary invariant subspace. When the linear
//! part has no modulus gap at the requested dimensions the coordinate axes
//! are used instead.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cocycles::sample_torus;
use super::map::TorusMap;
use crate::error::{Error, Result};
use crate::linalg::{min_singular, op_norm, orthonormal_complement, qr_positive};

const SUBSPACE_ITERATIONS: usize = 500;
const MIN_GROWTH: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeParams {
    pub unstable_dim: usize,
    pub stable_dim: usize,
    /// Cone `{|w| ≤ aperture·|u|}` around the strong directions.
    pub aperture: f64,
    /// Iterate length; rates are per step.
    pub steps: usize,
}

impl Default for ConeParams {
    fn default() -> Self {
        ConeParams {
            unstable_dim: 1,
            stable_dim: 1,
            aperture: 0.1,
            steps: 1,
        }
    }
}

/// Per-step growth bounds. `nu`, `nu_hat` bound the strong contraction and
/// expansion; `gamma`, `gamma_hat_inv` bound the center from below and above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRates {
    pub nu: Option<f64>,
    pub nu_hat_inv: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_hat_inv: Option<f64>,
}

/// Worst margin over the samples; `None` for checks on absent bundles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityMargins {
    pub unstable_cone: Option<f64>,
    pub stable_cone: Option<f64>,
    /// `nu_hat_inv - 1`.
    pub expansion: Option<f64>,
    /// `1 - nu`.
    pub contraction: Option<f64>,
    /// `gamma - nu`.
    pub center_lower: Option<f64>,
    /// `nu_hat_inv - gamma_hat_inv`.
    pub center_upper: Option<f64>,
}

impl HyperbolicityMargins {
    pub fn all(&self) -> Vec<f64> {
        [
            self.unstable_cone,
            self.stable_cone,
            self.expansion,
            self.contraction,
            self.center_lower,
            self.center_upper,
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn worst(&self) -> Option<f64> {
        self.all().into_iter().reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialHyperbolicity {
    pub ok: bool,
    /// The cone basis came from the invariant subspaces of the linear part.
    pub adapted_basis: bool,
    pub rates: GrowthRates,
    pub margins: HyperbolicityMargins,
    pub sample_count: usize,
}

fn dominant_subspace(m: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let mut q = DMatrix::from_fn(d, k, |i, j| {
        if i == j {
            1.0
        } else {
            0.1 / (1 + i + j) as f64
        }
    });
    q = qr_positive(&q)?.0;
    for _ in 0..SUBSPACE_ITERATIONS {
        let (next, _) = qr_positive(&(m * &q))?;
        let done = (&next * next.transpose() - &q * q.transpose()).amax() < 1e-14;
        q = next;
        if done {
            break;
        }
    }
    Ok(q)
}

fn has_gap(m: &DMatrix<f64>, k: usize) -> bool {
    if k == 0 || k == m.nrows() {
        return true;
    }
    let mut moduli: Vec<f64> = m.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli[k - 1] > moduli[k] * (1.0 + 1e-6)
}

/// `[U | C | S]` from the invariant subspaces of `l`, or `None` without a gap.
fn adapted_basis(l: &DMatrix<f64>, ku: usize, ks: usize) -> Result<Option<DMatrix<f64>>> {
    let d = l.nrows();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("linear part".into()))?;
    if !has_gap(l, ku) || !has_gap(&linv, ks) {
        return Ok(None);
    }
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
    if ku > 0 {
        cols.extend(
            dominant_subspace(l, ku)?
                .column_iter()
                .map(|c| c.into_owned()),
        );
    }
    let kc = d - ku - ks;
    if kc > 0 {
        // The center is annihilated by the left invariant subspaces of both strong bundles.
        let mut left: Vec<DVector<f64>> = Vec::new();
        if ku > 0 {
            left.extend(
                dominant_subspace(&l.transpose(), ku)?
                    .column_iter()
                    .map(|c| c.into_owned()),
            );
        }
        if ks > 0 {
            left.extend(
                dominant_subspace(&linv.transpose(), ks)?
                    .column_iter()
                    .map(|c| c.into_owned()),
            );
        }
        let center = if left.is_empty() {
            DMatrix::identity(d, d)
        } else {
            orthonormal_complement(&DMatrix::from_columns(&left))
        };
        cols.extend(center.column_iter().map(|c| c.into_owned()));
    }
    if ks > 0 {
        cols.extend(
            dominant_subspace(&linv, ks)?
                .column_iter()
                .map(|c| c.into_owned()),
        );
    }
    let v = DMatrix::from_columns(&cols);
    if min_singular(&v) < 1e-8 {
        return Ok(None);
    }
    Ok(Some(v))
}

#[derive(Debug, Clone, Copy)]
struct SampleBounds {
    unstable_cone: f64,
    stable_cone: f64,
    expansion: f64,
    contraction: f64,
    center_low: f64,
    center_high: f64,
}

/// Cone invariance margin and guaranteed growth of vectors in `{|rest| ≤ a|strong|}`
/// where `strong` is the leading `k` coordinates of `m`.
fn strong_block(m: &DMatrix<f64>, k: usize, a: f64) -> (f64, f64) {
    let d = m.nrows();
    let r = d - k;
    let ss = m.view((0, 0), (k, k)).into_owned();
    let e = if r == 0 {
        min_singular(&ss)
    } else {
        min_singular(&ss) - a * op_norm(&m.view((0, k), (k, r)).into_owned())
    };
    let cone = if r == 0 {
        f64::INFINITY
    } else {
        let wu = op_norm(&m.view((k, 0), (r, k)).into_owned());
        let ww = op_norm(&m.view((k, k), (r, r)).into_owned());
        (a * e - wu - a * ww) / (a * e.abs().max(MIN_GROWTH))
    };
    (cone, e / (1.0 + a * a).sqrt())
}

fn permute_to_front(m: &DMatrix<f64>, front: &[usize]) -> DMatrix<f64> {
    let d = m.nrows();
    let order: Vec<usize> = front
        .iter()
        .copied()
        .chain((0..d).filter(|i| !front.contains(i)))
        .collect();
    DMatrix::from_fn(d, d, |i, j| m[(order[i], order[j])])
}

fn sample_bounds(
    m: &DMatrix<f64>,
    ku: usize,
    ks: usize,
    a: f64,
    steps: usize,
) -> Result<SampleBounds> {
    let d = m.nrows();
    let kc = d - ku - ks;
    let root = |g: f64| g.max(MIN_GROWTH).powf(1.0 / steps as f64);
    let minv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("derivative along the orbit".into()))?;
    let mut b = SampleBounds {
        unstable_cone: f64::INFINITY,
        stable_cone: f64::INFINITY,
        expansion: f64::INFINITY,
        contraction: 0.0,
        center_low: f64::INFINITY,
        center_high: 0.0,
    };
    if ku > 0 {
        let (cone, growth) = strong_block(m, ku, a);
        b.unstable_cone = cone;
        b.expansion = root(growth);
    }
    if ks > 0 {
        let front: Vec<usize> = (d - ks..d).collect();
        let (cone, growth) = strong_block(&permute_to_front(&minv, &front), ks, a);
        b.stable_cone = cone;
        b.contraction = 1.0 / root(growth);
    }
    if kc > 0 {
        let center: Vec<usize> = (ku..ku + kc).collect();
        let pm = permute_to_front(m, &center);
        let cc = pm.view((0, 0), (kc, kc)).into_owned();
        let rest = d - kc;
        let (low, high) = if rest == 0 {
            (min_singular(&cc), op_norm(&cc))
        } else {
            let c_rest = op_norm(&pm.view((0, kc), (kc, rest)).into_owned());
            let col_c = op_norm(&pm.columns(0, kc).into_owned());
            let col_rest = op_norm(&pm.columns(kc, rest).into_owned());
            (
                (min_singular(&cc) - a * c_rest) / (1.0 + a * a).sqrt(),
                col_c + a * col_rest,
            )
        };
        b.center_low = root(low);
        b.center_high = root(high);
    }
    Ok(b)
}

/// Samples `Df^N` at `sample_count` points and checks cone invariance plus the
/// growth ordering `ν < γ ≤ γ̂⁻¹ < ν̂⁻¹`, `ν < 1 < ν̂⁻¹`.
pub fn verify_partial_hyperbolicity(
    f: &TorusMap,
    params: &ConeParams,
    sample_count: usize,
    seed: u64,
) -> Result<PartialHyperbolicity> {
    let d = f.dim();
    let (ku, ks) = (params.unstable_dim, params.stable_dim);
    if ku + ks > d {
        return Err(Error::InvalidInput(format!(
            "unstable {ku} + stable {ks} exceeds dimension {d}"
        )));
    }
    if !(params.aperture > 0.0) || params.steps == 0 || sample_count == 0 {
        return Err(Error::InvalidInput(
            "aperture, steps and sample_count must be positive".into(),
        ));
    }
    let kc = d - ku - ks;
    let basis = adapted_basis(&f.linear_part(), ku, ks)?;
    let adapted = basis.is_some();
    let v = basis.unwrap_or_else(|| DMatrix::identity(d, d));
    let vinv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("cone basis".into()))?;

    let bounds: Vec<SampleBounds> = (0..sample_count as u64)
        .into_par_iter()
        .map(|i| {
            let mut x = sample_torus(d, seed.wrapping_add(i));
            let mut m = DMatrix::identity(d, d);
            for _ in 0..params.steps {
                m = f.derivative(&x) * m;
                x = f.apply(&x);
            }
            sample_bounds(&(&vinv * m * &v), ku, ks, params.aperture, params.steps)
        })
        .collect::<Result<_>>()?;

    let min = |g: fn(&SampleBounds) -> f64| bounds.iter().map(g).fold(f64::INFINITY, f64::min);
    let max = |g: fn(&SampleBounds) -> f64| bounds.iter().map(g).fold(0.0, f64::max);
    let rates = GrowthRates {
        nu: (ks > 0).then(|| max(|b| b.contraction)),
        nu_hat_inv: (ku > 0).then(|| min(|b| b.expansion)),
        gamma: (kc > 0).then(|| min(|b| b.center_low)),
        gamma_hat_inv: (kc > 0).then(|| max(|b| b.center_high)),
    };
    let margins = HyperbolicityMargins {
        unstable_cone: (ku > 0 && ku < d).then(|| min(|b| b.unstable_cone)),
        stable_cone: (ks > 0 && ks < d).then(|| min(|b| b.stable_cone)),
        expansion: rates.nu_hat_inv.map(|r| r - 1.0),
        contraction: rates.nu.map(|r| 1.0 - r),
        center_lower: rates.gamma.zip(rates.nu).map(|(g, n)| g - n),
        center_upper: rates
            .nu_hat_inv
            .zip(rates.gamma_hat_inv)
            .map(|(n, g)| n - g),
    };
    let ok = margins.all().iter().all(|m| *m > 0.0);
    Ok(PartialHyperbolicity {
        ok,
        adapted_basis: adapted,
        rates,
        margins,
        sample_count,
    })
}
