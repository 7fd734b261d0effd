//! Truncated stable and unstable holonomies of fiber-bunched cocycles.
//!
//! The stable holonomy from `y` to `z` is the limit of
//! `A^n(z)⁻¹ · T(fⁿy → fⁿz) · A^n(y)`, where `T` identifies nearby fibers.
//! The unstable one is the same limit for the inverse cocycle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cocycle::{invert, Cocycle, InverseCocycle};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, qr_positive};
use crate::report::Tolerances;

/// Base distance below which two orbits are treated as one.
pub const MERGE_DISTANCE: f64 = 1e-13;
/// Orbits that contracted by this factor and then move apart again are
/// treated as merged: the renewed separation is amplified roundoff.
pub const SHADOWING_CONTRACTION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Stable,
    Unstable,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Stable => "stable",
            Side::Unstable => "unstable",
        }
    }
}

/// A truncated holonomy together with its convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyOperator {
    pub matrix: DMatrix<f64>,
    pub side: Side,
    pub truncation: usize,
    /// Bound on the distance to the limit, including roundoff.
    pub tail_bound: f64,
    /// Fitted geometric ratio of successive increments.
    pub rate: f64,
    /// Step at which the two base orbits became numerically indistinguishable.
    pub merged_at: Option<usize>,
    /// Norms `‖H_{n+1} - H_n‖`.
    pub increments: Vec<f64>,
}

/// Holonomy at truncation `steps` along `side`.
pub fn truncated_holonomy<C: Cocycle>(
    sys: &C,
    y: &C::Point,
    z: &C::Point,
    side: Side,
    steps: usize,
) -> Result<HolonomyOperator> {
    match side {
        Side::Stable => forward_holonomy(sys, y, z, side, steps),
        Side::Unstable => forward_holonomy(&InverseCocycle(sys), y, z, side, steps),
    }
}

/// Doubles the truncation from `tol.holonomy_steps` until the tail is below
/// `tol.tail_target`. The flag is false when the budget ran out first.
pub fn holonomy_to_tolerance<C: Cocycle>(
    sys: &C,
    y: &C::Point,
    z: &C::Point,
    side: Side,
    tol: &Tolerances,
) -> Result<(HolonomyOperator, bool)> {
    let mut steps = tol.holonomy_steps.max(1);
    loop {
        let h = truncated_holonomy(sys, y, z, side, steps)?;
        if h.tail_bound < tol.tail_target {
            return Ok((h, true));
        }
        if h.merged_at.is_some() || steps * 2 > tol.holonomy_budget {
            return Ok((h, false));
        }
        steps *= 2;
    }
}

fn forward_holonomy<C: Cocycle>(
    sys: &C,
    y: &C::Point,
    z: &C::Point,
    side: Side,
    steps: usize,
) -> Result<HolonomyOperator> {
    let d = sys.fiber_dim();
    let mut yn = y.clone();
    let mut zn = z.clone();
    let mut t = sys.transport(&yn, &zn);
    let mut h = t.clone();
    let d0 = sys.distance(y, z);
    if d0 == 0.0 {
        return Ok(HolonomyOperator {
            matrix: h,
            side,
            truncation: steps,
            tail_bound: 0.0,
            rate: 0.0,
            merged_at: Some(0),
            increments: Vec::new(),
        });
    }
    // QR factors of A^n(z), rescaled freely since only conjugation by it matters.
    let mut q = DMatrix::identity(d, d);
    let mut r = DMatrix::identity(d, d);
    // The tail bound is a posteriori: the loop runs on to `2·steps` and the
    // increments past `steps` are summed.
    let horizon = 2 * steps;
    let mut increments = Vec::with_capacity(horizon);
    let mut stopped_at = None;
    let mut at_truncation = None;
    let mut d_min = d0;
    let mut dist = d0;
    for n in 0..horizon {
        if n > 0 {
            dist = sys.distance(&yn, &zn);
            if dist < MERGE_DISTANCE
                || ((d_min < 1e-9 || d_min < SHADOWING_CONTRACTION * d0) && dist > 2.0 * d_min)
            {
                stopped_at = Some(n);
                break;
            }
            d_min = d_min.min(dist);
        }
        if n == steps {
            at_truncation = Some((h.clone(), dist));
        }
        let ay = sys.generator(&yn);
        let az = sys.generator(&zn);
        let y1 = sys.step(&yn);
        let z1 = sys.step(&zn);
        if !sys.is_valid(&y1) || !sys.is_valid(&z1) {
            return Err(Error::NonFiniteOrbit { step: n + 1 });
        }
        let t1 = sys.transport(&y1, &z1);
        let defect = &t1 * &ay - &az * &t;
        if defect.iter().any(|v| *v != 0.0) {
            let g = invert(&az)? * defect * invert(&t)?;
            let qt = q.transpose() * g * &q;
            let k = r
                .clone()
                .solve_upper_triangular(&(qt * &r))
                .ok_or_else(|| Error::SingularMatrix("triangular factor of A^n".into()))?;
            let inc = k * &h;
            let size = inc.norm();
            if !size.is_finite() {
                return Err(Error::Overflow(format!("holonomy increment at step {n}")));
            }
            h += inc;
            increments.push(size);
        } else {
            increments.push(0.0);
        }
        let (q1, r1) = qr_positive(&(&az * &q))?;
        q = q1;
        r = r1 * r;
        let scale = r[(0, 0)];
        r /= scale;
        if !r.iter().all(|v| v.is_finite()) {
            return Err(Error::Overflow(format!("triangular factor at step {n}")));
        }
        t = t1;
        yn = y1;
        zn = z1;
    }
    let merged_at = stopped_at.filter(|&n| n <= steps);
    let (matrix, dist) = at_truncation.unwrap_or((h, dist));
    let lookahead = increments.split_off(increments.len().min(steps));
    if merged_at.is_none()
        && !(dist <= 1e-6 * d0)
        && increments.iter().rev().take(8).any(|v| *v > 0.0)
    {
        return Err(Error::NotAsymptotic { side: side.name() });
    }

    let h_norm = op_norm(&matrix);
    let positive = |incs: &[f64]| -> Vec<(usize, f64)> {
        incs.iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v > 0.0)
            .collect()
    };
    let within = positive(&increments);
    let rate = fitted_rate(&within);
    let roundoff = if within.is_empty() {
        0.0
    } else {
        64.0 * f64::EPSILON * h_norm.max(1.0)
    };
    let trailing_zeros = increments.iter().rev().take_while(|v| **v == 0.0).count();
    let settled = merged_at.is_none() && trailing_zeros >= 8;
    // Geometric continuation past the last computed increment.
    let extrapolate = |points: &[(usize, f64)], n: usize| -> Result<f64> {
        let rate = fitted_rate(points);
        let last = points.last().map_or(0.0, |p| p.1);
        if rate < 1.0 {
            Ok(geometric_envelope(points, n, rate) * rate / (1.0 - rate))
        } else if last <= 1e-12 * h_norm.max(1.0) {
            Ok(last)
        } else {
            Err(Error::NoConvergence(format!(
                "{} holonomy increments do not contract (ratio {rate:.3})",
                side.name()
            )))
        }
    };
    let truncation_tail = if within.is_empty() || settled {
        lookahead.iter().sum()
    } else if merged_at.is_some() {
        extrapolate(&within, increments.len())?
    } else {
        let all: Vec<f64> = increments.iter().chain(&lookahead).copied().collect();
        lookahead.iter().sum::<f64>() + extrapolate(&positive(&all), all.len())?
    };
    Ok(HolonomyOperator {
        matrix,
        side,
        truncation: steps,
        tail_bound: truncation_tail + roundoff,
        rate,
        merged_at,
        increments,
    })
}

/// Largest `v_k·rate^(n-1-k)`: the size of step `n-1` on a geometric
/// envelope lying above every increment.
fn geometric_envelope(points: &[(usize, f64)], n: usize, rate: f64) -> f64 {
    points
        .iter()
        .map(|&(k, v)| v * rate.powi((n - 1 - k) as i32))
        .fold(0.0, f64::max)
}

fn fitted_rate(points: &[(usize, f64)]) -> f64 {
    match points.len() {
        0 => 0.0,
        1 => 0.5,
        2 => {
            let (n0, v0) = points[0];
            let (n1, v1) = points[1];
            (v1 / v0).powf(1.0 / (n1 - n0) as f64)
        }
        len => {
            let tail = &points[len / 2..];
            let tail = if tail.len() < 3 {
                &points[len - 3..]
            } else {
                tail
            };
            let xs: Vec<f64> = tail.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
            let m = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / m;
            let my = ys.iter().sum::<f64>() / m;
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            (sxy / sxx).exp()
        }
    }
}
