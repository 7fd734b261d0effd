//! Linear cocycles over invertible base dynamics.
//!
//! A cocycle is a base map `f` together with a matrix-valued generator
//! `x ↦ A(x)`; products along orbits are `A^n(x) = A(f^{n-1}x)⋯A(x)`.
//! This module holds the abstraction, exact products, the QR estimator of
//! the Lyapunov spectrum and the bunching diagnostics.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, qr_positive};

/// Largest `|n|` accepted by [`iterate`].
pub const MAX_ITERATE: i64 = 10_000_000;
/// Norm above which a raw product is considered to have overflowed.
pub const OVERFLOW_NORM: f64 = 1e300;
/// Number of batches used for the batch-means error bars.
pub const DEFAULT_BATCHES: usize = 20;

/// A linear cocycle over an invertible base map.
///
/// Implementations are immutable once built and can be shared between
/// threads; the generator must return invertible matrices.
pub trait Cocycle: Sync {
    type Point: Clone + Send + Sync;

    fn fiber_dim(&self) -> usize;

    fn step(&self, x: &Self::Point) -> Self::Point;

    fn inverse_step(&self, x: &Self::Point) -> Self::Point;

    /// `A(x)`, a `d×d` invertible matrix.
    fn generator(&self, x: &Self::Point) -> DMatrix<f64>;

    /// Hölder exponent of the generator.
    fn holder_exponent(&self) -> f64 {
        1.0
    }

    /// A base point drawn from the reference measure of the system.
    fn sample(&self, seed: u64) -> Self::Point;

    fn is_valid(&self, _x: &Self::Point) -> bool {
        true
    }

    /// Distance between base points, used for leaf checks.
    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64;

    /// Identification of the fiber over `from` with the fiber over `to`.
    ///
    /// Globally trivialized cocycles use the identity; cocycles expressed
    /// in moving frames return the overlap of the two frames.
    fn transport(&self, _from: &Self::Point, _to: &Self::Point) -> DMatrix<f64> {
        DMatrix::identity(self.fiber_dim(), self.fiber_dim())
    }
}

impl<C: Cocycle + ?Sized> Cocycle for &C {
    type Point = C::Point;

    fn fiber_dim(&self) -> usize {
        (**self).fiber_dim()
    }

    fn step(&self, x: &Self::Point) -> Self::Point {
        (**self).step(x)
    }

    fn inverse_step(&self, x: &Self::Point) -> Self::Point {
        (**self).inverse_step(x)
    }

    fn generator(&self, x: &Self::Point) -> DMatrix<f64> {
        (**self).generator(x)
    }

    fn holder_exponent(&self) -> f64 {
        (**self).holder_exponent()
    }

    fn sample(&self, seed: u64) -> Self::Point {
        (**self).sample(seed)
    }

    fn is_valid(&self, x: &Self::Point) -> bool {
        (**self).is_valid(x)
    }

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64 {
        (**self).distance(x, y)
    }

    fn transport(&self, from: &Self::Point, to: &Self::Point) -> DMatrix<f64> {
        (**self).transport(from, to)
    }
}

pub(crate) fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("cocycle value is not invertible".into()))
}

/// `A^n(x)` for signed `n`; `n = 0` gives the identity.
///
/// Negative `n` returns `A(f^{-|n|}x)^{-1}⋯A(f^{-1}x)^{-1}`, the inverse of
/// `A^{|n|}(f^{-|n|}x)`.
pub fn iterate<C: Cocycle>(sys: &C, x: &C::Point, n: i64) -> Result<DMatrix<f64>> {
    if n.abs() > MAX_ITERATE {
        return Err(Error::InvalidInput(format!(
            "|n| = {} exceeds {MAX_ITERATE}",
            n.abs()
        )));
    }
    let d = sys.fiber_dim();
    let mut m = DMatrix::identity(d, d);
    let mut y = x.clone();
    for i in 0..n.unsigned_abs() {
        if n > 0 {
            m = sys.generator(&y) * m;
            y = sys.step(&y);
        } else {
            y = sys.inverse_step(&y);
            m = invert(&sys.generator(&y))? * m;
        }
        if !sys.is_valid(&y) {
            return Err(Error::NonFiniteOrbit {
                step: i as usize + 1,
            });
        }
        let norm = m.norm();
        if !(norm <= OVERFLOW_NORM) {
            return Err(Error::Overflow(format!(
                "partial product norm {norm:e} after {} steps",
                i + 1
            )));
        }
    }
    Ok(m)
}

/// `f^n(x)` for signed `n`.
pub fn orbit_point<C: Cocycle>(sys: &C, x: &C::Point, n: i64) -> C::Point {
    let mut y = x.clone();
    for _ in 0..n.unsigned_abs() {
        y = if n > 0 {
            sys.step(&y)
        } else {
            sys.inverse_step(&y)
        };
    }
    y
}

/// The inverse cocycle `x ↦ A(f^{-1}x)^{-1}` over `f^{-1}`.
#[derive(Debug, Clone)]
pub struct InverseCocycle<C>(pub C);

impl<C: Cocycle> Cocycle for InverseCocycle<C> {
    type Point = C::Point;

    fn fiber_dim(&self) -> usize {
        self.0.fiber_dim()
    }

    fn step(&self, x: &Self::Point) -> Self::Point {
        self.0.inverse_step(x)
    }

    fn inverse_step(&self, x: &Self::Point) -> Self::Point {
        self.0.step(x)
    }

    fn generator(&self, x: &Self::Point) -> DMatrix<f64> {
        let a = self.0.generator(&self.0.inverse_step(x));
        a.try_inverse().expect("cocycle values are invertible")
    }

    fn holder_exponent(&self) -> f64 {
        self.0.holder_exponent()
    }

    fn sample(&self, seed: u64) -> Self::Point {
        self.0.sample(seed)
    }

    fn is_valid(&self, x: &Self::Point) -> bool {
        self.0.is_valid(x)
    }

    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64 {
        self.0.distance(x, y)
    }

    fn transport(&self, from: &Self::Point, to: &Self::Point) -> DMatrix<f64> {
        self.0.transport(from, to)
    }
}

/// A constant cocycle over the translation `n ↦ n + 1` of the integers.
#[derive(Debug, Clone)]
pub struct ConstantCocycle {
    matrix: DMatrix<f64>,
}

impl ConstantCocycle {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch(
                "constant cocycle needs a square matrix".into(),
            ));
        }
        invert(&matrix)?;
        Ok(ConstantCocycle { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Cocycle for ConstantCocycle {
    type Point = i64;

    fn fiber_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn step(&self, x: &i64) -> i64 {
        x + 1
    }

    fn inverse_step(&self, x: &i64) -> i64 {
        x - 1
    }

    fn generator(&self, _x: &i64) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn sample(&self, seed: u64) -> i64 {
        seed as i64
    }

    fn distance(&self, x: &i64, y: &i64) -> f64 {
        if x == y {
            0.0
        } else {
            1.0
        }
    }
}

/// Parameters of the QR spectrum estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Measured steps `N`.
    pub steps: usize,
    /// Re-orthonormalize every `k` steps.
    pub renorm_period: usize,
    /// Seeds the random initial frame.
    pub seed: u64,
    /// Steps discarded before measuring, to align the frame.
    pub transient: usize,
    pub batches: usize,
}

impl SpectrumOptions {
    pub fn new(steps: usize, renorm_period: usize, seed: u64) -> Self {
        SpectrumOptions {
            steps,
            renorm_period,
            seed,
            transient: (steps / 10).min(1000),
            batches: DEFAULT_BATCHES,
        }
    }
}

/// Lyapunov exponents with batch-means error bars, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub steps: usize,
    pub renorm_period: usize,
    pub seed: u64,
    pub transient: usize,
    pub batches: usize,
}

impl SpectrumEstimate {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }

    /// Standard error of the sum, treating exponents as independent.
    pub fn sum_std_error(&self) -> f64 {
        self.std_errors.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// Random orthonormal frame with positive-diagonal gauge.
pub fn random_frame(d: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(&mut rng));
        if let Ok((q, _)) = qr_positive(&g) {
            return q;
        }
    }
}

/// QR (Benettin) estimator of the Lyapunov spectrum along the orbit of `x0`.
pub fn lyapunov_spectrum_qr<C: Cocycle>(
    sys: &C,
    x0: &C::Point,
    steps: usize,
    renorm_period: usize,
    seed: u64,
) -> Result<SpectrumEstimate> {
    lyapunov_spectrum_with(sys, x0, &SpectrumOptions::new(steps, renorm_period, seed))
}

/// [`lyapunov_spectrum_qr`] with explicit options.
pub fn lyapunov_spectrum_with<C: Cocycle>(
    sys: &C,
    x0: &C::Point,
    opts: &SpectrumOptions,
) -> Result<SpectrumEstimate> {
    let n = opts.steps;
    let k = opts.renorm_period;
    let batches = opts.batches;
    if n < 1000 {
        return Err(Error::InvalidInput(format!(
            "need at least 1000 steps, got {n}"
        )));
    }
    if k == 0 || batches < 2 || n < batches * k {
        return Err(Error::InvalidInput(format!(
            "renorm period {k} and {batches} batches do not fit into {n} steps"
        )));
    }
    let d = sys.fiber_dim();
    let mut q = random_frame(d, d, opts.seed);
    let mut x = x0.clone();

    let push = |q: &mut DMatrix<f64>, x: &mut C::Point, count: usize, t0: usize| -> Result<()> {
        for i in 0..count {
            *q = sys.generator(x) * &*q;
            *x = sys.step(x);
            if !sys.is_valid(x) {
                return Err(Error::NonFiniteOrbit { step: t0 + i + 1 });
            }
        }
        let norm = q.norm();
        if !(norm <= OVERFLOW_NORM) {
            return Err(Error::Overflow(format!(
                "frame norm {norm:e} with renormalization period {k}"
            )));
        }
        Ok(())
    };

    let mut t = 0;
    while t < opts.transient {
        let count = k.min(opts.transient - t);
        push(&mut q, &mut x, count, t)?;
        q = qr_positive(&q)?.0;
        t += count;
    }

    let mut totals = vec![0.0; d];
    let mut batch_sums = vec![vec![0.0; d]; batches];
    let mut batch_steps = vec![0usize; batches];
    let mut done = 0;
    while done < n {
        let count = k.min(n - done);
        push(&mut q, &mut x, count, opts.transient + done)?;
        let (qn, r) = qr_positive(&q)?;
        q = qn;
        let b = done * batches / n;
        batch_steps[b] += count;
        for j in 0..d {
            let l = r[(j, j)].ln();
            totals[j] += l;
            batch_sums[b][j] += l;
        }
        done += count;
    }

    let used: Vec<usize> = (0..batches).filter(|&b| batch_steps[b] > 0).collect();
    let nb = used.len() as f64;
    let mut pairs: Vec<(f64, f64)> = (0..d)
        .map(|j| {
            let mean = totals[j] / n as f64;
            let means: Vec<f64> = used
                .iter()
                .map(|&b| batch_sums[b][j] / batch_steps[b] as f64)
                .collect();
            let bm = means.iter().sum::<f64>() / nb;
            let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (nb - 1.0);
            (mean, (var / nb).sqrt())
        })
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));

    Ok(SpectrumEstimate {
        exponents: pairs.iter().map(|p| p.0).collect(),
        std_errors: pairs.iter().map(|p| p.1).collect(),
        steps: n,
        renorm_period: k,
        seed: opts.seed,
        transient: opts.transient,
        batches,
    })
}

/// Runs the estimator on `orbits` independent orbits (orbit `i` starts at
/// `sample(seed + i)` with frame seed `seed + i`) and pools the results.
///
/// The reduction is in orbit order, so the result does not depend on the
/// thread count.
pub fn ensemble_spectrum<C: Cocycle>(
    sys: &C,
    orbits: usize,
    opts: &SpectrumOptions,
) -> Result<SpectrumEstimate> {
    if orbits == 0 {
        return Err(Error::InvalidInput(
            "ensemble needs at least one orbit".into(),
        ));
    }
    let runs: Vec<Result<SpectrumEstimate>> = (0..orbits as u64)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i);
            let x0 = sys.sample(seed);
            lyapunov_spectrum_with(sys, &x0, &SpectrumOptions { seed, ..*opts })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let d = sys.fiber_dim();
    let m = orbits as f64;
    let exponents = (0..d)
        .map(|j| runs.iter().map(|r| r.exponents[j]).sum::<f64>() / m)
        .collect();
    let std_errors = (0..d)
        .map(|j| {
            runs.iter()
                .map(|r| r.std_errors[j].powi(2))
                .sum::<f64>()
                .sqrt()
                / m
        })
        .collect();
    Ok(SpectrumEstimate {
        exponents,
        std_errors,
        steps: opts.steps,
        renorm_period: opts.renorm_period,
        seed: opts.seed,
        transient: opts.transient,
        batches: opts.batches,
    })
}

/// Birkhoff average of `log|det A|` over the steps the estimator measures.
pub fn log_det_average<C: Cocycle>(sys: &C, x0: &C::Point, opts: &SpectrumOptions) -> f64 {
    let x = orbit_point(sys, x0, opts.transient as i64);
    let mut y = x;
    let mut total = 0.0;
    for _ in 0..opts.steps {
        total += sys.generator(&y).determinant().abs().ln();
        y = sys.step(&y);
    }
    total / opts.steps as f64
}

/// Three-valued simplicity verdict of a Monte-Carlo spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Simplicity {
    Simple,
    NotSimple,
    NotDecided,
}

/// Status of one gap between consecutive exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapStatus {
    /// Larger than both the tolerance and three combined standard errors.
    Distinct,
    /// Below the tolerance, with the tolerance above statistical resolution.
    Merged,
    /// Neither resolved nor merged.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub simple: Simplicity,
    pub multiplicities: Vec<usize>,
    pub gaps: Vec<f64>,
    pub resolutions: Vec<f64>,
    pub statuses: Vec<GapStatus>,
}

/// Groups exponents into multiplicity classes and decides simplicity.
pub fn spectrum_gap_report(est: &SpectrumEstimate, gap_tol: f64) -> GapReport {
    let e = &est.exponents;
    let s = &est.std_errors;
    let mut gaps = Vec::new();
    let mut resolutions = Vec::new();
    let mut statuses = Vec::new();
    for i in 0..e.len().saturating_sub(1) {
        let gap = e[i] - e[i + 1];
        let res = 3.0 * (s[i] * s[i] + s[i + 1] * s[i + 1]).sqrt();
        let status = if gap > gap_tol.max(res) {
            GapStatus::Distinct
        } else if gap < gap_tol && res <= gap_tol {
            GapStatus::Merged
        } else {
            GapStatus::Unresolved
        };
        gaps.push(gap);
        resolutions.push(res);
        statuses.push(status);
    }
    let mut multiplicities = Vec::new();
    let mut current = 1;
    for st in &statuses {
        if *st == GapStatus::Distinct {
            multiplicities.push(current);
            current = 1;
        } else {
            current += 1;
        }
    }
    if !e.is_empty() {
        multiplicities.push(current);
    }
    let simple = if statuses.contains(&GapStatus::Unresolved) {
        Simplicity::NotDecided
    } else if statuses.iter().all(|s| *s == GapStatus::Distinct) {
        Simplicity::Simple
    } else {
        Simplicity::NotSimple
    };
    GapReport {
        simple,
        multiplicities,
        gaps,
        resolutions,
        statuses,
    }
}

/// Sampled estimate of the asymptotic conformality constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchingEstimate {
    /// Least-squares slope of `per_n_curve` over `n ∈ [N/2, N]`.
    pub c_hat: f64,
    /// `log max_x ‖A^n(x)‖‖A^n(x)^{-1}‖` for `n = 1..=N`.
    pub per_n_curve: Vec<f64>,
    pub sample_count: usize,
    /// The maximum runs over sampled points only, so `c_hat` is a lower bound.
    pub is_lower_bound: bool,
}

fn log_condition_curve<C: Cocycle>(
    sys: &C,
    steps: usize,
    sample_count: usize,
    seed: u64,
    forward: bool,
) -> Result<Vec<f64>> {
    let d = sys.fiber_dim();
    let curves: Vec<Result<Vec<f64>>> = (0..sample_count as u64)
        .into_par_iter()
        .map(|i| {
            let mut x = sys.sample(seed.wrapping_add(i));
            let mut m = DMatrix::identity(d, d);
            let mut curve = Vec::with_capacity(steps);
            for n in 0..steps {
                if forward {
                    m = sys.generator(&x) * m;
                    x = sys.step(&x);
                } else {
                    x = sys.inverse_step(&x);
                    m = invert(&sys.generator(&x))? * m;
                }
                if !sys.is_valid(&x) {
                    return Err(Error::NonFiniteOrbit { step: n + 1 });
                }
                // The condition number is scale invariant; rescaling keeps the product finite.
                let norm = m.norm();
                m /= norm;
                let c = condition_number(&m);
                if !(c <= OVERFLOW_NORM) {
                    return Err(Error::Overflow(format!(
                        "condition number {c:e} after {} steps",
                        n + 1
                    )));
                }
                curve.push(c.ln());
            }
            Ok(curve)
        })
        .collect();
    let mut out = vec![f64::NEG_INFINITY; steps];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c?) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

struct LineFit {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    dof: usize,
}

fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let dof = xs.len().saturating_sub(2);
    let slope_se = if dof > 0 && sxx > 0.0 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / dof as f64 / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_se,
        dof,
    }
}

/// Estimates `c = lim (1/n) log max_x ‖A^n(x)‖‖A^n(x)^{-1}‖` from sampled points.
pub fn bunching_constant<C: Cocycle>(
    sys: &C,
    steps: usize,
    sample_count: usize,
    seed: u64,
) -> Result<BunchingEstimate> {
    if sample_count < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 sample points, got {sample_count}"
        )));
    }
    if steps < 2 {
        return Err(Error::InvalidInput("need at least 2 steps".into()));
    }
    let curve = log_condition_curve(sys, steps, sample_count, seed, true)?;
    let lo = steps / 2;
    let xs: Vec<f64> = (lo..=steps).map(|n| n as f64).collect();
    let ys: Vec<f64> = (lo..=steps).map(|n| curve[n - 1]).collect();
    let fit = fit_line(&xs, &ys);
    Ok(BunchingEstimate {
        c_hat: fit.slope,
        per_n_curve: curve,
        sample_count,
        is_lower_bound: true,
    })
}

/// Fit of `log(‖A^n‖‖A^{-n}‖) - χα|n| ≈ log C + |n| log λ` in one time direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionFit {
    pub log_lambda: f64,
    pub log_c: f64,
    /// One-sided 95% upper confidence bound on `log λ`.
    pub log_lambda_upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberBunching {
    pub ok: bool,
    pub fitted_c: f64,
    pub fitted_lambda: f64,
    pub forward: DirectionFit,
    pub backward: DirectionFit,
    pub chi: f64,
    pub alpha: f64,
}

fn direction_fit(curve: &[f64], chi_alpha: f64) -> DirectionFit {
    let xs: Vec<f64> = (1..=curve.len()).map(|n| n as f64).collect();
    let ys: Vec<f64> = curve
        .iter()
        .enumerate()
        .map(|(i, c)| c - chi_alpha * (i + 1) as f64)
        .collect();
    let fit = fit_line(&xs, &ys);
    let t = if fit.dof > 0 && fit.slope_se > 0.0 {
        StudentsT::new(0.0, 1.0, fit.dof as f64)
            .map(|d| d.inverse_cdf(0.95))
            .unwrap_or(1.645)
    } else {
        0.0
    };
    DirectionFit {
        log_lambda: fit.slope,
        log_c: fit.intercept,
        log_lambda_upper: fit.slope + t * fit.slope_se,
    }
}

/// Checks `‖A^n‖‖(A^n)^{-1}‖ e^{-χα|n|} < Cλ^{|n|}` with `λ < 1` for both signs of `n`.
///
/// Each direction is fitted separately; `ok` requires the 95% upper bound
/// of `log λ` to be negative in both.
pub fn check_fiber_bunched<C: Cocycle>(
    sys: &C,
    chi: f64,
    steps: usize,
    sample_count: usize,
    seed: u64,
) -> Result<FiberBunching> {
    if !(chi > 0.0) {
        return Err(Error::InvalidInput(format!(
            "chi must be positive, got {chi}"
        )));
    }
    if steps < 3 {
        return Err(Error::InvalidInput("need at least 3 steps".into()));
    }
    if sample_count == 0 {
        return Err(Error::InvalidInput("need at least one sample point".into()));
    }
    let alpha = sys.holder_exponent();
    let fwd = log_condition_curve(sys, steps, sample_count, seed, true)?;
    let bwd = log_condition_curve(sys, steps, sample_count, seed, false)?;
    let forward = direction_fit(&fwd, chi * alpha);
    let backward = direction_fit(&bwd, chi * alpha);
    let ok = forward.log_lambda_upper < 0.0 && backward.log_lambda_upper < 0.0;
    Ok(FiberBunching {
        ok,
        fitted_c: forward.log_c.max(backward.log_c).exp(),
        fitted_lambda: forward.log_lambda.max(backward.log_lambda).exp(),
        forward,
        backward,
        chi,
        alpha,
    })
}
