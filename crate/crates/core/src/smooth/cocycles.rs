//! Cocycles over torus maps in the global trivialization `TT^d = T^d × R^d`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{fold, torus_distance, TorusMap};
use crate::cocycle::Cocycle;
use crate::error::{Error, Result};

/// Uniform point of `[0, 1)^d`, deterministic per seed.
pub fn sample_torus(d: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(d, |_, _| rng.random::<f64>())
}

fn finite(x: &DVector<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// `x ↦ Df_x`.
#[derive(Debug, Clone)]
pub struct DerivativeCocycle {
    map: TorusMap,
}

pub fn derivative_cocycle(map: &TorusMap) -> DerivativeCocycle {
    DerivativeCocycle { map: map.clone() }
}

impl DerivativeCocycle {
    pub fn map(&self) -> &TorusMap {
        &self.map
    }
}

impl Cocycle for DerivativeCocycle {
    type Point = DVector<f64>;

    fn fiber_dim(&self) -> usize {
        self.map.dim()
    }

    fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        fold(&self.map.apply(x))
    }

    fn inverse_step(&self, x: &DVector<f64>) -> DVector<f64> {
        fold(&self.map.apply_inverse(x))
    }

    fn generator(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.map.derivative(x)
    }

    fn sample(&self, seed: u64) -> DVector<f64> {
        sample_torus(self.map.dim(), seed)
    }

    fn is_valid(&self, x: &DVector<f64>) -> bool {
        finite(x)
    }

    fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        torus_distance(x, y)
    }
}

/// Matrix-valued function on the torus.
pub type Field = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An arbitrary generator over a torus map.
#[derive(Clone)]
pub struct TorusCocycle {
    map: TorusMap,
    fiber_dim: usize,
    field: Field,
    alpha: f64,
}

impl fmt::Debug for TorusCocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusCocycle")
            .field("map", &self.map)
            .field("fiber_dim", &self.fiber_dim)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl TorusCocycle {
    pub fn new(map: &TorusMap, fiber_dim: usize, field: Field, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "Hölder exponent {alpha} not in (0, 1]"
            )));
        }
        let probe = field(&DVector::zeros(map.dim()));
        if probe.nrows() != fiber_dim || probe.ncols() != fiber_dim {
            return Err(Error::DimensionMismatch(format!(
                "field returns {}x{}, expected {fiber_dim}x{fiber_dim}",
                probe.nrows(),
                probe.ncols()
            )));
        }
        Ok(TorusCocycle {
            map: map.clone(),
            fiber_dim,
            field,
            alpha,
        })
    }

    /// The same matrix over every point.
    pub fn constant(map: &TorusMap, a: DMatrix<f64>) -> Result<Self> {
        let d = a.nrows();
        TorusCocycle::new(map, d, Arc::new(move |_| a.clone()), 1.0)
    }

    /// `I + ε·S(x)` for a fixed smooth 2×2 field `S` of period 1.
    pub fn near_identity(map: &TorusMap, epsilon: f64) -> Result<Self> {
        let field: Field = Arc::new(move |x: &DVector<f64>| {
            let a = std::f64::consts::TAU * x[0];
            let b = std::f64::consts::TAU * x[x.len() - 1];
            let s = DMatrix::from_row_slice(
                2,
                2,
                &[a.sin(), b.cos(), (a + b).cos(), (a - 2.0 * b).sin()],
            );
            DMatrix::identity(2, 2) + s * epsilon
        });
        TorusCocycle::new(map, 2, field, 1.0)
    }

    pub fn map(&self) -> &TorusMap {
        &self.map
    }
}

impl Cocycle for TorusCocycle {
    type Point = DVector<f64>;

    fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        fold(&self.map.apply(x))
    }

    fn inverse_step(&self, x: &DVector<f64>) -> DVector<f64> {
        fold(&self.map.apply_inverse(x))
    }

    fn generator(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.field)(x)
    }

    fn holder_exponent(&self) -> f64 {
        self.alpha
    }

    fn sample(&self, seed: u64) -> DVector<f64> {
        sample_torus(self.map.dim(), seed)
    }

    fn is_valid(&self, x: &DVector<f64>) -> bool {
        finite(x)
    }

    fn distance(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        torus_distance(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::iterate;
    use crate::smooth::map::{linear_anosov, standard_map};

    #[test]
    fn derivative_of_linear_is_constant() {
        let f = linear_anosov(vec![vec![2, 1], vec![1, 1]]).unwrap();
        let c = derivative_cocycle(&f);
        let x = sample_torus(2, 4);
        assert_eq!(
            c.generator(&x),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])
        );
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let f = standard_map(0.4);
        let c = derivative_cocycle(&f);
        for seed in 0..10 {
            let x = sample_torus(2, seed);
            let n = 1 + seed as i64 % 5;
            let m = iterate(&c, &x, n).unwrap();
            let h = 1e-7;
            for col in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[col] += h;
                xm[col] -= h;
                let fd = (f.iterate_lift(&xp, n) - f.iterate_lift(&xm, n)) / (2.0 * h);
                assert!((fd - m.column(col)).amax() < 1e-5 * m.amax().max(1.0));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_torus(3, 9), sample_torus(3, 9));
        assert_ne!(sample_torus(3, 9), sample_torus(3, 10));
    }
}
