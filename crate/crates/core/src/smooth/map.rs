//! Diffeomorphisms of the torus given by their lifts to `R^d`.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, eigen_by_modulus, from_rows, to_rows, DEFAULT_RESIDUAL_TOL};

/// Eigenvalue moduli closer to 1 than this are not hyperbolic.
pub const HYPERBOLICITY_TOL: f64 = 1e-9;

/// A local rotation supported in a ball.
///
/// Inside `B(center, radius)` the point `x = center + y` moves to
/// `center + y + E(R(φ) - I)Eᵀy` with `φ = θρ(|y|/radius)`,
/// `ρ(t) = (1 - t²)³` and `E` an orthonormal basis of the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: DVector<f64>,
    pub plane: DMatrix<f64>,
    pub theta: f64,
    pub radius: f64,
}

fn profile(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(3)
    }
}

impl Bump {
    fn displacement(&self, x: &DVector<f64>) -> DVector<f64> {
        wrap(&(x - &self.center))
    }

    fn twist(&self, x: &DVector<f64>, sign: f64) -> DVector<f64> {
        let y = self.displacement(x);
        let t = y.norm() / self.radius;
        if t >= 1.0 || self.theta == 0.0 {
            return x.clone();
        }
        let phi = sign * self.theta * profile(t);
        let u = self.plane.transpose() * &y;
        let (s, c) = phi.sin_cos();
        let ru = DVector::from_vec(vec![c * u[0] - s * u[1], s * u[0] + c * u[1]]);
        x + &self.plane * (ru - u)
    }

    /// `Dh` at `x`.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        let y = self.displacement(x);
        let t = y.norm() / self.radius;
        if t >= 1.0 || self.theta == 0.0 {
            return DMatrix::identity(d, d);
        }
        let w = 1.0 - t * t;
        let phi = self.theta * w.powi(3);
        let grad = &y * (self.theta * -6.0 * w * w / (self.radius * self.radius));
        let u = self.plane.transpose() * &y;
        let (s, c) = phi.sin_cos();
        let r_minus_i = DMatrix::from_row_slice(2, 2, &[c - 1.0, -s, s, c - 1.0]);
        let dr_u = DVector::from_vec(vec![-s * u[0] - c * u[1], c * u[0] - s * u[1]]);
        let mut j = DMatrix::identity(d, d);
        j += &self.plane * r_minus_i * self.plane.transpose();
        j += &self.plane * dr_u * grad.transpose();
        j
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Linear {
        matrix: Vec<Vec<i64>>,
        real: DMatrix<f64>,
        inverse: DMatrix<f64>,
        translation: DVector<f64>,
    },
    Standard {
        lambda: f64,
    },
    Product(Arc<TorusMap>, Arc<TorusMap>),
}

/// A torus diffeomorphism `f ∘ h₁ ∘ ⋯ ∘ h_k` with `f` linear (possibly
/// affine), the standard map or a product, and `h_i` local rotations.
///
/// `inverted` turns the whole thing into its inverse.
#[derive(Debug, Clone)]
pub struct TorusMap {
    kind: Kind,
    bumps: Vec<Bump>,
    inverted: bool,
}

/// Representative of `x mod Z^d` in `[0, 1)^d`.
pub fn fold(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| {
        let r = v - v.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    })
}

/// Representative of `x mod Z^d` in `[-1/2, 1/2)^d`.
pub fn wrap(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| v - (v + 0.5).floor())
}

/// Euclidean distance on the flat torus.
pub fn torus_distance(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    wrap(&(x - y)).norm()
}

fn integer_det(m: &[Vec<i64>]) -> i128 {
    // Bareiss fraction-free elimination.
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    if n == 0 {
        1
    } else {
        sign * a[n - 1][n - 1]
    }
}

/// Determinant of an integer matrix, computed exactly.
pub fn exact_det(m: &[Vec<i64>]) -> i128 {
    integer_det(m)
}

fn check_integer_square(m: &[Vec<i64>]) -> Result<usize> {
    let d = m.len();
    if d == 0 || m.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch(
            "integer matrix must be square".into(),
        ));
    }
    Ok(d)
}

fn to_real(m: &[Vec<i64>]) -> DMatrix<f64> {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j] as f64)
}

/// Toral automorphism `x ↦ Ax`.
pub fn linear_anosov(matrix: Vec<Vec<i64>>) -> Result<TorusMap> {
    affine_anosov(matrix, None)
}

/// `x ↦ Ax + b`; the translation moves the fixed points but keeps `Df = A`.
pub fn affine_anosov(matrix: Vec<Vec<i64>>, translation: Option<DVector<f64>>) -> Result<TorusMap> {
    let d = check_integer_square(&matrix)?;
    let det = integer_det(&matrix);
    if det.abs() != 1 {
        return Err(Error::NotUnimodular { det });
    }
    let real = to_real(&matrix);
    let eigen = eigen_by_modulus(&real, DEFAULT_RESIDUAL_TOL)?;
    if let Some(m) = eigen
        .moduli()
        .into_iter()
        .find(|m| (m - 1.0).abs() <= HYPERBOLICITY_TOL)
    {
        return Err(Error::NotHyperbolic { modulus: m });
    }
    let inverse = real
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("unimodular matrix".into()))?
        .map(f64::round);
    let translation = translation.unwrap_or_else(|| DVector::zeros(d));
    if translation.len() != d {
        return Err(Error::DimensionMismatch("translation length".into()));
    }
    Ok(TorusMap {
        kind: Kind::Linear {
            matrix,
            real,
            inverse,
            translation,
        },
        bumps: Vec::new(),
        inverted: false,
    })
}

/// `(z, w) ↦ (z + w, w + λ sin 2π(z + w))`.
pub fn standard_map(lambda: f64) -> TorusMap {
    TorusMap {
        kind: Kind::Standard { lambda },
        bumps: Vec::new(),
        inverted: false,
    }
}

/// `(x, y) ↦ (f(x), g(y))`.
pub fn product_map(f: TorusMap, g: TorusMap) -> TorusMap {
    TorusMap {
        kind: Kind::Product(Arc::new(f), Arc::new(g)),
        bumps: Vec::new(),
        inverted: false,
    }
}

/// `g = f ∘ h` with `h` a local rotation by `theta` in `plane` around `center`.
///
/// `Dg(center) = Df(center)·R` where `R` rotates the plane by `theta` and
/// fixes its orthogonal complement. `h` preserves volume.
pub fn perturb_local_rotation(
    f: &TorusMap,
    center: &DVector<f64>,
    plane: &DMatrix<f64>,
    theta: f64,
    radius: f64,
) -> Result<TorusMap> {
    let d = f.dim();
    if f.inverted {
        return Err(Error::InvalidInput("cannot perturb an inverted map".into()));
    }
    if center.len() != d || plane.nrows() != d || plane.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "perturbation needs a point and a {d}x2 plane basis"
        )));
    }
    let gram = plane.transpose() * plane;
    if (gram - DMatrix::identity(2, 2)).amax() > 1e-10 {
        return Err(Error::InvalidInput("plane basis is not orthonormal".into()));
    }
    if !(radius > 0.0 && radius < 0.5) || !theta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "radius {radius} not in (0, 1/2)"
        )));
    }
    let mut g = f.clone();
    g.bumps.push(Bump {
        center: fold(center),
        plane: plane.clone(),
        theta,
        radius,
    });
    Ok(g)
}

impl TorusMap {
    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::Linear { matrix, .. } => matrix.len(),
            Kind::Standard { .. } => 2,
            Kind::Product(f, g) => f.dim() + g.dim(),
        }
    }

    /// `linear`, `standard`, `product` or `perturbed`.
    pub fn kind_name(&self) -> &'static str {
        if !self.bumps.is_empty() {
            return "perturbed";
        }
        match &self.kind {
            Kind::Linear { .. } => "linear",
            Kind::Standard { .. } => "standard",
            Kind::Product(..) => "product",
        }
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    pub fn is_inverted(&self) -> bool {
        self.inverted
    }

    pub fn inverse(&self) -> TorusMap {
        TorusMap {
            inverted: !self.inverted,
            ..self.clone()
        }
    }

    /// The map without its local rotations.
    pub fn unperturbed(&self) -> TorusMap {
        TorusMap {
            bumps: Vec::new(),
            ..self.clone()
        }
    }

    /// Action on `H_1`: `lift(x + m) = lift(x) + L m` for integer `m`.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let forward = self.base_linear_part();
        if self.inverted {
            forward
                .try_inverse()
                .expect("linear parts are unimodular")
                .map(f64::round)
        } else {
            forward
        }
    }

    fn base_linear_part(&self) -> DMatrix<f64> {
        match &self.kind {
            Kind::Linear { real, .. } => real.clone(),
            Kind::Standard { .. } => DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            Kind::Product(f, g) => block_diag(&f.linear_part(), &g.linear_part()),
        }
    }

    /// The lift `R^d → R^d`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.inverted {
            self.backward(x)
        } else {
            self.forward(x)
        }
    }

    /// The lift of the inverse map.
    pub fn apply_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.inverted {
            self.forward(x)
        } else {
            self.backward(x)
        }
    }

    /// Jacobian of the lift at `x`.
    pub fn derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if self.inverted {
            let y = self.backward(x);
            self.forward_derivative(&y)
                .try_inverse()
                .expect("torus maps are diffeomorphisms")
        } else {
            self.forward_derivative(x)
        }
    }

    /// `f^n(x)` on the lift, for signed `n`.
    pub fn iterate_lift(&self, x: &DVector<f64>, n: i64) -> DVector<f64> {
        let mut y = x.clone();
        for _ in 0..n.unsigned_abs() {
            y = if n > 0 {
                self.apply(&y)
            } else {
                self.apply_inverse(&y)
            };
        }
        y
    }

    fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for b in self.bumps.iter().rev() {
            y = b.twist(&y, 1.0);
        }
        self.base_forward(&y)
    }

    fn backward(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.base_backward(x);
        for b in &self.bumps {
            y = b.twist(&y, -1.0);
        }
        y
    }

    fn forward_derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut y = x.clone();
        let mut jac = DMatrix::identity(d, d);
        for b in self.bumps.iter().rev() {
            jac = b.jacobian(&y) * jac;
            y = b.twist(&y, 1.0);
        }
        self.base_derivative(&y) * jac
    }

    fn base_forward(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            Kind::Linear {
                real, translation, ..
            } => real * x + translation,
            Kind::Standard { lambda } => {
                let s = x[0] + x[1];
                DVector::from_vec(vec![s, x[1] + lambda * (TAU * s).sin()])
            }
            Kind::Product(f, g) => {
                let k = f.dim();
                let a = f.apply(&x.rows(0, k).into_owned());
                let b = g.apply(&x.rows(k, g.dim()).into_owned());
                DVector::from_iterator(x.len(), a.iter().chain(b.iter()).copied())
            }
        }
    }

    fn base_backward(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            Kind::Linear {
                inverse,
                translation,
                ..
            } => inverse * (x - translation),
            Kind::Standard { lambda } => {
                let w = x[1] - lambda * (TAU * x[0]).sin();
                DVector::from_vec(vec![x[0] - w, w])
            }
            Kind::Product(f, g) => {
                let k = f.dim();
                let a = f.apply_inverse(&x.rows(0, k).into_owned());
                let b = g.apply_inverse(&x.rows(k, g.dim()).into_owned());
                DVector::from_iterator(x.len(), a.iter().chain(b.iter()).copied())
            }
        }
    }

    fn base_derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            Kind::Linear { real, .. } => real.clone(),
            Kind::Standard { lambda } => {
                let lc = lambda * TAU * (TAU * (x[0] + x[1])).cos();
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, lc, 1.0 + lc])
            }
            Kind::Product(f, g) => {
                let k = f.dim();
                block_diag(
                    &f.derivative(&x.rows(0, k).into_owned()),
                    &g.derivative(&x.rows(k, g.dim()).into_owned()),
                )
            }
        }
    }

    /// Integer matrix of a linear model, if this is one (perturbed or not).
    pub fn integer_matrix(&self) -> Option<&[Vec<i64>]> {
        match &self.kind {
            Kind::Linear { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    pub fn to_spec(&self) -> MapSpec {
        let mut spec = match &self.kind {
            Kind::Linear {
                matrix,
                translation,
                ..
            } => MapSpec {
                kind: BaseKind::Linear,
                dim: Some(matrix.len()),
                matrix: Some(matrix.clone()),
                translation: if translation.iter().all(|v| *v == 0.0) {
                    None
                } else {
                    Some(translation.iter().copied().collect())
                },
                ..MapSpec::empty(BaseKind::Linear)
            },
            Kind::Standard { lambda } => MapSpec {
                dim: Some(2),
                lambda: Some(*lambda),
                ..MapSpec::empty(BaseKind::Standard)
            },
            Kind::Product(f, g) => MapSpec {
                dim: Some(self.dim()),
                factors: Some(vec![f.to_spec(), g.to_spec()]),
                ..MapSpec::empty(BaseKind::Product)
            },
        };
        spec.perturbations = self
            .bumps
            .iter()
            .map(|b| PerturbationSpec {
                z: b.center.iter().copied().collect(),
                plane: to_rows(&b.plane.transpose()),
                theta: b.theta,
                radius: b.radius,
            })
            .collect();
        spec.inverted = self.inverted;
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Linear,
    Standard,
    Product,
}

/// A local rotation as stored in JSON. `plane` lists the two basis vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub z: Vec<f64>,
    pub plane: Vec<Vec<f64>>,
    pub theta: f64,
    pub radius: f64,
}

/// JSON description of a [`TorusMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub kind: BaseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<MapSpec>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverted: bool,
}

impl MapSpec {
    fn empty(kind: BaseKind) -> Self {
        MapSpec {
            kind,
            dim: None,
            matrix: None,
            translation: None,
            lambda: None,
            factors: None,
            perturbations: Vec::new(),
            inverted: false,
        }
    }

    pub fn build(&self) -> Result<TorusMap> {
        let mut map = match self.kind {
            BaseKind::Linear => {
                let matrix = self
                    .matrix
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("linear map needs `matrix`".into()))?;
                let translation = self
                    .translation
                    .as_ref()
                    .map(|t| DVector::from_vec(t.clone()));
                affine_anosov(matrix, translation)?
            }
            BaseKind::Standard => standard_map(
                self.lambda
                    .ok_or_else(|| Error::InvalidInput("standard map needs `lambda`".into()))?,
            ),
            BaseKind::Product => match self.factors.as_deref() {
                Some([f, g]) => product_map(f.build()?, g.build()?),
                _ => {
                    return Err(Error::InvalidInput(
                        "product map needs two `factors`".into(),
                    ))
                }
            },
        };
        if let Some(d) = self.dim {
            if d != map.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "declared dim {d}, map has dim {}",
                    map.dim()
                )));
            }
        }
        for p in &self.perturbations {
            let plane = from_rows(&p.plane)?.transpose();
            map = perturb_local_rotation(
                &map,
                &DVector::from_vec(p.z.clone()),
                &plane,
                p.theta,
                p.radius,
            )?;
        }
        map.inverted = self.inverted;
        Ok(map)
    }
}
