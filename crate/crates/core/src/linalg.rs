//! Small dense linear algebra on top of `nalgebra`.
//!
//! Everything here works on `DMatrix<f64>` and is meant for fiber
//! dimensions up to roughly 16. The routines are pure and reentrant.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square real matrix. Cocycle values, holonomies and transition maps all use it.
pub type SquareMatrix = DMatrix<f64>;

/// Default residual tolerance for eigenpairs.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;
/// Default relative gap below which two moduli count as equal.
pub const DEFAULT_REL_GAP: f64 = 1e-6;
/// Largest matrix accepted by [`all_minors_nonzero`].
pub const MAX_MINOR_DIM: usize = 10;

const SCHUR_MAX_ITER: usize = 100_000;

/// Eigenvalues sorted by modulus (descending) with matching unit eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenData {
    pub values: Vec<Complex64>,
    pub vectors: Vec<DVector<Complex64>>,
    /// `|λ_i| / |λ_{i+1}| - 1` for consecutive pairs.
    pub moduli_gaps: Vec<f64>,
}

impl EigenData {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Smallest consecutive relative gap; `+inf` for a single eigenvalue.
    pub fn min_gap(&self) -> f64 {
        self.moduli_gaps
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every eigenvalue is real up to `tol` (relative to its modulus).
    pub fn is_real(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|v| v.im.abs() <= tol * v.norm().max(1.0))
    }

    /// Eigenvector matrix (columns in sorted order) when the spectrum is real.
    pub fn real_vectors(&self, tol: f64) -> Option<DMatrix<f64>> {
        if !self.is_real(tol) {
            return None;
        }
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for (j, v) in self.vectors.iter().enumerate() {
            if v.iter().any(|c| c.im.abs() > tol.sqrt()) {
                return None;
            }
            for i in 0..d {
                out[(i, j)] = v[i].re;
            }
        }
        Some(out)
    }
}

/// Orthonormal basis of a linear subspace of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Orthonormalizes the columns of `spanning` (which must have full column rank).
    pub fn from_spanning(spanning: &DMatrix<f64>) -> Result<Self> {
        let (d, k) = spanning.shape();
        if k == 0 || k > d {
            return Err(Error::InvalidInput(format!(
                "subspace of dimension {k} in R^{d}"
            )));
        }
        let (q, _) = qr_positive(spanning)?;
        Ok(Subspace { basis: q })
    }

    /// Accepts a column-orthonormal basis as is (checked to `tol`).
    pub fn from_orthonormal(basis: DMatrix<f64>, tol: f64) -> Result<Self> {
        let (d, k) = basis.shape();
        if k == 0 || k > d {
            return Err(Error::InvalidInput(format!(
                "subspace of dimension {k} in R^{d}"
            )));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::identity(k, k)).amax();
        if err > tol {
            return Err(Error::InvalidInput(format!(
                "basis is not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Subspace { basis })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }
}

/// Result of [`all_minors_nonzero`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorTest {
    pub ok: bool,
    pub min_margin: f64,
}

/// Result of [`subspace_transverse`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transversality {
    pub ok: bool,
    pub min_angle: f64,
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// QR factorization with `R` having a strictly positive diagonal.
///
/// Accepts tall `d×k` matrices (thin factorization, `Q` is `d×k`). The
/// factorization is unique for full-rank input.
pub fn qr_positive(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (d, k) = m.shape();
    if k > d {
        return Err(Error::DimensionMismatch(format!(
            "qr of a {d}x{k} matrix needs rows >= cols"
        )));
    }
    check_finite(m)?;
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..k {
        let pivot = r[(i, i)];
        if !(pivot.abs() >= f64::MIN_POSITIVE) {
            return Err(Error::SingularMatrix(format!("QR pivot {i} is {pivot:e}")));
        }
        if pivot < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Ok((q, r))
}

fn modulus_order(a: &Complex64, b: &Complex64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    let scale = ma.max(mb).max(f64::MIN_POSITIVE);
    if (ma - mb).abs() > 1e-12 * scale {
        return mb.partial_cmp(&ma).unwrap_or(Ordering::Equal);
    }
    b.re.partial_cmp(&a.re)
        .unwrap_or(Ordering::Equal)
        .then(b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal))
}

fn normalize_phase(v: &mut DVector<Complex64>) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    v.unscale_mut(norm);
    let cut = 1e-10 * v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|c| c.norm() > cut).copied() {
        let phase = first.conj() / first.norm();
        for c in v.iter_mut() {
            *c *= phase;
        }
    }
}

/// Eigen-decomposition sorted by modulus, ties broken by real then imaginary part.
///
/// Eigenvectors have unit norm and their first nonzero component is real
/// and positive. Every pair satisfies `|Mv - λv| ≤ tol·‖M‖`.
pub fn eigen_by_modulus(m: &DMatrix<f64>, tol: f64) -> Result<EigenData> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite(m)?;
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence("Schur iteration budget exhausted".into()))?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    values.sort_by(modulus_order);

    let norm = m.norm().max(f64::MIN_POSITIVE);
    let mc: DMatrix<Complex64> = m.map(|x| Complex64::new(x, 0.0));
    let mut vectors = Vec::with_capacity(d);
    let mut i = 0;
    while i < d {
        // Group numerically coincident eigenvalues so each gets its own null vector.
        let mut j = i + 1;
        while j < d && (values[j] - values[i]).norm() <= 1e-9 * norm {
            j += 1;
        }
        let group = j - i;
        let lambda = values[i..j].iter().sum::<Complex64>() / group as f64;
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::NoConvergence("SVD did not return right vectors".into()))?;
        for g in 0..group {
            let row = d - 1 - g;
            let mut v: DVector<Complex64> =
                DVector::from_iterator(d, v_t.row(row).iter().map(|c| c.conj()));
            normalize_phase(&mut v);
            vectors.push(v);
        }
        i = j;
    }

    for (lambda, v) in values.iter().zip(&vectors) {
        let residual = (&mc * v - v * *lambda).norm();
        if residual > tol * norm.max(1.0) {
            return Err(Error::NoConvergence(format!(
                "eigenpair residual {residual:.3e} exceeds {:.3e}",
                tol * norm.max(1.0)
            )));
        }
    }

    let moduli: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let moduli_gaps = moduli
        .windows(2)
        .map(|w| {
            if w[1] > 0.0 {
                w[0] / w[1] - 1.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(EigenData {
        values,
        vectors,
        moduli_gaps,
    })
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let (mut piv, mut best) = (col, a[(col, col)].abs());
        for r in col + 1..n {
            if a[(r, col)].abs() > best {
                best = a[(r, col)].abs();
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap_rows(piv, col);
            det = -det;
        }
        let p = a[(col, col)];
        det *= p;
        for r in col + 1..n {
            let f = a[(r, col)] / p;
            if f != 0.0 {
                for c in col + 1..n {
                    a[(r, c)] -= f * a[(col, c)];
                }
            }
        }
    }
    det
}

fn subsets_by_size(d: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = vec![Vec::new(); d + 1];
    for mask in 0u32..(1u32 << d) {
        let set: Vec<usize> = (0..d).filter(|i| mask & (1 << i) != 0).collect();
        out[set.len()].push(set);
    }
    out
}

/// Checks that every square minor of orders `1..d-1` is nonzero.
///
/// The margin of a minor with rows `I` is `|det C[I,J]| / Π_{i∈I} ‖C_i‖`,
/// which lies in `[0, 1]` by Hadamard's inequality and does not change
/// when `C` is scaled. `ok` means the smallest margin exceeds `tol`.
pub fn all_minors_nonzero(c: &DMatrix<f64>, tol: f64) -> Result<MinorTest> {
    let d = c.nrows();
    if c.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "minor test on a {}x{} matrix",
            d,
            c.ncols()
        )));
    }
    if d > MAX_MINOR_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            limit: MAX_MINOR_DIM,
        });
    }
    check_finite(c)?;
    let row_norms: Vec<f64> = (0..d).map(|i| c.row(i).norm()).collect();
    if row_norms.contains(&0.0) {
        return Ok(MinorTest {
            ok: false,
            min_margin: 0.0,
        });
    }
    let subsets = subsets_by_size(d);
    let mut min_margin: f64 = 1.0;
    for size in 1..d {
        for rows in &subsets[size] {
            let scale: f64 = rows.iter().map(|&i| row_norms[i]).product();
            for cols in &subsets[size] {
                let sub = DMatrix::from_fn(size, size, |a, b| c[(rows[a], cols[b])]);
                min_margin = min_margin.min(det(&sub).abs() / scale);
            }
        }
    }
    Ok(MinorTest {
        ok: min_margin > tol,
        min_margin,
    })
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    s
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Smallest singular value.
pub fn min_singular(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// `‖M‖·‖M⁻¹‖` in the spectral norm; `+inf` for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Largest principal angle between two subspaces of equal dimension.
pub fn max_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let s = singular_values(&(u.transpose() * v));
    let cos_min = s.last().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    // acos loses accuracy near 1; use the sine of the residual instead.
    let residual = v - u * (u.transpose() * v);
    let sin = op_norm(&residual).clamp(0.0, 1.0);
    if cos_min > 0.7 {
        sin.asin()
    } else {
        cos_min.acos()
    }
}

/// Decides whether `U ∩ V = {0}`, returning the smallest principal angle.
pub fn subspace_transverse(u: &Subspace, v: &Subspace, tol: f64) -> Transversality {
    let degenerate = Transversality {
        ok: false,
        min_angle: 0.0,
    };
    if u.ambient_dim() != v.ambient_dim() || u.dim() + v.dim() > u.ambient_dim() {
        return degenerate;
    }
    let s = singular_values(&(u.basis().transpose() * v.basis()));
    let cos_max = s.first().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    let min_angle = cos_max.acos();
    let joined = DMatrix::from_fn(u.ambient_dim(), u.dim() + v.dim(), |i, j| {
        if j < u.dim() {
            u.basis()[(i, j)]
        } else {
            v.basis()[(i, j - u.dim())]
        }
    });
    let ok = min_singular(&joined) > tol;
    Transversality {
        ok,
        min_angle: if ok { min_angle } else { 0.0 },
    }
}

/// Orthonormal basis of the orthogonal complement of the column span of `m`.
pub fn orthonormal_complement(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = m.shape();
    if k == 0 {
        return DMatrix::identity(d, d);
    }
    // Full QR: trailing columns of Q span the complement.
    let mut padded = DMatrix::zeros(d, d);
    padded.view_mut((0, 0), (d, k)).copy_from(m);
    let q = padded.qr().q();
    q.columns(k, d - k).into_owned()
}

/// Counterclockwise rotation of the plane by `theta`.
pub fn rotation2(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Builds a matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Row-major nested vectors of a matrix.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Block-diagonal matrix of two blocks.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(n + m, a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((n, a.ncols()), b.shape()).copy_from(b);
    out
}
