//! Oracles shared by the integration tests. They are written against
//! nalgebra directly so they do not go through the library code they check.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// `log` of the larger root of `x² - tr·x + 1`.
pub fn unimodular_exponent(trace: f64) -> f64 {
    ((trace + (trace * trace - 4.0).sqrt()) / 2.0).ln()
}

/// Twisting by subspace enumeration: every coordinate subspace `E_I` is
/// mapped by `c` to a subspace transverse to every `E_J` with
/// `|J| = d - |I|`, tested as full numerical rank of `[c·E_I | E_J]`.
pub fn twisting_by_rank(c: &DMatrix<f64>, rel_tol: f64) -> bool {
    let d = c.nrows();
    for imask in 1u32..(1 << d) - 1 {
        let cols_i: Vec<usize> = (0..d).filter(|i| imask & (1 << i) != 0).collect();
        for jmask in 1u32..(1 << d) - 1 {
            if (jmask.count_ones() as usize) + cols_i.len() != d {
                continue;
            }
            let cols_j: Vec<usize> = (0..d).filter(|j| jmask & (1 << j) != 0).collect();
            let mut m = DMatrix::zeros(d, d);
            for (k, &i) in cols_i.iter().enumerate() {
                m.set_column(k, &c.column(i));
            }
            for (k, &j) in cols_j.iter().enumerate() {
                m[(j, cols_i.len() + k)] = 1.0;
            }
            let s = m.svd(false, false).singular_values;
            if s.min() <= rel_tol * s.max() {
                return false;
            }
        }
    }
    true
}

/// Number of primitive cycles of length `q` in the full shift on `k`
/// symbols, counted up to rotation (necklace formula).
pub fn primitive_necklaces(k: u64, q: u64) -> u64 {
    let mut total: i64 = 0;
    for d in 1..=q {
        if q.is_multiple_of(d) {
            total += mobius(q / d) * (k.pow(d as u32) as i64);
        }
    }
    (total / q as i64) as u64
}

fn mobius(mut n: u64) -> i64 {
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

/// `|det(m)|` by cofactor expansion, exact for small integer matrices.
pub fn integer_det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<i64>> = m[1..]
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(k, _)| *k != j)
                        .map(|(_, v)| *v)
                        .collect()
                })
                .collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            sign * m[0][j] * integer_det(&minor)
        })
        .sum()
}

pub fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Random `d×d` matrix; three quarters of the seeds plant an exact
/// vanishing minor (a zero entry, a rank-one 2×2 block, or for `d ≥ 4` a
/// dependent 3×3 block).
pub fn twisting_sample(d: usize, seed: u64) -> DMatrix<f64> {
    use rand::seq::index::sample;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let rows = sample(&mut rng, d, 3.min(d)).into_vec();
    let cols = sample(&mut rng, d, 3.min(d)).into_vec();
    match (seed % 4, d) {
        (0, _) => {}
        (1, _) => c[(rows[0], cols[0])] = 0.0,
        (3, 4..) => {
            for &k in &cols {
                c[(rows[2], k)] = c[(rows[0], k)] + c[(rows[1], k)];
            }
        }
        _ => {
            for &k in &cols[..2] {
                c[(rows[1], k)] = 2.0 * c[(rows[0], k)];
            }
        }
    }
    c
}
