//! Small dense linear-algebra helpers shared by the analysis modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`, which is column-major.
//! That storage order is also the documented linearization of [`Matrix`]
//! in the JSON file formats.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Dense real matrix, column-major.
pub type Matrix = DMatrix<f64>;

/// Seeded generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_normal(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    // Filled column by column so the draw order matches the storage order.
    let mut m = Matrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

pub fn random_vector(rng: &mut SeededRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random matrix with orthonormal columns (QR of a Gaussian draw, signs fixed
/// so that R has a positive diagonal).
pub fn random_orthonormal(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    assert!(
        cols <= rows,
        "cannot draw {cols} orthonormal columns in R^{rows}"
    );
    let g = random_normal(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Singular values in non-increasing order. Empty for an empty matrix.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// 2-norm condition number; infinite for a singular or empty matrix.
pub fn condition_number(m: &Matrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Largest absolute entry of `MᵀM − I`.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let g = m.transpose() * m;
    let n = g.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Leading `r` left singular vectors of `m` (padded with an orthonormal
/// completion when `m` has fewer than `r` columns).
pub fn leading_left_singular_vectors(m: &Matrix, r: usize) -> Matrix {
    let rows = m.nrows();
    assert!(r <= rows);
    // Eigen-decomposition of the Gram matrix MMᵀ is accurate enough for a basis
    // and handles any number of columns.
    let gram = m * m.transpose();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut basis = Matrix::zeros(rows, r);
    for (c, &idx) in order.iter().take(r).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        if v[argmax_abs(v.as_slice())] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(c, &v);
    }
    // Re-orthonormalize; the eigenvectors are orthonormal up to rounding.
    let qr = basis.clone().qr();
    let mut q = qr.q();
    let rr = qr.r();
    for c in 0..r {
        if rr[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Orthogonal matrix whose first column is `v / |v|` (Householder reflector).
pub fn householder_completion(v: &[f64]) -> Matrix {
    let n = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut h = Matrix::identity(n, n);
    if norm == 0.0 {
        return h;
    }
    let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
    // w = e1 - u; H = I - 2 w wᵀ / (wᵀw) maps e1 to u.
    let mut w = u.iter().map(|x| -x).collect::<Vec<_>>();
    w[0] += 1.0;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    if ww < 1e-30 {
        return h;
    }
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] -= 2.0 * w[i] * w[j] / ww;
        }
    }
    h
}

pub fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

pub fn column_norm(m: &Matrix, c: usize) -> f64 {
    m.column(c).norm()
}

/// Copy of `m` with every column scaled to unit Euclidean norm. Zero columns
/// are left untouched.
pub fn normalize_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for c in 0..m.ncols() {
        let n = column_norm(m, c);
        if n > 0.0 {
            out.column_mut(c).scale_mut(1.0 / n);
        }
    }
    out
}

/// Submatrix made of the listed columns.
pub fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Frobenius norm of the strictly lower triangular part of a square matrix.
pub fn strictly_lower_norm_sq(m: &Matrix) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            acc += m[(i, j)] * m[(i, j)];
        }
    }
    acc
}

/// Serialized matrix: dimensions plus column-major values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl From<&Matrix> for MatrixFile {
    fn from(m: &Matrix) -> Self {
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.as_slice().to_vec(),
        }
    }
}

impl MatrixFile {
    pub fn into_matrix(self) -> Result<Matrix> {
        if self.values.len() != self.rows * self.cols {
            return Err(invalid(format!(
                "matrix has {} values, expected {}x{}",
                self.values.len(),
                self.rows,
                self.cols
            )));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(invalid("matrix contains non-finite values"));
        }
        Ok(Matrix::from_column_slice(
            self.rows,
            self.cols,
            &self.values,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn householder_first_column() {
        let v = [3.0, -4.0, 0.0];
        let h = householder_completion(&v);
        assert!(orthonormality_error(&h) < 1e-14);
        assert!((h[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((h[(1, 0)] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn random_orthonormal_is_orthonormal() {
        let mut rng = seeded_rng(3);
        let q = random_orthonormal(&mut rng, 7, 4);
        assert!(orthonormality_error(&q) < 1e-14);
    }

    #[test]
    fn leading_vectors_span_range() {
        let mut rng = seeded_rng(5);
        let a = random_normal(&mut rng, 6, 2);
        let b = random_normal(&mut rng, 2, 9);
        let m = &a * &b;
        let u = leading_left_singular_vectors(&m, 2);
        let resid = &m - &u * (u.transpose() * &m);
        assert!(resid.norm() < 1e-12 * m.norm());
    }

    #[test]
    fn singular_values_sorted() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 0.0]);
        assert_eq!(singular_values(&m), vec![3.0, 2.0]);
        assert_eq!(condition_number(&m), 1.5);
    }
}
