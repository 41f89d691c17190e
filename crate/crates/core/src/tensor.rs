//! Dense real 3-way arrays and the multilinear algebra built on them.
//!
//! Values are stored with `i` varying fastest, then `j`, then `k`: entry
//! `(i, j, k)` of an `I×J×K` tensor lives at `i + I·(j + J·k)`. A frontal slice
//! is therefore a contiguous column-major `I×J` block, and the mode-1
//! unfolding is the value buffer read as a column-major `I×(J·K)` matrix.
//!
//! Unfoldings put mode-`n` fibers in columns, with the remaining indices in
//! their natural order, earlier index fastest:
//!
//! | mode | shape      | column index |
//! |------|------------|--------------|
//! | 1    | `I × J·K`  | `j + J·k`    |
//! | 2    | `J × I·K`  | `i + I·k`    |
//! | 3    | `K × I·J`  | `i + I·j`    |

use std::ops::{Add, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{singular_values, Matrix};

/// Relative singular-value threshold used by [`numerical_rank`] unless the
/// caller overrides it.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(invalid(format!(
                "tensor dimensions must be positive, got {dims:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if values.len() != expected {
            return Err(invalid(format!(
                "tensor {dims:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite tensor entry at linear index {pos}"
            )));
        }
        Ok(Tensor3 { dims, values })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        assert!(
            dims.iter().all(|&d| d > 0),
            "tensor dimensions must be positive"
        );
        Tensor3 {
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(dims);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let idx = t.index(i, j, k);
                    t.values[idx] = f(i, j, k);
                }
            }
        }
        t
    }

    /// Stacks equally sized `I×J` matrices as frontal slices.
    pub fn from_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| invalid("at least one frontal slice is required"))?;
        let (rows, cols) = first.shape();
        let mut values = Vec::with_capacity(rows * cols * slices.len());
        for (k, s) in slices.iter().enumerate() {
            if s.shape() != (rows, cols) {
                return Err(invalid(format!(
                    "slice {k} is {:?}, expected {:?}",
                    s.shape(),
                    (rows, cols)
                )));
            }
            values.extend_from_slice(s.as_slice());
        }
        Tensor3::new([rows, cols, slices.len()], values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.values[idx] = v;
    }

    /// Frontal slice `k` (0-based) as an `I×J` matrix.
    pub fn slice(&self, k: usize) -> Matrix {
        let [i, j, _] = self.dims;
        let start = k * i * j;
        Matrix::from_column_slice(i, j, &self.values[start..start + i * j])
    }

    pub fn slices(&self) -> Vec<Matrix> {
        (0..self.dims[2]).map(|k| self.slice(k)).collect()
    }

    pub fn norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn scaled(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// Largest absolute entry of `self - other`; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn add_assign_scaled(&mut self, other: &Tensor3, s: f64) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn to_file(&self) -> TensorFile {
        TensorFile {
            dims: self.dims,
            values: self.values.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Tensor3> {
        let file: TensorFile = serde_json::from_str(s)?;
        Tensor3::new(file.dims, file.values)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Tensor3> {
        Tensor3::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

impl Add for &Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: &Tensor3) -> Tensor3 {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, 1.0);
        out
    }
}

impl Sub for &Tensor3 {
    type Output = Tensor3;
    fn sub(self, rhs: &Tensor3) -> Tensor3 {
        let mut out = self.clone();
        out.add_assign_scaled(rhs, -1.0);
        out
    }
}

/// On-disk form: `{"dims":[I,J,K],"values":[...]}` in the i-fastest order.
/// serde_json writes the shortest decimal that round-trips each float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorFile {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

/// Outer product `a ∘ b ∘ c`.
pub fn rank1(a: &[f64], b: &[f64], c: &[f64]) -> Result<Tensor3> {
    if a.is_empty() || b.is_empty() || c.is_empty() {
        return Err(invalid("outer-product factors must be nonempty"));
    }
    if a.iter().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(invalid("outer-product factors must be finite"));
    }
    Ok(Tensor3::from_fn([a.len(), b.len(), c.len()], |i, j, k| {
        a[i] * b[j] * c[k]
    }))
}

pub fn frobenius_norm(y: &Tensor3) -> f64 {
    y.values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_mode(mode: usize) -> Result<()> {
    if (1..=3).contains(&mode) {
        Ok(())
    } else {
        Err(invalid(format!("mode must be 1, 2 or 3, got {mode}")))
    }
}

/// Mode-`n` matricization (see the module docs for the column order).
pub fn unfold(y: &Tensor3, mode: usize) -> Result<Matrix> {
    check_mode(mode)?;
    let [ni, nj, nk] = y.dims;
    Ok(match mode {
        1 => Matrix::from_column_slice(ni, nj * nk, &y.values),
        2 => Matrix::from_fn(nj, ni * nk, |j, col| y.get(col % ni, j, col / ni)),
        _ => Matrix::from_fn(nk, ni * nj, |k, col| y.get(col % ni, col / ni, k)),
    })
}

/// Inverse of [`unfold`].
pub fn refold(m: &Matrix, mode: usize, dims: [usize; 3]) -> Result<Tensor3> {
    check_mode(mode)?;
    let [ni, nj, nk] = dims;
    let expected = match mode {
        1 => (ni, nj * nk),
        2 => (nj, ni * nk),
        _ => (nk, ni * nj),
    };
    if m.shape() != expected {
        return Err(invalid(format!(
            "mode-{mode} unfolding of {dims:?} must be {expected:?}, got {:?}",
            m.shape()
        )));
    }
    let t = match mode {
        1 => Tensor3::new(dims, m.as_slice().to_vec())?,
        2 => Tensor3::from_fn(dims, |i, j, k| m[(j, i + ni * k)]),
        _ => Tensor3::from_fn(dims, |i, j, k| m[(k, i + ni * j)]),
    };
    Ok(t)
}

/// `(…, M, …)·Y` acting on a single mode: every mode-`n` fiber `x` becomes `M x`.
pub fn mode_product(y: &Tensor3, mode: usize, m: &Matrix) -> Result<Tensor3> {
    check_mode(mode)?;
    let d = y.dims[mode - 1];
    if m.ncols() != d {
        return Err(invalid(format!(
            "mode-{mode} factor has {} columns, tensor dimension is {d}",
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(invalid("mode factor must have at least one row"));
    }
    let unfolded = unfold(y, mode)?;
    let mut dims = y.dims;
    dims[mode - 1] = m.nrows();
    refold(&(m * unfolded), mode, dims)
}

/// Multilinear matrix multiplication `(S, T, U)·G`:
/// `y_ijk = Σ_rpq s_ir t_jp u_kq g_rpq`.
pub fn multilinear_multiply(g: &Tensor3, s: &Matrix, t: &Matrix, u: &Matrix) -> Result<Tensor3> {
    let [r, p, q] = g.dims;
    if s.ncols() != r || t.ncols() != p || u.ncols() != q {
        return Err(invalid(format!(
            "factor column counts ({}, {}, {}) do not match core {:?}",
            s.ncols(),
            t.ncols(),
            u.ncols(),
            g.dims
        )));
    }
    let y = mode_product(g, 1, s)?;
    let y = mode_product(&y, 2, t)?;
    mode_product(&y, 3, u)
}

/// `(I, I, U)·G`: frontal slice `k'` of the result is `Σ_k u_{k'k} G_k`.
pub fn slicemix(g: &Tensor3, u: &Matrix) -> Result<Tensor3> {
    mode_product(g, 3, u)
}

/// Count of singular values above `tol·σ₁`; zero for the zero matrix.
pub fn numerical_rank(m: &Matrix, tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > tol * top).count(),
        _ => 0,
    }
}

pub fn mode_rank(y: &Tensor3, mode: usize, tol: f64) -> Result<usize> {
    if tol <= 0.0 {
        return Err(invalid("rank tolerance must be positive"));
    }
    Ok(numerical_rank(&unfold(y, mode)?, tol))
}

/// Mode-1, mode-2 and mode-3 ranks at one tolerance.
pub fn mode_ranks(y: &Tensor3, tol: f64) -> Result<[usize; 3]> {
    Ok([
        mode_rank(y, 1, tol)?,
        mode_rank(y, 2, tol)?,
        mode_rank(y, 3, tol)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_normal, random_vector, seeded_rng};

    fn random_tensor(seed: u64, dims: [usize; 3]) -> Tensor3 {
        let mut rng = seeded_rng(seed);
        let v = random_vector(&mut rng, dims[0] * dims[1] * dims[2]);
        Tensor3::new(dims, v).unwrap()
    }

    #[test]
    fn rank1_scalar_case() {
        let t = rank1(&[1.0], &[1.0], &[1.0]).unwrap();
        assert_eq!(t.dims(), [1, 1, 1]);
        assert_eq!(t.values(), &[1.0]);
    }

    #[test]
    fn rank1_unit_vectors() {
        let t = rank1(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        for k in 0..2 {
            for j in 0..2 {
                for i in 0..2 {
                    let expected = if i == 0 && j == 1 { 1.0 } else { 0.0 };
                    assert_eq!(t.get(i, j, k), expected);
                }
            }
        }
    }

    #[test]
    fn rank1_rejects_empty() {
        assert!(rank1(&[], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn rank1_matches_triple_loop() {
        let mut rng = seeded_rng(11);
        let (a, b, c) = (
            random_vector(&mut rng, 3),
            random_vector(&mut rng, 3),
            random_vector(&mut rng, 3),
        );
        let t = rank1(&a, &b, &c).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(t.get(i, j, k), a[i] * b[j] * c[k]);
                }
            }
        }
    }

    #[test]
    fn construction_validates() {
        assert!(Tensor3::new([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Tensor3::new([0, 2, 2], vec![]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(Tensor3::new([2, 2, 2], v).is_err());
    }

    #[test]
    fn linearization_is_i_fastest() {
        let t = Tensor3::new([2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 0, 0), 1.0);
        assert_eq!(t.get(0, 1, 0), 2.0);
        assert_eq!(t.get(0, 0, 1), 6.0);
    }

    #[test]
    fn multilinear_identity_and_scalar() {
        let g = random_tensor(1, [3, 2, 4]);
        let y = multilinear_multiply(
            &g,
            &Matrix::identity(3, 3),
            &Matrix::identity(2, 2),
            &Matrix::identity(4, 4),
        )
        .unwrap();
        assert_eq!(y, g);

        let g = Tensor3::new([1, 1, 1], vec![2.5]).unwrap();
        let s = Matrix::from_element(1, 1, 3.0);
        let t = Matrix::from_element(1, 1, -2.0);
        let u = Matrix::from_element(1, 1, 0.5);
        let y = multilinear_multiply(&g, &s, &t, &u).unwrap();
        assert_eq!(y.values(), &[3.0 * -2.0 * 0.5 * 2.5]);
    }

    #[test]
    fn multilinear_dimension_mismatch() {
        let g = random_tensor(2, [2, 2, 2]);
        let bad = Matrix::identity(3, 3);
        let id = Matrix::identity(2, 2);
        assert!(multilinear_multiply(&g, &bad, &id, &id).is_err());
    }

    #[test]
    fn multilinear_matches_brute_force() {
        let mut rng = seeded_rng(4);
        let g = random_tensor(5, [3, 3, 3]);
        let s = random_normal(&mut rng, 4, 3);
        let t = random_normal(&mut rng, 4, 3);
        let u = random_normal(&mut rng, 4, 3);
        let y = multilinear_multiply(&g, &s, &t, &u).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let mut acc = 0.0;
                    for r in 0..3 {
                        for p in 0..3 {
                            for q in 0..3 {
                                acc += s[(i, r)] * t[(j, p)] * u[(k, q)] * g.get(r, p, q);
                            }
                        }
                    }
                    assert!((acc - y.get(i, j, k)).abs() <= 1e-12 * acc.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn slicemix_identity_and_swap() {
        let g = random_tensor(6, [3, 2, 2]);
        assert_eq!(slicemix(&g, &Matrix::identity(2, 2)).unwrap(), g);
        let swap = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = slicemix(&g, &swap).unwrap();
        assert_eq!(m.slice(0), g.slice(1));
        assert_eq!(m.slice(1), g.slice(0));
    }

    #[test]
    fn slicemix_matches_slice_combination() {
        let mut rng = seeded_rng(7);
        let g = random_tensor(8, [3, 4, 3]);
        let u = random_normal(&mut rng, 2, 3);
        let m = slicemix(&g, &u).unwrap();
        for kp in 0..2 {
            let mut expected = Matrix::zeros(3, 4);
            for k in 0..3 {
                expected += g.slice(k) * u[(kp, k)];
            }
            assert!((m.slice(kp) - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn norms() {
        assert_eq!(frobenius_norm(&Tensor3::zeros([2, 3, 1])), 0.0);
        let mut t = Tensor3::zeros([2, 2, 2]);
        t.set(1, 0, 1, 3.0);
        assert_eq!(frobenius_norm(&t), 3.0);
        let r = random_tensor(9, [3, 4, 5]);
        let via_unfold = unfold(&r, 1).unwrap().norm();
        assert!((via_unfold - r.norm()).abs() < 1e-13);
    }

    #[test]
    fn unfold_orders_and_refold() {
        let y = random_tensor(10, [2, 3, 4]);
        for mode in 1..=3 {
            let m = unfold(&y, mode).unwrap();
            assert_eq!(refold(&m, mode, y.dims()).unwrap(), y);
        }
        let m2 = unfold(&y, 2).unwrap();
        assert_eq!(m2[(2, 1 + 2 * 3)], y.get(1, 2, 3));
        let m3 = unfold(&y, 3).unwrap();
        assert_eq!(m3[(3, 1 + 2 * 2)], y.get(1, 2, 3));
        assert!(unfold(&y, 4).is_err());
        assert!(unfold(&y, 0).is_err());
    }

    #[test]
    fn unfold_scalar() {
        let y = Tensor3::new([1, 1, 1], vec![4.0]).unwrap();
        let m = unfold(&y, 2).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m[(0, 0)], 4.0);
    }

    #[test]
    fn numerical_rank_cases() {
        assert_eq!(numerical_rank(&Matrix::identity(3, 3), 1e-8), 3);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), 1e-8), 0);
        let mut rng = seeded_rng(12);
        let u = random_normal(&mut rng, 4, 1);
        let v = random_normal(&mut rng, 1, 5);
        assert_eq!(numerical_rank(&(u * v), 1e-8), 1);
        // Limit of the R = 3 example's first factor with e = f = 1.
        let a = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0 / 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(numerical_rank(&a, 1e-8), 2);
    }

    #[test]
    fn mode_rank_of_rank1() {
        let t = rank1(&[1.0, 2.0], &[0.5, -1.0, 3.0], &[2.0, 1.0]).unwrap();
        assert_eq!(mode_ranks(&t, DEFAULT_RANK_TOL).unwrap(), [1, 1, 1]);
        assert_eq!(numerical_rank(&unfold(&t, 1).unwrap(), 1e-8), 1);
        assert!(mode_rank(&t, 1, 0.0).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let y = random_tensor(13, [2, 3, 2]);
        let back = Tensor3::from_json(&y.to_json().unwrap()).unwrap();
        assert_eq!(back, y);
        assert!(Tensor3::from_json(r#"{"dims":[2,2,2],"values":[1,2]}"#).is_err());
    }
}
