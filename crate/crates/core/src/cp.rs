//! CP (Candecomp/Parafac) decompositions `Σ_r ω_r a_r ∘ b_r ∘ c_r`.
//!
//! Two representations are supported. The normalized one keeps unit-norm
//! factor columns and carries all magnitude in the weights; the absorbed one
//! has all-one weights and unnormalized columns (the matrix form
//! `Y_k = A·diag(row k of C)·Bᵀ`). Analysis code expects the normalized form;
//! [`CpDecomposition::normalize`] converts.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{argmax_abs, column_norm, is_finite, Matrix, MatrixFile};
use crate::tensor::Tensor3;

/// Columns must be unit norm to within this to count as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-12;

/// Default |congruence| above which two components count as nearly
/// proportional.
pub const DEFAULT_PROPORTIONAL_CONGRUENCE: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Normalized,
    Absorbed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpDecomposition {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    weights: Vec<f64>,
    representation: Representation,
}

impl CpDecomposition {
    /// Normalized representation; every factor column must have unit norm.
    pub fn new(a: Matrix, b: Matrix, c: Matrix, weights: Vec<f64>) -> Result<Self> {
        check_shapes(&a, &b, &c, &weights)?;
        for (mode, m) in [(1, &a), (2, &b), (3, &c)] {
            for r in 0..m.ncols() {
                let n = column_norm(m, r);
                if (n - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::ContractViolation(format!(
                        "column {} of mode-{mode} factor has norm {n}, expected 1",
                        r + 1
                    )));
                }
            }
        }
        Ok(CpDecomposition {
            a,
            b,
            c,
            weights,
            representation: Representation::Normalized,
        })
    }

    /// Absorbed representation: weights are all one, columns unconstrained.
    pub fn absorbed(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let weights = vec![1.0; a.ncols()];
        check_shapes(&a, &b, &c, &weights)?;
        Ok(CpDecomposition {
            a,
            b,
            c,
            weights,
            representation: Representation::Absorbed,
        })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.a.nrows(), self.b.nrows(), self.c.nrows()]
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Factor matrix of mode 1, 2 or 3.
    pub fn factor(&self, mode: usize) -> &Matrix {
        match mode {
            1 => &self.a,
            2 => &self.b,
            3 => &self.c,
            _ => panic!("mode must be 1, 2 or 3"),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn is_normalized(&self) -> bool {
        self.representation == Representation::Normalized
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// `Σ_r ω_r a_r ∘ b_r ∘ c_r`, assembled slice by slice as
    /// `Y_k = A·diag(ω ∘ C[k,:])·Bᵀ`.
    pub fn evaluate(&self) -> Tensor3 {
        let all: Vec<usize> = (0..self.rank()).collect();
        self.partial_sum(&all)
    }

    fn partial_sum(&self, components: &[usize]) -> Tensor3 {
        let [ni, nj, nk] = self.dims();
        let mut out = Tensor3::zeros([ni, nj, nk]);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let mut acc = 0.0;
                    for &r in components {
                        acc += self.weights[r] * self.a[(i, r)] * self.b[(j, r)] * self.c[(k, r)];
                    }
                    out.set(i, j, k, acc);
                }
            }
        }
        out
    }

    /// Unit-norm columns with magnitudes moved into the weights. The sign of
    /// each column is fixed so that its largest-magnitude entry (first one on
    /// ties) is positive; flips are compensated in the weight.
    pub fn normalize(&self) -> Result<CpDecomposition> {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        let mut c = self.c.clone();
        let mut weights = self.weights.clone();
        for r in 0..self.rank() {
            for (mode, m) in [(1, &mut a), (2, &mut b), (3, &mut c)] {
                let n = column_norm(m, r);
                if n == 0.0 {
                    return Err(Error::DegenerateComponent {
                        component: r + 1,
                        mode,
                    });
                }
                let mut col = m.column_mut(r);
                col.scale_mut(1.0 / n);
                weights[r] *= n;
                if col[argmax_abs(col.as_slice())] < 0.0 {
                    col.neg_mut();
                    weights[r] = -weights[r];
                }
            }
        }
        Ok(CpDecomposition {
            a,
            b,
            c,
            weights,
            representation: Representation::Normalized,
        })
    }

    /// Partial sum over the components of `group`.
    pub fn group_sum(&self, group: &ComponentGroup) -> Result<Tensor3> {
        group.check_range(self.rank())?;
        Ok(self.partial_sum(group.indices()))
    }

    /// Triple-cosine `(a_rᵀa_s)(b_rᵀb_s)(c_rᵀc_s)` of components `r` and `s`
    /// (0-based). Requires the normalized representation.
    pub fn congruence(&self, r: usize, s: usize) -> Result<f64> {
        if !self.is_normalized() {
            return Err(Error::ContractViolation(
                "congruence needs unit-norm factor columns; normalize first".into(),
            ));
        }
        let rank = self.rank();
        if r >= rank || s >= rank {
            return Err(invalid(format!(
                "component index out of range for rank {rank}"
            )));
        }
        if r == s {
            return Err(invalid("congruence needs two distinct components"));
        }
        Ok(self.a.column(r).dot(&self.a.column(s))
            * self.b.column(r).dot(&self.b.column(s))
            * self.c.column(r).dot(&self.c.column(s)))
    }

    /// Symmetric matrix of |congruence| with ones on the diagonal.
    pub fn abs_congruence_matrix(&self) -> Result<Matrix> {
        let rank = self.rank();
        let mut m = Matrix::identity(rank, rank);
        for r in 0..rank {
            for s in (r + 1)..rank {
                let v = self.congruence(r, s)?.abs();
                m[(r, s)] = v;
                m[(s, r)] = v;
            }
        }
        Ok(m)
    }

    /// Same decomposition with components reordered: component `i` of the
    /// result is component `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<CpDecomposition> {
        let mut seen = vec![false; self.rank()];
        if perm.len() != self.rank()
            || perm
                .iter()
                .any(|&p| p >= self.rank() || std::mem::replace(&mut seen[p], true))
        {
            return Err(invalid("not a permutation of the components"));
        }
        let pick = |m: &Matrix| Matrix::from_fn(m.nrows(), perm.len(), |i, c| m[(i, perm[c])]);
        Ok(CpDecomposition {
            a: pick(&self.a),
            b: pick(&self.b),
            c: pick(&self.c),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            representation: self.representation,
        })
    }

    /// Same factors with replaced weights (representation unchanged).
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<CpDecomposition> {
        check_shapes(&self.a, &self.b, &self.c, &weights)?;
        Ok(CpDecomposition {
            weights,
            ..self.clone()
        })
    }

    pub fn to_file(&self) -> CpFile {
        CpFile {
            a: (&self.a).into(),
            b: (&self.b).into(),
            c: (&self.c).into(),
            weights: self.weights.clone(),
            representation: Some(self.representation),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<CpDecomposition> {
        let file: CpFile = serde_json::from_str(s)?;
        file.into_cp()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<CpDecomposition> {
        CpDecomposition::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn check_shapes(a: &Matrix, b: &Matrix, c: &Matrix, weights: &[f64]) -> Result<()> {
    let r = weights.len();
    if r == 0 {
        return Err(invalid("a CP decomposition needs at least one component"));
    }
    if a.ncols() != r || b.ncols() != r || c.ncols() != r {
        return Err(invalid(format!(
            "factor column counts ({}, {}, {}) differ from {r} weights",
            a.ncols(),
            b.ncols(),
            c.ncols()
        )));
    }
    if a.nrows() == 0 || b.nrows() == 0 || c.nrows() == 0 {
        return Err(invalid("factor matrices must have at least one row"));
    }
    if !is_finite(a) || !is_finite(b) || !is_finite(c) || weights.iter().any(|w| !w.is_finite()) {
        return Err(invalid("CP factors and weights must be finite"));
    }
    Ok(())
}

/// `{"A":…, "B":…, "C":…, "weights":[…]}`; matrices in the column-major
/// [`MatrixFile`] form. A missing `representation` means normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpFile {
    #[serde(rename = "A")]
    pub a: MatrixFile,
    #[serde(rename = "B")]
    pub b: MatrixFile,
    #[serde(rename = "C")]
    pub c: MatrixFile,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<Representation>,
}

impl CpFile {
    pub fn into_cp(self) -> Result<CpDecomposition> {
        let a = self.a.into_matrix()?;
        let b = self.b.into_matrix()?;
        let c = self.c.into_matrix()?;
        match self.representation.unwrap_or(Representation::Normalized) {
            Representation::Normalized => CpDecomposition::new(a, b, c, self.weights),
            Representation::Absorbed => {
                if self.weights.iter().any(|&w| w != 1.0) {
                    return Err(invalid("absorbed decompositions carry all-one weights"));
                }
                CpDecomposition::absorbed(a, b, c)
            }
        }
    }
}

/// Sorted, duplicate-free set of 0-based component indices. Displayed
/// 1-based, e.g. `{1,2,3}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ComponentGroup {
    indices: Vec<usize>,
}

impl ComponentGroup {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("a component group cannot be empty"));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate index in component group"));
        }
        Ok(ComponentGroup { indices })
    }

    pub fn all(rank: usize) -> Self {
        ComponentGroup {
            indices: (0..rank).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, r: usize) -> bool {
        self.indices.binary_search(&r).is_ok()
    }

    pub fn is_disjoint(&self, other: &ComponentGroup) -> bool {
        self.indices.iter().all(|r| !other.contains(*r))
    }

    pub(crate) fn check_range(&self, rank: usize) -> Result<()> {
        match self.indices.last() {
            Some(&max) if max >= rank => Err(invalid(format!(
                "component {} out of range for rank {rank}",
                max + 1
            ))),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for ComponentGroup {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ComponentGroup::new(v)
    }
}

impl From<ComponentGroup> for Vec<usize> {
    fn from(g: ComponentGroup) -> Vec<usize> {
        g.indices
    }
}

impl fmt::Display for ComponentGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|r| (r + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}
