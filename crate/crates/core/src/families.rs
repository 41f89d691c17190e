//! Explicit sequences of CP decompositions converging to boundary tensors.
//!
//! Every family maps `n ↦ (A⁽ⁿ⁾, B⁽ⁿ⁾, C⁽ⁿ⁾)` with a scalar prefactor
//! (1 or `n`) and knows its limit tensor `X`. Snapshots are returned in the
//! absorbed representation with the prefactor folded into `A`; normalizing a
//! snapshot moves column norms and the prefactor into the weights.
//!
//! | kind          | R | limit dims        | prefactor |
//! |---------------|---|-------------------|-----------|
//! | `r3_example`  | 3 | 3×3×2             | 1         |
//! | `r4_example`  | 4 | I×J×K (≥ 6, 6, 5) | n         |
//! | `r6_example`  | 6 | I×J×K (≥ 8, 8, 8) | n         |
//! | `generic_r3`  | 3 | 3×3×3             | 1         |
//! | `generic_332` | 3 | 3×3×2             | 1         |
//!
//! Random draws are standard normal from the seeded generator, in the order
//! the matrices are listed in each constructor.

use serde::{Deserialize, Serialize};

use crate::cp::CpDecomposition;
use crate::error::{invalid, Result};
use crate::linalg::{random_normal, random_vector, seeded_rng, Matrix, SeededRng};
use crate::sgsd::closed_form_3x3;
use crate::tensor::{rank1, Tensor3};

/// Default n grid for sweeps.
pub const DEFAULT_N_GRID: [f64; 4] = [10.0, 100.0, 1000.0, 10000.0];

/// `Q` is re-drawn while `|det Q|` is below this.
pub const MIN_Q_DET: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    R3Example,
    R4Example,
    R6Example,
    GenericR3,
    Generic332,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::R3Example,
        FamilyKind::R4Example,
        FamilyKind::R6Example,
        FamilyKind::GenericR3,
        FamilyKind::Generic332,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::R3Example => "r3_example",
            FamilyKind::R4Example => "r4_example",
            FamilyKind::R6Example => "r6_example",
            FamilyKind::GenericR3 => "generic_r3",
            FamilyKind::Generic332 => "generic_332",
        }
    }

    pub fn rank(self) -> usize {
        match self {
            FamilyKind::R4Example => 4,
            FamilyKind::R6Example => 6,
            _ => 3,
        }
    }
}

/// Parameters needed to rebuild a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub kind: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
}

impl FamilyParams {
    pub fn build(&self) -> Result<SequenceFamily> {
        let seed = self.seed.unwrap_or(1);
        match self.kind {
            FamilyKind::R3Example => family_r3(
                self.a.unwrap_or(0.0),
                self.e.unwrap_or(1.0),
                self.f.unwrap_or(1.0),
            ),
            FamilyKind::R4Example => {
                let [i, j, k] = self.dims.unwrap_or([6, 6, 5]);
                family_r4(seed, i, j, k)
            }
            FamilyKind::R6Example => {
                let [i, j, k] = self.dims.unwrap_or([8, 8, 8]);
                family_r6(seed, i, j, k)
            }
            kind => family_generic(seed, kind),
        }
    }
}

/// JSON description of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDescription {
    pub kind: FamilyKind,
    pub params: FamilyParams,
    pub seed: Option<u64>,
    pub dims: [usize; 3],
    pub rank: usize,
    /// Times `Q` was re-drawn for being nearly singular.
    pub q_redraws: usize,
}

/// Factors of one snapshot before the prefactor is absorbed.
#[derive(Clone, Debug)]
pub struct SnapshotFactors {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub prefactor: f64,
}

#[derive(Clone, Debug)]
enum Data {
    R3 {
        a: f64,
        e: f64,
        f: f64,
    },
    R4 {
        a: Matrix,
        at: Matrix,
        b: Matrix,
        bt: Matrix,
        c: Vec<f64>,
        x: Matrix,
        y: Matrix,
        z: Matrix,
    },
    R6 {
        a: Matrix,
        b: Matrix,
        c: Matrix,
        x: Matrix,
        y: Matrix,
        z: Matrix,
    },
    Generic {
        a: f64,
        d: f64,
        e: f64,
        f: f64,
        alpha: f64,
        kappa: [f64; 2],
        slices: usize,
    },
}

/// A parametrized sequence `n ↦ CpDecomposition` with a known limit.
#[derive(Clone, Debug)]
pub struct SequenceFamily {
    params: FamilyParams,
    limit: Tensor3,
    q_redraws: usize,
    data: Data,
}

/// Spacing offsets of the three perturbed eigenvalues in the generic families.
const GENERIC_OFFSETS: [f64; 3] = [1.0, -1.0, 2.0];

impl SequenceFamily {
    pub fn kind(&self) -> FamilyKind {
        self.params.kind
    }

    pub fn params(&self) -> &FamilyParams {
        &self.params
    }

    pub fn rank(&self) -> usize {
        self.params.kind.rank()
    }

    pub fn limit(&self) -> &Tensor3 {
        &self.limit
    }

    pub fn q_redraws(&self) -> usize {
        self.q_redraws
    }

    pub fn describe(&self) -> FamilyDescription {
        FamilyDescription {
            kind: self.params.kind,
            params: self.params.clone(),
            seed: self.params.seed,
            dims: self.limit.dims(),
            rank: self.rank(),
            q_redraws: self.q_redraws,
        }
    }

    pub fn factors(&self, n: f64) -> Result<SnapshotFactors> {
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid(format!("n must be positive and finite, got {n}")));
        }
        let h = 1.0 / n;
        Ok(match &self.data {
            Data::R3 { a, e, f } => {
                let (an, bn, cn) = (a + h, a - h, a + 2.0 * h);
                let am = Matrix::from_row_slice(
                    3,
                    3,
                    &[
                        1.0,
                        0.0,
                        1.0,
                        0.0,
                        1.0,
                        e * (cn - an) / (f * (cn - bn)),
                        0.0,
                        0.0,
                        (cn - an) / f,
                    ],
                );
                let bm = Matrix::from_row_slice(
                    3,
                    3,
                    &[
                        1.0,
                        0.0,
                        0.0,
                        0.0,
                        1.0,
                        0.0,
                        f / (an - cn),
                        e / (bn - cn),
                        f / (cn - an),
                    ],
                );
                let cm = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, an, bn, cn]);
                SnapshotFactors {
                    a: am,
                    b: bm,
                    c: cm,
                    prefactor: 1.0,
                }
            }
            Data::R4 {
                a,
                at,
                b,
                bt,
                c,
                x,
                y,
                z,
            } => {
                let am = Matrix::from_columns(&[
                    a.column(0) + x.column(0) * h,
                    a.column(1) + x.column(1) * h,
                    -at.column(0) - x.column(2) * h,
                    -at.column(1) - x.column(3) * h,
                ]);
                let bm = Matrix::from_columns(&[
                    b.column(0) + y.column(0) * h,
                    b.column(1) + y.column(1) * h,
                    bt.column(0) + y.column(2) * h,
                    bt.column(1) + y.column(3) * h,
                ]);
                let cv = Matrix::from_column_slice(c.len(), 1, c);
                let cm = Matrix::from_fn(c.len(), 4, |i, r| cv[(i, 0)] + z[(i, r)] * h);
                SnapshotFactors {
                    a: am,
                    b: bm,
                    c: cm,
                    prefactor: n,
                }
            }
            Data::R6 { a, b, c, x, y, z } => {
                let sign = |r: usize| if r < 3 { 1.0 } else { -1.0 };
                SnapshotFactors {
                    a: Matrix::from_fn(a.nrows(), 6, |i, r| a[(i, r)] + sign(r) * x[(i, r)] * h),
                    b: b + y * h,
                    c: c + z * h,
                    prefactor: n,
                }
            }
            Data::Generic {
                a,
                d,
                e,
                f,
                alpha,
                kappa,
                slices,
            } => {
                let lam: Vec<f64> = GENERIC_OFFSETS.iter().map(|t| a + t * h).collect();
                let cf = closed_form_3x3(lam[0], lam[1], lam[2], *d, *e, *f)?;
                let mut cm = Matrix::from_element(*slices, 3, 1.0);
                for i in 0..3 {
                    let s = lam[i] - a;
                    cm[(1, i)] = lam[i];
                    if *slices == 3 {
                        cm[(2, i)] = alpha + kappa[0] * s + kappa[1] * s * s;
                    }
                }
                SnapshotFactors {
                    a: cf.a,
                    b: cf.b,
                    c: cm,
                    prefactor: 1.0,
                }
            }
        })
    }

    /// Snapshot in the absorbed representation (prefactor folded into `A`).
    pub fn snapshot(&self, n: f64) -> Result<CpDecomposition> {
        let f = self.factors(n)?;
        CpDecomposition::absorbed(f.a * f.prefactor, f.b, f.c)
    }

    /// Snapshot with unit columns; weights are column-norm products times the prefactor.
    pub fn normalized_snapshot(&self, n: f64) -> Result<CpDecomposition> {
        let f = self.factors(n)?;
        let cp = CpDecomposition::absorbed(f.a, f.b, f.c)?.normalize()?;
        let w = cp.weights().iter().map(|w| w * f.prefactor).collect();
        cp.with_weights(w)
    }

    /// Limits of the factor matrices as n → ∞ (before the prefactor). For the
    /// three-component families `B` is given with third entries scaled to 1,
    /// since the unscaled columns diverge.
    pub fn limit_factors(&self) -> [Matrix; 3] {
        match &self.data {
            Data::R3 { a, e, f } => [
                Matrix::from_row_slice(
                    3,
                    3,
                    &[1.0, 0.0, 1.0, 0.0, 1.0, e / (3.0 * f), 0.0, 0.0, 0.0],
                ),
                Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
                Matrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, *a, *a, *a]),
            ],
            Data::R4 {
                a, at, b, bt, c, ..
            } => [
                Matrix::from_columns(&[
                    a.column(0).into_owned(),
                    a.column(1).into_owned(),
                    -at.column(0),
                    -at.column(1),
                ]),
                Matrix::from_columns(&[b.column(0), b.column(1), bt.column(0), bt.column(1)]),
                Matrix::from_fn(c.len(), 4, |i, _| c[i]),
            ],
            Data::R6 { a, b, c, .. } => [a.clone(), b.clone(), c.clone()],
            Data::Generic {
                a, alpha, slices, ..
            } => {
                let mut cm = Matrix::from_element(*slices, 3, 1.0);
                cm.row_mut(1).fill(*a);
                if *slices == 3 {
                    cm.row_mut(2).fill(*alpha);
                }
                [
                    Matrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                    Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
                    cm,
                ]
            }
        }
    }

    /// For `r4_example`: `a₁∘b₁∘c + a₂∘b₂∘c − ã₁∘b̃₁∘c − ã₂∘b̃₂∘c`, which vanishes.
    pub fn zero_identity(&self) -> Option<Tensor3> {
        let Data::R4 {
            a, at, b, bt, c, ..
        } = &self.data
        else {
            return None;
        };
        let dims = [a.nrows(), b.nrows(), c.len()];
        let mut out = Tensor3::zeros(dims);
        for r in 0..2 {
            let plus = rank1(a.column(r).as_slice(), b.column(r).as_slice(), c).ok()?;
            let minus = rank1(at.column(r).as_slice(), bt.column(r).as_slice(), c).ok()?;
            out.add_assign_scaled(&plus, 1.0);
            out.add_assign_scaled(&minus, -1.0);
        }
        Some(out)
    }
}

/// The 3×3×2 array `[I | [[a, 0, f], [0, a, e], [0, 0, a]]]` and its sequence.
pub fn family_r3(a: f64, e: f64, f: f64) -> Result<SequenceFamily> {
    if e == 0.0 || f == 0.0 {
        return Err(invalid("e and f must be nonzero"));
    }
    if ![a, e, f].iter().all(|v| v.is_finite()) {
        return Err(invalid("parameters must be finite"));
    }
    let limit = Tensor3::from_slices(&[
        Matrix::identity(3, 3),
        Matrix::from_row_slice(3, 3, &[a, 0.0, f, 0.0, a, e, 0.0, 0.0, a]),
    ])?;
    Ok(SequenceFamily {
        params: FamilyParams {
            kind: FamilyKind::R3Example,
            a: Some(a),
            e: Some(e),
            f: Some(f),
            seed: None,
            dims: None,
        },
        limit,
        q_redraws: 0,
        data: Data::R3 { a, e, f },
    })
}

fn outer_sum(terms: &[(Vec<f64>, Vec<f64>, Vec<f64>, f64)], dims: [usize; 3]) -> Result<Tensor3> {
    let mut out = Tensor3::zeros(dims);
    for (a, b, c, s) in terms {
        out.add_assign_scaled(&rank1(a, b, c)?, *s);
    }
    Ok(out)
}

fn col(m: &Matrix, r: usize) -> Vec<f64> {
    m.column(r).iter().copied().collect()
}

/// Four diverging components whose A and B limits have rank 2.
pub fn family_r4(seed: u64, i: usize, j: usize, k: usize) -> Result<SequenceFamily> {
    if i < 6 || j < 6 || k < 5 {
        return Err(invalid(format!(
            "need I, J >= 6 and K >= 5, got {i}x{j}x{k}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let a = random_normal(&mut rng, i, 2);
    let b = random_normal(&mut rng, j, 2);
    let mut q_redraws = 0;
    let mut q = random_normal(&mut rng, 2, 2);
    while q.determinant().abs() < MIN_Q_DET {
        q = random_normal(&mut rng, 2, 2);
        q_redraws += 1;
    }
    let at = &a * &q;
    let bt = &b
        * q.clone()
            .try_inverse()
            .expect("|det Q| is bounded below")
            .transpose();
    let c = random_vector(&mut rng, k);
    let x = random_normal(&mut rng, i, 4);
    let y = random_normal(&mut rng, j, 4);
    let z = random_normal(&mut rng, k, 4);

    let lim_a = [col(&a, 0), col(&a, 1), col(&at, 0), col(&at, 1)];
    let lim_b = [col(&b, 0), col(&b, 1), col(&bt, 0), col(&bt, 1)];
    let mut terms = Vec::new();
    for r in 0..4 {
        let s = if r < 2 { 1.0 } else { -1.0 };
        terms.push((lim_a[r].clone(), lim_b[r].clone(), col(&z, r), s));
        terms.push((lim_a[r].clone(), col(&y, r), c.clone(), s));
        terms.push((col(&x, r), lim_b[r].clone(), c.clone(), s));
    }
    let limit = outer_sum(&terms, [i, j, k])?;
    Ok(SequenceFamily {
        params: FamilyParams {
            kind: FamilyKind::R4Example,
            a: None,
            e: None,
            f: None,
            seed: Some(seed),
            dims: Some([i, j, k]),
        },
        limit,
        q_redraws,
        data: Data::R4 {
            a,
            at,
            b,
            bt,
            c,
            x,
            y,
            z,
        },
    })
}

/// The fixed 2×3 factors `(A, B, C)` and `(Ã, B̃, C̃)` whose three-term sums coincide.
pub fn r6_small_factors() -> ([Matrix; 3], [Matrix; 3]) {
    let m = |v: &[f64]| Matrix::from_row_slice(2, 3, v);
    (
        [
            m(&[1.0, 0.0, 0.0, 0.0, 1.0, -1.0]),
            m(&[1.0, 1.0, 1.0, 0.0, 1.0, 0.0]),
            m(&[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]),
        ],
        [
            m(&[1.0, 0.0, 0.0, 1.0, 1.0, -1.0]),
            m(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
            m(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
        ],
    )
}

/// Six diverging components whose factor limits all have rank 2.
pub fn family_r6(seed: u64, i: usize, j: usize, k: usize) -> Result<SequenceFamily> {
    if i < 8 || j < 8 || k < 8 {
        return Err(invalid(format!("need I, J, K >= 8, got {i}x{j}x{k}")));
    }
    let mut rng = seeded_rng(seed);
    let s = random_normal(&mut rng, i, 2);
    let t = random_normal(&mut rng, j, 2);
    let u = random_normal(&mut rng, k, 2);
    let x = random_normal(&mut rng, i, 6);
    let y = random_normal(&mut rng, j, 6);
    let z = random_normal(&mut rng, k, 6);
    let ([sa, sb, sc], [ta, tb, tc]) = r6_small_factors();
    let join = |l: Matrix, r: Matrix| {
        Matrix::from_fn(
            l.nrows(),
            6,
            |p, q| if q < 3 { l[(p, q)] } else { r[(p, q - 3)] },
        )
    };
    let a = join(&s * &sa, -(&s * &ta));
    let b = join(&t * &sb, &t * &tb);
    let c = join(&u * &sc, &u * &tc);

    let mut terms = Vec::new();
    for r in 0..6 {
        // Columns 4..6 of `a` already carry the minus sign of the second sum.
        let sign = if r < 3 { 1.0 } else { -1.0 };
        terms.push((col(&a, r), col(&b, r), col(&z, r), 1.0));
        terms.push((col(&a, r), col(&y, r), col(&c, r), 1.0));
        terms.push((col(&x, r), col(&b, r), col(&c, r), sign));
    }
    let limit = outer_sum(&terms, [i, j, k])?;
    Ok(SequenceFamily {
        params: FamilyParams {
            kind: FamilyKind::R6Example,
            a: None,
            e: None,
            f: None,
            seed: Some(seed),
            dims: Some([i, j, k]),
        },
        limit,
        q_redraws: 0,
        data: Data::R6 { a, b, c, x, y, z },
    })
}

/// Off-diagonal entry with magnitude in [0.5, 2] and random sign.
fn off_diagonal(rng: &mut SeededRng) -> f64 {
    use rand::Rng;
    let mag: f64 = rng.random_range(0.5..=2.0);
    if rng.random_bool(0.5) {
        mag
    } else {
        -mag
    }
}

/// Normalized core with triple eigenvalues and nonzero off-diagonal entries,
/// approached by snapshots whose eigenvalues are spread by `1/n`.
///
/// Slice 2 is `[[a, d, f], [0, a, e], [0, 0, a]]`. For `generic_r3`, slice 3
/// is `αI + κ₁N + κ₂N²` with `N = slice₂ − aI`, so the perturbed slices keep
/// commuting and share eigenvectors.
pub fn family_generic(seed: u64, kind: FamilyKind) -> Result<SequenceFamily> {
    let slices = match kind {
        FamilyKind::GenericR3 => 3,
        FamilyKind::Generic332 => 2,
        other => return Err(invalid(format!("{} is not a generic family", other.name()))),
    };
    let mut rng = seeded_rng(seed);
    let a = random_vector(&mut rng, 1)[0];
    let d = off_diagonal(&mut rng);
    let e = off_diagonal(&mut rng);
    let f = off_diagonal(&mut rng);
    let (alpha, kappa) = if slices == 3 {
        let v = random_vector(&mut rng, 1)[0];
        (v, [off_diagonal(&mut rng), random_vector(&mut rng, 1)[0]])
    } else {
        (0.0, [0.0, 0.0])
    };
    let g2 = Matrix::from_row_slice(3, 3, &[a, d, f, 0.0, a, e, 0.0, 0.0, a]);
    let mut mats = vec![Matrix::identity(3, 3), g2.clone()];
    if slices == 3 {
        let nil = &g2 - Matrix::identity(3, 3) * a;
        mats.push(Matrix::identity(3, 3) * alpha + &nil * kappa[0] + &nil * &nil * kappa[1]);
    }
    Ok(SequenceFamily {
        params: FamilyParams {
            kind,
            a: None,
            e: None,
            f: None,
            seed: Some(seed),
            dims: None,
        },
        limit: Tensor3::from_slices(&mats)?,
        q_redraws: 0,
        data: Data::Generic {
            a,
            d,
            e,
            f,
            alpha,
            kappa,
            slices,
        },
    })
}
