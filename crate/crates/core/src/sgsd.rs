//! Simultaneous generalized Schur decomposition (SGSD) of boundary tensors
//! and the joint eigenstructure of the normalized core.
//!
//! `sgsd_jacobi` compresses `X` to an `R×R×Q` core (`Q = min(R, K)`) with the
//! leading singular vectors of each unfolding, then searches for orthogonal
//! `Q₁, Z₁` making every slice of `Q₁ᵀ·G₀ₖ·Z₁` upper triangular. Mode-3
//! rotations leave the objective unchanged, so the mode-3 factor is the
//! compression basis itself.
//!
//! The search runs from several starting points: the identity, plus starts
//! built by deflating one approximate joint eigenvector at a time. Each start
//! gets cyclic Jacobi sweeps followed by a Levenberg–Marquardt polish over
//! the orthogonal group (Cayley updates). The start with the smallest
//! objective wins. Plain Jacobi alone stalls on degenerate cores, where the
//! joint Schur vectors are ill-conditioned.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DVector, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    condition_number, householder_completion, leading_left_singular_vectors, orthonormality_error,
    random_vector, seeded_rng, singular_values, Matrix, MatrixFile, SeededRng,
};
use crate::tensor::{multilinear_multiply, slicemix, unfold, Tensor3, TensorFile};

/// Relative eigenvalue coincidence tolerance for multiplicity partitions.
pub const DEFAULT_COINCIDENCE_TOL: f64 = 1e-6;
/// Entries below this fraction of the core norm count as zero.
pub const DEFAULT_ZERO_ENTRY_TOL: f64 = 1e-6;
pub const DEFAULT_COND_CAP: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgsdOptions {
    /// Iteration budget per start: Jacobi sweeps plus polish steps.
    pub max_sweeps: usize,
    /// Stop once the relative objective decrease per iteration drops below this.
    pub tol: f64,
    /// Jacobi sweeps per start before switching to the polish.
    pub jacobi_sweeps: usize,
    /// Number of deflation starts tried in addition to the identity start.
    pub starts: usize,
    pub seed: u64,
}

impl Default for SgsdOptions {
    fn default() -> Self {
        SgsdOptions {
            max_sweeps: 200,
            tol: 1e-12,
            jacobi_sweeps: 30,
            starts: 3,
            seed: 0,
        }
    }
}

/// `X ≈ (S, T, U)·G` with orthonormal `S, T, U` and upper-triangular slices of `G`.
#[derive(Clone, Debug)]
pub struct SchurForm {
    pub s: Matrix,
    pub t: Matrix,
    pub u: Matrix,
    pub g: Tensor3,
    /// Frobenius norm of the strictly lower parts of all slices of `G`.
    pub below_diag_residual: f64,
    /// `‖(S, T, U)·G − X‖`.
    pub reconstruction_error: f64,
    /// Largest entry of `SᵀS − I`, `TᵀT − I`, `UᵀU − I`.
    pub orthonormality_drift: f64,
    /// Objective (squared residual) after each iteration of the winning start.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    /// Index of the winning start; 0 is the identity start.
    pub start: usize,
}

#[derive(Serialize, Deserialize)]
struct SchurFormFile {
    #[serde(rename = "S")]
    s: MatrixFile,
    #[serde(rename = "T")]
    t: MatrixFile,
    #[serde(rename = "U")]
    u: MatrixFile,
    #[serde(rename = "G")]
    g: TensorFile,
    below_diag_residual: f64,
    reconstruction_error: f64,
    orthonormality_drift: f64,
    converged: bool,
}

impl SchurForm {
    pub fn to_json(&self) -> Result<String> {
        let file = SchurFormFile {
            s: (&self.s).into(),
            t: (&self.t).into(),
            u: (&self.u).into(),
            g: self.g.to_file(),
            below_diag_residual: self.below_diag_residual,
            reconstruction_error: self.reconstruction_error,
            orthonormality_drift: self.orthonormality_drift,
            converged: self.converged,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Diagonal positions (1-based) that are below `tol·‖G‖` in every slice.
    pub fn zero_diagonal_positions(&self, tol: f64) -> Vec<usize> {
        zero_diagonal_positions(&self.g, tol)
    }
}

pub fn zero_diagonal_positions(g: &Tensor3, tol: f64) -> Vec<usize> {
    let [r, _, q] = g.dims();
    let cap = tol * g.norm();
    (0..r)
        .filter(|&i| (0..q).all(|k| g.get(i, i, k).abs() <= cap))
        .map(|i| i + 1)
        .collect()
}

fn lower_sq(slices: &[Matrix]) -> f64 {
    slices
        .iter()
        .map(crate::linalg::strictly_lower_norm_sq)
        .sum()
}

fn transform(g0: &[Matrix], q: &Matrix, z: &Matrix) -> Vec<Matrix> {
    let qt = q.transpose();
    g0.iter().map(|m| &qt * m * z).collect()
}

/// Unit eigenvector of the smallest eigenvalue of `[[h00, h01], [h01, h11]]`.
fn smallest_eigvec_2x2(h00: f64, h01: f64, h11: f64) -> (f64, f64) {
    let theta = 0.5 * (2.0 * h01).atan2(h00 - h11);
    // (cos θ, sin θ) spans the dominant direction.
    (-theta.sin(), theta.cos())
}

fn jacobi_sweep(g: &mut [Matrix], q_acc: &mut Matrix, z_acc: &mut Matrix) {
    let r = q_acc.ncols();
    for p in 0..r.saturating_sub(1) {
        for q in (p + 1)..r {
            // Row rotation: the new row q, restricted to columns p..q-1,
            // should be as small as possible.
            let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
            for m in g.iter() {
                for j in p..q {
                    let (x, y) = (m[(p, j)], m[(q, j)]);
                    h00 += x * x;
                    h01 += x * y;
                    h11 += y * y;
                }
            }
            let (ms, c) = smallest_eigvec_2x2(h00, h01, h11);
            let s = -ms;
            for m in g.iter_mut() {
                for j in 0..r {
                    let (x, y) = (m[(p, j)], m[(q, j)]);
                    m[(p, j)] = c * x + s * y;
                    m[(q, j)] = -s * x + c * y;
                }
            }
            for i in 0..q_acc.nrows() {
                let (x, y) = (q_acc[(i, p)], q_acc[(i, q)]);
                q_acc[(i, p)] = c * x + s * y;
                q_acc[(i, q)] = -s * x + c * y;
            }

            // Column rotation: the new column p, restricted to rows p+1..q.
            let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
            for m in g.iter() {
                for i in (p + 1)..=q {
                    let (x, y) = (m[(i, p)], m[(i, q)]);
                    h00 += x * x;
                    h01 += x * y;
                    h11 += y * y;
                }
            }
            let (c, s) = smallest_eigvec_2x2(h00, h01, h11);
            for m in g.iter_mut() {
                for i in 0..r {
                    let (x, y) = (m[(i, p)], m[(i, q)]);
                    m[(i, p)] = c * x + s * y;
                    m[(i, q)] = -s * x + c * y;
                }
            }
            for i in 0..z_acc.nrows() {
                let (x, y) = (z_acc[(i, p)], z_acc[(i, q)]);
                z_acc[(i, p)] = c * x + s * y;
                z_acc[(i, q)] = -s * x + c * y;
            }
        }
    }
}

fn lower_entries(g: &[Matrix], out: &mut Vec<f64>) {
    out.clear();
    for m in g {
        let r = m.nrows();
        for j in 0..r {
            for i in (j + 1)..r {
                out.push(m[(i, j)]);
            }
        }
    }
}

fn cayley(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let id = Matrix::identity(n, n);
    let lhs = &id - a * 0.5;
    let rhs = &id + a * 0.5;
    lhs.lu()
        .solve(&rhs)
        .expect("I - A/2 is nonsingular for skew A")
}

struct StartResult {
    q: Matrix,
    z: Matrix,
    history: Vec<f64>,
    converged: bool,
}

fn run_start(g0: &[Matrix], q: Matrix, z: Matrix, opts: &SgsdOptions, floor: f64) -> StartResult {
    let mut q = q;
    let mut z = z;
    let mut g = transform(g0, &q, &z);
    let mut f = lower_sq(&g);
    let mut history = vec![f];
    let mut budget = opts.max_sweeps;
    let r = q.ncols();
    if r < 2 || f <= floor {
        return StartResult {
            q,
            z,
            history,
            converged: true,
        };
    }

    for _ in 0..opts.jacobi_sweeps.min(budget) {
        jacobi_sweep(&mut g, &mut q, &mut z);
        budget -= 1;
        let next = lower_sq(&g);
        let rel = (f - next) / f;
        f = next;
        history.push(f);
        if f <= floor {
            return StartResult {
                q,
                z,
                history,
                converged: true,
            };
        }
        if rel < opts.tol {
            break;
        }
    }

    // Levenberg–Marquardt on skew generators of the two rotations.
    let pairs: Vec<(usize, usize)> = (0..r)
        .flat_map(|p| ((p + 1)..r).map(move |q| (p, q)))
        .collect();
    let np = pairs.len();
    let mut g = transform(g0, &q, &z);
    f = lower_sq(&g);
    let mut res = Vec::new();
    let mut col = Vec::new();
    let mut mu = 1e-3;
    let mut converged = false;
    while budget > 0 {
        lower_entries(&g, &mut res);
        let m = res.len();
        let mut jac = Matrix::zeros(m, 2 * np);
        for (idx, &(p, qq)) in pairs.iter().enumerate() {
            // -E·G with E = e_p e_qᵀ − e_q e_pᵀ.
            let left: Vec<Matrix> = g
                .iter()
                .map(|gk| {
                    let mut d = Matrix::zeros(r, r);
                    for j in 0..r {
                        d[(p, j)] = -gk[(qq, j)];
                        d[(qq, j)] = gk[(p, j)];
                    }
                    d
                })
                .collect();
            lower_entries(&left, &mut col);
            jac.column_mut(idx).copy_from_slice(&col);
            // G·E.
            let right: Vec<Matrix> = g
                .iter()
                .map(|gk| {
                    let mut d = Matrix::zeros(r, r);
                    for i in 0..r {
                        d[(i, qq)] = gk[(i, p)];
                        d[(i, p)] = -gk[(i, qq)];
                    }
                    d
                })
                .collect();
            lower_entries(&right, &mut col);
            jac.column_mut(np + idx).copy_from_slice(&col);
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = -(&jt * DVector::from_column_slice(&res));
        let mut accepted = false;
        while budget > 0 {
            let mut lhs = jtj.clone();
            for i in 0..2 * np {
                lhs[(i, i)] += mu;
            }
            let step = match Cholesky::new(lhs) {
                Some(ch) => ch.solve(&grad),
                None => {
                    mu *= 4.0;
                    if mu > 1e10 {
                        break;
                    }
                    continue;
                }
            };
            let mut a = Matrix::zeros(r, r);
            let mut b = Matrix::zeros(r, r);
            for (idx, &(p, qq)) in pairs.iter().enumerate() {
                a[(p, qq)] = step[idx];
                a[(qq, p)] = -step[idx];
                b[(p, qq)] = step[np + idx];
                b[(qq, p)] = -step[np + idx];
            }
            let qn = &q * cayley(&a);
            let zn = &z * cayley(&b);
            let gn = transform(g0, &qn, &zn);
            let fnew = lower_sq(&gn);
            budget -= 1;
            if fnew < f {
                let rel = (f - fnew) / f;
                q = qn;
                z = zn;
                g = gn;
                f = fnew;
                history.push(f);
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if rel < opts.tol {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
            if mu > 1e10 {
                break;
            }
        }
        if !accepted || converged || f <= floor {
            converged = true;
            break;
        }
    }
    StartResult {
        q,
        z,
        history,
        converged,
    }
}

/// Unit null vector of `m`: right singular vector of the smallest singular value.
fn null_vector(m: &Matrix) -> DVector<f64> {
    let n = m.ncols();
    let padded;
    let m = if m.nrows() < n {
        padded = m.clone().resize_vertically(n, 0.0);
        &padded
    } else {
        m
    };
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut best = 0;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < svd.singular_values[best] {
            best = i;
        }
    }
    vt.row(best).transpose()
}

/// Start built by peeling off one approximate joint eigenvector at a time.
fn deflation_start(g0: &[Matrix], rng: &mut SeededRng) -> Option<(Matrix, Matrix)> {
    let r = g0[0].nrows();
    let nslices = g0.len();
    let mut ms: Vec<Matrix> = g0.to_vec();
    let mut qb = Matrix::identity(r, r);
    let mut zb = Matrix::identity(r, r);
    let mut qcols = Vec::with_capacity(r);
    let mut zcols = Vec::with_capacity(r);
    for _ in 0..r - 1 {
        let m = ms[0].nrows();
        let u = random_vector(rng, nslices);
        let v = random_vector(rng, nslices);
        let mut ma = Matrix::zeros(m, m);
        let mut mb = Matrix::zeros(m, m);
        for k in 0..nslices {
            ma += &ms[k] * u[k];
            mb += &ms[k] * v[k];
        }
        let lu = ma.clone().lu();
        let ws: Vec<Matrix> = ms.iter().map(|mk| lu.solve(mk)).collect::<Option<_>>()?;
        let pencil = lu.solve(&mb)?;
        if !pencil.iter().all(|x| x.is_finite()) {
            return None;
        }
        let eigs = Schur::try_new(pencil.clone(), f64::EPSILON, 10_000)?.complex_eigenvalues();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for lam in eigs.iter() {
            if lam.im.abs() > 1e-8 * lam.re.abs().max(1.0) {
                continue;
            }
            let shifted = &pencil - Matrix::identity(m, m) * lam.re;
            let x = null_vector(&shifted);
            let mut score = 0.0;
            for w in &ws {
                let wx = w * &x;
                let rq = x.dot(&wx);
                score += (wx - &x * rq).norm_squared();
            }
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, x));
            }
        }
        let (_, z) = best?;
        let qv = &ma * &z;
        if qv.norm() == 0.0 || !qv.iter().all(|x| x.is_finite()) {
            return None;
        }
        let hz = householder_completion(z.as_slice());
        let hq = householder_completion(qv.as_slice());
        zcols.push(&zb * hz.column(0));
        qcols.push(&qb * hq.column(0));
        let hz_rest = hz.columns(1, m - 1).into_owned();
        let hq_rest = hq.columns(1, m - 1).into_owned();
        zb = &zb * &hz_rest;
        qb = &qb * &hq_rest;
        let hq_t = hq_rest.transpose();
        ms = ms.iter().map(|mk| &hq_t * mk * &hz_rest).collect();
    }
    qcols.push(qb.column(0).into_owned());
    zcols.push(zb.column(0).into_owned());
    Some((Matrix::from_columns(&qcols), Matrix::from_columns(&zcols)))
}

/// Computes an SGSD of `x` with an `R×R×min(R, K)` core.
pub fn sgsd_jacobi(x: &Tensor3, r: usize, opts: &SgsdOptions) -> Result<SchurForm> {
    let [ni, nj, nk] = x.dims();
    if r == 0 || r > ni.min(nj) {
        return Err(invalid(format!(
            "rank {r} must be in 1..=min(I, J) = {}",
            ni.min(nj)
        )));
    }
    if !(opts.tol >= 0.0) {
        return Err(invalid("tol must be nonnegative"));
    }
    let q3 = r.min(nk);
    let u1 = leading_left_singular_vectors(&unfold(x, 1)?, r);
    let u2 = leading_left_singular_vectors(&unfold(x, 2)?, r);
    let u3 = leading_left_singular_vectors(&unfold(x, 3)?, q3);
    let g0t = multilinear_multiply(x, &u1.transpose(), &u2.transpose(), &u3.transpose())?;
    let g0 = g0t.slices();
    let floor = (f64::EPSILON * g0t.norm()).powi(2);

    let mut inits = vec![(Matrix::identity(r, r), Matrix::identity(r, r))];
    if r >= 2 && q3 >= 2 {
        let mut rng = seeded_rng(opts.seed);
        for _ in 0..opts.starts {
            if let Some(init) = deflation_start(&g0, &mut rng) {
                inits.push(init);
            }
        }
    }

    let mut best: Option<(usize, StartResult)> = None;
    for (idx, (q, z)) in inits.into_iter().enumerate() {
        let res = run_start(&g0, q, z, opts, floor);
        let f = *res.history.last().expect("history is never empty");
        if best
            .as_ref()
            .is_none_or(|(_, b)| f < *b.history.last().unwrap())
        {
            best = Some((idx, res));
        }
    }
    let (start, res) = best.expect("the identity start always runs");

    let slices = transform(&g0, &res.q, &res.z);
    let g = Tensor3::from_slices(&slices)?;
    let s = &u1 * &res.q;
    let t = &u2 * &res.z;
    let u = u3;
    let recon = multilinear_multiply(&g, &s, &t, &u)?;
    Ok(SchurForm {
        below_diag_residual: lower_sq(&slices).sqrt(),
        reconstruction_error: (&recon - x).norm(),
        orthonormality_drift: orthonormality_error(&s)
            .max(orthonormality_error(&t))
            .max(orthonormality_error(&u)),
        objective_history: res.history,
        converged: res.converged,
        start,
        s,
        t,
        u,
        g,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicemixOptions {
    /// Random mixtures tried after the coordinate slices.
    pub attempts: usize,
    pub cond_cap: f64,
    pub seed: u64,
}

impl Default for SlicemixOptions {
    fn default() -> Self {
        SlicemixOptions {
            attempts: 200,
            cond_cap: DEFAULT_COND_CAP,
            seed: 0,
        }
    }
}

fn mixed_first_slice(slices: &[Matrix], row: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(slices[0].nrows(), slices[0].ncols());
    for (s, w) in slices.iter().zip(row) {
        m += s * *w;
    }
    m
}

/// Searches for an orthogonal slice mixing whose first mixed slice is well
/// conditioned. Coordinate slices are tried first (as swaps with slice 1),
/// then random mixtures; the best condition number wins and is returned if
/// it is within `cond_cap`.
///
/// The condition number is taken against the scale of the whole core,
/// `‖G‖/σ_min`, which bounds `σ_max/σ_min` from above for a unit mixing row.
/// A slice made of rounding noise is otherwise perfectly conditioned.
pub fn find_nonsingular_slicemix(g: &Tensor3, opts: &SlicemixOptions) -> Result<Option<Matrix>> {
    let [r, c, q] = g.dims();
    if r != c {
        return Err(invalid(format!("slices must be square, got {r}x{c}")));
    }
    let slices = g.slices();
    let scale = g.norm();
    let mut best: Option<(f64, Matrix)> = None;
    let consider = |mix: Matrix, best: &mut Option<(f64, Matrix)>| {
        let row: Vec<f64> = mix.row(0).iter().copied().collect();
        let sv = singular_values(&mixed_first_slice(&slices, &row));
        let lo = sv.last().copied().unwrap_or(0.0);
        let cond = if lo > 0.0 { scale / lo } else { f64::INFINITY };
        if cond.is_finite() && best.as_ref().is_none_or(|(b, _)| cond < *b) {
            *best = Some((cond, mix));
        }
    };
    for k in 0..q {
        let mut perm = Matrix::identity(q, q);
        perm.swap_rows(0, k);
        consider(perm, &mut best);
    }
    let mut rng = seeded_rng(opts.seed);
    for _ in 0..opts.attempts {
        let w = random_vector(&mut rng, q);
        consider(householder_completion(&w).transpose(), &mut best);
    }
    Ok(best
        .filter(|(cond, _)| *cond <= opts.cond_cap)
        .map(|(_, m)| m))
}

/// Core after mixing slices and premultiplying by the inverse of the first one.
#[derive(Clone, Debug)]
pub struct NormalizedCore {
    pub g: Tensor3,
    pub mix: Matrix,
    pub first_slice_inverse: Matrix,
    /// Largest entry of `slice₁ − I`.
    pub identity_error: f64,
    /// Frobenius norm of the strictly lower parts of slices 2.. .
    pub triangularity_residual: f64,
}

pub fn normalize_first_slice(g: &Tensor3, mix: &Matrix) -> Result<NormalizedCore> {
    let [r, c, q] = g.dims();
    if r != c {
        return Err(invalid(format!("slices must be square, got {r}x{c}")));
    }
    if mix.nrows() != q || mix.ncols() != q {
        return Err(invalid(format!("mixing matrix must be {q}x{q}")));
    }
    let mixed = slicemix(g, mix)?;
    let first = mixed.slice(0);
    if condition_number(&first) > 1.0 / f64::EPSILON {
        return Err(invalid("first mixed slice is singular"));
    }
    let inv = first
        .clone()
        .try_inverse()
        .ok_or_else(|| invalid("first mixed slice is singular"))?;
    let slices: Vec<Matrix> = mixed.slices().iter().map(|m| &inv * m).collect();
    let identity_error = (&slices[0] - Matrix::identity(r, r)).amax();
    let triangularity_residual = lower_sq(&slices[1..]).sqrt();
    Ok(NormalizedCore {
        g: Tensor3::from_slices(&slices)?,
        mix: mix.clone(),
        first_slice_inverse: inv,
        identity_error,
        triangularity_residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// `|λᵢ − λⱼ| ≤ coincidence_tol·max(max|λ|, ‖slice‖)` counts as equal.
    pub coincidence_tol: f64,
    /// Entries below `zero_tol·‖core‖` count as zero.
    pub zero_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            coincidence_tol: DEFAULT_COINCIDENCE_TOL,
            zero_tol: DEFAULT_ZERO_ENTRY_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EigenStructure {
    /// Diagonal of slices 2.. (one list per slice).
    pub eigenvalues: Vec<Vec<f64>>,
    /// Shared eigenvectors, first nonzero entry of each column equal to 1.
    pub a: Matrix,
    /// `A⁻ᵀ`, when `A` is nonsingular.
    pub b: Option<Matrix>,
    /// First row all ones, row k the eigenvalues of slice k.
    pub c: Matrix,
    /// Multiplicity partition per slice 2.., sizes in decreasing order.
    pub partitions: Vec<Vec<usize>>,
    /// Partition of positions that coincide in every slice.
    pub joint_partition: Vec<usize>,
    pub defective: bool,
    pub eigenvector_count: usize,
    /// Largest `‖Nₖ·A − A·diag(λₖ)‖ / ‖Nₖ‖`.
    pub eigen_residual: f64,
    /// Strictly upper positions (1-based) that are zero in every slice 2.. .
    pub zero_upper_positions: Vec<(usize, usize)>,
}

fn partition_sizes(mut labels: Vec<usize>) -> Vec<usize> {
    labels.sort_unstable();
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let j = labels[i..].iter().take_while(|&&l| l == labels[i]).count();
        sizes.push(j);
        i += j;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut i = i;
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Labels from single linkage on `linked(i, j)`.
fn cluster(n: usize, linked: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if linked(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Multiplicity partition of a list of eigenvalues.
pub fn multiplicity_partition(values: &[f64], coincidence_tol: f64) -> Vec<usize> {
    let tol = coincidence_tol * values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    partition_by(values, tol)
}

fn partition_by(values: &[f64], tol: f64) -> Vec<usize> {
    partition_sizes(cluster(values.len(), |i, j| {
        (values[i] - values[j]).abs() <= tol
    }))
}

/// Coincidence threshold for one slice, relative to `max(max|λ|, ‖slice‖)`.
/// Rounding in the eigenvalues of a non-normal slice scales with its norm,
/// which can dwarf the eigenvalues themselves.
fn slice_coincidence_tol(values: &[f64], slice: &Matrix, coincidence_tol: f64) -> f64 {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    coincidence_tol * scale.max(slice.norm())
}

fn scale_first_nonzero(x: &mut DVector<f64>) {
    let cap = 1e-10 * x.amax();
    if let Some(lead) = x.iter().copied().find(|v| v.abs() > cap) {
        *x /= lead;
    }
}

/// Joint eigenvectors, eigenvalues and multiplicities of a normalized core.
pub fn eigen_structure(core: &NormalizedCore, opts: &EigenOptions) -> Result<EigenStructure> {
    let [r, _, q] = core.g.dims();
    if q < 2 {
        return Err(invalid("eigen structure needs at least two slices"));
    }
    let slices: Vec<Matrix> = core.g.slices().into_iter().skip(1).collect();
    let eigenvalues: Vec<Vec<f64>> = slices
        .iter()
        .map(|m| (0..r).map(|i| m[(i, i)]).collect())
        .collect();
    let tols: Vec<f64> = eigenvalues
        .iter()
        .zip(&slices)
        .map(|(l, m)| slice_coincidence_tol(l, m, opts.coincidence_tol))
        .collect();
    let coincide =
        |k: usize, i: usize, j: usize| (eigenvalues[k][i] - eigenvalues[k][j]).abs() <= tols[k];
    let partitions = eigenvalues
        .iter()
        .zip(&tols)
        .map(|(l, &t)| partition_by(l, t))
        .collect();
    let joint_partition = partition_sizes(cluster(r, |i, j| {
        (0..slices.len()).all(|k| coincide(k, i, j))
    }));

    let mut a = Matrix::zeros(r, r);
    let mut count = 0;
    for i in 0..r {
        let mut x = DVector::zeros(r);
        x[i] = 1.0;
        let mut ok = true;
        for row in (0..i).rev() {
            let diffs: Vec<f64> = (0..slices.len())
                .map(|k| slices[k][(row, row)] - eigenvalues[k][i])
                .collect();
            let rhs: Vec<f64> = (0..slices.len())
                .map(|k| {
                    -((row + 1)..=i)
                        .map(|c| slices[k][(row, c)] * x[c])
                        .sum::<f64>()
                })
                .collect();
            let pick = (0..slices.len())
                .filter(|&k| !coincide(k, row, i))
                .max_by(|&u, &v| diffs[u].abs().total_cmp(&diffs[v].abs()));
            x[row] = pick.map_or(0.0, |k| rhs[k] / diffs[k]);
            let xn = x.amax().max(1.0);
            for k in 0..slices.len() {
                let scale = opts.zero_tol * slices[k].norm() * xn;
                if (diffs[k] * x[row] - rhs[k]).abs() > scale {
                    ok = false;
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            count += 1;
        } else {
            // No joint eigenvector with this leading position: take the
            // closest vector from the joint eigenspace of the leading block.
            let mut stacked = Matrix::zeros(slices.len() * (i + 1), i + 1);
            for (k, m) in slices.iter().enumerate() {
                for rr in 0..=i {
                    for cc in 0..=i {
                        let shift = if rr == cc { eigenvalues[k][i] } else { 0.0 };
                        stacked[(k * (i + 1) + rr, cc)] = m[(rr, cc)] - shift;
                    }
                }
            }
            let v = null_vector(&stacked);
            x = DVector::zeros(r);
            x.rows_mut(0, i + 1).copy_from(&v);
        }
        scale_first_nonzero(&mut x);
        a.set_column(i, &x);
    }
    let defective = count < r;

    let mut c = Matrix::from_element(q, r, 1.0);
    for (k, l) in eigenvalues.iter().enumerate() {
        for (i, v) in l.iter().enumerate() {
            c[(k + 1, i)] = *v;
        }
    }
    let b = if defective {
        None
    } else {
        a.clone().try_inverse().map(|inv| inv.transpose())
    };
    let mut eigen_residual = 0.0_f64;
    for (k, m) in slices.iter().enumerate() {
        let d = Matrix::from_diagonal(&DVector::from_column_slice(&eigenvalues[k]));
        let res = (m * &a - &a * d).norm();
        let n = m.norm();
        eigen_residual = eigen_residual.max(if n > 0.0 { res / n } else { res });
    }
    let cap = opts.zero_tol * core.g.norm();
    let mut zero_upper_positions = Vec::new();
    for row in 0..r {
        for col in (row + 1)..r {
            if slices.iter().all(|m| m[(row, col)].abs() <= cap) {
                zero_upper_positions.push((row + 1, col + 1));
            }
        }
    }
    Ok(EigenStructure {
        eigenvalues,
        a,
        b,
        c,
        partitions,
        joint_partition,
        defective,
        eigenvector_count: count,
        eigen_residual,
        zero_upper_positions,
    })
}

/// Eigenvectors of `[[a, d, f], [0, b, e], [0, 0, c]]` in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedForm {
    /// Eigenvectors for `a, b, c`, first entry 1.
    pub a: Matrix,
    /// `A⁻ᵀ` in closed form.
    pub b: Matrix,
    /// Columns of `b` scaled so that their third entries equal 1; absent
    /// when some third entry vanishes.
    pub b_normalized: Option<Matrix>,
}

pub fn closed_form_3x3(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<ClosedForm> {
    let undefined = |what: &str| Err(Error::ClosedFormUndefined(what.to_string()));
    if a == b || a == c || b == c {
        return undefined("eigenvalues must be pairwise distinct");
    }
    let den = d * e + f * (c - b);
    let den1 = d * e + f * (a - b);
    if d == 0.0 || den == 0.0 {
        return undefined("d and d·e + f·(c − b) must be nonzero");
    }
    let am = Matrix::from_column_slice(
        3,
        3,
        &[
            1.0,
            0.0,
            0.0,
            1.0,
            (b - a) / d,
            0.0,
            1.0,
            e * (c - a) / den,
            (c - a) * (c - b) / den,
        ],
    );
    let bm = Matrix::from_column_slice(
        3,
        3,
        &[
            1.0,
            d / (a - b),
            den1 / ((a - b) * (a - c)),
            0.0,
            d / (b - a),
            d * e / ((a - b) * (c - b)),
            0.0,
            0.0,
            den / ((c - a) * (c - b)),
        ],
    );
    let bn = (den1 != 0.0 && e != 0.0).then(|| {
        Matrix::from_column_slice(
            3,
            3,
            &[
                (a - b) * (a - c) / den1,
                d * (a - c) / den1,
                1.0,
                0.0,
                (b - c) / e,
                1.0,
                0.0,
                0.0,
                1.0,
            ],
        )
    });
    Ok(ClosedForm {
        a: am,
        b: bm,
        b_normalized: bn,
    })
}

/// Everything the boundary analysis produces for one tensor.
#[derive(Clone, Debug)]
pub struct BoundaryAnalysis {
    pub form: SchurForm,
    pub mix: Option<Matrix>,
    pub core: Option<NormalizedCore>,
    pub eigen: Option<EigenStructure>,
    /// Diagonal positions (1-based) that vanish in every slice of the SGSD core.
    pub zero_diagonal: Vec<usize>,
}

/// SGSD, slicemix search, normalization and eigenstructure in one pass.
pub fn analyze_boundary(
    x: &Tensor3,
    r: usize,
    sgsd: &SgsdOptions,
    mix: &SlicemixOptions,
    eig: &EigenOptions,
) -> Result<BoundaryAnalysis> {
    let form = sgsd_jacobi(x, r, sgsd)?;
    let zero_diagonal = form.zero_diagonal_positions(eig.zero_tol);
    let mixm = find_nonsingular_slicemix(&form.g, mix)?;
    let core = match &mixm {
        Some(m) => Some(normalize_first_slice(&form.g, m)?),
        None => None,
    };
    let eigen = match &core {
        Some(c) if c.g.dims()[2] >= 2 => Some(eigen_structure(c, eig)?),
        _ => None,
    };
    Ok(BoundaryAnalysis {
        form,
        mix: mixm,
        core,
        eigen,
        zero_diagonal,
    })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

impl BoundaryAnalysis {
    /// Plain-text dump of slice diagonals and multiplicity partitions.
    pub fn diagnostics(&self) -> String {
        let mut out = String::new();
        let f = &self.form;
        let [r, _, q] = f.g.dims();
        let _ = writeln!(out, "core {r}x{r}x{q}, |G| = {:.6e}", f.g.norm());
        let _ = writeln!(out, "below-diagonal residual {:.3e}", f.below_diag_residual);
        let _ = writeln!(out, "reconstruction error {:.3e}", f.reconstruction_error);
        let _ = writeln!(out, "converged {}", f.converged);
        for k in 0..q {
            let d: Vec<f64> = (0..r).map(|i| f.g.get(i, i, k)).collect();
            let _ = writeln!(out, "slice {} diagonal: {}", k + 1, fmt_list(&d));
        }
        if !self.zero_diagonal.is_empty() {
            let pos: Vec<String> = self
                .zero_diagonal
                .iter()
                .map(|i| format!("({i},{i})"))
                .collect();
            let _ = writeln!(out, "zero diagonal in every slice at {}", pos.join(","));
        }
        match (&self.core, &self.eigen) {
            (None, _) => {
                let _ = writeln!(out, "slicemix: none (no well-conditioned mixed slice)");
            }
            (Some(core), eig) => {
                let _ = writeln!(
                    out,
                    "slicemix: found, identity error {:.3e}, triangularity residual {:.3e}",
                    core.identity_error, core.triangularity_residual
                );
                if let Some(e) = eig {
                    for (k, (l, p)) in e.eigenvalues.iter().zip(&e.partitions).enumerate() {
                        let _ = writeln!(
                            out,
                            "normalized slice {} eigenvalues: {} partition {:?}",
                            k + 2,
                            fmt_list(l),
                            p
                        );
                    }
                    let _ = writeln!(out, "joint partition {:?}", e.joint_partition);
                    let _ = writeln!(
                        out,
                        "eigenvectors {} of {r}{}",
                        e.eigenvector_count,
                        if e.defective { " (defective)" } else { "" }
                    );
                    let pos: Vec<String> = e
                        .zero_upper_positions
                        .iter()
                        .map(|(a, b)| format!("({a},{b})"))
                        .collect();
                    let _ = writeln!(
                        out,
                        "zeros at {}",
                        if pos.is_empty() {
                            "none".into()
                        } else {
                            pos.join(",")
                        }
                    );
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_normal, random_orthonormal};

    fn triangular_core(rng: &mut SeededRng, r: usize, q: usize) -> Tensor3 {
        let slices: Vec<Matrix> = (0..q)
            .map(|_| random_normal(rng, r, r).upper_triangle())
            .collect();
        Tensor3::from_slices(&slices).unwrap()
    }

    #[test]
    fn recovers_triangular_core() {
        let mut rng = seeded_rng(11);
        for &r in &[2, 3, 4] {
            let g = triangular_core(&mut rng, r, r);
            let x = multilinear_multiply(
                &g,
                &random_orthonormal(&mut rng, r + 2, r),
                &random_orthonormal(&mut rng, r + 1, r),
                &random_orthonormal(&mut rng, r + 3, r),
            )
            .unwrap();
            let form = sgsd_jacobi(&x, r, &SgsdOptions::default()).unwrap();
            assert!(
                form.below_diag_residual < 1e-8 * x.norm(),
                "r={r}: {}",
                form.below_diag_residual
            );
            assert!(form.reconstruction_error < 1e-8 * x.norm());
            assert!(form.orthonormality_drift < 1e-10);
            for w in form.objective_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-30);
            }
        }
    }

    #[test]
    fn rank_one_has_no_lower_part() {
        let x = crate::tensor::rank1(&[1.0, 2.0], &[3.0, 1.0], &[1.0, -1.0]).unwrap();
        let form = sgsd_jacobi(&x, 1, &SgsdOptions::default()).unwrap();
        assert_eq!(form.below_diag_residual, 0.0);
        assert!(form.reconstruction_error < 1e-12);
    }

    #[test]
    fn rejects_rank_above_dims() {
        let x = Tensor3::zeros([2, 3, 3]);
        assert!(sgsd_jacobi(&x, 3, &SgsdOptions::default()).is_err());
    }

    #[test]
    fn identity_first_slice_mix_is_identity() {
        let mut rng = seeded_rng(2);
        let mut slices = vec![Matrix::identity(3, 3)];
        slices.push(random_normal(&mut rng, 3, 3).upper_triangle());
        let g = Tensor3::from_slices(&slices).unwrap();
        let mix = find_nonsingular_slicemix(&g, &SlicemixOptions::default())
            .unwrap()
            .unwrap();
        assert_eq!(mix, Matrix::identity(2, 2));
        let core = normalize_first_slice(&g, &mix).unwrap();
        assert!(core.g.max_abs_diff(&g) < 1e-15);
    }

    #[test]
    fn shared_zero_diagonal_has_no_slicemix() {
        let mut rng = seeded_rng(3);
        let mut g = triangular_core(&mut rng, 4, 4);
        for k in 0..4 {
            g.set(2, 2, k, 0.0);
        }
        assert!(find_nonsingular_slicemix(&g, &SlicemixOptions::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn normalized_first_slice_is_identity() {
        let mut rng = seeded_rng(4);
        let g = triangular_core(&mut rng, 4, 3);
        let mix = find_nonsingular_slicemix(&g, &SlicemixOptions::default())
            .unwrap()
            .unwrap();
        let core = normalize_first_slice(&g, &mix).unwrap();
        assert!(core.identity_error < 1e-10);
        assert!(core.triangularity_residual < 1e-12);
    }

    #[test]
    fn closed_form_substituted_entries() {
        let cf = closed_form_3x3(0.0, 1.0, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(cf.a.column(1).as_slice(), &[1.0, 1.0, 0.0]);
        assert_eq!(cf.b[(2, 1)], -1.0);
        // d·e + f·(a − b) = 0 here, so column 1 of B has no third entry to scale by.
        assert!(cf.b_normalized.is_none());
        let at_inv = cf.a.clone().try_inverse().unwrap().transpose();
        assert!((at_inv - &cf.b).amax() < 1e-14);
    }

    #[test]
    fn closed_form_rejects_coincident() {
        assert!(matches!(
            closed_form_3x3(1.0, 1.0, 2.0, 1.0, 1.0, 1.0),
            Err(Error::ClosedFormUndefined(_))
        ));
        assert!(closed_form_3x3(0.0, 1.0, 2.0, 0.0, 1.0, 1.0).is_err());
    }

    fn core_of(slices: Vec<Matrix>) -> NormalizedCore {
        let q = slices.len();
        let g = Tensor3::from_slices(&slices).unwrap();
        normalize_first_slice(&g, &Matrix::identity(q, q)).unwrap()
    }

    #[test]
    fn eigen_structure_matches_closed_form() {
        let (a, b, c, d, e, f) = (0.3, -1.2, 2.0, 0.7, -0.4, 1.5);
        let y2 = Matrix::from_row_slice(3, 3, &[a, d, f, 0.0, b, e, 0.0, 0.0, c]);
        let es = eigen_structure(
            &core_of(vec![Matrix::identity(3, 3), y2]),
            &EigenOptions::default(),
        )
        .unwrap();
        let cf = closed_form_3x3(a, b, c, d, e, f).unwrap();
        assert!((&es.a - &cf.a).amax() < 1e-12);
        assert!((es.b.unwrap() - &cf.b).amax() < 1e-12);
        assert_eq!(
            es.c.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0; 3]
        );
        assert!(!es.defective);
    }

    #[test]
    fn limit_slice_with_zero_d_is_defective() {
        let y2 = Matrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let es = eigen_structure(
            &core_of(vec![Matrix::identity(3, 3), y2]),
            &EigenOptions::default(),
        )
        .unwrap();
        assert_eq!(es.partitions, vec![vec![3]]);
        assert!(es.defective);
        assert_eq!(es.eigenvector_count, 2);
        assert_eq!(crate::tensor::numerical_rank(&es.a, 1e-8), 2);
        assert_eq!(es.zero_upper_positions, vec![(1, 2)]);
        assert!(es.eigen_residual < 1e-12);
    }

    #[test]
    fn identity_slice_partition() {
        let es = eigen_structure(
            &core_of(vec![Matrix::identity(4, 4), Matrix::identity(4, 4)]),
            &EigenOptions::default(),
        )
        .unwrap();
        assert_eq!(es.partitions, vec![vec![4]]);
        assert!(!es.defective);
        assert!(es.c.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn partition_sizes_sorted() {
        assert_eq!(
            multiplicity_partition(&[1.0, 2.0, 1.0, 2.0 + 1e-9], 1e-6),
            vec![2, 2]
        );
        assert_eq!(multiplicity_partition(&[0.0, 0.0, 0.0], 1e-6), vec![3]);
        assert_eq!(
            multiplicity_partition(&[3.0, 1.0, 2.0], 1e-6),
            vec![1, 1, 1]
        );
    }
}
