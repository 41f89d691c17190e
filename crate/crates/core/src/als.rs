//! Alternating least squares for the best rank-R approximation problem,
//! with the per-sweep trace needed to watch components diverge.
//!
//! Each sweep solves the three linear least-squares subproblems in turn
//! (A given B, C; then B; then C) through their normal equations
//! `F·[(PᵀP)∘(QᵀQ)] = Z_(n)(Q ⊙ P)`, then renormalizes so that the weights
//! carry all magnitude. When a Gram matrix is numerically singular the solve
//! falls back to a ridge of `ridge_scale·‖Z‖²` and the sweep is flagged.

use std::fmt::Write as _;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::cp::CpDecomposition;
use crate::error::{invalid, Result};
use crate::linalg::{argmax_abs, leading_left_singular_vectors, random_normal, seeded_rng, Matrix};
use crate::tensor::{unfold, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlsInit {
    /// Standard-normal factors from the seeded generator.
    Random,
    /// Leading left singular vectors of each unfolding; columns beyond the
    /// mode dimension are random.
    Hosvd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Stop once `|e_{t-1} - e_t| / e_{t-1}` drops below this.
    pub rel_tol: f64,
    pub seed: u64,
    pub init: AlsInit,
    /// Keep every n-th sweep in the trace (the first and last are always kept).
    pub record_every: usize,
    pub ridge_scale: f64,
}

impl Default for AlsOptions {
    fn default() -> Self {
        AlsOptions {
            max_iters: 1000,
            rel_tol: 1e-10,
            seed: 0,
            init: AlsInit::Random,
            record_every: 1,
            ridge_scale: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative fit change fell below `rel_tol`.
    Converged,
    /// The fit error reached exactly zero.
    ExactFit,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitRecord {
    pub iter: usize,
    pub fit_error: f64,
    pub weights: Vec<f64>,
    /// Pairwise |congruence|, ones on the diagonal.
    pub abs_congruence: Matrix,
    pub ridge_used: bool,
}

impl FitRecord {
    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    /// Smallest off-diagonal |congruence|; 1 for a single component.
    pub fn min_congruence(&self) -> f64 {
        off_diagonal(&self.abs_congruence).fold(1.0, f64::min)
    }

    /// Largest off-diagonal |congruence|; 0 for a single component.
    pub fn max_congruence(&self) -> f64 {
        off_diagonal(&self.abs_congruence).fold(0.0, f64::max)
    }
}

fn off_diagonal(m: &Matrix) -> impl Iterator<Item = f64> + '_ {
    let n = m.nrows();
    (0..n).flat_map(move |r| ((r + 1)..n).map(move |s| m[(r, s)]))
}

#[derive(Clone, Debug)]
pub struct FitTrace {
    pub records: Vec<FitRecord>,
    pub final_cp: CpDecomposition,
    pub termination: Termination,
    pub iterations: usize,
    /// Relative fit change of the last sweep.
    pub final_relative_change: f64,
    /// Some sweep needed the ridge-regularized solve.
    pub ridge_warning: bool,
    pub target_norm: f64,
}

impl FitTrace {
    pub fn last(&self) -> &FitRecord {
        self.records
            .last()
            .expect("a trace always holds at least one record")
    }

    /// CSV with columns `iter,fit_error,omega_1..omega_R,min_congruence,max_abs_omega`.
    pub fn to_csv(&self) -> String {
        let rank = self.final_cp.rank();
        let mut out = String::from("iter,fit_error");
        for r in 1..=rank {
            let _ = write!(out, ",omega_{r}");
        }
        out.push_str(",min_congruence,max_abs_omega\n");
        for rec in &self.records {
            let _ = write!(out, "{},{}", rec.iter, fmt_float(rec.fit_error));
            for w in &rec.weights {
                let _ = write!(out, ",{}", fmt_float(*w));
            }
            let _ = writeln!(
                out,
                ",{},{}",
                fmt_float(rec.min_congruence()),
                fmt_float(rec.max_abs_weight())
            );
        }
        out
    }
}

/// 17 significant digits, so CSV values round-trip exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Summary of the swamp symptoms over the tail of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwampMetrics {
    /// Per-sweep growth of `ln max|ω|`.
    pub weight_growth_rate: f64,
    /// Per-sweep decrease of `ln fit_error`.
    pub fit_decay_rate: f64,
    /// Smallest, over the window, of the largest pairwise |congruence|. Stays
    /// close to 1 while some pair of components is locked together.
    pub min_group_congruence: f64,
}

/// Rates over the last `window` records (the whole trace if it is shorter).
pub fn swamp_metrics(trace: &FitTrace, window: usize) -> Result<SwampMetrics> {
    if trace.records.is_empty() {
        return Err(invalid("swamp metrics need a nonempty trace"));
    }
    let n = trace.records.len();
    let tail = &trace.records[n - window.clamp(1, n)..];
    let first = &tail[0];
    let last = &tail[tail.len() - 1];
    let span = last.iter.saturating_sub(first.iter) as f64;
    let log_rate = |from: f64, to: f64| {
        if span == 0.0 || from <= 0.0 || to <= 0.0 {
            0.0
        } else {
            (to.ln() - from.ln()) / span
        }
    };
    Ok(SwampMetrics {
        weight_growth_rate: log_rate(first.max_abs_weight(), last.max_abs_weight()),
        fit_decay_rate: -log_rate(first.fit_error, last.fit_error),
        min_group_congruence: tail
            .iter()
            .map(FitRecord::max_congruence)
            .fold(f64::INFINITY, f64::min),
    })
}

struct Workspace<'a> {
    z: &'a Tensor3,
    rank: usize,
    ridge: f64,
}

impl Workspace<'_> {
    /// `Z_(n)(Q ⊙ P)` for the mode being updated.
    fn mttkrp(&self, mode: usize, f: [&Matrix; 3]) -> Matrix {
        let [ni, nj, nk] = self.z.dims();
        let rows = [ni, nj, nk][mode];
        let mut m = Matrix::zeros(rows, self.rank);
        let vals = self.z.values();
        let mut idx = 0;
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let x = vals[idx];
                    idx += 1;
                    if x == 0.0 {
                        continue;
                    }
                    for r in 0..self.rank {
                        match mode {
                            0 => m[(i, r)] += x * f[1][(j, r)] * f[2][(k, r)],
                            1 => m[(j, r)] += x * f[0][(i, r)] * f[2][(k, r)],
                            _ => m[(k, r)] += x * f[0][(i, r)] * f[1][(j, r)],
                        }
                    }
                }
            }
        }
        m
    }

    /// Solves `F·gram = rhs`; returns whether the ridge fallback was needed.
    fn solve(&self, gram: Matrix, rhs: &Matrix) -> (Matrix, bool) {
        if let Some(chol) = Cholesky::new(gram.clone()) {
            let l = chol.l_dirty();
            let diag: Vec<f64> = (0..self.rank).map(|i| l[(i, i)]).collect();
            let hi = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            let lo = diag.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
            if hi > 0.0 && (lo / hi).powi(2) > f64::EPSILON {
                return (chol.solve(&rhs.transpose()).transpose(), false);
            }
        }
        let mut reg = gram;
        for i in 0..self.rank {
            reg[(i, i)] += self.ridge;
        }
        let sol = match Cholesky::new(reg) {
            Some(chol) => chol.solve(&rhs.transpose()).transpose(),
            None => Matrix::zeros(rhs.nrows(), rhs.ncols()),
        };
        (sol, true)
    }

    fn residual_norm(&self, f: [&Matrix; 3]) -> f64 {
        let [ni, nj, nk] = self.z.dims();
        let vals = self.z.values();
        let mut acc = 0.0;
        let mut idx = 0;
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let mut y = 0.0;
                    for r in 0..self.rank {
                        y += f[0][(i, r)] * f[1][(j, r)] * f[2][(k, r)];
                    }
                    let d = vals[idx] - y;
                    acc += d * d;
                    idx += 1;
                }
            }
        }
        acc.sqrt()
    }
}

fn gram_hadamard(p: &Matrix, q: &Matrix) -> Matrix {
    (p.transpose() * p).component_mul(&(q.transpose() * q))
}

/// Moves column norms of the absorbed factors into weights. Zero columns get
/// weight 0 and are replaced by the first unit vector so later sweeps stay
/// well defined.
fn split_weights(factors: &mut [Matrix; 3], weights: &mut [f64]) {
    for (r, w) in weights.iter_mut().enumerate() {
        *w = 1.0;
        for f in factors.iter_mut() {
            let n = f.column(r).norm();
            let mut col = f.column_mut(r);
            if n == 0.0 {
                col.fill(0.0);
                col[0] = 1.0;
                *w = 0.0;
                continue;
            }
            col.scale_mut(1.0 / n);
            *w *= n;
            if col[argmax_abs(col.as_slice())] < 0.0 {
                col.neg_mut();
                *w = -*w;
            }
        }
    }
    for (r, w) in weights.iter_mut().enumerate() {
        if *w == 0.0 {
            // Keep the zero weight but leave the columns unit-norm.
            for f in factors.iter_mut() {
                let n = f.column(r).norm();
                if n != 1.0 && n > 0.0 {
                    f.column_mut(r).scale_mut(1.0 / n);
                }
            }
        }
    }
}

fn initial_factors(z: &Tensor3, rank: usize, opts: &AlsOptions) -> Result<[Matrix; 3]> {
    let mut rng = seeded_rng(opts.seed);
    let dims = z.dims();
    Ok(match opts.init {
        AlsInit::Random => [
            random_normal(&mut rng, dims[0], rank),
            random_normal(&mut rng, dims[1], rank),
            random_normal(&mut rng, dims[2], rank),
        ],
        AlsInit::Hosvd => {
            let mut out = Vec::with_capacity(3);
            for mode in 1..=3 {
                let d = dims[mode - 1];
                let keep = rank.min(d);
                let basis = leading_left_singular_vectors(&unfold(z, mode)?, keep);
                let mut f = random_normal(&mut rng, d, rank);
                for c in 0..keep {
                    f.set_column(c, &basis.column(c));
                }
                out.push(f);
            }
            let [a, b, c]: [Matrix; 3] = out.try_into().expect("three modes");
            [a, b, c]
        }
    })
}

/// Fits a rank-`rank` CP model to `z` by alternating least squares.
pub fn fit_als(z: &Tensor3, rank: usize, opts: &AlsOptions) -> Result<FitTrace> {
    if rank == 0 {
        return Err(invalid("rank must be at least 1"));
    }
    if opts.max_iters == 0 || opts.record_every == 0 {
        return Err(invalid("max_iters and record_every must be positive"));
    }
    if !(opts.rel_tol >= 0.0) || !(opts.ridge_scale > 0.0) {
        return Err(invalid(
            "rel_tol must be nonnegative and ridge_scale positive",
        ));
    }
    let target_norm = z.norm();
    let ridge = if target_norm > 0.0 {
        opts.ridge_scale * target_norm * target_norm
    } else {
        opts.ridge_scale
    };
    let ws = Workspace { z, rank, ridge };

    let mut factors = initial_factors(z, rank, opts)?;
    let mut weights = vec![1.0; rank];
    let mut records = Vec::new();
    let mut prev_error = f64::NAN;
    let mut rel_change = f64::NAN;
    let mut ridge_warning = false;
    let mut termination = Termination::MaxIterations;
    let mut iter = 0;

    while iter < opts.max_iters {
        iter += 1;
        let mut ridge_used = false;
        // The weights live in the previous sweep's normalization; fold them
        // into A so that B and C see the current model.
        for r in 0..rank {
            factors[0].column_mut(r).scale_mut(weights[r]);
        }
        for mode in 0..3 {
            let (p, q) = match mode {
                0 => (&factors[1], &factors[2]),
                1 => (&factors[0], &factors[2]),
                _ => (&factors[0], &factors[1]),
            };
            let gram = gram_hadamard(p, q);
            let rhs = ws.mttkrp(mode, [&factors[0], &factors[1], &factors[2]]);
            let (updated, used) = ws.solve(gram, &rhs);
            ridge_used |= used;
            factors[mode] = updated;
        }
        ridge_warning |= ridge_used;

        let error = ws.residual_norm([&factors[0], &factors[1], &factors[2]]);
        split_weights(&mut factors, &mut weights);

        rel_change = if prev_error > 0.0 {
            (prev_error - error).abs() / prev_error
        } else {
            f64::NAN
        };
        let done = if error == 0.0 {
            termination = Termination::ExactFit;
            true
        } else if rel_change < opts.rel_tol {
            termination = Termination::Converged;
            true
        } else {
            false
        };
        let last = done || iter == opts.max_iters;
        if iter == 1 || last || iter % opts.record_every == 0 {
            let cp = CpDecomposition::new(
                factors[0].clone(),
                factors[1].clone(),
                factors[2].clone(),
                weights.clone(),
            )?;
            records.push(FitRecord {
                iter,
                fit_error: error,
                weights: weights.clone(),
                abs_congruence: cp.abs_congruence_matrix()?,
                ridge_used,
            });
        }
        prev_error = error;
        if done {
            break;
        }
    }

    let final_cp = CpDecomposition::new(
        factors[0].clone(),
        factors[1].clone(),
        factors[2].clone(),
        weights,
    )?;
    Ok(FitTrace {
        records,
        final_cp,
        termination,
        iterations: iter,
        final_relative_change: rel_change,
        ridge_warning,
        target_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_orthonormal, seeded_rng};

    fn well_separated(seed: u64, dims: [usize; 3], rank: usize) -> Tensor3 {
        let mut rng = seeded_rng(seed);
        let a = random_orthonormal(&mut rng, dims[0], rank);
        let b = random_orthonormal(&mut rng, dims[1], rank);
        let c = random_orthonormal(&mut rng, dims[2], rank);
        let w: Vec<f64> = (0..rank).map(|r| 1.0 + r as f64).collect();
        CpDecomposition::new(a, b, c, w).unwrap().evaluate()
    }

    #[test]
    fn recovers_exact_low_rank_tensor() {
        let z = well_separated(1, [5, 4, 6], 3);
        let opts = AlsOptions {
            max_iters: 2000,
            rel_tol: 1e-14,
            init: AlsInit::Hosvd,
            ..Default::default()
        };
        let trace = fit_als(&z, 3, &opts).unwrap();
        assert!(
            trace.last().fit_error / z.norm() < 1e-6,
            "{}",
            trace.last().fit_error
        );
        let m = swamp_metrics(&trace, 10).unwrap();
        assert!(m.weight_growth_rate.abs() < 1e-6);
    }

    #[test]
    fn zero_tensor_fits_exactly() {
        let z = Tensor3::zeros([3, 2, 2]);
        let trace = fit_als(&z, 2, &AlsOptions::default()).unwrap();
        assert_eq!(trace.termination, Termination::ExactFit);
        assert_eq!(trace.iterations, 1);
        assert_eq!(trace.last().fit_error, 0.0);
        assert!(trace.final_cp.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn fit_error_is_monotone_and_reproducible() {
        let mut rng = seeded_rng(9);
        let z = Tensor3::new([3, 4, 3], crate::linalg::random_vector(&mut rng, 36)).unwrap();
        let opts = AlsOptions {
            max_iters: 300,
            seed: 4,
            ..Default::default()
        };
        let trace = fit_als(&z, 2, &opts).unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].fit_error <= w[0].fit_error + 1e-12 * z.norm());
        }
        let again = fit_als(&z, 2, &opts).unwrap();
        assert_eq!(trace.to_csv(), again.to_csv());
        // The recorded error is the error of the returned model.
        let recomputed = (&z - &trace.final_cp.evaluate()).norm();
        assert!((recomputed - trace.last().fit_error).abs() < 1e-10);
    }

    #[test]
    fn hosvd_init_runs() {
        let z = well_separated(2, [4, 4, 4], 2);
        let opts = AlsOptions {
            init: AlsInit::Hosvd,
            rel_tol: 1e-14,
            ..Default::default()
        };
        let trace = fit_als(&z, 2, &opts).unwrap();
        assert!(trace.last().fit_error < 1e-8);
    }

    #[test]
    fn record_stride_keeps_first_and_last() {
        let z = well_separated(3, [3, 3, 3], 2);
        let opts = AlsOptions {
            max_iters: 25,
            rel_tol: 0.0,
            record_every: 10,
            ..Default::default()
        };
        let trace = fit_als(&z, 2, &opts).unwrap();
        let iters: Vec<usize> = trace.records.iter().map(|r| r.iter).collect();
        assert_eq!(iters, vec![1, 10, 20, 25]);
        assert_eq!(trace.termination, Termination::MaxIterations);
    }

    #[test]
    fn csv_layout() {
        let z = well_separated(4, [2, 2, 2], 1);
        let trace = fit_als(&z, 1, &AlsOptions::default()).unwrap();
        let csv = trace.to_csv();
        let header = csv.lines().next().unwrap();
        assert_eq!(
            header,
            "iter,fit_error,omega_1,min_congruence,max_abs_omega"
        );
    }

    #[test]
    fn constant_trace_has_zero_rates() {
        let z = well_separated(5, [3, 3, 2], 1);
        let trace = fit_als(&z, 1, &AlsOptions::default()).unwrap();
        let mut t = trace.clone();
        let rec = t.records[0].clone();
        t.records = (1..=5)
            .map(|i| FitRecord {
                iter: i,
                ..rec.clone()
            })
            .collect();
        let m = swamp_metrics(&t, 100).unwrap();
        assert_eq!(m.weight_growth_rate, 0.0);
        assert_eq!(m.fit_decay_rate, 0.0);
    }

    #[test]
    fn rejects_bad_options() {
        let z = Tensor3::zeros([2, 2, 2]);
        assert!(fit_als(&z, 0, &AlsOptions::default()).is_err());
        let opts = AlsOptions {
            record_every: 0,
            ..Default::default()
        };
        assert!(fit_als(&z, 1, &opts).is_err());
    }
}
