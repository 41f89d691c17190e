//! Detection of diverging component groups in a series of CP snapshots and
//! the proportionality verdict for each group.
//!
//! A component is a divergence candidate when `|ω_r(last)| / |ω_r(first)|`
//! exceeds `omega_growth`. Candidates are grouped two ways:
//!
//! * bounded sums: the smallest subsets (size ≥ 2, by increasing size, then
//!   lexicographically) whose group sum stays below `bound_ratio` times the
//!   norm of the final snapshot at every snapshot, accepted disjointly;
//! * congruence: single linkage on `|congruence| ≥ congruence_link` at the
//!   last snapshot, for candidates not already in a bounded group.
//!
//! Each group records which criteria it satisfies and flags disagreement.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cp::{ComponentGroup, CpDecomposition, DEFAULT_PROPORTIONAL_CONGRUENCE};
use crate::error::{invalid, Error, Result};
use crate::linalg::{select_columns, singular_values, Matrix};
use crate::sgsd::{analyze_boundary, BoundaryAnalysis, EigenOptions, SgsdOptions, SlicemixOptions};
use crate::tensor::Tensor3;

/// `σ₂/σ₁` of `m`; 0 when `m` has fewer than two singular values.
pub fn rank1_metric(m: &Matrix) -> Result<f64> {
    let s = singular_values(m);
    match s.first() {
        None => Ok(0.0),
        Some(&s1) if s1 == 0.0 => Err(Error::UndefinedMetric(
            "zero matrix has no rank-1 metric".into(),
        )),
        Some(&s1) => Ok(s.get(1).map_or(0.0, |s2| s2 / s1)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub omega_growth: f64,
    pub bound_ratio: f64,
    pub congruence_link: f64,
    /// Rank-1 metric below which a factor counts as proportional.
    pub tol_prop: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            omega_growth: 1e2,
            bound_ratio: 10.0,
            congruence_link: DEFAULT_PROPORTIONAL_CONGRUENCE,
            tol_prop: 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proportional,
    NonProportional,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum EigenPattern {
    Available {
        /// Positions whose eigenvalues coincide in every slice.
        joint_partition: Vec<usize>,
        slice_partitions: Vec<Vec<usize>>,
        eigenvector_count: usize,
        defective: bool,
        /// Strictly upper positions (1-based) that vanish in every normalized slice.
        zero_upper_positions: Vec<(usize, usize)>,
    },
    /// No nonsingular slicemix was found.
    Unavailable {
        /// Diagonal positions (1-based) that vanish in every SGSD slice.
        zero_diagonal: Vec<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSeries {
    pub group: ComponentGroup,
    /// Group sum stays within `bound_ratio·‖final‖` at every snapshot.
    pub bounded_sum: bool,
    /// Members form one single-linkage cluster at the last snapshot.
    pub congruence_linked: bool,
    pub criteria_disagree: bool,
    /// `|ω_r|` per snapshot, members in group order.
    pub weight_magnitudes: Vec<Vec<f64>>,
    pub max_abs_omega: Vec<f64>,
    pub group_sum_norm: Vec<f64>,
    pub min_abs_congruence: Vec<f64>,
    /// Rank-1 metric of the group columns per snapshot, for A, B and C.
    pub rank1: [Vec<f64>; 3],
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub n: Vec<f64>,
    pub rank: usize,
    pub final_norm: f64,
    pub thresholds: Thresholds,
    /// 0-based indices of divergence candidates.
    pub candidates: Vec<usize>,
    pub groups: Vec<GroupSeries>,
    /// Series for the full component set, whether or not it forms a group.
    pub all: GroupSeries,
}

impl DivergenceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format CSV:
    /// `group,n,max_abs_omega,group_sum_norm,s2s1_A,s2s1_B,s2s1_C,min_abs_congruence`.
    /// The full component set is labelled `all`; detected groups are numbered from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "group,n,max_abs_omega,group_sum_norm,s2s1_A,s2s1_B,s2s1_C,min_abs_congruence\n",
        );
        let labelled = std::iter::once(("all".to_string(), &self.all)).chain(
            self.groups
                .iter()
                .enumerate()
                .map(|(i, g)| ((i + 1).to_string(), g)),
        );
        for (label, g) in labelled {
            for (t, n) in self.n.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{label},{},{},{},{},{},{},{}",
                    fmt(*n),
                    fmt(g.max_abs_omega[t]),
                    fmt(g.group_sum_norm[t]),
                    fmt(g.rank1[0][t]),
                    fmt(g.rank1[1][t]),
                    fmt(g.rank1[2][t]),
                    fmt(g.min_abs_congruence[t])
                );
            }
        }
        out
    }
}

fn fmt(x: f64) -> String {
    crate::als::fmt_float(x)
}

fn normalized(cp: &CpDecomposition) -> Result<CpDecomposition> {
    if cp.is_normalized() {
        Ok(cp.clone())
    } else {
        cp.normalize()
    }
}

fn group_series(
    snaps: &[CpDecomposition],
    group: &ComponentGroup,
    thresholds: &Thresholds,
    final_norm: f64,
) -> Result<GroupSeries> {
    let idx = group.indices();
    let mut out = GroupSeries {
        group: group.clone(),
        bounded_sum: false,
        congruence_linked: false,
        criteria_disagree: false,
        weight_magnitudes: Vec::new(),
        max_abs_omega: Vec::new(),
        group_sum_norm: Vec::new(),
        min_abs_congruence: Vec::new(),
        rank1: [Vec::new(), Vec::new(), Vec::new()],
        verdict: Verdict::Undetermined,
    };
    for cp in snaps {
        let w: Vec<f64> = idx.iter().map(|&r| cp.weights()[r].abs()).collect();
        out.max_abs_omega.push(w.iter().fold(0.0, |m, v| m.max(*v)));
        out.weight_magnitudes.push(w);
        out.group_sum_norm.push(cp.group_sum(group)?.norm());
        let mut min_c = 1.0_f64;
        for (p, &r) in idx.iter().enumerate() {
            for &s in &idx[p + 1..] {
                min_c = min_c.min(cp.congruence(r, s)?.abs());
            }
        }
        out.min_abs_congruence.push(min_c);
        for mode in 1..=3 {
            out.rank1[mode - 1].push(rank1_metric(&select_columns(cp.factor(mode), idx))?);
        }
    }
    let last = snaps.last().expect("series is nonempty");
    out.bounded_sum = out
        .group_sum_norm
        .iter()
        .all(|&v| v <= thresholds.bound_ratio * final_norm);
    let labels = linkage(last, idx, thresholds.congruence_link)?;
    out.congruence_linked = labels.iter().all(|&l| l == labels[0]);
    out.criteria_disagree = out.bounded_sum != out.congruence_linked;
    out.verdict = verdict(&out.rank1, thresholds.tol_prop);
    Ok(out)
}

/// Single-linkage cluster labels of `members` on `|congruence| ≥ link`.
fn linkage(cp: &CpDecomposition, members: &[usize], link: f64) -> Result<Vec<usize>> {
    let m = members.len();
    let mut label: Vec<usize> = (0..m).collect();
    loop {
        let mut changed = false;
        for p in 0..m {
            for q in (p + 1)..m {
                if label[p] != label[q] && cp.congruence(members[p], members[q])?.abs() >= link {
                    let (lo, hi) = (label[p].min(label[q]), label[p].max(label[q]));
                    for l in label.iter_mut() {
                        if *l == hi {
                            *l = lo;
                        }
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(label);
        }
    }
}

/// Proportional when every mode's metric ends below `tol` and decreased;
/// non-proportional when some mode ends at or above `tol` without having
/// fallen below half its first value; undetermined otherwise.
fn verdict(rank1: &[Vec<f64>; 3], tol: f64) -> Verdict {
    let ends = |s: &Vec<f64>| (s[0], s[s.len() - 1]);
    if rank1.iter().all(|s| {
        let (first, last) = ends(s);
        last < tol && last < first
    }) {
        Verdict::Proportional
    } else if rank1.iter().any(|s| {
        let (first, last) = ends(s);
        last >= tol && last >= 0.5 * first
    }) {
        Verdict::NonProportional
    } else {
        Verdict::Undetermined
    }
}

fn subsets_of_size(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::new(), out);
}

/// Largest candidate count for which bounded subsets are enumerated exhaustively.
const MAX_SUBSET_CANDIDATES: usize = 16;

/// Finds diverging groups in a series of snapshots `(n, cp)`.
pub fn detect_groups(
    series: &[(f64, CpDecomposition)],
    thresholds: &Thresholds,
) -> Result<DivergenceReport> {
    if series.len() < 3 {
        return Err(invalid("need at least three snapshots"));
    }
    let rank = series[0].1.rank();
    let dims = series[0].1.dims();
    if series
        .iter()
        .any(|(_, cp)| cp.rank() != rank || cp.dims() != dims)
    {
        return Err(invalid("snapshots must share rank and dimensions"));
    }
    let snaps: Vec<CpDecomposition> = series
        .iter()
        .map(|(_, cp)| normalized(cp))
        .collect::<Result<_>>()?;
    let n: Vec<f64> = series.iter().map(|(n, _)| *n).collect();
    let first = &snaps[0];
    let last = &snaps[snaps.len() - 1];
    let final_norm = last.evaluate().norm();

    let candidates: Vec<usize> = (0..rank)
        .filter(|&r| {
            let (w0, w1) = (first.weights()[r].abs(), last.weights()[r].abs());
            if w0 == 0.0 {
                w1 > 0.0
            } else {
                w1 / w0 > thresholds.omega_growth
            }
        })
        .collect();

    let cap = thresholds.bound_ratio * final_norm;
    let mut free = candidates.clone();
    let mut groups = Vec::new();
    if candidates.len() <= MAX_SUBSET_CANDIDATES {
        for size in 2..=candidates.len() {
            let mut subsets = Vec::new();
            subsets_of_size(&candidates, size, &mut subsets);
            for s in subsets {
                if !s.iter().all(|r| free.contains(r)) {
                    continue;
                }
                let g = ComponentGroup::new(s.clone())?;
                let mut bounded = true;
                for cp in &snaps {
                    if cp.group_sum(&g)?.norm() > cap {
                        bounded = false;
                        break;
                    }
                }
                if bounded {
                    free.retain(|r| !s.contains(r));
                    groups.push(g);
                }
            }
        }
    }
    if free.len() >= 2 {
        let labels = linkage(last, &free, thresholds.congruence_link)?;
        let mut seen: Vec<usize> = labels.clone();
        seen.sort_unstable();
        seen.dedup();
        for l in seen {
            let members: Vec<usize> = free
                .iter()
                .zip(&labels)
                .filter(|(_, &x)| x == l)
                .map(|(&r, _)| r)
                .collect();
            if members.len() >= 2 {
                groups.push(ComponentGroup::new(members)?);
            }
        }
    }

    let groups = groups
        .iter()
        .map(|g| group_series(&snaps, g, thresholds, final_norm))
        .collect::<Result<Vec<_>>>()?;
    let all = group_series(&snaps, &ComponentGroup::all(rank), thresholds, final_norm)?;
    Ok(DivergenceReport {
        n,
        rank,
        final_norm,
        thresholds: thresholds.clone(),
        candidates,
        groups,
        all,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub eigen_pattern: EigenPattern,
}

/// Verdict plus the eigenvalue pattern of the boundary tensor. The pattern
/// comes from `limit` analyzed at the series rank when given, otherwise from
/// the group sum at the last snapshot analyzed at rank `|D|`.
pub fn classify_group(
    series: &[(f64, CpDecomposition)],
    group: &ComponentGroup,
    limit: Option<&Tensor3>,
    thresholds: &Thresholds,
) -> Result<Classification> {
    if series.is_empty() {
        return Err(invalid("series is empty"));
    }
    let rank = series[0].1.rank();
    group.check_range(rank)?;
    let snaps: Vec<CpDecomposition> = series
        .iter()
        .map(|(_, cp)| normalized(cp))
        .collect::<Result<_>>()?;
    let final_norm = snaps[snaps.len() - 1].evaluate().norm();
    let gs = group_series(&snaps, group, thresholds, final_norm)?;
    let eigen_pattern = match limit {
        Some(x) => eigen_pattern(x, rank)?,
        None => eigen_pattern(&snaps[snaps.len() - 1].group_sum(group)?, group.len())?,
    };
    Ok(Classification {
        verdict: gs.verdict,
        eigen_pattern,
    })
}

/// Eigenvalue pattern of a boundary tensor analyzed at rank `r`.
pub fn eigen_pattern(x: &Tensor3, r: usize) -> Result<EigenPattern> {
    let an = analyze_boundary(
        x,
        r,
        &SgsdOptions::default(),
        &SlicemixOptions::default(),
        &EigenOptions::default(),
    )?;
    Ok(pattern_of(&an))
}

/// Eigenvalue pattern of a finished boundary analysis.
pub fn pattern_of(an: &BoundaryAnalysis) -> EigenPattern {
    match &an.eigen {
        Some(e) => EigenPattern::Available {
            joint_partition: e.joint_partition.clone(),
            slice_partitions: e.partitions.clone(),
            eigenvector_count: e.eigenvector_count,
            defective: e.defective,
            zero_upper_positions: e.zero_upper_positions.clone(),
        },
        None => EigenPattern::Unavailable {
            zero_diagonal: an.zero_diagonal.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{family_r3, DEFAULT_N_GRID};
    use crate::linalg::{random_normal, seeded_rng};

    #[test]
    fn rank1_metric_basics() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(rank1_metric(&m).unwrap() < 1e-15);
        assert_eq!(rank1_metric(&Matrix::identity(3, 3)).unwrap(), 1.0);
        assert_eq!(rank1_metric(&Matrix::from_element(3, 1, 2.0)).unwrap(), 0.0);
        assert!(matches!(
            rank1_metric(&Matrix::zeros(2, 2)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn r3_family_forms_one_group() {
        let fam = family_r3(0.0, 1.0, 1.0).unwrap();
        let series: Vec<_> = DEFAULT_N_GRID
            .iter()
            .map(|&n| (n, fam.normalized_snapshot(n).unwrap()))
            .collect();
        let rep = detect_groups(&series, &Thresholds::default()).unwrap();
        assert_eq!(rep.groups.len(), 1);
        assert_eq!(rep.groups[0].group.indices(), &[0, 1, 2]);
        assert!(rep.groups[0].bounded_sum);
        assert_eq!(rep.groups[0].verdict, Verdict::NonProportional);
    }

    #[test]
    fn benign_series_has_no_groups() {
        let mut rng = seeded_rng(1);
        let a = random_normal(&mut rng, 3, 2);
        let b = random_normal(&mut rng, 3, 2);
        let c = random_normal(&mut rng, 2, 2);
        let cp = CpDecomposition::absorbed(a, b, c)
            .unwrap()
            .normalize()
            .unwrap();
        let series: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&n| (n, cp.clone())).collect();
        let rep = detect_groups(&series, &Thresholds::default()).unwrap();
        assert!(rep.groups.is_empty());
        assert!(rep.candidates.is_empty());
    }

    #[test]
    fn needs_three_snapshots() {
        let fam = family_r3(0.0, 1.0, 1.0).unwrap();
        let series: Vec<_> = [10.0, 100.0]
            .iter()
            .map(|&n| (n, fam.snapshot(n).unwrap()))
            .collect();
        assert!(detect_groups(&series, &Thresholds::default()).is_err());
    }

    #[test]
    fn csv_has_fixed_header() {
        let fam = family_r3(0.0, 1.0, 1.0).unwrap();
        let series: Vec<_> = DEFAULT_N_GRID
            .iter()
            .map(|&n| (n, fam.snapshot(n).unwrap()))
            .collect();
        let rep = detect_groups(&series, &Thresholds::default()).unwrap();
        let csv = rep.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "group,n,max_abs_omega,group_sum_norm,s2s1_A,s2s1_B,s2s1_C,min_abs_congruence"
        );
        assert_eq!(lines.count(), 8);
    }
}
