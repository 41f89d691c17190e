use cpdegen::als::{fit_als, swamp_metrics, AlsOptions};
use cpdegen::cp::{ComponentGroup, CpDecomposition};
use cpdegen::degeneracy::{
    classify_group, detect_groups, rank1_metric, EigenPattern, Thresholds, Verdict,
};
use cpdegen::families::{
    family_generic, family_r3, family_r4, family_r6, r6_small_factors, FamilyKind, SequenceFamily,
    DEFAULT_N_GRID,
};
use cpdegen::linalg::normalize_columns;
use cpdegen::tensor::{mode_ranks, numerical_rank};
use cpdegen::{Matrix, Tensor3};

fn all_families() -> Vec<SequenceFamily> {
    vec![
        family_r3(0.0, 1.0, 1.0).unwrap(),
        family_r3(0.5, -2.0, 0.7).unwrap(),
        family_r4(1, 6, 6, 5).unwrap(),
        family_r6(1, 8, 8, 8).unwrap(),
        family_generic(1, FamilyKind::GenericR3).unwrap(),
        family_generic(1, FamilyKind::Generic332).unwrap(),
    ]
}

fn series(fam: &SequenceFamily) -> Vec<(f64, CpDecomposition)> {
    DEFAULT_N_GRID
        .iter()
        .map(|&n| (n, fam.normalized_snapshot(n).unwrap()))
        .collect()
}

/// Tensor of a snapshot built straight from the family's factor formulas.
fn closed_form_tensor(fam: &SequenceFamily, n: f64) -> Tensor3 {
    let f = fam.factors(n).unwrap();
    CpDecomposition::absorbed(&f.a * f.prefactor, f.b, f.c)
        .unwrap()
        .evaluate()
}

#[test]
fn small_r6_factors_sum_to_the_rank_two_array() {
    let expected = Tensor3::new([2, 2, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let (plain, tilde) = r6_small_factors();
    for [a, b, c] in [plain, tilde] {
        let x = CpDecomposition::absorbed(a, b, c).unwrap().evaluate();
        assert_eq!(x, expected);
    }
}

#[test]
fn r3_limit_matrices() {
    let fam = family_r3(0.0, 1.0, 1.0).unwrap();
    let [a, b, _] = fam.limit_factors();
    assert_eq!(
        a,
        Matrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0 / 3.0, 0.0, 0.0, 0.0])
    );
    assert_eq!(
        b,
        Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    );
    assert_eq!(numerical_rank(&a, 1e-8), 2);
    let snap = fam.factors(1e4).unwrap();
    assert!((&snap.a - &a).amax() < 1e-3);
    let x = fam.limit();
    assert!((&fam.snapshot(1e4).unwrap().evaluate() - x).norm() < 1e-3 * x.norm());
}

#[test]
fn limit_factor_ranks() {
    let r4 = family_r4(1, 6, 6, 5).unwrap().limit_factors();
    assert_eq!(r4.each_ref().map(|m| numerical_rank(m, 1e-8)), [2, 2, 1]);
    let r6 = family_r6(1, 8, 8, 8).unwrap().limit_factors();
    assert_eq!(r6.each_ref().map(|m| numerical_rank(m, 1e-8)), [2, 2, 2]);
    for kind in [FamilyKind::GenericR3, FamilyKind::Generic332] {
        let g = family_generic(3, kind).unwrap().limit_factors();
        assert_eq!(g.each_ref().map(|m| numerical_rank(m, 1e-8)), [1, 1, 1]);
    }
}

#[test]
fn limit_mode_ranks_never_exceed_the_sequence_rank() {
    // Every snapshot has rank R, so each unfolding has rank at most R, and
    // rank is lower semicontinuous, so the limit inherits the bound.
    for fam in all_families() {
        let r = fam.rank();
        let ranks = mode_ranks(fam.limit(), 1e-8).unwrap();
        assert!(ranks.iter().all(|&m| m <= r), "{:?}: {ranks:?}", fam.kind());
    }
}

#[test]
fn weights_grow_and_snapshots_stay_bounded() {
    for fam in all_families() {
        let w2 = fam.normalized_snapshot(1e2).unwrap().max_abs_weight();
        let w3 = fam.normalized_snapshot(1e3).unwrap().max_abs_weight();
        assert!(w3 > 5.0 * w2, "{:?}: {w2} -> {w3}", fam.kind());
        let xn = fam.limit().norm();
        for &n in &DEFAULT_N_GRID {
            let s = fam.snapshot(n).unwrap().evaluate().norm();
            assert!(s <= 2.0 * xn && s >= 0.5 * xn, "{:?} at {n}", fam.kind());
        }
    }
}

#[test]
fn generic_factors_approach_rank_one() {
    for seed in 0..5 {
        for kind in [FamilyKind::GenericR3, FamilyKind::Generic332] {
            let fam = family_generic(seed, kind).unwrap();
            let metrics: Vec<[f64; 3]> = DEFAULT_N_GRID
                .iter()
                .map(|&n| {
                    let cp = fam.normalized_snapshot(n).unwrap();
                    [1, 2, 3].map(|m| rank1_metric(cp.factor(m)).unwrap())
                })
                .collect();
            for m in 0..3 {
                assert!(
                    metrics.windows(2).all(|w| w[1][m] < w[0][m]),
                    "{kind:?} seed {seed}"
                );
                assert!(metrics[3][m] < 1e-2);
            }
            let c = fam.factors(1e4).unwrap().c;
            assert!(c.row(0).iter().all(|&v| v == 1.0));
        }
    }
}

#[test]
fn divergence_series_match_closed_forms() {
    for fam in [
        family_r3(0.0, 1.0, 1.0).unwrap(),
        family_r4(1, 6, 6, 5).unwrap(),
        family_r6(1, 8, 8, 8).unwrap(),
    ] {
        let rep = detect_groups(&series(&fam), &Thresholds::default()).unwrap();
        let all = &rep.all;
        for (t, &n) in DEFAULT_N_GRID.iter().enumerate() {
            let oracle = closed_form_tensor(&fam, n).norm();
            assert!((all.group_sum_norm[t] - oracle).abs() <= 1e-9 * oracle);
        }
        let (lo, hi) = all
            .group_sum_norm
            .iter()
            .fold((f64::MAX, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi / lo <= 4.0);
        let per_n: Vec<f64> = all
            .max_abs_omega
            .iter()
            .zip(&DEFAULT_N_GRID)
            .map(|(w, n)| w / n)
            .collect();
        for v in &per_n {
            assert!(
                *v <= 2.0 * per_n[0] && *v >= 0.5 * per_n[0],
                "{:?}: {per_n:?}",
                fam.kind()
            );
        }
        for g in &rep.groups {
            assert!(g.group.len() >= 2);
            assert!(g.bounded_sum);
        }
    }
}

#[test]
fn r3_detection_and_verdict() {
    let fam = family_r3(0.0, 1.0, 1.0).unwrap();
    let s = series(&fam);
    let rep = detect_groups(&s, &Thresholds::default()).unwrap();
    assert_eq!(rep.groups.len(), 1);
    let g = &rep.groups[0];
    assert_eq!(g.group, ComponentGroup::all(3));
    assert!(g.rank1[0].iter().all(|&v| v > 0.1));
    assert!(g.rank1[2][3] < 1e-3);
    let cls = classify_group(&s, &g.group, Some(fam.limit()), &Thresholds::default()).unwrap();
    assert_eq!(cls.verdict, Verdict::NonProportional);
    match cls.eigen_pattern {
        EigenPattern::Available {
            joint_partition,
            eigenvector_count,
            ..
        } => {
            assert_eq!(joint_partition, vec![3]);
            // Two independent eigenvectors: the exceptional case.
            assert_eq!(eigenvector_count, 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn r4_verdict_and_group_ranks() {
    let fam = family_r4(1, 6, 6, 5).unwrap();
    let s = series(&fam);
    let rep = detect_groups(&s, &Thresholds::default()).unwrap();
    assert_eq!(rep.groups.len(), 1);
    let g = &rep.groups[0];
    let cls = classify_group(&s, &g.group, Some(fam.limit()), &Thresholds::default()).unwrap();
    assert_eq!(cls.verdict, Verdict::NonProportional);
    let last = &s[3].1;
    let idx = g.group.indices();
    let ranks = [1, 2, 3].map(|m| {
        let cols = cpdegen::linalg::select_columns(last.factor(m), idx);
        numerical_rank(&cols, 1e-3)
    });
    assert_eq!(ranks, [2, 2, 1]);
}

#[test]
fn generic_verdict_is_proportional() {
    for kind in [FamilyKind::GenericR3, FamilyKind::Generic332] {
        let fam = family_generic(2, kind).unwrap();
        let s = series(&fam);
        let rep = detect_groups(&s, &Thresholds::default()).unwrap();
        assert_eq!(rep.groups.len(), 1);
        let cls = classify_group(
            &s,
            &rep.groups[0].group,
            Some(fam.limit()),
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(cls.verdict, Verdict::Proportional);
        assert!(
            matches!(cls.eigen_pattern, EigenPattern::Available { ref joint_partition, .. } if joint_partition == &vec![3])
        );
    }
}

#[test]
fn r3_rank1_metric_oracle() {
    let a = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0 / 3.0, 0.0, 0.0, 0.0]);
    // Nonzero singular values of the leading 2×3 block: eigenvalues of M·Mᵀ.
    let m = a.rows(0, 2).into_owned();
    let g = &m * m.transpose();
    let (p, q, r) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
    let disc = ((p - r).powi(2) + 4.0 * q * q).sqrt();
    let oracle = ((p + r - disc) / (p + r + disc)).sqrt();
    assert!((rank1_metric(&a).unwrap() - oracle).abs() < 1e-12);
    assert!(oracle > 0.0);
    let unit = normalize_columns(&a);
    assert!(rank1_metric(&unit).unwrap() > 0.1);
}

#[test]
fn als_on_r3_boundary_tensor_diverges() {
    let x = family_r3(0.0, 1.0, 1.0).unwrap().limit().clone();
    let opts = AlsOptions {
        max_iters: 100_000,
        rel_tol: 0.0,
        seed: 0,
        record_every: 5_000,
        ..AlsOptions::default()
    };
    let tr = fit_als(&x, 3, &opts).unwrap();
    let w: Vec<f64> = tr.records.iter().map(|r| r.max_abs_weight()).collect();
    assert!(w.windows(2).skip(1).all(|p| p[1] >= p[0]), "{w:?}");
    assert!(*w.last().unwrap() > 1e2);
    assert!(tr.last().fit_error > 0.0);
    let m = swamp_metrics(&tr, 5).unwrap();
    assert!(m.weight_growth_rate > 0.0);
}
