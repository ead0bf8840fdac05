//! Alignment metrics against brute-force oracles, plus solver properties.

mod common;

use common::*;
use cpc::alignment::{
    adjusted_rand_index, align_rdms, compute_rdm, gw_align, gw_align_with, matching_accuracy, rsa, sinkhorn, uniform,
    AlignOptions, Correlation, DistanceMetric, GwOptions, Rdm,
};
use cpc::linalg::permutation_matrix;
use cpc::rng::rng_for;
use cpc::world::ModalityTransform;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_points(seed: u64, n: usize, d: usize, scale: f64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 0);
    DMatrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn rdm_from(rows: &[[f64; 4]]) -> Rdm {
    Rdm::unlabeled(DMatrix::from_fn(4, 4, |i, j| rows[i][j])).unwrap()
}

#[test]
fn euclidean_rdm_matches_double_loop() {
    let x = gaussian_points(11, 10, 3, 1.0);
    let got = compute_rdm(&x, DistanceMetric::Euclidean).unwrap();
    let oracle = naive_euclidean_rdm(&x);
    assert!((got.matrix() - oracle).amax() < 1e-12);
}

#[test]
fn cosine_rdm_matches_double_loop() {
    let x = gaussian_points(12, 9, 4, 1.0);
    let got = compute_rdm(&x, DistanceMetric::Cosine).unwrap();
    assert!((got.matrix() - naive_cosine_rdm(&x)).amax() < 1e-12);
}

#[test]
fn rsa_on_hand_built_rdms_matches_direct_formula() {
    let a = rdm_from(&[[0.0, 1.0, 2.0, 3.0], [1.0, 0.0, 4.0, 5.0], [2.0, 4.0, 0.0, 6.0], [3.0, 5.0, 6.0, 0.0]]);
    let b = rdm_from(&[[0.0, 2.5, 1.0, 3.0], [2.5, 0.0, 4.0, 0.5], [1.0, 4.0, 0.0, 7.0], [3.0, 0.5, 7.0, 0.0]]);
    let (ua, ub) = (upper(a.matrix()), upper(b.matrix()));
    let p = rsa(&a, &b, Correlation::Pearson).unwrap();
    let s = rsa(&a, &b, Correlation::Spearman).unwrap();
    assert!((p - direct_pearson(&ua, &ub)).abs() < 1e-12);
    assert!((s - direct_spearman(&ua, &ub)).abs() < 1e-12);
}

#[test]
fn ari_matches_pair_counting_oracle() {
    let (x, y) = ([0, 0, 1, 2], [0, 0, 1, 1]);
    let got = adjusted_rand_index(&x, &y).unwrap();
    assert!((got - pair_counting_ari(&x, &y)).abs() < 1e-12);
    // 4 pairs: together-in-both 1, in x 1, in y 2 → (1 − 1/3)/(1.5 − 1/3)
    assert!((got - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn randomized_metric_oracles() {
    let mut rng = rng_for(99, 0);
    for trial in 0..200 {
        let n = rng.random_range(3..=12);
        let d = rng.random_range(1..=4);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (rx, ry) = (
            compute_rdm(&x, DistanceMetric::Euclidean).unwrap(),
            compute_rdm(&y, DistanceMetric::Euclidean).unwrap(),
        );
        assert!((rx.matrix() - naive_euclidean_rdm(&x)).amax() < 1e-12, "trial {trial}");
        let (ux, uy) = (upper(rx.matrix()), upper(ry.matrix()));
        let p = rsa(&rx, &ry, Correlation::Pearson).unwrap();
        assert!((p - direct_pearson(&ux, &uy)).abs() < 1e-12, "trial {trial}");
        let s = rsa(&rx, &ry, Correlation::Spearman).unwrap();
        assert!((s - direct_spearman(&ux, &uy)).abs() < 1e-12, "trial {trial}");
        let k1 = rng.random_range(1..=4);
        let k2 = rng.random_range(1..=4);
        let la: Vec<usize> = (0..n).map(|_| rng.random_range(0..k1)).collect();
        let lb: Vec<usize> = (0..n).map(|_| rng.random_range(0..k2)).collect();
        let ari = adjusted_rand_index(&la, &lb).unwrap();
        assert!((ari - pair_counting_ari(&la, &lb)).abs() < 1e-12, "trial {trial}: {la:?} {lb:?}");
    }
}

#[test]
fn sinkhorn_beats_random_feasible_couplings() {
    let mut rng = rng_for(5, 0);
    let cost = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
    let (p, q) = (vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]);
    let eps = 0.05;
    let plan = sinkhorn(&cost, &p, &q, eps, 10_000, 1e-10).unwrap();
    assert!(marginal_residual(&plan.plan, &p, &q) <= 1e-6);
    let best = entropic_objective(&cost, &plan.plan, eps);
    for _ in 0..200_000 {
        let t = random_coupling(&mut rng, &p, &q);
        assert!(best <= entropic_objective(&cost, &t, eps) + 1e-12);
    }
}

#[test]
fn sinkhorn_residuals_on_random_instances() {
    let mut rng = rng_for(6, 0);
    for _ in 0..100 {
        let cost = DMatrix::from_fn(10, 10, |_, _| rng.random::<f64>());
        let eps = 10f64.powf(rng.random_range(-2.5..0.0));
        let plan = sinkhorn(&cost, &uniform(10), &uniform(10), eps, 20_000, 1e-9).unwrap();
        assert!(plan.marginal_residual() <= 1e-6);
        assert!(plan.plan.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn gw_self_alignment() {
    let d = compute_rdm(&gaussian_points(21, 10, 3, 10.0), DistanceMetric::Euclidean).unwrap();
    let (plan, dist) = gw_align(&d, &d, Some(0.01), 10, 3).unwrap();
    assert!(dist < 1e-3, "{dist}");
    let identity: Vec<usize> = (0..10).collect();
    assert_eq!(matching_accuracy(&plan, &identity, 1).unwrap(), 1.0);
}

#[test]
fn gw_recovers_a_hidden_permutation() {
    let d1 = compute_rdm(&well_separated_points(22, 10, 3), DistanceMetric::Euclidean).unwrap();
    let mut rng = rng_for(23, 0);
    for trial in 0..5 {
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rng);
        // d2[perm[i]][perm[j]] = d1[i][j]
        let inverse = {
            let mut inv = vec![0; 10];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            inv
        };
        let d2 = d1.reordered(&inverse).unwrap();
        let (plan, _) = gw_align(&d1, &d2, None, 10, trial).unwrap();
        assert_eq!(plan.argmax_matching(), perm, "trial {trial}");
        assert_eq!(matching_accuracy(&plan, &perm, 1).unwrap(), 1.0);
    }
}

#[test]
fn gw_isometry_invariance_under_rotation() {
    let x = well_separated_points(24, 10, 3);
    let t = ModalityTransform::random_rotation(3, &mut rng_for(25, 0));
    let rotated = &x * t.matrix.transpose();
    let a = compute_rdm(&x, DistanceMetric::Euclidean).unwrap();
    let b = compute_rdm(&rotated, DistanceMetric::Euclidean).unwrap();
    let report = align_rdms(&a, &b, &AlignOptions::default()).unwrap();
    assert!(report.gw_distance < 1e-3, "{}", report.gw_distance);
    assert!((report.rsa_pearson.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report.matching_accuracy, 1.0);
}

#[test]
fn gw_objective_is_monotone() {
    let mut rng = rng_for(26, 0);
    for seed in 0..10 {
        let a = compute_rdm(&gaussian_points(100 + seed, 10, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        let b = compute_rdm(&gaussian_points(200 + seed, 10, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        let opts = GwOptions {
            n_init: 3,
            seed: rng.random(),
            ..GwOptions::default()
        };
        let res = gw_align_with(&a, &b, &opts).unwrap();
        for run in &res.runs {
            assert!(run.plan.marginal_residual() <= 1e-6);
            for w in run.objective_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn gw_distance_invariant_under_simultaneous_relabeling() {
    let a = compute_rdm(&gaussian_points(31, 8, 2, 5.0), DistanceMetric::Euclidean).unwrap();
    let b = compute_rdm(&gaussian_points(32, 8, 2, 5.0), DistanceMetric::Euclidean).unwrap();
    let (_, base) = gw_align(&a, &b, None, 10, 1).unwrap();
    let order = [3, 0, 7, 1, 6, 2, 5, 4];
    let (_, relabeled) = gw_align(&a.reordered(&order).unwrap(), &b.reordered(&order).unwrap(), None, 10, 1).unwrap();
    assert!((base - relabeled).abs() < 1e-6, "{base} vs {relabeled}");
}

#[test]
fn permutation_matrix_plan_has_full_accuracy() {
    let perm = vec![2, 0, 3, 1];
    let m = permutation_matrix(&perm).unwrap() / 4.0;
    let plan = cpc::alignment::TransportPlan {
        plan: m,
        row_marginal: uniform(4),
        col_marginal: uniform(4),
    };
    assert_eq!(matching_accuracy(&plan, &perm, 1).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rsa_is_symmetric(seed in any::<u64>(), n in 3usize..10) {
        let a = compute_rdm(&gaussian_points(seed, n, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        let b = compute_rdm(&gaussian_points(seed ^ 1, n, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        for method in [Correlation::Pearson, Correlation::Spearman] {
            let ab = rsa(&a, &b, method).unwrap();
            let ba = rsa(&b, &a, method).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(seed in any::<u64>(), n in 3usize..10) {
        let a = compute_rdm(&gaussian_points(seed, n, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        let b = compute_rdm(&gaussian_points(seed ^ 1, n, 2, 1.0), DistanceMetric::Euclidean).unwrap();
        let base = rsa(&a, &b, Correlation::Spearman).unwrap();
        let warped = a.map_entries(|v| v.powi(3) + 2.0 * v).unwrap();
        prop_assert!((rsa(&warped, &b, Correlation::Spearman).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn matching_accuracy_monotone_in_k(seed in any::<u64>()) {
        let mut rng = rng_for(seed, 0);
        let cost = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>());
        let plan = sinkhorn(&cost, &uniform(6), &uniform(6), 0.1, 10_000, 1e-9).unwrap();
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let accs: Vec<f64> = (1..=6).map(|k| matching_accuracy(&plan, &perm, k).unwrap()).collect();
        prop_assert!(accs.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(accs[5], 1.0);
    }

    #[test]
    fn ari_ignores_label_permutations(
        labels in prop::collection::vec((0usize..4, 0usize..4), 2..20),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let a: Vec<usize> = labels.iter().map(|p| p.0).collect();
        let b: Vec<usize> = labels.iter().map(|p| p.1).collect();
        let base = adjusted_rand_index(&a, &b).unwrap();
        let pa: Vec<usize> = a.iter().map(|&v| perm[v]).collect();
        prop_assert!((adjusted_rand_index(&pa, &b).unwrap() - base).abs() < 1e-12);
        prop_assert!((adjusted_rand_index(&a, &pa).unwrap() - 1.0).abs() < 1e-12);
    }
}

