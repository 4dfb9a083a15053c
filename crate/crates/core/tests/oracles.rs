mod support;

use ordemb_core::losses::{self, full_gradient, full_objective, loss_gradient, loss_value, triplet_gradient_via_chain_rule};
use ordemb_core::metrics::{self, generalization_error, mean_average_precision, precision_recall_at_k, LabeledEmbedding};
use ordemb_core::optimizer::{self, sbb_step_size};
use ordemb_core::{Comparison, ComparisonSet, EmbeddingMatrix, LossKind, LossModel};
use rand::Rng;
use support::*;

fn gnmds_near_kink(x: &EmbeddingMatrix, p: &Comparison) -> bool {
    (1.0 + ordemb_core::margin(x, p)).abs() < 1e-4
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = rng(101);
    for kind in LossKind::ALL {
        let model = LossModel::new(kind, 4);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = uniform_matrix(&mut rng, 8, 4, 1.0);
            let p = random_comparison(&mut rng, 8);
            if kind == LossKind::Gnmds && gnmds_near_kink(&x, &p) {
                continue;
            }
            let analytic = loss_gradient(&model, &x, &p).unwrap().to_dense(8);
            let numeric = central_difference(&x, FD_STEP, |y| loss_value(&model, y, &p).unwrap());
            worst = worst.max(relative_error(analytic.as_slice(), &numeric));
        }
        assert!(worst < 1e-5, "{kind}: worst relative error {worst:e}");
    }
}

#[test]
fn full_gradient_matches_finite_differences_and_mean() {
    let mut rng = rng(7);
    for kind in LossKind::ALL {
        let model = LossModel::new(kind, 3);
        let x = uniform_matrix(&mut rng, 6, 3, 1.0);
        let comps: Vec<Comparison> = (0..25).map(|_| random_comparison(&mut rng, 6)).collect();
        if kind == LossKind::Gnmds && comps.iter().any(|p| gnmds_near_kink(&x, p)) {
            continue;
        }
        let set = ComparisonSet::new(6, comps).unwrap();
        let g = full_gradient(&model, &x, &set).unwrap();
        let numeric = central_difference(&x, FD_STEP, |y| full_objective(&model, y, &set).unwrap());
        let err = relative_error(g.as_slice(), &numeric);
        assert!(err < 1e-5, "{kind}: {err:e}");

        let mut mean = EmbeddingMatrix::zeros(6, 3);
        for p in &set {
            loss_gradient(&model, &x, p).unwrap().scatter_into(&mut mean, 1.0);
        }
        mean.scale(1.0 / set.len() as f64);
        for (a, b) in mean.as_slice().iter().zip(g.as_slice()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}

#[test]
fn full_gradient_support() {
    let mut rng = rng(3);
    let x = uniform_matrix(&mut rng, 7, 2, 1.0);
    let set = ComparisonSet::new(7, vec![Comparison::triplet(0, 1, 2), Comparison::quadruplet(2, 1, 0, 1)]).unwrap();
    for kind in LossKind::ALL {
        let g = full_gradient(&LossModel::new(kind, 2), &x, &set).unwrap();
        for r in 3..7 {
            assert_eq!(g.row(r), &[0.0, 0.0]);
        }
    }
}

#[test]
fn objective_is_a_mean() {
    let mut rng = rng(5);
    let x = uniform_matrix(&mut rng, 5, 2, 1.0);
    let model = LossModel::new(LossKind::Ste, 2);
    let comps = vec![Comparison::triplet(0, 1, 2), Comparison::triplet(3, 4, 0), Comparison::quadruplet(1, 2, 3, 4)];
    let single = ComparisonSet::new(5, comps[..1].to_vec()).unwrap();
    assert_eq!(full_objective(&model, &x, &single).unwrap(), loss_value(&model, &x, &comps[0]).unwrap());

    let three = ComparisonSet::new(5, comps.clone()).unwrap();
    let values: Vec<f64> = comps.iter().map(|p| loss_value(&model, &x, p).unwrap()).collect();
    let expected = (values[0] + values[1] + values[2]) / 3.0;
    assert!((full_objective(&model, &x, &three).unwrap() - expected).abs() < 1e-15);

    let doubled = ComparisonSet::new(5, comps.iter().chain(&comps).copied().collect()).unwrap();
    let a = full_objective(&model, &x, &three).unwrap();
    let b = full_objective(&model, &x, &doubled).unwrap();
    assert!((a - b).abs() <= 1e-15 * a.abs());
}

#[test]
fn chain_rule_matches_merged_quadruplet() {
    let mut rng = rng(11);
    for case in 0..1000 {
        let kind = LossKind::ALL[case % 4];
        let model = LossModel::new(kind, 3);
        let x = uniform_matrix(&mut rng, 6, 3, 1.0);
        let i = rng.random_range(0..6);
        let others: Vec<usize> = (0..6).filter(|&v| v != i).collect();
        let j = others[rng.random_range(0..5)];
        let k = others[rng.random_range(0..5)];
        if j == k {
            continue;
        }
        let via_a = triplet_gradient_via_chain_rule(&model, &x, i, j, k).unwrap();
        let slots = losses::slot_gradient(&model, &x, &Comparison::triplet(i, j, k)).slots;
        let merged: Vec<f64> = slots[0].iter().zip(&slots[2]).map(|(a, b)| a + b).collect();
        let check = |got: &[f64], want: &[f64]| {
            got.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-300))
        };
        assert!(check(via_a.block(i).unwrap(), &merged));
        assert_eq!(via_a.block(j).unwrap(), slots[1].as_slice());
        assert_eq!(via_a.block(k).unwrap(), slots[3].as_slice());
        let direct = loss_gradient(&model, &x, &Comparison::triplet(i, j, k)).unwrap();
        for r in [i, j, k] {
            assert!(check(direct.block(r).unwrap(), via_a.block(r).unwrap()));
        }
    }
}

#[test]
fn triplet_gradient_matches_finite_differences() {
    let mut rng = rng(13);
    let model = LossModel::new(LossKind::Ste, 3);
    for _ in 0..50 {
        let x = uniform_matrix(&mut rng, 5, 3, 1.0);
        let g = triplet_gradient_via_chain_rule(&model, &x, 0, 3, 1).unwrap().to_dense(5);
        let p = Comparison::triplet(0, 3, 1);
        let numeric = central_difference(&x, FD_STEP, |y| loss_value(&model, y, &p).unwrap());
        assert!(relative_error(g.as_slice(), &numeric) < 1e-5);
    }
}

#[test]
fn sbb_matches_reference_on_ste_instance() {
    let mut rng = rng(17);
    let model = LossModel::new(LossKind::Ste, 2);
    let comps: Vec<Comparison> = (0..12).map(|_| random_comparison(&mut rng, 5)).collect();
    let set = ComparisonSet::new(5, comps).unwrap();
    for _ in 0..20 {
        let x_prev = uniform_matrix(&mut rng, 5, 2, 1.0);
        let x_cur = uniform_matrix(&mut rng, 5, 2, 1.0);
        let g_prev = full_gradient(&model, &x_prev, &set).unwrap();
        let g_cur = full_gradient(&model, &x_cur, &set).unwrap();
        for (m, eps) in [(1, 0.0), (12, 0.005), (100, 0.3)] {
            let got = sbb_step_size(&x_cur, &x_prev, &g_cur, &g_prev, m, eps).unwrap();
            let want = sbb_reference(x_cur.as_slice(), x_prev.as_slice(), g_cur.as_slice(), g_prev.as_slice(), m, eps);
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
        }
    }
}

#[test]
fn min_inner_length_matches_reference() {
    for l in [1e-3, 0.1, 0.5, 1.0, 2.0, 7.5] {
        for eps in [1e-2, 3e-2, 0.1, 0.4, 1.0, 3.0, 10.0] {
            assert_eq!(optimizer::min_inner_length(l, eps).unwrap(), min_inner_length_reference(l, eps), "L={l} eps={eps}");
        }
    }
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = rng(19);
    for _ in 0..50 {
        let x = uniform_matrix(&mut rng, 12, 2, 1.0);
        let labels: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
        let data = LabeledEmbedding::new(x.clone(), &labels).unwrap();
        for k in 1..=11 {
            assert_eq!(precision_recall_at_k(&data, k).unwrap(), brute_precision_recall(&x, &labels, k));
            assert_eq!(mean_average_precision(&data, k).unwrap(), brute_map(&x, &labels, k));
        }
    }
}

#[test]
fn ranking_matches_sort_oracle() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let x = uniform_matrix(&mut rng, 10, 3, 1.0);
        let data = LabeledEmbedding::new(x.clone(), &[0; 10]).unwrap();
        for q in 0..10 {
            let mut oracle: Vec<usize> = (0..10).filter(|&i| i != q).collect();
            oracle.sort_by(|&a, &b| {
                let da: f64 = (0..3).map(|c| (x.get(a, c) - x.get(q, c)).powi(2)).sum();
                let db: f64 = (0..3).map(|c| (x.get(b, c) - x.get(q, c)).powi(2)).sum();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            });
            assert_eq!(metrics::retrieval_ranking(&data, q).unwrap(), oracle);
        }
    }
}

#[test]
fn map_single_relevant_closed_form() {
    // query 0 at the origin, the lone relevant item placed at rank r among 11 others
    for r in 1..=11usize {
        let mut rows = vec![vec![0.0]];
        let mut labels = vec![1usize];
        let mut filler = 10usize;
        for pos in 1..=11 {
            rows.push(vec![pos as f64]);
            if pos == r {
                labels.push(1);
            } else {
                labels.push(filler);
                filler += 1;
            }
        }
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let data = LabeledEmbedding::new(x, &labels).unwrap();
        let report = metrics::RankingReport::compute(&data, 1..=11, 11).unwrap();
        assert!((report.average_precision[0] - 1.0 / r as f64).abs() < 1e-15, "r={r}");
    }
}

#[test]
fn metrics_are_label_permutation_invariant() {
    let mut rng = rng(29);
    let x = uniform_matrix(&mut rng, 12, 2, 1.0);
    let labels: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
    let relabeled: Vec<usize> = labels.iter().map(|&l| [7, 2, 9][l]).collect();
    let a = LabeledEmbedding::new(x.clone(), &labels).unwrap();
    let b = LabeledEmbedding::new(x, &relabeled).unwrap();
    assert_eq!(mean_average_precision(&a, 11).unwrap(), mean_average_precision(&b, 11).unwrap());
    for k in 1..=11 {
        assert_eq!(precision_recall_at_k(&a, k).unwrap(), precision_recall_at_k(&b, k).unwrap());
    }
}

#[test]
fn random_embedding_violates_half() {
    let mut rng = rng(31);
    let x = uniform_matrix(&mut rng, 50, 3, 1.0);
    let comps: Vec<Comparison> = (0..10_000)
        .map(|_| loop {
            let c = random_comparison(&mut rng, 50);
            if c.is_triplet() {
                break c;
            }
        })
        .collect();
    let err = generalization_error(&x, &ComparisonSet::new(50, comps).unwrap()).unwrap();
    assert!((err - 0.5).abs() <= 0.02, "{err}");
}
