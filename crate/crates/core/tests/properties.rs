mod common;

use common::oracles::selection_case;
use common::{random_matrix, random_probs};
use nnc_core::bilevel::{fuse_soft_labels, upper_step, TeacherWeightMatrix};
use nnc_core::cleanselect::{
    consensus_candidates, embedding_score, select_clean, select_clean_labelled,
    select_clean_unlabelled, CleanParams, CleanSource,
};
use nnc_core::graphdata::{
    generate_sbm, load_graph, make_splits, normalize_adjacency, save_graph, Graph, GraphFiles,
    LabelState, LabelStatus, SbmParams, SplitFractions,
};
use nnc_core::labelimprove::{improve_labels, removal_count, ImproveParams};
use nnc_core::linalg::{
    grad_and_tangents, matmul, row_softmax, spmm, DenseMatrix, Dual, GcnInputs, LossSpec,
    SparseAdjacency,
};
use nnc_core::noise::{build_transition, corrupt, NoiseKind};
use nnc_core::rng;
use nnc_core::teachers::TeacherEnsemble;
use proptest::prelude::*;
use rand::Rng as _;

fn random_adjacency(n: usize, density: f64, r: &mut rng::Rng) -> SparseAdjacency {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < density {
                let w = r.random_range(0.1..2.0);
                trip.push((i, j, w));
                trip.push((j, i, w));
            }
        }
    }
    SparseAdjacency::from_triplets(n, &trip).unwrap()
}

fn random_graph(n: usize, d: usize, density: f64, r: &mut rng::Rng) -> Graph {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < density {
                trip.push((i, j, 1.0));
                trip.push((j, i, 1.0));
            }
        }
    }
    let adj = SparseAdjacency::from_triplets(n, &trip).unwrap();
    Graph::new(random_matrix(n, d, 1.0, r), adj).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spmm_equals_dense_product(seed in any::<u64>(), density in 0.0f64..1.0) {
        let mut r = rng::stream(seed, "spmm");
        let adj = random_adjacency(8, density, &mut r);
        let m = random_matrix(8, 8, 2.0, &mut r);
        let sparse = spmm(&adj, &m).unwrap();
        let dense = matmul(&adj.to_dense(), &m).unwrap();
        for (a, b) in sparse.data().iter().zip(dense.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(
        rows in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 4), 1..6),
        shift in -50.0f64..50.0,
    ) {
        let m = DenseMatrix::from_rows(&rows).unwrap();
        let p = row_softmax(&m);
        let q = row_softmax(&m.map(|v| v + shift));
        for i in 0..p.rows() {
            prop_assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn tangents_propagate_linearly(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut r = rng::stream(seed, "linearity");
        let g = random_graph(7, 4, 0.4, &mut r);
        let w0 = random_matrix(4, 3, 1.0, &mut r);
        let w1 = random_matrix(3, 2, 1.0, &mut r);
        let t = random_probs(7, 2, 1.0, &mut r);
        let dirs = [
            random_matrix(4, 3, 1.0, &mut r),
            random_matrix(3, 2, 1.0, &mut r),
            random_matrix(7, 2, 0.3, &mut r),
        ];
        let inputs = GcnInputs { adj: g.normalized(), propagated: g.propagated_features(), dropout: None };
        let run = |s: f64| {
            grad_and_tangents(
                &inputs,
                &[
                    Dual::new(w0.clone(), vec![dirs[0].scale(s)]).unwrap(),
                    Dual::new(w1.clone(), vec![dirs[1].scale(s)]).unwrap(),
                ],
                &LossSpec { target: &Dual::new(t.clone(), vec![dirs[2].scale(s)]).unwrap(), rows: &[0, 2, 5] },
            )
            .unwrap()
        };
        let (base, scaled) = (run(1.0), run(alpha));
        for l in 0..2 {
            let want = base.grad_tangents[0][l].scale(alpha);
            let got = &scaled.grad_tangents[0][l];
            let scale = want.frobenius_norm().max(1.0);
            prop_assert!(got.sub(&want).unwrap().frobenius_norm() <= 1e-12 * scale);
        }
        prop_assert_eq!(base.grads, scaled.grads);
    }

    #[test]
    fn normalized_adjacency_matches_dense_oracle(seed in any::<u64>(), n in 1usize..=16, density in 0.0f64..1.0) {
        let mut r = rng::stream(seed, "normalize");
        let adj = random_adjacency(n, density, &mut r);
        let norm = normalize_adjacency(&adj).unwrap();
        let mut a = adj.to_dense();
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
        let oracle = DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] / (deg[i] * deg[j]).sqrt());
        let ones = DenseMatrix::filled(n, 1, 1.0);
        let got = spmm(&norm, &ones).unwrap();
        let want = matmul(&oracle, &ones).unwrap();
        for (x, y) in got.data().iter().zip(want.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for i in 0..n {
            prop_assert!(norm.get(i, i).is_some());
        }
    }

    #[test]
    fn splits_are_reproducible_disjoint_and_stratified(seed in any::<u64>(), n in 60usize..300, c in 2usize..5) {
        let mut r = rng::stream(seed, "split-labels");
        let ys: Vec<usize> = (0..n).map(|i| if i < c { i } else { r.random_range(0..c) }).collect();
        let labels = LabelState::from_labels(&ys, c).unwrap();
        let f = SplitFractions { train: 0.2, val: 0.2, test: 0.5 };
        let a = make_splits(&labels, f, seed).unwrap();
        prop_assert_eq!(&a, &make_splits(&labels, f, seed).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), total);
        for class in 0..c {
            let size = ys.iter().filter(|&&y| y == class).count() as f64;
            let got = a.train.iter().filter(|&&i| ys[i] == class).count() as f64;
            prop_assert!(got >= 1.0);
            prop_assert!((got - f.train * size).abs() < 1.0 || (got == 1.0 && f.train * size < 1.0));
        }
    }

    #[test]
    fn corruption_is_seeded_and_masked(seed in any::<u64>(), rate in 0.0f64..=1.0, pair in any::<bool>()) {
        let mut r = rng::stream(seed, "mask");
        let n = 200;
        let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
        let labels = LabelState::from_labels(&ys, 4).unwrap();
        let mask: Vec<usize> = (0..n).filter(|_| r.random::<bool>()).collect();
        let kind = if pair { NoiseKind::Pair } else { NoiseKind::Uniform };
        let spec = build_transition(kind, rate, 4).unwrap();
        for i in 0..4 {
            prop_assert!((spec.transition.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let (a, truth) = corrupt(&labels, &mask, &spec, seed).unwrap();
        let (b, _) = corrupt(&labels, &mask, &spec, seed).unwrap();
        prop_assert_eq!(&a, &b);
        for (i, &y) in ys.iter().enumerate() {
            prop_assert_eq!(truth.label(i), Some(y));
            if !mask.contains(&i) {
                prop_assert_eq!(a.node(i), labels.node(i));
            } else if pair && a.label(i) != Some(y) {
                prop_assert_eq!(a.label(i), Some((y + 1) % 4));
            }
        }
    }

    #[test]
    fn fused_rows_stay_stochastic_and_argmax_ignores_scale(seed in any::<u64>(), alpha in 0.01f64..20.0) {
        let mut r = rng::stream(seed, "fusion-prop");
        let (n, c, k) = (12, 4, 3);
        let probs: Vec<DenseMatrix> = (0..k).map(|_| random_probs(n, c, 3.0, &mut r)).collect();
        let ens = TeacherEnsemble::from_probs(probs, None).unwrap();
        let mut w = TeacherWeightMatrix::filled(k, c, 1.0, 2.0);
        for _ in 0..5 {
            upper_step(&mut w, &random_matrix(k, c, 1.0, &mut r)).unwrap();
            let soft = fuse_soft_labels(&ens, &w).unwrap();
            for i in 0..n {
                prop_assert!((soft.values().row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        let mut scaled = w.clone();
        scaled.weights = w.weights.scale(alpha);
        let (a, b) = (fuse_soft_labels(&ens, &w).unwrap(), fuse_soft_labels(&ens, &scaled).unwrap());
        for i in 0..n {
            prop_assert_eq!(a.values().row_argmax(i), b.values().row_argmax(i));
        }
    }

    #[test]
    fn clean_set_respects_its_budgets(seed in any::<u64>()) {
        let case = selection_case(seed);
        let (ens, labels) = (&case.ens, &case.labels);
        let c = labels.classes();
        let cands = consensus_candidates(ens, &labels.unsupervised_nodes());
        let scores = embedding_score(ens, &cands, case.beta1);
        prop_assert!(select_clean_unlabelled(&cands, &scores, case.beta2).len() <= case.beta2 * c);
        let lab = select_clean_labelled(ens, labels, &labels.supervising_nodes(), case.alpha as f64);
        for class in 0..c {
            let size = labels.supervising().iter().filter(|p| p.1 == class).count();
            let got = lab.iter().filter(|n| n.label == class).count();
            prop_assert_eq!(got, (case.alpha * size).div_ceil(100));
        }
        let params = CleanParams { beta1: case.beta1, beta2: case.beta2, alpha_percent: case.alpha as f64 };
        let set = select_clean(ens, labels, &params);
        for node in set.nodes() {
            if labels.status(node.node) == LabelStatus::Filtered {
                prop_assert_eq!(node.source, CleanSource::UnlabelledConsensus);
            }
        }
        prop_assert_eq!(&set, &select_clean(ens, labels, &params));
    }

    #[test]
    fn label_improvement_bookkeeping(seed in any::<u64>(), r_tenths in 0usize..10, rho in 1usize..6) {
        let case = selection_case(seed);
        let labels = &case.labels;
        let c = labels.classes();
        let params = ImproveParams { r: r_tenths as f64 / 10.0, rho };
        let (out, audit) = improve_labels(&case.student, &case.ens, labels, &params, 1).unwrap();

        let mut expect_removed = 0;
        for class in 0..c {
            let size = labels.supervising().iter().filter(|p| p.1 == class).count();
            let want = removal_count(size, params.r);
            prop_assert_eq!(want, (r_tenths * size).div_ceil(10).min(size.saturating_sub(1)));
            prop_assert_eq!(audit.removed.iter().filter(|p| p.1 == class).count(), want);
            expect_removed += want;
        }
        prop_assert_eq!(
            out.supervising().len(),
            labels.supervising().len() - expect_removed + audit.added.len()
        );
        prop_assert!(audit.added.len() <= 2 * rho * c);
        for i in 0..labels.len() {
            let (before, after) = (labels.status(i), out.status(i));
            if before == LabelStatus::Original {
                prop_assert!(after == LabelStatus::Original || after == LabelStatus::Filtered);
            }
            if before == LabelStatus::Filtered && after.supervises() {
                prop_assert_eq!(after, LabelStatus::Pseudo);
            }
        }
    }
}

#[test]
fn graph_files_round_trip() {
    let sbm = SbmParams {
        n: 40,
        c: 3,
        p_intra: 0.3,
        p_inter: 0.05,
        d: 5,
        feature_noise: 0.7,
    };
    let (graph, labels) = generate_sbm(&sbm, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = |tag: &str| GraphFiles {
        edges: dir.path().join(format!("{tag}.edges")),
        features: dir.path().join(format!("{tag}.features")),
        labels: dir.path().join(format!("{tag}.labels")),
        classes: Some(3),
    };
    save_graph(&graph, &labels, &files("a")).unwrap();
    let (g1, l1) = load_graph(&files("a")).unwrap();
    save_graph(&g1, &l1, &files("b")).unwrap();
    let (g2, l2) = load_graph(&files("b")).unwrap();
    assert_eq!(g1.features(), graph.features());
    assert_eq!(g1.adjacency(), graph.adjacency());
    assert_eq!(l1, labels);
    assert_eq!(
        (g2.features(), g2.adjacency(), &l2),
        (g1.features(), g1.adjacency(), &l1)
    );
}
