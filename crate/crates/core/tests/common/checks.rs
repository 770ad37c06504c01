//! Numerical checks shared by the focused tests and the acceptance target.
//! Each returns the worst observed error or a description of the failure.

use super::{instance, random_matrix, random_probs, rel_err, Instance};
use nnc_core::bilevel::{
    fuse_soft_labels, fuse_soft_labels_dual, hypergradient, reverse_hypergradient,
    run_distillation, upper_loss, BilevelParams, DistillOptions, TangentBundle,
    TeacherWeightMatrix,
};
use nnc_core::graphdata::{generate_sbm, LabelState, SbmParams};
use nnc_core::linalg::{linear_softmax_grad, DenseMatrix};
use nnc_core::noise::{build_transition, corrupt, NoiseKind};
use nnc_core::rng;
use nnc_core::student::{dropout_mask, init_params, loss_and_grad, StudentParams};
use nnc_core::teachers::TeacherEnsemble;
use rand::Rng as _;

pub const HYPER_ETA: f64 = 0.3;

pub fn forward_mode(inst: &Instance, steps: usize) -> DenseMatrix {
    let soft = fuse_soft_labels_dual(&inst.ens, &inst.weights).unwrap();
    let mut b = TangentBundle::new(&inst.student, inst.weights.weights.shape(), HYPER_ETA);
    for _ in 0..steps {
        b.step(&soft, &inst.graph, &inst.train).unwrap();
    }
    hypergradient(&b, &inst.clean, &inst.graph).unwrap()
}

/// Upper loss after `steps` inner steps from the instance's student.
pub fn phi(inst: &Instance, w: &TeacherWeightMatrix, steps: usize) -> f64 {
    let soft = fuse_soft_labels(&inst.ens, w).unwrap();
    let mut b = TangentBundle::untracked(&inst.student, w.weights.shape(), HYPER_ETA);
    for _ in 0..steps {
        b.step(&soft, &inst.graph, &inst.train).unwrap();
    }
    upper_loss(&b, &inst.clean, &inst.graph).unwrap().unwrap()
}

pub fn central_difference(inst: &Instance, steps: usize, h: f64) -> DenseMatrix {
    let (k, c) = inst.weights.weights.shape();
    DenseMatrix::from_fn(k, c, |j, col| {
        let mut plus = inst.weights.clone();
        plus.weights[(j, col)] += h;
        let mut minus = inst.weights.clone();
        minus.weights[(j, col)] -= h;
        (phi(inst, &plus, steps) - phi(inst, &minus, steps)) / (2.0 * h)
    })
}

pub fn reverse_mode(inst: &Instance, steps: usize) -> DenseMatrix {
    reverse_hypergradient(
        &inst.ens,
        &inst.weights,
        &inst.student,
        &inst.graph,
        &inst.train,
        &inst.clean,
        HYPER_ETA,
        steps,
    )
    .unwrap()
}

/// Worst `(finite-difference, reverse-mode)` relative errors of the
/// forward-mode hypergradient on 20-node instances, `t ∈ {1, 3, 5}`.
pub fn hypergradient_errors(seeds: u64) -> (f64, f64) {
    let (mut fd, mut rev) = (0.0f64, 0.0f64);
    for seed in 0..seeds {
        let inst = instance(seed, 20, 8, 8, 3, 3);
        for t in [1, 3, 5] {
            let g = forward_mode(&inst, t);
            fd = fd.max(rel_err(&g, &central_difference(&inst, t, 1e-4)));
            rev = rev.max(rel_err(&g, &reverse_mode(&inst, t)));
        }
    }
    (fd, rev)
}

fn fd_matrix(m: &DenseMatrix, h: f64, mut f: impl FnMut(&DenseMatrix) -> f64) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| {
        let mut plus = m.clone();
        plus[(i, j)] += h;
        let mut minus = m.clone();
        minus[(i, j)] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// Worst relative error of student (with and without dropout) and
/// classifier gradients against central differences.
pub fn gradient_errors(seeds: u64) -> f64 {
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let (n, d, hid, c) = (6, 4, 3, 2);
        let sbm = SbmParams {
            n,
            c,
            p_intra: 0.7,
            p_inter: 0.2,
            d,
            feature_noise: 0.5,
        };
        let g = generate_sbm(&sbm, seed).unwrap().0;
        let mut r = rng::stream(seed, "gradient-errors");
        let p = StudentParams {
            w0: random_matrix(d, hid, 1.0, &mut r),
            w1: random_matrix(hid, c, 1.0, &mut r),
            ..init_params(d, hid, c, seed)
        };
        assert!(p.param_count() <= 200);
        let target = random_probs(n, c, 2.0, &mut r);
        let rows = [0, 2, 3, 5];
        for mask in [None, Some(dropout_mask(n, hid, 0.3, seed))] {
            let loss = |q: &StudentParams| {
                loss_and_grad(q, &g, &target, &rows, mask.as_ref())
                    .unwrap()
                    .0
            };
            let (_, [g0, g1]) = loss_and_grad(&p, &g, &target, &rows, mask.as_ref()).unwrap();
            let fd0 = fd_matrix(&p.w0, h, |w| {
                loss(&StudentParams {
                    w0: w.clone(),
                    ..p.clone()
                })
            });
            let fd1 = fd_matrix(&p.w1, h, |w| {
                loss(&StudentParams {
                    w1: w.clone(),
                    ..p.clone()
                })
            });
            worst = worst.max(rel_err(&g0, &fd0)).max(rel_err(&g1, &fd1));
        }
        let feats = random_matrix(10, 5, 1.0, &mut r);
        let w = random_matrix(5, 3, 0.5, &mut r);
        let labelled = [(0, 0), (2, 1), (3, 2), (7, 1), (9, 0)];
        let (_, grad) = linear_softmax_grad(&feats, &w, &labelled).unwrap();
        let fd = fd_matrix(&w, h, |x| {
            linear_softmax_grad(&feats, x, &labelled).unwrap().0
        });
        worst = worst.max(rel_err(&grad, &fd));
    }
    worst
}

/// Transition-matrix forms, the binomial flip rate and the `p = 0`
/// identity.
pub fn noise_protocol() -> Result<String, String> {
    for kind in [NoiseKind::Uniform, NoiseKind::Pair] {
        for p in [0.0, 0.2, 0.4, 0.6] {
            for c in 2..=6 {
                let q = build_transition(kind, p, c)
                    .map_err(|e| e.to_string())?
                    .transition;
                for i in 0..c {
                    let sum: f64 = q.row(i).iter().sum();
                    if (sum - 1.0).abs() > 1e-12 {
                        return Err(format!("{kind:?} p={p} c={c}: row {i} sums to {sum}"));
                    }
                    for j in 0..c {
                        let want = match kind {
                            _ if i == j => 1.0 - p,
                            NoiseKind::Uniform => p / (c - 1) as f64,
                            NoiseKind::Pair if j == (i + 1) % c => p,
                            NoiseKind::Pair => 0.0,
                        };
                        if q[(i, j)] != want {
                            return Err(format!(
                                "{kind:?} p={p} c={c}: Q[{i},{j}] = {}",
                                q[(i, j)]
                            ));
                        }
                    }
                }
            }
        }
    }

    let n = 10_000;
    let mut r = rng::stream(7, "noise-protocol");
    let ys: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
    let labels = LabelState::from_labels(&ys, 4).unwrap();
    let mask: Vec<usize> = (0..n).collect();
    let spec = build_transition(NoiseKind::Uniform, 0.4, 4).unwrap();
    let (noisy, _) = corrupt(&labels, &mask, &spec, 11).map_err(|e| e.to_string())?;
    let flips = (0..n)
        .filter(|&i| noisy.label(i) != labels.label(i))
        .count() as f64;
    let (mean, sd) = (0.4 * n as f64, (n as f64 * 0.4 * 0.6).sqrt());
    if (flips - mean).abs() > 3.0 * sd {
        return Err(format!("{flips} flips, expected {mean} ± {:.1}", 3.0 * sd));
    }

    for kind in [NoiseKind::Uniform, NoiseKind::Pair] {
        let spec = build_transition(kind, 0.0, 4).unwrap();
        let (same, _) = corrupt(&labels, &mask, &spec, 3).map_err(|e| e.to_string())?;
        if same != labels {
            return Err(format!("{kind:?} p=0 changed labels"));
        }
    }
    Ok(format!(
        "{flips} flips of {n} (expected {mean} ± {:.1})",
        3.0 * sd
    ))
}

/// Row sums of fused labels, argmax under uniform weights, and symmetry
/// of identical teachers under upper updates. Returns the worst row-sum
/// error and the worst symmetry gap.
pub fn fusion_invariants() -> Result<(f64, f64), String> {
    let mut row_err = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng::stream(seed, "fusion-invariants");
        let (n, c, k) = (
            r.random_range(2..40),
            r.random_range(2..6),
            r.random_range(1..5),
        );
        let probs: Vec<DenseMatrix> = (0..k).map(|_| random_probs(n, c, 3.0, &mut r)).collect();
        let ens = TeacherEnsemble::from_probs(probs, None).unwrap();

        let mut w = TeacherWeightMatrix::filled(k, c, 1.0, 0.0);
        w.weights = random_matrix(k, c, 3.0, &mut r);
        let soft = fuse_soft_labels(&ens, &w).unwrap();
        for i in 0..n {
            let s: f64 = soft.values().row(i).iter().sum();
            row_err = row_err.max((s - 1.0).abs());
        }

        let level = r.random_range(0.1..3.0);
        let uniform = TeacherWeightMatrix::filled(k, c, level, 0.0);
        let soft = fuse_soft_labels(&ens, &uniform).unwrap();
        let mean = ens.summed().scale(1.0 / k as f64);
        for i in 0..n {
            if soft.values().row_argmax(i) != mean.row_argmax(i) {
                return Err(format!(
                    "ensemble {seed} node {i}: uniform-W argmax differs from mean"
                ));
            }
        }
    }
    if row_err > 1e-9 {
        return Err(format!("soft-label row sum off by {row_err:e}"));
    }

    let mut gap = 0.0f64;
    for seed in 0..3 {
        let mut inst = instance(seed, 20, 8, 8, 3, 3);
        let mut probs = inst.ens.probs().to_vec();
        probs[1] = probs[0].clone();
        inst.ens = TeacherEnsemble::from_probs(probs, None).unwrap();
        let params = BilevelParams {
            window_length: 3,
            windows: 6,
            eta_mu: 0.3,
            eta_lr_upper: 10.0,
            ..BilevelParams::default()
        };
        let w = TeacherWeightMatrix::filled(3, 3, 1.0, params.eta_lr_upper);
        let out = run_distillation(
            &inst.ens,
            &inst.graph,
            &inst.train,
            &inst.clean,
            &params,
            inst.student.clone(),
            w,
            &[],
            &DistillOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let wt = &out.weights.weights;
        let moved = (0..3).map(|c| (wt[(0, c)] - 1.0).abs()).fold(0.0, f64::max);
        if moved == 0.0 {
            return Err("weights never moved".into());
        }
        for c in 0..3 {
            gap = gap.max((wt[(0, c)] - wt[(1, c)]).abs());
        }
    }
    if gap > 1e-10 {
        return Err(format!("identical teachers drifted apart by {gap:e}"));
    }
    Ok((row_err, gap))
}
