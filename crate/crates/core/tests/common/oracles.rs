//! Brute-force reference implementations of the selection rules, written
//! as rank counts rather than sorts.

use nnc_core::cleanselect::{
    consensus_candidates, embedding_score, select_clean, select_clean_labelled,
    select_clean_unlabelled, CleanParams,
};
use nnc_core::graphdata::LabelState;
use nnc_core::labelimprove::{
    filter_noisy, pseudo_select_student, pseudo_select_teacher, top_per_class,
};
use nnc_core::linalg::{row_softmax, DenseMatrix};
use nnc_core::rng;
use nnc_core::teachers::TeacherEnsemble;
use rand::Rng as _;

pub struct SelectionCase {
    pub ens: TeacherEnsemble,
    pub labels: LabelState,
    pub student: DenseMatrix,
    pub beta1: usize,
    pub beta2: usize,
    /// Whole percent.
    pub alpha: usize,
    /// Tenths.
    pub r_tenths: usize,
    pub rho: usize,
}

fn coarse_probs(n: usize, c: usize, r: &mut rng::Rng) -> DenseMatrix {
    // half-integer logits make exact ties common
    let logits = DenseMatrix::from_fn(n, c, |_, _| 0.5 * r.random_range(0..5) as f64);
    row_softmax(&logits)
}

pub fn selection_case(seed: u64) -> SelectionCase {
    let mut r = rng::stream(seed, "selection-case");
    let n = r.random_range(5..=30);
    let c = r.random_range(2..=4);
    let k = r.random_range(1..=3);
    let dim = r.random_range(1..=3);
    let probs: Vec<DenseMatrix> = (0..k).map(|_| coarse_probs(n, c, &mut r)).collect();
    let embs: Vec<DenseMatrix> = (0..k)
        .map(|_| DenseMatrix::from_fn(n, dim, |_, _| r.random_range(0..4) as f64))
        .collect();
    let ens = TeacherEnsemble::from_probs(probs, Some(embs)).unwrap();
    let mut labels = LabelState::unlabelled(n, c);
    for i in 0..n {
        match r.random_range(0..10) {
            0..=4 => labels.set_original(i, r.random_range(0..c)).unwrap(),
            5 => {
                labels.set_original(i, r.random_range(0..c)).unwrap();
                labels.set_filtered(i);
            }
            6 => labels.set_pseudo(i, r.random_range(0..c), 0).unwrap(),
            _ => {}
        }
    }
    SelectionCase {
        ens,
        labels,
        student: coarse_probs(n, c, &mut r),
        beta1: r.random_range(1..=4),
        beta2: r.random_range(1..=6),
        alpha: 10 * r.random_range(0..=10),
        r_tenths: r.random_range(0..=9),
        rho: r.random_range(1..=5),
    }
}

/// Lowest index attaining the row maximum.
pub fn first_max(row: &[f64]) -> usize {
    (0..row.len())
        .find(|&j| row.iter().all(|&v| v <= row[j]))
        .unwrap()
}

pub fn oracle_consensus(ens: &TeacherEnsemble, nodes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..ens.n() {
        if !nodes.contains(&i) {
            continue;
        }
        let votes: Vec<usize> = ens.probs().iter().map(|p| first_max(p.row(i))).collect();
        let agree = votes.iter().all(|&a| votes.iter().all(|&b| a == b));
        if agree {
            out.push((i, votes[0]));
        }
    }
    out
}

fn sum_smallest(mut values: Vec<f64>, m: usize) -> f64 {
    let mut total = 0.0;
    for _ in 0..m.min(values.len()) {
        let (at, _) = values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (j, &v)| if v < best.1 { (j, v) } else { best },
            );
        total += values.swap_remove(at);
    }
    total
}

pub fn oracle_scores(ens: &TeacherEnsemble, cands: &[(usize, usize)], beta1: usize) -> Vec<f64> {
    cands
        .iter()
        .map(|&(i, y)| {
            ens.embeddings()
                .iter()
                .map(|h| {
                    let dists = cands
                        .iter()
                        .filter(|&&(u, yu)| u != i && yu == y)
                        .map(|&(u, _)| {
                            let mut s = 0.0;
                            for (a, b) in h.row(i).iter().zip(h.row(u)) {
                                s += (a - b) * (a - b);
                            }
                            s.sqrt()
                        })
                        .collect();
                    sum_smallest(dists, beta1)
                })
                .sum()
        })
        .collect()
}

/// Members of each group whose rank under `better` is below `quota(group size)`.
fn rank_select(
    items: &[(usize, usize, f64)],
    quota: impl Fn(usize) -> usize,
    better: impl Fn(f64, usize, f64, usize) -> bool,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &(i, g, v) in items {
        let group: Vec<_> = items.iter().filter(|x| x.1 == g).collect();
        let ahead = group.iter().filter(|x| better(x.2, x.0, v, i)).count();
        if ahead < quota(group.len()) {
            out.push((i, g));
        }
    }
    out.sort_unstable();
    out
}

fn lower(a: f64, ia: usize, b: f64, ib: usize) -> bool {
    a < b || (a == b && ia < ib)
}

fn higher(a: f64, ia: usize, b: f64, ib: usize) -> bool {
    a > b || (a == b && ia < ib)
}

pub fn oracle_clean_unlabelled(
    cands: &[(usize, usize)],
    scores: &[f64],
    beta2: usize,
) -> Vec<(usize, usize)> {
    let items: Vec<_> = cands
        .iter()
        .zip(scores)
        .map(|(&(i, y), &s)| (i, y, s))
        .collect();
    rank_select(&items, |_| beta2, lower)
}

pub fn oracle_clean_labelled(
    ens: &TeacherEnsemble,
    labels: &LabelState,
    alpha: usize,
) -> Vec<(usize, usize)> {
    let items: Vec<_> = (0..labels.len())
        .filter(|&i| labels.status(i).supervises())
        .map(|i| {
            let y = labels.label(i).unwrap();
            let loss: f64 = ens.probs().iter().map(|p| -p[(i, y)].max(1e-12).ln()).sum();
            (i, y, loss)
        })
        .collect();
    rank_select(&items, |size| (alpha * size).div_ceil(100), lower)
}

pub fn oracle_filter(
    student: &DenseMatrix,
    labels: &LabelState,
    r_tenths: usize,
) -> Vec<(usize, usize)> {
    let items: Vec<_> = (0..labels.len())
        .filter(|&i| labels.status(i).supervises())
        .map(|i| {
            let y = labels.label(i).unwrap();
            (i, y, -student[(i, y)].max(1e-12).ln())
        })
        .collect();
    rank_select(
        &items,
        |size| (r_tenths * size).div_ceil(10).min(size.saturating_sub(1)),
        higher,
    )
}

pub fn oracle_top(scores: &DenseMatrix, nodes: &[usize], rho: usize) -> Vec<(usize, usize)> {
    let items: Vec<_> = nodes
        .iter()
        .map(|&i| {
            let y = first_max(scores.row(i));
            (i, y, scores[(i, y)])
        })
        .collect();
    rank_select(&items, |_| rho, higher)
}

fn mismatch<T: std::fmt::Debug + PartialEq>(what: &str, got: T, want: T) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{what}: got {got:?}, oracle {want:?}"))
    }
}

/// Compares every selection rule against its oracle on one random case.
pub fn check_selection(seed: u64) -> Result<(), String> {
    let case = selection_case(seed);
    let (ens, labels) = (&case.ens, &case.labels);
    let unsup = labels.unsupervised_nodes();

    let cands = consensus_candidates(ens, &unsup);
    mismatch("consensus", cands.clone(), oracle_consensus(ens, &unsup))?;

    let scores = embedding_score(ens, &cands, case.beta1);
    let want = oracle_scores(ens, &cands, case.beta1);
    for (a, b) in scores.iter().zip(&want) {
        if (a - b).abs() > 1e-12 * (1.0 + b.abs()) {
            return Err(format!("score: got {scores:?}, oracle {want:?}"));
        }
    }

    let unl: Vec<_> = select_clean_unlabelled(&cands, &scores, case.beta2)
        .iter()
        .map(|c| (c.node, c.label))
        .collect();
    mismatch(
        "clean unlabelled",
        unl.clone(),
        oracle_clean_unlabelled(&cands, &want, case.beta2),
    )?;

    let lab: Vec<_> =
        select_clean_labelled(ens, labels, &labels.supervising_nodes(), case.alpha as f64)
            .iter()
            .map(|c| (c.node, c.label))
            .collect();
    let lab_want = oracle_clean_labelled(ens, labels, case.alpha);
    mismatch("clean labelled", lab.clone(), lab_want.clone())?;

    let params = CleanParams {
        beta1: case.beta1,
        beta2: case.beta2,
        alpha_percent: case.alpha as f64,
    };
    let mut union: Vec<_> = unl.into_iter().chain(lab_want).collect();
    union.sort_unstable();
    union.dedup_by_key(|p| p.0);
    mismatch(
        "clean set",
        select_clean(ens, labels, &params).pairs(),
        union,
    )?;

    let r = case.r_tenths as f64 / 10.0;
    let (_, removed) = filter_noisy(&case.student, labels, &labels.supervising_nodes(), r)
        .map_err(|e| e.to_string())?;
    mismatch(
        "filter",
        removed,
        oracle_filter(&case.student, labels, case.r_tenths),
    )?;

    let pick = |v: Vec<nnc_core::labelimprove::Candidate>| -> Vec<(usize, usize)> {
        v.iter().map(|c| (c.node, c.label)).collect()
    };
    mismatch(
        "top per class",
        pick(top_per_class(&case.student, &unsup, case.rho)),
        oracle_top(&case.student, &unsup, case.rho),
    )?;
    mismatch(
        "student pseudo",
        pick(pseudo_select_student(&case.student, labels, case.rho)),
        oracle_top(&case.student, &unsup, case.rho),
    )?;
    mismatch(
        "teacher pseudo",
        pick(pseudo_select_teacher(ens, labels, case.rho)),
        oracle_top(&ens.summed(), &unsup, case.rho),
    )?;
    Ok(())
}
