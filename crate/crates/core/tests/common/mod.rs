#![allow(dead_code)]

pub mod checks;
pub mod oracles;

use nnc_core::bilevel::TeacherWeightMatrix;
use nnc_core::cleanselect::{CleanNodeSet, CleanSource};
use nnc_core::graphdata::{generate_sbm, Graph, SbmParams};
use nnc_core::linalg::{row_softmax, DenseMatrix};
use nnc_core::rng;
use nnc_core::student::{init_params, StudentParams};
use nnc_core::teachers::TeacherEnsemble;
use rand::Rng as _;

pub fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, r: &mut rng::Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * r.random::<f64>() - 1.0))
}

pub fn random_probs(n: usize, c: usize, sharpness: f64, r: &mut rng::Rng) -> DenseMatrix {
    row_softmax(&random_matrix(n, c, sharpness, r))
}

/// The small instance used by the hypergradient checks.
pub struct Instance {
    pub graph: Graph,
    pub ens: TeacherEnsemble,
    pub student: StudentParams,
    pub weights: TeacherWeightMatrix,
    pub train: Vec<usize>,
    pub clean: CleanNodeSet,
}

pub fn instance(seed: u64, n: usize, d: usize, h: usize, c: usize, k: usize) -> Instance {
    let sbm = SbmParams {
        n,
        c,
        p_intra: 0.5,
        p_inter: 0.1,
        d,
        feature_noise: 0.5,
    };
    let (graph, labels) = generate_sbm(&sbm, seed).unwrap();
    let mut r = rng::stream(seed, "fixture");
    let probs = (0..k).map(|_| random_probs(n, c, 2.0, &mut r)).collect();
    let ens = TeacherEnsemble::from_probs(probs, None).unwrap();
    let student = init_params(d, h, c, seed);
    let mut weights = TeacherWeightMatrix::filled(k, c, 1.0, 0.5);
    weights.weights = weights
        .weights
        .add(&random_matrix(k, c, 0.3, &mut r))
        .unwrap();
    let train: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .filter(|i| i % 3 == 1)
        .map(|i| (i, labels.label(i).unwrap()))
        .collect();
    Instance {
        graph,
        ens,
        student,
        weights,
        train,
        clean: CleanNodeSet::from_pairs(&pairs, CleanSource::UnlabelledConsensus),
    }
}

/// The desk-scale SBM used by the end-to-end checks.
pub fn desk_sbm() -> SbmParams {
    SbmParams {
        n: 600,
        c: 3,
        p_intra: 0.05,
        p_inter: 0.005,
        d: 16,
        feature_noise: 1.0,
    }
}
