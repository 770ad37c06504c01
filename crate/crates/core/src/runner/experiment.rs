use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, Mode, RunConfig};
use crate::bilevel::{
    fuse_soft_labels, run_distillation, DistillOptions, LowerRows, TeacherWeightMatrix,
    WindowRecord,
};
use crate::cleanselect::{select_clean, CleanNodeSet};
use crate::error::{Error, Result};
use crate::graphdata::{
    generate_sbm, load_graph, make_splits, Graph, GroundTruth, LabelState, SplitMasks,
};
use crate::labelimprove::{improve_labels, RoundAudit};
use crate::linalg::DenseMatrix;
use crate::noise::{corrupt, NoiseSpec};
use crate::rng::derive_seed;
use crate::student::{init_params, predict, predict_proba, train_supervised, StudentParams};
use crate::teachers::{
    fit_encoders, make_encoder, train_classifiers, TeacherEncoder, TeacherEnsemble,
};

/// Everything one seed trains and evaluates on.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub graph: Graph,
    /// Training labels after corruption; every other node is unlabelled.
    pub noisy: LabelState,
    pub truth: GroundTruth,
    pub splits: SplitMasks,
    /// Clean `(node, label)` pairs of the validation split.
    pub validation: Vec<(usize, usize)>,
}

/// Builds the graph, splits it, and corrupts the training labels.
pub fn prepare_data(cfg: &RunConfig, seed: u64) -> Result<PreparedData> {
    let (graph, full) = match &cfg.dataset {
        DatasetConfig::Sbm(p) => generate_sbm(p, derive_seed(seed, "data"))?,
        DatasetConfig::Files(f) => load_graph(f)?,
    };
    let splits = make_splits(&full, cfg.splits, derive_seed(seed, "splits"))?;
    let truth = GroundTruth::capture(&full);
    let mut train = LabelState::unlabelled(full.len(), full.classes());
    for &i in &splits.train {
        if let Some(y) = full.label(i) {
            train.set_original(i, y)?;
        }
    }
    let spec = NoiseSpec::from_config(&cfg.noise, full.classes())?;
    let (noisy, _) = corrupt(&train, &splits.train, &spec, derive_seed(seed, "noise"))?;
    let validation = splits
        .validation
        .iter()
        .filter_map(|&i| truth.label(i).map(|y| (i, y)))
        .collect();
    Ok(PreparedData {
        graph,
        noisy,
        truth,
        splits,
        validation,
    })
}

/// Label quality after one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub clean_size: usize,
    pub clean_correct: usize,
    pub removed: usize,
    pub removed_corrupted: usize,
    pub added: usize,
    pub added_correct: usize,
    /// Supervising labels after the round's label improvement.
    pub supervising: usize,
    pub supervising_correct: usize,
    pub best_val_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditAction {
    Removed,
    Pseudo,
}

impl AuditAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditAction::Removed => "removed",
            AuditAction::Pseudo => "pseudo",
        }
    }
}

/// One label change, checked against the hidden ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub round: usize,
    pub action: AuditAction,
    pub node: usize,
    pub label: usize,
    pub source: String,
    pub label_correct: Option<bool>,
}

/// Result of one seed. `error` is set when the seed aborted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub error: Option<String>,
    pub rounds: Vec<RoundMetrics>,
    pub history: Vec<WindowRecord>,
    pub audit: Vec<AuditRow>,
    pub wall_time: f64,
}

impl SeedResult {
    /// Fraction of labels removed by the first round's filter that were
    /// truly corrupted. That round sees the labels at the injected noise
    /// rate, which is what random removal would hit. `None` when nothing
    /// was filtered.
    pub fn filter_precision(&self) -> Option<f64> {
        let first = self.rounds.first()?;
        (first.removed > 0).then(|| first.removed_corrupted as f64 / first.removed as f64)
    }

    /// Same ratio pooled over every round.
    pub fn filter_precision_all_rounds(&self) -> Option<f64> {
        let removed: usize = self.rounds.iter().map(|r| r.removed).sum();
        let corrupted: usize = self.rounds.iter().map(|r| r.removed_corrupted).sum();
        (removed > 0).then(|| corrupted as f64 / removed as f64)
    }
}

/// Aggregate over the configured seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub seeds: Vec<SeedResult>,
    /// Mean and population standard deviation of test accuracy over the
    /// seeds that completed.
    pub mean: f64,
    pub std: f64,
    pub wall_time: f64,
}

impl RunReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds.iter().filter_map(|s| s.test_acc).collect()
    }

    pub fn aborted(&self) -> usize {
        self.seeds.iter().filter(|s| s.error.is_some()).count()
    }

    /// Seed-averaged filtering precision over seeds that filtered anything.
    pub fn mean_filter_precision(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|s| s.filter_precision())
            .collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fit_teachers(cfg: &RunConfig, graph: &Graph, seed: u64) -> Result<Vec<DenseMatrix>> {
    let kinds = if cfg.mode == Mode::SingleTeacher {
        &cfg.teachers.encoders[..1]
    } else {
        &cfg.teachers.encoders[..]
    };
    let mut encoders: Vec<Box<dyn TeacherEncoder>> = kinds
        .iter()
        .map(|&k| make_encoder(k, &cfg.teachers.encoder))
        .collect();
    fit_encoders(&mut encoders, graph, derive_seed(seed, "encoders"))
}

#[derive(Default)]
struct Tracker {
    best_val: Option<f64>,
    best_preds: Vec<usize>,
    rounds: Vec<RoundMetrics>,
    history: Vec<WindowRecord>,
    audit: Vec<AuditRow>,
}

impl Tracker {
    fn offer(&mut self, val_acc: f64, preds: impl FnOnce() -> Result<Vec<usize>>) -> Result<()> {
        if self.best_val.is_none_or(|b| val_acc > b) {
            self.best_val = Some(val_acc);
            self.best_preds = preds()?;
        }
        Ok(())
    }

    fn record_round(
        &mut self,
        round: usize,
        clean: &CleanNodeSet,
        audit: Option<&RoundAudit>,
        labels: &LabelState,
        truth: &GroundTruth,
        best_val_acc: f64,
    ) {
        let correct = |i: usize, y: usize| truth.label(i).map(|t| t == y);
        let clean_correct = clean
            .pairs()
            .iter()
            .filter(|&&(i, y)| correct(i, y) == Some(true))
            .count();
        let supervising = labels.supervising();
        let supervising_correct = supervising
            .iter()
            .filter(|&&(i, y)| correct(i, y) == Some(true))
            .count();
        let mut m = RoundMetrics {
            round,
            clean_size: clean.len(),
            clean_correct,
            removed: 0,
            removed_corrupted: 0,
            added: 0,
            added_correct: 0,
            supervising: supervising.len(),
            supervising_correct,
            best_val_acc,
        };
        if let Some(a) = audit {
            for &(node, label) in &a.removed {
                let ok = correct(node, label);
                m.removed += 1;
                if ok == Some(false) {
                    m.removed_corrupted += 1;
                }
                self.audit.push(AuditRow {
                    round,
                    action: AuditAction::Removed,
                    node,
                    label,
                    source: "filter".into(),
                    label_correct: ok,
                });
            }
            for p in &a.added {
                let ok = correct(p.node, p.label);
                m.added += 1;
                if ok == Some(true) {
                    m.added_correct += 1;
                }
                self.audit.push(AuditRow {
                    round,
                    action: AuditAction::Pseudo,
                    node: p.node,
                    label: p.label,
                    source: p.source.as_str().into(),
                    label_correct: ok,
                });
            }
        }
        self.rounds.push(m);
    }
}

fn label_improvement_on(mode: Mode) -> bool {
    mode != Mode::NoLabelImproveAblation
}

fn run_distilled(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    tracker: &mut Tracker,
) -> Result<()> {
    let graph = &data.graph;
    let embeddings = fit_teachers(cfg, graph, seed)?;
    let k = embeddings.len();
    let c = data.noisy.classes();
    let fresh_student = || {
        let mut s = init_params(
            graph.feature_dim(),
            cfg.student.hidden,
            c,
            derive_seed(seed, "student"),
        );
        s.dropout = 0.0;
        s
    };
    let fresh_weights =
        || TeacherWeightMatrix::filled(k, c, cfg.bilevel.w_init, cfg.bilevel.eta_lr_upper);
    let mut student: StudentParams = fresh_student();
    let mut weights = fresh_weights();
    let mut labels = data.noisy.clone();

    for round in 0..cfg.rounds {
        if round > 0 && cfg.bilevel.cold_start {
            student = fresh_student();
            weights = fresh_weights();
        }
        let classifiers = train_classifiers(&embeddings, &labels, &cfg.teachers.classifier)?;
        let ens = TeacherEnsemble::from_parts(embeddings.clone(), classifiers)?;
        let clean = select_clean(&ens, &labels, &cfg.cleanselect);
        let options = DistillOptions {
            freeze_weights: cfg.mode == Mode::MeanFusion,
            round,
            track_upper_decrease: false,
        };
        let rows = match cfg.bilevel.lower_rows {
            LowerRows::Supervising => labels.supervising_nodes(),
            LowerRows::All => (0..graph.n()).collect(),
        };
        let out = run_distillation(
            &ens,
            graph,
            &rows,
            &clean,
            &cfg.bilevel,
            student,
            weights,
            &data.validation,
            &options,
        )?;
        let mut round_best = f64::NAN;
        if let Some((best, acc)) = &out.best {
            round_best = *acc;
            tracker.offer(*acc, || predict(best, graph))?;
        }
        tracker.history.extend(out.history);
        student = out.student;
        weights = out.weights;
        let audit = if label_improvement_on(cfg.mode) {
            let probs = predict_proba(&student, graph)?;
            let (next, audit) = improve_labels(&probs, &ens, &labels, &cfg.labelimprove, round)?;
            labels = next;
            Some(audit)
        } else {
            None
        };
        tracker.record_round(
            round,
            &clean,
            audit.as_ref(),
            &labels,
            &data.truth,
            round_best,
        );
    }
    Ok(())
}

fn run_teacher_only(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    tracker: &mut Tracker,
) -> Result<()> {
    let graph = &data.graph;
    let embeddings = fit_teachers(cfg, graph, seed)?;
    let c = data.noisy.classes();
    let weights = TeacherWeightMatrix::filled(embeddings.len(), c, cfg.bilevel.w_init, 0.0);
    let mut labels = data.noisy.clone();
    for round in 0..cfg.rounds {
        let classifiers = train_classifiers(&embeddings, &labels, &cfg.teachers.classifier)?;
        let ens = TeacherEnsemble::from_parts(embeddings.clone(), classifiers)?;
        let fused = fuse_soft_labels(&ens, &weights)?;
        let probs = fused.values();
        let preds: Vec<usize> = (0..probs.rows()).map(|i| probs.row_argmax(i)).collect();
        let val_acc = crate::student::accuracy(&preds, &data.validation);
        tracker.offer(val_acc, || Ok(preds.clone()))?;
        let (next, audit) = improve_labels(probs, &ens, &labels, &cfg.labelimprove, round)?;
        labels = next;
        tracker.record_round(
            round,
            &CleanNodeSet::empty(),
            Some(&audit),
            &labels,
            &data.truth,
            val_acc,
        );
    }
    Ok(())
}

fn run_baseline(
    cfg: &RunConfig,
    data: &PreparedData,
    seed: u64,
    tracker: &mut Tracker,
) -> Result<()> {
    let graph = &data.graph;
    let mut params = init_params(
        graph.feature_dim(),
        cfg.student.hidden,
        data.noisy.classes(),
        derive_seed(seed, "student"),
    );
    params.dropout = cfg.student.dropout;
    let (best, epochs) = train_supervised(
        params,
        graph,
        &data.noisy.supervising(),
        &data.validation,
        &cfg.baseline,
        derive_seed(seed, "baseline"),
    )?;
    let best_val = epochs.iter().map(|e| e.val_acc).fold(f64::NAN, f64::max);
    tracker.offer(best_val, || predict(&best, graph))?;
    Ok(())
}

fn seed_pipeline(cfg: &RunConfig, seed: u64, tracker: &mut Tracker) -> Result<f64> {
    let data = prepare_data(cfg, seed)?;
    match cfg.mode {
        Mode::GcnBaseline => run_baseline(cfg, &data, seed, tracker)?,
        Mode::CoattentionOffAblation => run_teacher_only(cfg, &data, seed, tracker)?,
        Mode::Bonnc | Mode::MeanFusion | Mode::NoLabelImproveAblation | Mode::SingleTeacher => {
            run_distilled(cfg, &data, seed, tracker)?
        }
    }
    if tracker.best_val.is_none() {
        return Err(Error::Numeric {
            stage: "model selection",
        });
    }
    Ok(data.truth.accuracy(&tracker.best_preds, &data.splits.test))
}

/// Runs one seed end to end. Errors are captured in the result.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> SeedResult {
    let start = Instant::now();
    let mut tracker = Tracker::default();
    let outcome = seed_pipeline(cfg, seed, &mut tracker);
    if let Err(e) = &outcome {
        log::error!("seed {seed} aborted: {e}");
    }
    SeedResult {
        seed,
        test_acc: outcome.as_ref().ok().copied(),
        val_acc: outcome.as_ref().ok().and(tracker.best_val),
        error: outcome.err().map(|e| e.to_string()),
        rounds: tracker.rounds,
        history: tracker.history,
        audit: tracker.audit,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Runs every configured seed (concurrently) and aggregates.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds: Vec<SeedResult> = cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    let acc: Vec<f64> = seeds.iter().filter_map(|s| s.test_acc).collect();
    let (mean, std) = mean_std(&acc);
    Ok(RunReport {
        mode: cfg.mode,
        seeds,
        mean,
        std,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub report: RunReport,
}

/// One experiment per grid value, sharing the configured seeds.
pub fn run_sweep(cfg: &RunConfig, param: &str, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Validation("empty sweep grid".into()));
    }
    let configs = grid
        .iter()
        .map(|&v| cfg.with_param(param, v))
        .collect::<Result<Vec<_>>>()?;
    configs
        .iter()
        .zip(grid)
        .map(|(c, &value)| {
            log::info!("sweep {param} = {value}");
            Ok(SweepRow {
                param: param.to_string(),
                value,
                report: run_experiment(c)?,
            })
        })
        .collect()
}
