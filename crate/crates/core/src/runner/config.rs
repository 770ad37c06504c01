use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bilevel::BilevelParams;
use crate::cleanselect::CleanParams;
use crate::error::{Error, Result};
use crate::graphdata::{GraphFiles, SbmParams, SplitFractions};
use crate::labelimprove::ImproveParams;
use crate::noise::{NoiseConfig, NoiseKind, NoiseSpec};
use crate::student::SupervisedParams;
use crate::teachers::{ClassifierParams, EncoderKind, EncoderParams};

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetConfig {
    Sbm(SbmParams),
    Files(GraphFiles),
}

/// Which pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Full method.
    #[default]
    Bonnc,
    /// Supervised GCN on the noisy labels.
    GcnBaseline,
    /// Teacher weights frozen at their initial value.
    MeanFusion,
    /// No student: the fused teacher prediction is the classifier, and it
    /// also drives label improvement.
    CoattentionOffAblation,
    NoLabelImproveAblation,
    /// Only the first configured encoder.
    SingleTeacher,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bonnc => "bonnc",
            Mode::GcnBaseline => "gcn-baseline",
            Mode::MeanFusion => "mean-fusion",
            Mode::CoattentionOffAblation => "coattention-off-ablation",
            Mode::NoLabelImproveAblation => "no-label-improve-ablation",
            Mode::SingleTeacher => "single-teacher",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub encoders: Vec<EncoderKind>,
    pub encoder: EncoderParams,
    pub classifier: ClassifierParams,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            encoders: vec![
                EncoderKind::Propagation,
                EncoderKind::Contrastive,
                EncoderKind::Reconstruction,
            ],
            encoder: EncoderParams::default(),
            classifier: ClassifierParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentConfig {
    pub hidden: usize,
    /// Used by supervised training only; distillation windows run without
    /// dropout.
    pub dropout: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            dropout: 0.5,
        }
    }
}

fn default_rounds() -> usize {
    3
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// One experiment, as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub splits: SplitFractions,
    #[serde(default)]
    pub teachers: TeacherConfig,
    #[serde(default)]
    pub student: StudentConfig,
    #[serde(default)]
    pub bilevel: BilevelParams,
    #[serde(default)]
    pub cleanselect: CleanParams,
    #[serde(default)]
    pub labelimprove: ImproveParams,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub baseline: SupervisedParams,
}

impl RunConfig {
    /// A config on the given SBM with every other field at its default.
    pub fn for_sbm(sbm: SbmParams) -> Self {
        Self {
            dataset: DatasetConfig::Sbm(sbm),
            noise: NoiseConfig::default(),
            splits: SplitFractions::default(),
            teachers: TeacherConfig::default(),
            student: StudentConfig::default(),
            bilevel: BilevelParams::default(),
            cleanselect: CleanParams::default(),
            labelimprove: ImproveParams::default(),
            rounds: default_rounds(),
            seeds: default_seeds(),
            mode: Mode::default(),
            baseline: SupervisedParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. Relative dataset paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let (DatasetConfig::Files(files), Some(dir)) = (&mut cfg.dataset, path.parent()) {
            for p in [&mut files.edges, &mut files.features, &mut files.labels] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Range checks on every numeric field.
    pub fn validate(&self) -> Result<()> {
        if let DatasetConfig::Sbm(p) = &self.dataset {
            p.validate()?;
            NoiseSpec::from_config(&self.noise, p.c)?;
        }
        if !(0.0..=1.0).contains(&self.noise.rate) {
            return Err(Error::Validation(format!(
                "noise rate {} outside [0, 1]",
                self.noise.rate
            )));
        }
        if self.noise.kind == NoiseKind::Uniform && self.noise.pair_map.is_some() {
            return Err(Error::Validation(
                "pair_map only applies to pair noise".into(),
            ));
        }
        self.splits.validate()?;
        if self.teachers.encoders.is_empty() {
            return Err(Error::Validation("at least one encoder is required".into()));
        }
        if self.teachers.encoder.dim == 0 {
            return Err(Error::Validation("encoder dim must be >= 1".into()));
        }
        for (name, v) in [
            ("encoder lr", self.teachers.encoder.lr),
            ("classifier lr", self.teachers.classifier.lr),
            ("baseline lr", self.baseline.lr),
            ("baseline weight_decay", self.baseline.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} {v} must be >= 0")));
            }
        }
        if self.student.hidden == 0 {
            return Err(Error::Validation("student hidden size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.student.dropout) {
            return Err(Error::Validation(format!(
                "dropout {} outside [0, 1)",
                self.student.dropout
            )));
        }
        self.bilevel.validate()?;
        self.cleanselect.validate()?;
        self.labelimprove.validate()?;
        if self.rounds == 0 {
            return Err(Error::Validation("rounds must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Validation("seeds must be distinct".into()));
        }
        Ok(())
    }
}

/// Parameters a sweep can vary.
pub const SWEEP_PARAMS: &[&str] = &[
    "r",
    "rho",
    "beta1",
    "beta2",
    "alpha",
    "t",
    "windows",
    "eta_mu",
    "eta_lr_upper",
    "w_init",
    "rounds",
    "noise_rate",
];

fn as_count(param: &str, v: f64) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Validation(format!(
            "{param} needs a non-negative integer, got {v}"
        )));
    }
    Ok(v as usize)
}

impl RunConfig {
    /// Copy of the config with one named parameter replaced.
    pub fn with_param(&self, param: &str, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match param {
            "r" => cfg.labelimprove.r = value,
            "rho" => cfg.labelimprove.rho = as_count(param, value)?,
            "beta1" => cfg.cleanselect.beta1 = as_count(param, value)?,
            "beta2" => cfg.cleanselect.beta2 = as_count(param, value)?,
            "alpha" => cfg.cleanselect.alpha_percent = value,
            "t" => cfg.bilevel.window_length = as_count(param, value)?,
            "windows" => cfg.bilevel.windows = as_count(param, value)?,
            "eta_mu" => cfg.bilevel.eta_mu = value,
            "eta_lr_upper" => cfg.bilevel.eta_lr_upper = value,
            "w_init" => cfg.bilevel.w_init = value,
            "rounds" => cfg.rounds = as_count(param, value)?,
            "noise_rate" => cfg.noise.rate = value,
            other => {
                return Err(Error::Validation(format!(
                    "unknown sweep parameter `{other}` (expected one of {})",
                    SWEEP_PARAMS.join(", ")
                )))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
