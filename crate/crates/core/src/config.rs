//! Flat `key = value` run configuration with dotted namespaces.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel_sim::{ActivityClass, PopulationConfig};
use crate::dataset_io::SplitSpec;
use crate::infer_eval::{Ablation, CompositeParams, ExperimentConfig};
use crate::preprocess::EmbedParams;
use crate::train::{Baseline, LossWeights, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub population: PopulationConfig,
    pub embed: EmbedParams,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub composite: CompositeParams,
    pub ablation: Ablation,
    pub baseline_kind: BaselineKind,
    /// Label smoothing of the class-sensitive baseline.
    pub smoothing: f64,
    /// Logit scale of the cosine-classifier baseline.
    pub cosine_scale: f64,
    pub encoder_width: usize,
    /// Seeds looped over by the `experiment` command.
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            population: PopulationConfig::default(),
            embed: EmbedParams::default(),
            split: SplitSpec::new(0),
            train: TrainConfig::default(),
            weights: LossWeights::default(),
            composite: CompositeParams::default(),
            ablation: Ablation::default(),
            baseline_kind: BaselineKind::Naive,
            smoothing: 0.1,
            cosine_scale: 16.0,
            encoder_width: 128,
            seeds: vec![1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Naive,
    ClassSensitive,
    CosineClassifier,
}

impl std::str::FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Self::Naive),
            "class_sensitive" => Ok(Self::ClassSensitive),
            "cosine_classifier" => Ok(Self::CosineClassifier),
            _ => Err("expected naive, class_sensitive or cosine_classifier".into()),
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Naive => "naive",
            Self::ClassSensitive => "class_sensitive",
            Self::CosineClassifier => "cosine_classifier",
        })
    }
}

fn parse_activities(key: &str, value: &str) -> Result<Vec<ActivityClass>, ConfigError> {
    let mut out: Vec<ActivityClass> = parse_list(key, value)?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            reason: "expected true or false".into(),
        }),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "seed",
    "population.n_subjects",
    "population.n_environments",
    "population.reps_per_activity",
    "population.activities",
    "population.neighbors",
    "population.reflect_gain",
    "population.noise_std",
    "population.dynamic_path_std",
    "radio.carrier_freq_hz",
    "radio.subcarrier_bw_hz",
    "radio.n_antennas",
    "radio.n_subcarriers",
    "radio.antenna_spacing_m",
    "radio.pathloss_exponent",
    "radio.rssi_offset_db",
    "traffic.mean_interval_s",
    "traffic.dispersion",
    "traffic.max_interval_s",
    "traffic.duration_s",
    "embed.dim",
    "embed.ref_interval_s",
    "embed.activity_duration_s",
    "split.target_subject",
    "split.n_source",
    "split.n_ft_per_class",
    "split.n_anchor_per_class",
    "split.absent",
    "model.encoder",
    "train.batch_size",
    "train.pt_lr",
    "train.pt_epochs",
    "train.ft_lr_sc",
    "train.ft_lr_fp",
    "train.ft_epochs",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.val_fraction",
    "loss.l11",
    "loss.l12",
    "loss.l21",
    "loss.l22",
    "loss.l23",
    "infer.lambda3",
    "ablation.no_margin",
    "ablation.no_anchor",
    "ablation.no_composite",
    "baseline.kind",
    "baseline.smoothing",
    "baseline.cosine_scale",
    "experiment.seeds",
];

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let p = &mut self.population;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "population.n_subjects" => p.n_subjects = parse(key, v)?,
            "population.n_environments" => p.n_environments = parse(key, v)?,
            "population.reps_per_activity" => p.reps_per_activity = parse(key, v)?,
            "population.activities" => p.activities = parse_activities(key, v)?,
            "population.neighbors" => p.neighbors = parse(key, v)?,
            "population.reflect_gain" => p.reflect_gain = parse(key, v)?,
            "population.noise_std" => p.noise_std = parse(key, v)?,
            "population.dynamic_path_std" => p.dynamic_path_std = parse(key, v)?,
            "radio.carrier_freq_hz" => p.radio.carrier_freq_hz = parse(key, v)?,
            "radio.subcarrier_bw_hz" => p.radio.subcarrier_bw_hz = parse(key, v)?,
            "radio.n_antennas" => p.radio.n_antennas = parse(key, v)?,
            "radio.n_subcarriers" => p.radio.n_subcarriers = parse(key, v)?,
            "radio.antenna_spacing_m" => p.radio.antenna_spacing_m = parse(key, v)?,
            "radio.pathloss_exponent" => p.radio.pathloss_exponent = parse(key, v)?,
            "radio.rssi_offset_db" => p.radio.rssi_offset_db = parse(key, v)?,
            "traffic.mean_interval_s" => p.traffic.mean_interval_s = parse(key, v)?,
            "traffic.dispersion" => p.traffic.dispersion = parse(key, v)?,
            "traffic.max_interval_s" => p.traffic.max_interval_s = parse(key, v)?,
            "traffic.duration_s" => p.traffic.duration_s = parse(key, v)?,
            "embed.dim" => self.embed.dim = parse(key, v)?,
            "embed.ref_interval_s" => self.embed.ref_interval_s = parse(key, v)?,
            "embed.activity_duration_s" => self.embed.activity_duration_s = parse(key, v)?,
            "split.target_subject" => self.split.target_subject = parse(key, v)?,
            "split.n_source" => self.split.n_source = parse(key, v)?,
            "split.n_ft_per_class" => self.split.n_ft_per_class = parse(key, v)?,
            "split.n_anchor_per_class" => self.split.n_anchor_per_class = parse(key, v)?,
            "split.absent" => self.split.absent_classes = parse_activities(key, v)?,
            "model.encoder" => self.encoder_width = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.pt_lr" => self.train.pt_lr = parse(key, v)?,
            "train.pt_epochs" => self.train.pt_epochs = parse(key, v)?,
            "train.ft_lr_sc" => self.train.ft_lr_sc = parse(key, v)?,
            "train.ft_lr_fp" => self.train.ft_lr_fp = parse(key, v)?,
            "train.ft_epochs" => self.train.ft_epochs = parse(key, v)?,
            "train.beta1" => self.train.beta1 = parse(key, v)?,
            "train.beta2" => self.train.beta2 = parse(key, v)?,
            "train.eps" => self.train.eps = parse(key, v)?,
            "train.val_fraction" => self.train.val_fraction = parse(key, v)?,
            "loss.l11" => self.weights.l11 = parse(key, v)?,
            "loss.l12" => self.weights.l12 = parse(key, v)?,
            "loss.l21" => self.weights.l21 = parse(key, v)?,
            "loss.l22" => self.weights.l22 = parse(key, v)?,
            "loss.l23" => self.weights.l23 = parse(key, v)?,
            "infer.lambda3" => self.composite.lambda3 = parse(key, v)?,
            "ablation.no_margin" => self.ablation.no_margin = parse_bool(key, v)?,
            "ablation.no_anchor" => self.ablation.no_anchor = parse_bool(key, v)?,
            "ablation.no_composite" => self.ablation.no_composite = parse_bool(key, v)?,
            "baseline.kind" => self.baseline_kind = parse(key, v)?,
            "baseline.smoothing" => self.smoothing = parse(key, v)?,
            "baseline.cosine_scale" => self.cosine_scale = parse(key, v)?,
            "experiment.seeds" => self.seeds = parse_list(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }
}

impl RunConfig {
    /// Canonical rendering of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.population;
        let codes = |v: &[ActivityClass]| v.iter().map(|c| c.code()).collect::<Vec<_>>().join(",");
        Some(match key {
            "seed" => self.seed.to_string(),
            "population.n_subjects" => p.n_subjects.to_string(),
            "population.n_environments" => p.n_environments.to_string(),
            "population.reps_per_activity" => p.reps_per_activity.to_string(),
            "population.activities" => codes(&p.activities),
            "population.neighbors" => p.neighbors.to_string(),
            "population.reflect_gain" => format!("{:?}", p.reflect_gain),
            "population.noise_std" => format!("{:?}", p.noise_std),
            "population.dynamic_path_std" => format!("{:?}", p.dynamic_path_std),
            "radio.carrier_freq_hz" => format!("{:?}", p.radio.carrier_freq_hz),
            "radio.subcarrier_bw_hz" => format!("{:?}", p.radio.subcarrier_bw_hz),
            "radio.n_antennas" => p.radio.n_antennas.to_string(),
            "radio.n_subcarriers" => p.radio.n_subcarriers.to_string(),
            "radio.antenna_spacing_m" => format!("{:?}", p.radio.antenna_spacing_m),
            "radio.pathloss_exponent" => format!("{:?}", p.radio.pathloss_exponent),
            "radio.rssi_offset_db" => format!("{:?}", p.radio.rssi_offset_db),
            "traffic.mean_interval_s" => format!("{:?}", p.traffic.mean_interval_s),
            "traffic.dispersion" => format!("{:?}", p.traffic.dispersion),
            "traffic.max_interval_s" => format!("{:?}", p.traffic.max_interval_s),
            "traffic.duration_s" => format!("{:?}", p.traffic.duration_s),
            "embed.dim" => self.embed.dim.to_string(),
            "embed.ref_interval_s" => format!("{:?}", self.embed.ref_interval_s),
            "embed.activity_duration_s" => format!("{:?}", self.embed.activity_duration_s),
            "split.target_subject" => self.split.target_subject.to_string(),
            "split.n_source" => self.split.n_source.to_string(),
            "split.n_ft_per_class" => self.split.n_ft_per_class.to_string(),
            "split.n_anchor_per_class" => self.split.n_anchor_per_class.to_string(),
            "split.absent" => codes(&self.split.absent_classes),
            "model.encoder" => self.encoder_width.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.pt_lr" => format!("{:?}", self.train.pt_lr),
            "train.pt_epochs" => self.train.pt_epochs.to_string(),
            "train.ft_lr_sc" => format!("{:?}", self.train.ft_lr_sc),
            "train.ft_lr_fp" => format!("{:?}", self.train.ft_lr_fp),
            "train.ft_epochs" => self.train.ft_epochs.to_string(),
            "train.beta1" => format!("{:?}", self.train.beta1),
            "train.beta2" => format!("{:?}", self.train.beta2),
            "train.eps" => format!("{:?}", self.train.eps),
            "train.val_fraction" => format!("{:?}", self.train.val_fraction),
            "loss.l11" => format!("{:?}", self.weights.l11),
            "loss.l12" => format!("{:?}", self.weights.l12),
            "loss.l21" => format!("{:?}", self.weights.l21),
            "loss.l22" => format!("{:?}", self.weights.l22),
            "loss.l23" => format!("{:?}", self.weights.l23),
            "infer.lambda3" => format!("{:?}", self.composite.lambda3),
            "ablation.no_margin" => self.ablation.no_margin.to_string(),
            "ablation.no_anchor" => self.ablation.no_anchor.to_string(),
            "ablation.no_composite" => self.ablation.no_composite.to_string(),
            "baseline.kind" => self.baseline_kind.to_string(),
            "baseline.smoothing" => format!("{:?}", self.smoothing),
            "baseline.cosine_scale" => format!("{:?}", self.cosine_scale),
            "experiment.seeds" => join(&self.seeds),
            _ => return None,
        })
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            reason: format!("override {assignment:?} is not key=value"),
        })?;
        self.set(k.trim(), v)
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    /// SHA-256 of the canonical rendering, first 16 hex digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Population settings with the run seed applied.
    pub fn population_for_seed(&self) -> PopulationConfig {
        PopulationConfig {
            seed: self.seed,
            ..self.population.clone()
        }
    }

    pub fn baseline(&self) -> Baseline {
        match self.baseline_kind {
            BaselineKind::Naive => Baseline::Naive,
            BaselineKind::ClassSensitive => Baseline::ClassSensitive {
                smoothing: self.smoothing,
            },
            BaselineKind::CosineClassifier => Baseline::CosineClassifier {
                scale: self.cosine_scale,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.population.validate().map_err(|e| bad(&e))?;
        self.embed.validate().map_err(|e| bad(&e))?;
        self.train.validate().map_err(|e| bad(&e))?;
        self.weights.validate().map_err(|e| bad(&e))?;
        if !self.composite.lambda3.is_finite() || self.composite.lambda3 < 0.0 {
            return Err(ConfigError::Invalid("infer.lambda3 must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return Err(ConfigError::Invalid("baseline.smoothing must lie in [0, 1)".into()));
        }
        if !(self.cosine_scale > 0.0) {
            return Err(ConfigError::Invalid("baseline.cosine_scale must be positive".into()));
        }
        if self.encoder_width == 0 {
            return Err(ConfigError::Invalid("model.encoder must be positive".into()));
        }
        if self.split.target_subject as usize >= self.population.n_subjects {
            return Err(ConfigError::Invalid(format!(
                "split.target_subject {} outside the {} simulated subjects",
                self.split.target_subject, self.population.n_subjects
            )));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("experiment.seeds is empty".into()));
        }
        Ok(())
    }

    /// Experiment settings for one seed.
    pub fn experiment(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            split: self.split.clone(),
            embed: self.embed.clone(),
            train: self.train.clone(),
            weights: self.weights.clone(),
            composite: self.composite,
            ablation: self.ablation,
            baseline: self.baseline(),
            encoder_width: self.encoder_width,
            seed,
            config_hash: self.hash(),
        }
    }
}
