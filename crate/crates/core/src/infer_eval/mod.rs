//! Composite inference, evaluation reports, the leave-one-subject-out
//! experiment and feature dumps.

mod experiment;

pub use experiment::{
    run_ablation_suite, run_experiment, Ablation, AblationOutcome, ExperimentConfig, ExperimentOutcome,
};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use crate::channel_sim::ActivityClass;
use crate::dataset_io::{DatasetError, SplitManifest};
use crate::model::{HarModel, ModelError};
use crate::numerics::Tensor;
use crate::preprocess::{ModelInput, PreprocessError};
use crate::train::{Anchors, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("anchors invalid for classes {0:?}")]
    InvalidAnchors(Vec<usize>),
    #[error("anchors were computed with model {anchors:016x}, not {model:016x}")]
    StaleAnchors { anchors: u64, model: u64 },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("test sample {0} is also used for fine-tuning or anchors")]
    Leakage(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeParams {
    pub lambda3: f64,
}

impl Default for CompositeParams {
    fn default() -> Self {
        Self { lambda3: 0.5 }
    }
}

/// One decision with the per-class scores it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
}

/// How class scores are formed from the network outputs.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// `softmax(logits) + lambda3 * cos(features, anchor center)`.
    Composite { anchors: &'a Anchors, params: CompositeParams },
    /// Plain softmax.
    Softmax,
    /// Scaled cosine against the classifier weight columns.
    Cosine { scale: f64 },
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Composite scores of one feature row and its logits.
pub fn composite_scores(features: &[f64], logits: &[f64], anchors: &Anchors, params: CompositeParams) -> Vec<f64> {
    softmax(logits)
        .into_iter()
        .enumerate()
        .map(|(i, p)| p + params.lambda3 * cosine(features, anchors.centers.row(i)))
        .collect()
}

fn check_anchors(model: &HarModel, anchors: &Anchors) -> Result<(), EvalError> {
    let missing = anchors.missing_classes();
    if !missing.is_empty() || anchors.counts.len() != model.dims.classes {
        return Err(EvalError::InvalidAnchors(missing));
    }
    let fp = model.fingerprint();
    if anchors.model_version != fp {
        return Err(EvalError::StaleAnchors {
            anchors: anchors.model_version,
            model: fp,
        });
    }
    Ok(())
}

fn predict_rows(model: &HarModel, out: &crate::model::ForwardOut, predictor: Predictor<'_>) -> Vec<Prediction> {
    let (f, c) = (out.features.cols(), out.logits.cols());
    let rows = out.logits.rows();
    let w_cols: Vec<Vec<f64>> = match predictor {
        Predictor::Cosine { .. } => {
            let w = &model.params[crate::model::CLS_W].value;
            (0..c).map(|k| (0..f).map(|j| w.data()[j * c + k]).collect()).collect()
        }
        _ => Vec::new(),
    };
    (0..rows)
        .map(|b| {
            let feat = &out.features.data()[b * f..(b + 1) * f];
            let logit = &out.logits.data()[b * c..(b + 1) * c];
            let scores = match predictor {
                Predictor::Composite { anchors, params } => composite_scores(feat, logit, anchors, params),
                Predictor::Softmax => softmax(logit),
                Predictor::Cosine { scale } => w_cols.iter().map(|w| scale * cosine(feat, w)).collect(),
            };
            Prediction {
                class: argmax(&scores),
                scores,
            }
        })
        .collect()
}

pub fn predict(
    model: &HarModel,
    inputs: &[&ModelInput],
    predictor: Predictor<'_>,
    chunk: usize,
) -> Result<Vec<Prediction>, EvalError> {
    if let Predictor::Composite { anchors, params } = predictor {
        check_anchors(model, anchors)?;
        if !(params.lambda3 >= 0.0) {
            return Err(EvalError::Invalid("lambda3 must be non-negative".into()));
        }
    }
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let out = model.forward_all(inputs, chunk)?;
    Ok(predict_rows(model, &out, predictor))
}

/// Composite decision `argmax_i softmax_i + lambda3 * cos(features, center_i)`
/// with anchors computed by this very model.
pub fn composite_predict(
    model: &HarModel,
    anchors: &Anchors,
    inputs: &[&ModelInput],
    params: CompositeParams,
) -> Result<Vec<Prediction>, EvalError> {
    predict(model, inputs, Predictor::Composite { anchors, params }, 64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub n_samples: usize,
    pub overall: f64,
    /// `None` for classes without test samples.
    pub per_class: Vec<Option<f64>>,
    pub with_ft_mean: Option<f64>,
    pub absent_mean: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub absent_classes: Vec<usize>,
    pub seed: u64,
    pub config_hash: String,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Aggregates predictions into a report. The with-FT and absent means
/// average per-class accuracies over the respective class groups.
pub fn report_from_predictions(
    predictions: &[usize],
    labels: &[u8],
    classes: usize,
    absent: &[usize],
    method: &str,
    seed: u64,
    config_hash: &str,
) -> Result<EvalReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        confusion[l as usize][p] += 1;
    }
    let per_class: Vec<Option<f64>> = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    let hits: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let absent_set: BTreeSet<usize> = absent.iter().copied().collect();
    let group = |want_absent: bool| {
        mean(
            per_class
                .iter()
                .enumerate()
                .filter(|(c, _)| absent_set.contains(c) == want_absent)
                .filter_map(|(_, a)| *a),
        )
    };
    Ok(EvalReport {
        method: method.to_string(),
        n_samples: labels.len(),
        overall: hits as f64 / labels.len() as f64,
        with_ft_mean: group(false),
        absent_mean: group(true),
        per_class,
        confusion,
        absent_classes: absent_set.into_iter().collect(),
        seed,
        config_hash: config_hash.to_string(),
    })
}

pub fn evaluate(
    model: &HarModel,
    predictor: Predictor<'_>,
    test: &[&ModelInput],
    absent: &[usize],
    method: &str,
    seed: u64,
    config_hash: &str,
) -> Result<EvalReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let preds: Vec<usize> = predict(model, test, predictor, 64)?.into_iter().map(|p| p.class).collect();
    let labels: Vec<u8> = test.iter().map(|x| x.label).collect();
    report_from_predictions(&preds, &labels, model.dims.classes, absent, method, seed, config_hash)
}

fn class_code(c: usize) -> String {
    ActivityClass::from_id(c as u8).map_or_else(|| c.to_string(), |a| a.code().to_string())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl EvalReport {
    /// `metric,value` rows followed by the confusion matrix.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(s, "method,{}", self.method).unwrap();
        writeln!(s, "seed,{}", self.seed).unwrap();
        writeln!(s, "config_hash,{}", self.config_hash).unwrap();
        writeln!(s, "n_samples,{}", self.n_samples).unwrap();
        writeln!(s, "overall,{:.6}", self.overall).unwrap();
        writeln!(s, "with_ft_mean,{}", opt(self.with_ft_mean)).unwrap();
        writeln!(s, "absent_mean,{}", opt(self.absent_mean)).unwrap();
        for (c, a) in self.per_class.iter().enumerate() {
            writeln!(s, "class_{},{}", class_code(c), opt(*a)).unwrap();
        }
        s.push_str("confusion");
        for c in 0..self.confusion.len() {
            write!(s, ",{}", class_code(c)).unwrap();
        }
        s.push('\n');
        for (c, row) in self.confusion.iter().enumerate() {
            write!(s, "{}", class_code(c)).unwrap();
            for v in row {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "method      {}", self.method).unwrap();
        writeln!(s, "samples     {}", self.n_samples).unwrap();
        writeln!(s, "overall     {:.4}", self.overall).unwrap();
        writeln!(s, "with-FT     {}", fmt_opt(self.with_ft_mean)).unwrap();
        let absent: Vec<String> = self.absent_classes.iter().map(|&c| class_code(c)).collect();
        writeln!(s, "absent      {} ({})", fmt_opt(self.absent_mean), absent.join(" ")).unwrap();
        writeln!(s, "class  acc     n").unwrap();
        for (c, a) in self.per_class.iter().enumerate() {
            let n: usize = self.confusion[c].iter().sum();
            writeln!(s, "{:<6} {:<7} {n}", class_code(c), fmt_opt(*a)).unwrap();
        }
        s
    }
}

/// Fails when any test id also appears among the fine-tuning or anchor ids.
pub fn check_no_leakage(manifest: &SplitManifest, test_ids: &[usize]) -> Result<(), EvalError> {
    let used: BTreeSet<usize> = manifest.ft_flat().into_iter().chain(manifest.anchor_flat()).collect();
    match test_ids.iter().find(|i| used.contains(i)) {
        Some(&i) => Err(EvalError::Leakage(i)),
        None => Ok(()),
    }
}

/// Writes `sample_id,subject,activity,f0..` rows and returns the row count.
pub fn dump_features<W: Write>(model: &HarModel, inputs: &[&ModelInput], mut out: W) -> Result<usize, EvalError> {
    let io = |source| EvalError::Io {
        path: "<features>".into(),
        source,
    };
    let f = model.dims.feature;
    let mut header = String::from("sample_id,subject,activity");
    for k in 0..f {
        write!(header, ",f{k}").unwrap();
    }
    writeln!(out, "{header}").map_err(io)?;
    if inputs.is_empty() {
        return Ok(0);
    }
    let feats = model.forward_all(inputs, 64)?.features;
    for (b, x) in inputs.iter().enumerate() {
        let mut line = format!("{},{},{}", x.sample_id, x.subject, class_code(x.label as usize));
        for v in feats.row(b) {
            write!(line, ",{v:e}").unwrap();
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(inputs.len())
}

/// Mean pairwise cosine between feature rows of the same class and of
/// different classes.
pub fn cluster_cosines(features: &Tensor, labels: &[u8]) -> (f64, f64) {
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let c = cosine(features.row(i), features.row(j));
            if labels[i] == labels[j] {
                intra += c;
                n_intra += 1;
            } else {
                inter += c;
                n_inter += 1;
            }
        }
    }
    (intra / n_intra.max(1) as f64, inter / n_inter.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::class_centers;

    fn anchors_for(model: &HarModel) -> Anchors {
        let f = Tensor::from_fn(&[10, model.dims.feature], |i| ((i * 7 % 13) as f64 - 6.0) / 6.0);
        let labels: Vec<u8> = (0..10).collect();
        class_centers(&f, &labels, 10, |_| true, model.fingerprint())
    }

    fn model() -> HarModel {
        HarModel::init(crate::model::ModelDims::new(4), &mut crate::rng::rng(1))
    }

    #[test]
    fn zero_weight_is_softmax_argmax() {
        let m = model();
        let a = anchors_for(&m);
        let mut rng = crate::rng::rng(5);
        for _ in 0..50 {
            use rand::Rng;
            let f: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let s = composite_scores(&f, &l, &a, CompositeParams { lambda3: 0.0 });
            assert_eq!(argmax(&s), argmax(&l));
            let s = composite_scores(&f, &l, &a, CompositeParams { lambda3: 0.7 });
            let brute: Vec<f64> = (0..10)
                .map(|i| softmax(&l)[i] + 0.7 * cosine(&f, a.centers.row(i)))
                .collect();
            assert_eq!(argmax(&s), argmax(&brute));
        }
    }

    #[test]
    fn anchor_match_wins_ties() {
        let m = model();
        let a = anchors_for(&m);
        for c in 0..10 {
            let s = composite_scores(a.centers.row(c), &[0.0; 10], &a, CompositeParams { lambda3: 0.1 });
            assert_eq!(argmax(&s), c);
        }
    }

    #[test]
    fn stale_or_incomplete_anchors_are_rejected() {
        let m = model();
        let mut a = anchors_for(&m);
        a.model_version ^= 1;
        assert!(matches!(check_anchors(&m, &a), Err(EvalError::StaleAnchors { .. })));
        let mut b = anchors_for(&m);
        b.counts[3] = 0;
        assert!(matches!(check_anchors(&m, &b), Err(EvalError::InvalidAnchors(v)) if v == vec![3]));
    }

    #[test]
    fn perfect_predictions_give_diagonal_confusion() {
        let labels: Vec<u8> = (0..30).map(|i| (i % 10) as u8).collect();
        let preds: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let r = report_from_predictions(&preds, &labels, 10, &[4, 8], "x", 1, "h").unwrap();
        assert_eq!(r.overall, 1.0);
        for c in 0..10 {
            for k in 0..10 {
                assert_eq!(r.confusion[c][k], if c == k { 3 } else { 0 });
            }
        }
        assert_eq!(r.absent_mean, Some(1.0));
        assert!(report_from_predictions(&[], &[], 10, &[], "x", 1, "h").is_err());
    }

    #[test]
    fn group_means_follow_absent_classes() {
        let labels: Vec<u8> = vec![0, 0, 1, 1, 2, 2];
        let preds = vec![0, 1, 1, 1, 0, 0];
        let r = report_from_predictions(&preds, &labels, 3, &[2], "x", 1, "h").unwrap();
        assert_eq!(r.absent_mean, Some(0.0));
        assert_eq!(r.with_ft_mean, Some(0.75));
        let csv = r.to_csv();
        assert!(csv.contains("with_ft_mean,0.750000"));
    }
}
