//! Pre-training with the margin-enlarging loss, anchor-matched fine-tuning
//! with a frozen classifier, and the comparison fine-tuning variants.

mod losses;
mod optim;

pub use losses::{
    anchor_loss, batch_centers, class_sensitive_loss, ce_loss, cosine_classifier_logits, fe_loss,
    pt_loss,
};
pub use optim::Adam;

use std::io::Write;

use rand::seq::SliceRandom;

use crate::model::{Bound, HarModel, ModelError, Module};
use crate::numerics::{NumericsError, Tape, Tensor, Var};
use crate::preprocess::ModelInput;
use optim::Cycler;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("anchor set has no samples of class {0}")]
    MissingAnchorClass(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub l11: f64,
    pub l12: f64,
    pub l21: f64,
    pub l22: f64,
    pub l23: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l11: 0.05,
            l12: 1.0,
            l21: 1.0,
            l22: 1.0,
            l23: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        let all = [self.l11, self.l12, self.l21, self.l22, self.l23];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(TrainError::Invalid(format!("loss weights must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub pt_lr: f64,
    pub pt_epochs: usize,
    pub ft_lr_sc: f64,
    pub ft_lr_fp: f64,
    pub ft_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Share of the pre-training set held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            pt_lr: 1e-3,
            pt_epochs: 50,
            ft_lr_sc: 7e-4,
            ft_lr_fp: 5e-4,
            ft_epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.1,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch size must be positive".into()));
        }
        for (name, v) in [("pt_lr", self.pt_lr), ("ft_lr_sc", self.ft_lr_sc), ("ft_lr_fp", self.ft_lr_fp)] {
            if !(v > 0.0) {
                return Err(TrainError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::Invalid("val_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(TrainError::Invalid("invalid optimizer constants".into()));
        }
        Ok(())
    }

    fn adam(&self, model: &HarModel) -> Adam {
        Adam::new(model, self.beta1, self.beta2, self.eps)
    }
}

/// One line of a training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub stage: &'static str,
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub fe: f64,
    pub anchor: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

pub fn write_history<W: Write>(rows: &[HistoryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "stage,epoch,loss,ce,fe,anchor,train_acc,val_acc")?;
    for r in rows {
        let val = r.val_acc.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{},{},{:.9},{:.9},{:.9},{:.9},{:.6},{val}",
            r.stage, r.epoch, r.loss, r.ce, r.fe, r.anchor, r.train_acc
        )?;
    }
    Ok(())
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose largest logit is the label.
pub fn accuracy(logits: &Tensor, labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let c = logits.cols();
    let hits = labels
        .iter()
        .enumerate()
        .filter(|(b, &l)| argmax(&logits.data()[b * c..(b + 1) * c]) == l as usize)
        .count();
    hits as f64 / labels.len() as f64
}

fn labels_of(batch: &[&ModelInput]) -> Vec<u8> {
    batch.iter().map(|x| x.label).collect()
}

fn gradients(tape: &Tape, bound: &Bound, loss: Var) -> Result<Vec<Tensor>, TrainError> {
    let g = tape.backward(loss)?;
    Ok(bound.vars.iter().map(|&v| g.tensor(v)).collect())
}

struct BatchTerms {
    loss: Var,
    ce: f64,
    fe: f64,
    logits: Var,
}

/// CE + FE on one batch.
fn pt_terms(
    model: &HarModel,
    tape: &mut Tape,
    bound: &Bound,
    batch: &[&ModelInput],
    weights: &LossWeights,
) -> Result<BatchTerms, TrainError> {
    let out = model.forward_tape(tape, bound, batch)?;
    let labels = labels_of(batch);
    let ce = ce_loss(tape, out.logits, &labels)?;
    let ce_v = tape.value(ce).item();
    let loss = pt_loss(tape, out.features, out.logits, &labels, weights, model.dims.hidden)?;
    Ok(BatchTerms {
        loss,
        ce: ce_v,
        fe: tape.value(loss).item() - ce_v,
        logits: out.logits,
    })
}

/// Records the pre-training loss of `batch` and returns the loss and the
/// parameter handles.
pub fn pt_batch_loss(
    model: &HarModel,
    tape: &mut Tape,
    batch: &[&ModelInput],
    weights: &LossWeights,
) -> Result<(Var, Bound), TrainError> {
    let bound = model.bind(tape, |_| true);
    let t = pt_terms(model, tape, &bound, batch, weights)?;
    Ok((t.loss, bound))
}

/// Mini-batch training of every parameter at `pt_lr`. A `val_fraction`
/// share of the data, drawn with the config seed, is held out and scored
/// after every epoch.
pub fn pretrain(
    model: &HarModel,
    data: &[&ModelInput],
    cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<(HarModel, Vec<HistoryRow>), TrainError> {
    cfg.validate()?;
    weights.validate()?;
    if data.is_empty() {
        return Err(TrainError::Invalid("pre-training set is empty".into()));
    }
    let mut rng = crate::rng::rng(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (data.len() as f64 * cfg.val_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<&ModelInput> = val_idx.iter().map(|&i| data[i]).collect();
    let mut train: Vec<&ModelInput> = train_idx.iter().map(|&i| data[i]).collect();

    let mut model = model.clone();
    let mut opt = cfg.adam(&model);
    let mut history = Vec::with_capacity(cfg.pt_epochs);
    for epoch in 0..cfg.pt_epochs {
        train.shuffle(&mut rng);
        let (mut loss, mut ce, mut fe, mut hits, mut seen) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for batch in train.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, |_| true);
            let t = pt_terms(&model, &mut tape, &bound, batch, weights)?;
            let n = batch.len() as f64;
            loss += tape.value(t.loss).item() * n;
            ce += t.ce * n;
            fe += t.fe * n;
            hits += accuracy(tape.value(t.logits), &labels_of(batch)) * n;
            seen += batch.len();
            let grads = gradients(&tape, &bound, t.loss)?;
            opt.step(&mut model, &grads, |_| cfg.pt_lr);
        }
        let seen = seen.max(1) as f64;
        let val_acc = if val.is_empty() {
            None
        } else {
            let out = model.forward_all(&val, cfg.batch_size)?;
            Some(accuracy(&out.logits, &labels_of(&val)))
        };
        history.push(HistoryRow {
            stage: "pretrain",
            epoch: epoch + 1,
            loss: loss / seen,
            ce: ce / seen,
            fe: fe / seen,
            anchor: 0.0,
            train_acc: hits / seen,
            val_acc,
        });
    }
    Ok((model, history))
}

/// Per-class feature centers and the model they were computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors {
    /// `[C x F]`; rows of classes without samples are zero.
    pub centers: Tensor,
    pub counts: Vec<usize>,
    pub model_version: u64,
}

impl Anchors {
    pub fn is_valid(&self, class: usize) -> bool {
        self.counts.get(class).is_some_and(|&c| c > 0) && self.centers.row(class).iter().all(|v| v.is_finite())
    }

    pub fn missing_classes(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&c| !self.is_valid(c)).collect()
    }

    /// Text form: a `model HEX` line, then `COUNT v1 .. vF` per class with
    /// values in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut out = format!("model {:016x}\n", self.model_version);
        for (c, n) in self.counts.iter().enumerate() {
            out.push_str(&n.to_string());
            for v in self.centers.row(c) {
                out.push(' ');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TrainError> {
        let bad = |line: usize, why: &str| TrainError::Invalid(format!("anchors line {line}: {why}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        let version = head
            .strip_prefix("model ")
            .and_then(|h| u64::from_str_radix(h.trim(), 16).ok())
            .ok_or_else(|| bad(1, "expected `model HEX`"))?;
        let mut counts = Vec::new();
        let mut data = Vec::new();
        let mut width = None;
        for (i, line) in lines {
            let mut fields = line.split_whitespace();
            let n: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| bad(i + 1, "expected a sample count"))?;
            let row: Vec<f64> = fields
                .map(|f| f.parse().map_err(|_| bad(i + 1, "expected a number")))
                .collect::<Result<_, _>>()?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(bad(i + 1, "row width differs from the first row"));
            }
            counts.push(n);
            data.extend(row);
        }
        let f = width.unwrap_or(0);
        Ok(Self {
            centers: Tensor::new(vec![counts.len(), f], data)?,
            counts,
            model_version: version,
        })
    }
}

/// Mean feature row per class over rows whose class passes `filter`.
pub fn class_centers(
    features: &Tensor,
    labels: &[u8],
    classes: usize,
    filter: impl Fn(usize) -> bool,
    model_version: u64,
) -> Anchors {
    let f = features.cols();
    let mut centers = Tensor::zeros(&[classes, f]);
    let mut counts = vec![0usize; classes];
    for (b, &l) in labels.iter().enumerate() {
        let c = l as usize;
        if c >= classes || !filter(c) {
            continue;
        }
        counts[c] += 1;
        let row = features.row(b);
        for (acc, v) in centers.data_mut()[c * f..(c + 1) * f].iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            for v in &mut centers.data_mut()[c * f..(c + 1) * f] {
                *v /= n as f64;
            }
        }
    }
    Anchors {
        centers,
        counts,
        model_version,
    }
}

/// Anchors of `model` over `inputs`, stamped with the model fingerprint.
pub fn compute_anchors(model: &HarModel, inputs: &[&ModelInput], chunk: usize) -> Result<Anchors, TrainError> {
    let out = model.forward_all(inputs, chunk)?;
    Ok(class_centers(
        &out.features,
        &labels_of(inputs),
        model.dims.classes,
        |_| true,
        model.fingerprint(),
    ))
}

/// Loss handles of one fine-tuning step.
#[derive(Debug, Clone, Copy)]
pub struct FtLoss {
    pub total: Var,
    pub anchor_part: Option<Var>,
    pub target_part: Option<Var>,
    pub anchor_match: Option<Var>,
}

/// `l21 * (CE + FE on the anchor batch) + l22 * (anchor matching + CE + FE
/// on the fine-tuning batch)`. Anchor matching compares the batch centers
/// of every class present in both batches. Terms with weight zero are not
/// recorded.
pub fn ft_loss(
    model: &HarModel,
    tape: &mut Tape,
    bound: &Bound,
    ft_batch: &[&ModelInput],
    anchor_batch: &[&ModelInput],
    weights: &LossWeights,
) -> Result<FtLoss, TrainError> {
    let hidden = model.dims.hidden;
    let mut parts = Vec::new();
    let mut anchor_part = None;
    let mut target_part = None;
    let mut anchor_match = None;
    if weights.l21 > 0.0 {
        let t = pt_terms(model, tape, bound, anchor_batch, weights)?;
        anchor_part = Some(t.loss);
        parts.push(tape.scale(t.loss, weights.l21));
    }
    if weights.l22 > 0.0 {
        let ft_out = model.forward_tape(tape, bound, ft_batch)?;
        let ft_labels = labels_of(ft_batch);
        let mut l = pt_loss(tape, ft_out.features, ft_out.logits, &ft_labels, weights, hidden)?;
        if weights.l23 > 0.0 {
            let an_out = model.forward_tape(tape, bound, anchor_batch)?;
            let an_labels = labels_of(anchor_batch);
            let (fc, f_cls) = batch_centers(tape, ft_out.features, &ft_labels)?;
            let (ac, a_cls) = batch_centers(tape, an_out.features, &an_labels)?;
            let shared: Vec<usize> = f_cls.iter().copied().filter(|c| a_cls.contains(c)).collect();
            if !shared.is_empty() {
                let fi: Vec<usize> = shared.iter().map(|c| f_cls.binary_search(c).expect("present")).collect();
                let ai: Vec<usize> = shared.iter().map(|c| a_cls.binary_search(c).expect("present")).collect();
                let fc = tape.gather_rows(fc, &fi)?;
                let ac = tape.gather_rows(ac, &ai)?;
                let am = anchor_loss(tape, fc, ac, weights.l23)?;
                anchor_match = Some(am);
                l = tape.add(l, am)?;
            }
        }
        target_part = Some(l);
        parts.push(tape.scale(l, weights.l22));
    }
    let total = match parts.as_slice() {
        [] => tape.constant(Tensor::scalar(0.0)),
        [one] => *one,
        [a, b] => tape.add(*a, *b)?,
        _ => unreachable!("at most two parts"),
    };
    Ok(FtLoss {
        total,
        anchor_part,
        target_part,
        anchor_match,
    })
}

/// Learning rate per module during anchor-matched fine-tuning; the
/// classifier is frozen.
pub fn ft_rates(cfg: &TrainConfig) -> impl Fn(Module) -> f64 + '_ {
    move |m| match m {
        Module::Sc => cfg.ft_lr_sc,
        Module::Fp => cfg.ft_lr_fp,
        Module::Cls => 0.0,
    }
}

fn check_anchor_coverage(anchors: &[&ModelInput], classes: usize) -> Result<(), TrainError> {
    for c in 0..classes {
        if !anchors.iter().any(|x| x.label as usize == c) {
            let name = crate::channel_sim::ActivityClass::from_id(c as u8)
                .map_or_else(|| c.to_string(), |a| a.code().to_string());
            return Err(TrainError::MissingAnchorClass(name));
        }
    }
    Ok(())
}

/// Anchor-matched fine-tuning. Each epoch draws one batch from the
/// fine-tuning set and one from the anchor set, cycling either set with
/// reshuffling, and takes one step with the classifier frozen.
pub fn finetune(
    model: &HarModel,
    ft_set: &[&ModelInput],
    anchor_set: &[&ModelInput],
    cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<(HarModel, Vec<HistoryRow>), TrainError> {
    cfg.validate()?;
    weights.validate()?;
    if ft_set.is_empty() {
        return Err(TrainError::Invalid("fine-tuning set is empty".into()));
    }
    check_anchor_coverage(anchor_set, model.dims.classes)?;
    let mut rng = crate::rng::rng(cfg.seed ^ 0x5f7e_11ed);
    let mut ft_cycle = Cycler::new(ft_set.len(), &mut rng);
    let mut an_cycle = Cycler::new(anchor_set.len(), &mut rng);
    let mut model = model.clone();
    let mut opt = cfg.adam(&model);
    let mut history = Vec::with_capacity(cfg.ft_epochs);
    for epoch in 0..cfg.ft_epochs {
        let ft_batch: Vec<&ModelInput> = ft_cycle.next(cfg.batch_size, &mut rng).iter().map(|&i| ft_set[i]).collect();
        let an_batch: Vec<&ModelInput> = an_cycle.next(cfg.batch_size, &mut rng).iter().map(|&i| anchor_set[i]).collect();
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, |_| true);
        let l = ft_loss(&model, &mut tape, &bound, &ft_batch, &an_batch, weights)?;
        let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        history.push(HistoryRow {
            stage: "finetune",
            epoch: epoch + 1,
            loss: tape.value(l.total).item(),
            ce: value(l.target_part) - value(l.anchor_match),
            fe: value(l.anchor_part),
            anchor: value(l.anchor_match),
            train_acc: 0.0,
            val_acc: None,
        });
        let grads = gradients(&tape, &bound, l.total)?;
        opt.step(&mut model, &grads, ft_rates(cfg));
    }
    Ok((model, history))
}

/// Comparison fine-tuning variants. All train every parameter at half the
/// pre-training rate on the fine-tuning set alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Plain cross-entropy.
    Naive,
    /// Inverse-frequency class weights with label smoothing.
    ClassSensitive { smoothing: f64 },
    /// Cross-entropy on scaled cosine logits against the classifier weights.
    CosineClassifier { scale: f64 },
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Naive => "naive",
            Baseline::ClassSensitive { .. } => "class_sensitive",
            Baseline::CosineClassifier { .. } => "cosine_classifier",
        }
    }
}

/// Inverse-frequency weights over the classes present, averaging 1; absent
/// classes get weight 1.
fn inverse_frequency(labels: &[u8], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l as usize] += 1;
    }
    let present: Vec<usize> = (0..classes).filter(|&c| counts[c] > 0).collect();
    let raw: Vec<f64> = counts.iter().map(|&n| if n > 0 { 1.0 / n as f64 } else { 0.0 }).collect();
    let mean = present.iter().map(|&c| raw[c]).sum::<f64>() / present.len().max(1) as f64;
    (0..classes).map(|c| if counts[c] > 0 { raw[c] / mean } else { 1.0 }).collect()
}

/// Logits of the cosine-classifier variant for `features` on the tape.
pub fn cosine_logits_tape(
    tape: &mut Tape,
    bound: &Bound,
    features: Var,
    scale: f64,
) -> Result<Var, TrainError> {
    let w = tape.transpose(bound.vars[crate::model::CLS_W])?;
    Ok(cosine_classifier_logits(tape, features, w, scale)?)
}

pub fn baseline_finetune(
    model: &HarModel,
    ft_set: &[&ModelInput],
    cfg: &TrainConfig,
    baseline: Baseline,
) -> Result<(HarModel, Vec<HistoryRow>), TrainError> {
    cfg.validate()?;
    if ft_set.is_empty() {
        return Err(TrainError::Invalid("fine-tuning set is empty".into()));
    }
    let class_weights = inverse_frequency(&labels_of(ft_set), model.dims.classes);
    let mut rng = crate::rng::rng(cfg.seed ^ 0x0ba5_e11e);
    let mut cycle = Cycler::new(ft_set.len(), &mut rng);
    let mut model = model.clone();
    let mut opt = cfg.adam(&model);
    let lr = cfg.pt_lr / 2.0;
    let mut history = Vec::with_capacity(cfg.ft_epochs);
    for epoch in 0..cfg.ft_epochs {
        let batch: Vec<&ModelInput> = cycle.next(cfg.batch_size, &mut rng).iter().map(|&i| ft_set[i]).collect();
        let labels = labels_of(&batch);
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, |_| true);
        let out = model.forward_tape(&mut tape, &bound, &batch)?;
        let loss = match baseline {
            Baseline::Naive => ce_loss(&mut tape, out.logits, &labels)?,
            Baseline::ClassSensitive { smoothing } => {
                class_sensitive_loss(&mut tape, out.logits, &labels, &class_weights, smoothing)?
            }
            Baseline::CosineClassifier { scale } => {
                let l = cosine_logits_tape(&mut tape, &bound, out.features, scale)?;
                ce_loss(&mut tape, l, &labels)?
            }
        };
        let v = tape.value(loss).item();
        history.push(HistoryRow {
            stage: baseline.name(),
            epoch: epoch + 1,
            loss: v,
            ce: v,
            fe: 0.0,
            anchor: 0.0,
            train_acc: accuracy(tape.value(out.logits), &labels),
            val_acc: None,
        });
        let grads = gradients(&tape, &bound, loss)?;
        opt.step(&mut model, &grads, |_| lr);
    }
    Ok((model, history))
}

/// Cross-entropy-only fine-tuning of all parameters at half the
/// pre-training rate.
pub fn naive_finetune(
    model: &HarModel,
    ft_set: &[&ModelInput],
    cfg: &TrainConfig,
) -> Result<(HarModel, Vec<HistoryRow>), TrainError> {
    baseline_finetune(model, ft_set, cfg, Baseline::Naive)
}
