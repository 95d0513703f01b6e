use crate::channel_sim::CsiSample;
use crate::dataset_io::{make_split, SplitManifest, SplitSpec};
use crate::model::{HarModel, ModelDims};
use crate::preprocess::{assemble_dataset, pad_len, EmbedParams, ModelInput};
use crate::train::{
    baseline_finetune, compute_anchors, finetune, pretrain, Anchors, Baseline, HistoryRow, LossWeights,
    TrainConfig,
};

use super::{check_no_leakage, evaluate, CompositeParams, EvalError, EvalReport, Predictor};

/// Switches removing one ingredient of the method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Margin-enlarging loss weights set to zero throughout.
    pub no_margin: bool,
    /// Anchor matching weight set to zero.
    pub no_anchor: bool,
    /// Composite inference weight set to zero.
    pub no_composite: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub split: SplitSpec,
    pub embed: EmbedParams,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub composite: CompositeParams,
    pub ablation: Ablation,
    pub baseline: Baseline,
    pub encoder_width: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn new(target_subject: u16) -> Self {
        Self {
            split: SplitSpec::new(target_subject),
            embed: EmbedParams::default(),
            train: TrainConfig::default(),
            weights: LossWeights::default(),
            composite: CompositeParams::default(),
            ablation: Ablation::default(),
            baseline: Baseline::Naive,
            encoder_width: 128,
            seed: 1,
            config_hash: String::new(),
        }
    }

    /// Loss weights and inference weight after applying the ablation
    /// switches.
    pub fn effective(&self) -> (LossWeights, CompositeParams) {
        let mut w = self.weights.clone();
        let mut c = self.composite;
        if self.ablation.no_margin {
            w.l11 = 0.0;
            w.l12 = 0.0;
        }
        if self.ablation.no_anchor {
            w.l23 = 0.0;
        }
        if self.ablation.no_composite {
            c.lambda3 = 0.0;
        }
        (w, c)
    }

    fn train_cfg(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Inputs and split shared by the stages of one experiment.
struct Prepared {
    manifest: SplitManifest,
    inputs: Vec<ModelInput>,
    pt: Vec<usize>,
    ft: Vec<usize>,
    anchors: Vec<usize>,
    test: Vec<usize>,
}

impl Prepared {
    fn refs(&self, ids: &[usize]) -> Vec<&ModelInput> {
        ids.iter().map(|&i| &self.inputs[i]).collect()
    }

    fn absent(&self) -> Vec<usize> {
        self.manifest.absent_classes.iter().map(|c| c.id() as usize).collect()
    }
}

fn prepare(dataset: &[CsiSample], cfg: &ExperimentConfig) -> Result<Prepared, EvalError> {
    let manifest = make_split(dataset, &cfg.split, cfg.seed)?;
    let pad = pad_len(dataset)?;
    let inputs = assemble_dataset(dataset, &cfg.embed, pad)?;
    let test = manifest.test_ids(dataset);
    check_no_leakage(&manifest, &test)?;
    Ok(Prepared {
        pt: manifest.pt_ids(dataset),
        ft: manifest.ft_flat(),
        anchors: manifest.anchor_flat(),
        test,
        manifest,
        inputs,
    })
}

fn init_model(p: &Prepared, cfg: &ExperimentConfig) -> HarModel {
    let mut dims = ModelDims::new(p.inputs[0].n_features);
    dims.encoder = cfg.encoder_width;
    HarModel::init(dims, &mut crate::rng::rng(cfg.seed))
}

/// Everything produced by one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: SplitManifest,
    pub wianchor: EvalReport,
    pub baseline: EvalReport,
    /// Validation accuracy on held-out source samples after the last
    /// pre-training epoch.
    pub source_val_acc: Option<f64>,
    pub pt_history: Vec<HistoryRow>,
    pub ft_history: Vec<HistoryRow>,
    pub baseline_history: Vec<HistoryRow>,
    pub pt_model: HarModel,
    pub ft_model: HarModel,
    pub baseline_model: HarModel,
    pub anchors: Anchors,
    pub test_ids: Vec<usize>,
}

fn baseline_predictor(b: Baseline) -> Predictor<'static> {
    match b {
        Baseline::CosineClassifier { scale } => Predictor::Cosine { scale },
        _ => Predictor::Softmax,
    }
}

/// Split, preprocess, pre-train, fine-tune with anchors and with the chosen
/// baseline, then score both on the target subject's remaining samples.
pub fn run_experiment(dataset: &[CsiSample], cfg: &ExperimentConfig) -> Result<ExperimentOutcome, EvalError> {
    let p = prepare(dataset, cfg)?;
    let (weights, composite) = cfg.effective();
    let tc = cfg.train_cfg();
    let model = init_model(&p, cfg);
    let (pt_model, pt_history) = pretrain(&model, &p.refs(&p.pt), &tc, &weights)?;
    let source_val_acc = pt_history.last().and_then(|r| r.val_acc);
    let (ft_model, ft_history) = finetune(&pt_model, &p.refs(&p.ft), &p.refs(&p.anchors), &tc, &weights)?;
    let anchors = compute_anchors(&ft_model, &p.refs(&p.anchors), 64)?;
    let absent = p.absent();
    let test = p.refs(&p.test);
    let wianchor = evaluate(
        &ft_model,
        Predictor::Composite {
            anchors: &anchors,
            params: composite,
        },
        &test,
        &absent,
        "wianchor",
        cfg.seed,
        &cfg.config_hash,
    )?;
    let (baseline_model, baseline_history) = baseline_finetune(&pt_model, &p.refs(&p.ft), &tc, cfg.baseline)?;
    let baseline = evaluate(
        &baseline_model,
        baseline_predictor(cfg.baseline),
        &test,
        &absent,
        cfg.baseline.name(),
        cfg.seed,
        &cfg.config_hash,
    )?;
    Ok(ExperimentOutcome {
        manifest: p.manifest.clone(),
        wianchor,
        baseline,
        source_val_acc,
        pt_history,
        ft_history,
        baseline_history,
        pt_model,
        ft_model,
        baseline_model,
        anchors,
        test_ids: p.test.clone(),
    })
}

/// Reports of the full method, each single-ingredient ablation and the
/// naive baseline on one split.
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub full: EvalReport,
    pub no_composite: EvalReport,
    pub no_anchor: EvalReport,
    pub no_margin: EvalReport,
    pub naive: EvalReport,
    /// Pre-trained model scored without fine-tuning.
    pub pretrained: EvalReport,
    pub source_val_acc: Option<f64>,
    /// Composite predictions with weight zero agree with the softmax
    /// argmax on every test sample.
    pub composite_zero_matches_softmax: bool,
}

/// Runs the ablation arms, sharing work between arms that differ only
/// downstream: one pre-training with and one without the margin loss, and
/// the no-composite arm reusing the full model.
pub fn run_ablation_suite(dataset: &[CsiSample], cfg: &ExperimentConfig) -> Result<AblationOutcome, EvalError> {
    let p = prepare(dataset, cfg)?;
    let tc = cfg.train_cfg();
    let weights = cfg.weights.clone();
    let no_margin_w = LossWeights {
        l11: 0.0,
        l12: 0.0,
        ..weights.clone()
    };
    let no_anchor_w = LossWeights {
        l23: 0.0,
        ..weights.clone()
    };
    let model = init_model(&p, cfg);
    let pt_set = p.refs(&p.pt);
    let (margin, plain) = rayon::join(
        || pretrain(&model, &pt_set, &tc, &weights),
        || pretrain(&model, &pt_set, &tc, &no_margin_w),
    );
    let (pt_model, pt_history) = margin?;
    let (plain_model, _) = plain?;
    let source_val_acc = pt_history.last().and_then(|r| r.val_acc);

    let ft = p.refs(&p.ft);
    let an = p.refs(&p.anchors);
    let test = p.refs(&p.test);
    let absent = p.absent();
    let arms: Vec<(&HarModel, &LossWeights)> =
        vec![(&pt_model, &weights), (&pt_model, &no_anchor_w), (&plain_model, &no_margin_w)];
    let tuned: Vec<Result<HarModel, EvalError>> = {
        use rayon::prelude::*;
        arms.par_iter()
            .map(|(m, w)| Ok(finetune(m, &ft, &an, &tc, w)?.0))
            .collect()
    };
    let mut tuned = tuned.into_iter();
    let full_model = tuned.next().expect("three arms")?;
    let no_anchor_model = tuned.next().expect("three arms")?;
    let no_margin_model = tuned.next().expect("three arms")?;

    let score = |m: &HarModel, lambda3: f64, name: &str| -> Result<EvalReport, EvalError> {
        let anchors = compute_anchors(m, &an, 64)?;
        evaluate(
            m,
            Predictor::Composite {
                anchors: &anchors,
                params: CompositeParams { lambda3 },
            },
            &test,
            &absent,
            name,
            cfg.seed,
            &cfg.config_hash,
        )
    };
    let l3 = cfg.composite.lambda3;
    let full = score(&full_model, l3, "wianchor")?;
    let no_composite = score(&full_model, 0.0, "no_composite")?;
    let no_anchor = score(&no_anchor_model, l3, "no_anchor")?;
    let no_margin = score(&no_margin_model, l3, "no_margin")?;

    let softmax = evaluate(&full_model, Predictor::Softmax, &test, &absent, "softmax", cfg.seed, &cfg.config_hash)?;
    let composite_zero_matches_softmax = softmax.confusion == no_composite.confusion && {
        let anchors = compute_anchors(&full_model, &an, 64)?;
        let zero = super::predict(
            &full_model,
            &test,
            Predictor::Composite {
                anchors: &anchors,
                params: CompositeParams { lambda3: 0.0 },
            },
            64,
        )?;
        let plain = super::predict(&full_model, &test, Predictor::Softmax, 64)?;
        zero.iter().zip(&plain).all(|(a, b)| a.class == b.class)
    };

    let pretrained = evaluate(&pt_model, Predictor::Softmax, &test, &absent, "pretrained", cfg.seed, &cfg.config_hash)?;
    let (naive_model, _) = baseline_finetune(&pt_model, &ft, &tc, Baseline::Naive)?;
    let naive = evaluate(&naive_model, Predictor::Softmax, &test, &absent, "naive", cfg.seed, &cfg.config_hash)?;
    Ok(AblationOutcome {
        full,
        no_composite,
        no_anchor,
        no_margin,
        naive,
        pretrained,
        source_val_acc,
        composite_zero_matches_softmax,
    })
}
